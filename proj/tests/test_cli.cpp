#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "flowgem/dataset.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("flowgem_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FLOWGEM_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> read_manifest(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

TEST(Cli, SimulateWritesTheThreePatternDesign) {
  auto dir = scratch("sim");
  ASSERT_EQ(cli("simulate --family uniform --n 2000 --seed 7 --out-dir " + dir.string()), 0);
  auto ds = flowgem::load_csv((dir / "train_masked.csv").string());
  EXPECT_EQ(ds.rows(), 2000u);
  EXPECT_EQ(ds.cols(), 3u);
  std::set<std::string> patterns;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    std::string s;
    for (bool b : ds.mask_row(i)) s.push_back(b ? '1' : '0');
    patterns.insert(s);
  }
  EXPECT_TRUE(patterns.count("000") && patterns.count("010") && patterns.count("100"));
  EXPECT_EQ(patterns.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "heldout_complete.csv"));
  EXPECT_TRUE(fs::exists(dir / "train_complete.csv"));
  EXPECT_TRUE(fs::exists(dir / "simulate.manifest"));
}

TEST(Cli, SimulateIsByteDeterministic) {
  auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(cli("simulate --family gaussian --n 300 --seed 3 --out-dir " + a.string()), 0);
  ASSERT_EQ(cli("simulate --family gaussian --n 300 --seed 3 --out-dir " + b.string()), 0);
  for (auto f : {"train_masked.csv", "train_complete.csv", "heldout_complete.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, GaussianHeldoutIsCentred) {
  auto dir = scratch("gauss");
  ASSERT_EQ(cli("simulate --family gaussian --n 2000 --seed 1 --out-dir " + dir.string()), 0);
  auto m = flowgem::require_complete(flowgem::load_csv((dir / "heldout_complete.csv").string()), "heldout");
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) mean += m(i, j) / m.rows();
    EXPECT_NEAR(mean, 0.0, 0.05);
  }
}

TEST(Cli, GenerateSingleStepRecordsResolvedSigma) {
  auto dir = scratch("gen");
  ASSERT_EQ(cli("simulate --n 200 --seed 2 --out-dir " + dir.string()), 0);
  ASSERT_EQ(cli("generate --input " + (dir / "train_masked.csv").string() + " --steps 1 --sigma median --out-dir " +
                dir.string()),
            0);
  auto report = slurp(dir / "flow_report.json");
  EXPECT_NE(report.find("\"steps_run\": 1,"), std::string::npos);
  auto kv = read_manifest(dir / "generate.manifest");
  EXPECT_EQ(kv["sigma"], "median");
  ASSERT_TRUE(kv.count("sigma_resolved"));
  EXPECT_GT(std::stod(kv["sigma_resolved"]), 0.0);
  auto gen = flowgem::load_csv((dir / "generated.csv").string());
  EXPECT_EQ(gen.rows(), 200u);
  EXPECT_EQ(gen.missing_count(), 0u);
}

TEST(Cli, ManifestReplayAndFlagPrecedence) {
  auto dir = scratch("replay");
  ASSERT_EQ(cli("simulate --n 200 --seed 4 --out-dir " + dir.string()), 0);
  ASSERT_EQ(cli("generate --input " + (dir / "train_masked.csv").string() + " --steps 5 --seed 9 --out-dir " +
                dir.string()),
            0);
  const auto first = slurp(dir / "generated.csv");
  const auto manifest = (dir / "generate.manifest").string();
  ASSERT_EQ(cli("generate --config " + manifest + " --threads 4"), 0);
  EXPECT_EQ(slurp(dir / "generated.csv"), first);
  ASSERT_EQ(cli("generate --config " + manifest + " --steps 2"), 0);
  EXPECT_NE(slurp(dir / "flow_report.json").find("\"steps_run\": 2,"), std::string::npos);
}

TEST(Cli, EvaluateIdenticalFilesAndMismatchedWidths) {
  auto dir = scratch("eval");
  ASSERT_EQ(cli("simulate --n 200 --seed 5 --out-dir " + dir.string()), 0);
  const auto held = (dir / "heldout_complete.csv").string();
  ASSERT_EQ(cli("evaluate --generated " + held + " --heldout " + held + " --out-dir " + dir.string()), 0);
  std::ifstream in(dir / "evaluation.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "e2_standardized,e2_raw,q10_col1,q10_col2,q10_col3");
  EXPECT_LE(std::abs(std::stod(row.substr(0, row.find(',')))), 1e-12);

  std::ofstream narrow(dir / "narrow.csv");
  narrow << "a,b\n1,2\n3,4\n5,7\n";
  narrow.close();
  EXPECT_EQ(cli("evaluate --generated " + (dir / "narrow.csv").string() + " --heldout " + held), 2);
}

TEST(Cli, ExitCodes) {
  auto dir = scratch("codes");
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("generate"), 2);
  EXPECT_EQ(cli("generate --input /nonexistent/in.csv --out-dir " + dir.string()), 3);
  std::ofstream bad(dir / "bad.csv");
  bad << "a,b\n1,NA\n2,NA\n";
  bad.close();
  EXPECT_EQ(cli("generate --input " + (dir / "bad.csv").string() + " --out-dir " + dir.string()), 3);
  ASSERT_EQ(cli("simulate --n 100 --seed 1 --out-dir " + dir.string()), 0);
  EXPECT_EQ(cli("generate --input " + (dir / "train_masked.csv").string() +
                " --sigma 1e-4 --tikhonov-eps 0 --out-dir " + dir.string()),
            4);
  EXPECT_NE(slurp(dir / "flow_report.json").find("\"aborted\": true"), std::string::npos);
}

TEST(Cli, MinUniqueFracIsOptIn) {
  auto dir = scratch("unique");
  std::ofstream f(dir / "in.csv");
  f << "a,b,c\n";
  for (int i = 0; i < 40; ++i) f << i * 0.37 << ',' << (i % 2) << ',' << (i % 7 == 0 ? "NA" : std::to_string(i * i)) << '\n';
  f.close();
  const auto in = (dir / "in.csv").string();
  ASSERT_EQ(cli("generate --input " + in + " --steps 2 --out-dir " + dir.string()), 0);
  EXPECT_EQ(flowgem::load_csv((dir / "generated.csv").string()).cols(), 3u);
  ASSERT_EQ(cli("generate --input " + in + " --steps 2 --min-unique-frac 0.1 --out-dir " + dir.string()), 0);
  auto gen = flowgem::load_csv((dir / "generated.csv").string());
  EXPECT_EQ(gen.column_names(), (std::vector<std::string>{"a", "c"}));
}
