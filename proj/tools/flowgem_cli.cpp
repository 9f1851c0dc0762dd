// flowgem command-line front end: simulate | generate | evaluate.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical abort.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowgem/flowgem.hpp"

namespace fs = std::filesystem;
using namespace flowgem;

namespace {

constexpr int exit_ok = 0, exit_usage = 2, exit_data = 3, exit_numerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double x) { return csv_detail::format_double(x); }

// Keys written to a manifest for information only; they are skipped when the
// manifest is read back as a config file.
const std::set<std::string> informational_keys = {"subcommand", "tool_version", "wall_clock_seconds",
                                                  "sigma_resolved", "outputs"};

class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void set(const std::string& key, double value) { set(key, fmt(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Reads `key=value` lines (blank lines and '#' comments ignored) and turns
// them into `--key=value` arguments.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = csv_detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key(csv_detail::trim(t.substr(0, eq)));
    const std::string value(csv_detail::trim(t.substr(eq + 1)));
    if (informational_keys.count(key) || value.empty()) continue;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// Config precedence: values from --config are placed before the real
// arguments, so with take-last semantics explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<std::string> config;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) config = args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) config = args[k].substr(9);
  }
  if (!config || args.empty()) return args;
  std::vector<std::string> out{args[0]};
  for (auto& a : config_arguments(*config)) out.push_back(std::move(a));
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(DataErrc::io, "cannot create directory " + dir.string() + ": " + ec.message());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string family = "uniform";
  std::size_t n = 2000;
  double dependence = 0.7;
  std::uint64_t seed = 0;
  std::string mechanism = "three-pattern";
  std::size_t n_patterns = 5;
  double missing_frac = 0.45;
  std::string out_dir = ".";
};

void cmd_simulate(const SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.family = parse_family(a.family);
  spec.n = a.n;
  spec.dependence = a.dependence;
  spec.seed = a.seed;
  if (a.n < 2) throw UsageError("--n must be >= 2");
  if (!(a.dependence > -1.0 && a.dependence < 1.0)) throw UsageError("--dependence must lie in (-1, 1)");

  CounterRng sim_rng(a.seed, Stream::simulation);
  CounterRng held_rng(a.seed, Stream::heldout);
  const Matrix train = sample(spec, sim_rng);
  const Matrix heldout = sample(spec, held_rng);

  MarMechanism mech;
  if (a.mechanism == "three-pattern") {
    mech = three_pattern_mechanism(spec.family);
  } else if (a.mechanism == "logistic") {
    CounterRng mech_rng(a.seed, Stream::mechanism);
    mech = generic_logistic_mar(a.n_patterns, a.missing_frac, train, mech_rng);
  } else {
    throw UsageError("--mechanism must be three-pattern or logistic");
  }
  CounterRng amp_rng(a.seed, Stream::amputation);
  const MaskedDataset masked = amputate(train, mech, amp_rng);

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  const std::vector<std::string> names = masked.column_names();
  write_csv_file(dir / "train_masked.csv", masked);
  write_csv_file(dir / "train_complete.csv", train, names);
  write_csv_file(dir / "heldout_complete.csv", heldout, names);

  Manifest m;
  m.set("subcommand", std::string("simulate"));
  m.set("tool_version", std::string(version));
  m.set("family", a.family);
  m.set("n", std::uint64_t{a.n});
  m.set("dependence", a.dependence);
  m.set("seed", a.seed);
  m.set("mechanism", a.mechanism);
  m.set("n-patterns", std::uint64_t{a.n_patterns});
  m.set("missing-frac", a.missing_frac);
  m.set("out-dir", a.out_dir);
  m.set("outputs", std::string("train_masked.csv,train_complete.csv,heldout_complete.csv"));
  m.set("wall_clock_seconds", seconds_since(t0));
  m.write(dir / "simulate.manifest");
  std::cout << "missing fraction " << fmt(missing_fraction(masked)) << ", written to " << dir.string()
            << '\n';
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string input;
  std::string missing_token = "NA";
  double eta = 0.01;
  std::size_t steps = 1000;
  std::string sigma = "median";
  bool no_standardize = false;
  std::size_t n_tilde = 0;  // 0: same as the input
  std::uint64_t seed = 0;
  double tikhonov_eps = 1e-5;
  double early_stop_eps = 0.01;
  std::string trace;
  std::size_t trace_every = 50;
  std::string heldout;
  std::optional<double> min_unique_frac;
  std::string out_dir = ".";
  unsigned threads = 1;
};

// Drops columns whose share of distinct observed values is below `frac`.
MaskedDataset filter_low_unique(const MaskedDataset& ds, double frac, std::vector<std::string>& dropped) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    const auto col = ds.observed_column(j);
    const std::set<double> distinct(col.begin(), col.end());
    if (static_cast<double>(distinct.size()) < frac * static_cast<double>(col.size()))
      dropped.push_back(ds.column_names()[j]);
    else
      keep.push_back(j);
  }
  if (keep.empty()) throw DataError(DataErrc::invalid_argument, "--min-unique-frac removed every column");
  if (dropped.empty()) return ds;
  Matrix v(ds.rows(), keep.size());
  std::vector<bool> mask(ds.rows() * keep.size());
  std::vector<std::string> names;
  for (std::size_t j : keep) names.push_back(ds.column_names()[j]);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    for (std::size_t k = 0; k < keep.size(); ++k) {
      mask[i * keep.size() + k] = ds.is_missing(i, keep[k]);
      if (!ds.is_missing(i, keep[k])) v(i, k) = ds.value(i, keep[k]);
    }
  return MaskedDataset(std::move(v), std::move(mask), std::move(names));
}

nlohmann::json report_json(const FlowReport& r) {
  nlohmann::json j;
  j["steps_run"] = r.steps_run;
  j["stopped_early"] = r.stopped_early;
  j["aborted"] = r.aborted;
  j["sigma"] = r.sigma;
  j["kernel_underflow_count"] = r.kernel_underflow_count;
  j["eta_history"] = nlohmann::json::array();
  for (const auto& [t, eta] : r.eta_history) j["eta_history"].push_back({t, eta});
  j["relative_change_history"] = r.relative_change_history;
  j["grad_norm_history"] = r.grad_norm_history;
  return j;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << std::setprecision(17) << j.dump(2) << '\n';
}

void cmd_generate(const GenerateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  MaskedDataset ds = load_csv(a.input, a.missing_token);
  std::vector<std::string> dropped;
  if (a.min_unique_frac) {
    if (!(*a.min_unique_frac >= 0.0 && *a.min_unique_frac <= 1.0))
      throw UsageError("--min-unique-frac must lie in [0, 1]");
    ds = filter_low_unique(ds, *a.min_unique_frac, dropped);
  }

  FlowConfig cfg;
  cfg.eta = a.eta;
  cfg.steps = a.steps;
  if (a.sigma != "median") {
    double s = 0.0;
    auto [p, ec] = std::from_chars(a.sigma.data(), a.sigma.data() + a.sigma.size(), s);
    if (ec != std::errc() || p != a.sigma.data() + a.sigma.size())
      throw UsageError("--sigma must be a number or 'median'");
    cfg.sigma = s;
  }
  cfg.standardize = !a.no_standardize;
  if (a.n_tilde > 0) cfg.n_tilde = a.n_tilde;
  cfg.seed = a.seed;
  cfg.tikhonov_eps = a.tikhonov_eps;
  cfg.early_stop_eps = a.early_stop_eps;
  cfg.threads = a.threads;

  std::optional<Matrix> heldout;
  if (!a.heldout.empty()) {
    heldout = require_complete(load_csv(a.heldout, a.missing_token), "held-out sample");
    if (heldout->cols() != ds.cols())
      throw DataError(DataErrc::dimension_mismatch, "held-out sample has a different number of columns");
  }
  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace);
    if (!trace) throw DataError(DataErrc::io, "cannot write " + a.trace);
    trace << "step,rho,g,eta,energy\n";
    cfg.trace_out = &trace;
    cfg.snapshot_every = heldout ? a.trace_every : 0;
    cfg.trace_heldout = heldout ? &*heldout : nullptr;
  }

  const fs::path dir(a.out_dir);
  ensure_dir(dir);

  Manifest m;
  m.set("subcommand", std::string("generate"));
  m.set("tool_version", std::string(version));
  m.set("input", a.input);
  m.set("missing-token", a.missing_token);
  m.set("eta", a.eta);
  m.set("steps", std::uint64_t{a.steps});
  m.set("sigma", a.sigma);
  m.set("no-standardize", a.no_standardize);
  m.set("n-tilde", std::uint64_t{a.n_tilde});
  m.set("seed", a.seed);
  m.set("tikhonov-eps", a.tikhonov_eps);
  m.set("early-stop-eps", a.early_stop_eps);
  m.set("trace", a.trace);
  m.set("trace-every", std::uint64_t{a.trace_every});
  m.set("heldout", a.heldout);
  if (a.min_unique_frac) m.set("min-unique-frac", *a.min_unique_frac);
  m.set("out-dir", a.out_dir);
  m.set("threads", std::uint64_t{a.threads});

  FlowResult res;
  try {
    res = run(ds, cfg);
  } catch (const FlowAborted& e) {
    nlohmann::json j = report_json(e.report());
    j["error"] = e.what();
    write_json(dir / "flow_report.json", j);
    m.set("outputs", std::string("flow_report.json"));
    m.set("wall_clock_seconds", seconds_since(t0));
    m.write(dir / "generate.manifest");
    throw;
  }

  write_csv_file(dir / "generated.csv", res.generated, ds.column_names());
  nlohmann::json j = report_json(res.report);
  j["n_tilde"] = res.generated.rows();
  j["d"] = res.generated.cols();
  j["standardized"] = res.standardizer.has_value();
  j["dropped_columns"] = dropped;
  if (heldout) {
    const auto e = standardized_energy(res.generated, *heldout, nullptr, a.threads);
    j["energy_final"] = e.e2;
    std::vector<double> trace_energy;
    for (double v : objective_trace(res.report.snapshots, *heldout, a.threads)) trace_energy.push_back(v);
    j["energy_trace"] = trace_energy;
  }
  write_json(dir / "flow_report.json", j);

  m.set("sigma_resolved", res.report.sigma);
  m.set("outputs", std::string("generated.csv,flow_report.json"));
  m.set("wall_clock_seconds", seconds_since(t0));
  m.write(dir / "generate.manifest");
  std::cout << "steps " << res.report.steps_run << (res.report.stopped_early ? " (stopped early)" : "")
            << ", sigma " << fmt(res.report.sigma) << ", written to " << dir.string() << '\n';
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string generated;
  std::string heldout;
  std::string missing_token = "NA";
  double q = 0.1;
  bool unbiased = false;
  std::string out_dir = ".";
  unsigned threads = 1;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix gen = require_complete(load_csv(a.generated, a.missing_token), "generated sample");
  const Matrix held = require_complete(load_csv(a.heldout, a.missing_token), "held-out sample");
  if (gen.cols() != held.cols())
    throw UsageError("generated and held-out files have different numbers of columns (" +
                     std::to_string(gen.cols()) + " vs " + std::to_string(held.cols()) + ")");
  if (!(a.q > 0.0 && a.q < 1.0)) throw UsageError("--q must lie in (0, 1)");

  const EnergyReport std_e = standardized_energy(gen, held, nullptr, a.threads);
  const double raw = energy_distance(gen, held, a.threads);

  const int pct = static_cast<int>(std::lround(a.q * 100.0));
  std::ostringstream header, row;
  header << "e2_standardized,e2_raw";
  row << fmt(std_e.e2) << ',' << fmt(raw);
  if (a.unbiased) {
    header << ",e2_unbiased_standardized";
    row << ',' << fmt(std_e.e2_unbiased);
  }
  for (std::size_t j = 0; j < gen.cols(); ++j) {
    header << ",q" << pct << "_col" << j + 1;
    row << ',' << fmt(quantile(gen.column(j), a.q));
  }

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  {
    std::ofstream out(dir / "evaluation.csv");
    if (!out) throw DataError(DataErrc::io, "cannot write evaluation.csv");
    out << header.str() << '\n' << row.str() << '\n';
  }
  Manifest m;
  m.set("subcommand", std::string("evaluate"));
  m.set("tool_version", std::string(version));
  m.set("generated", a.generated);
  m.set("heldout", a.heldout);
  m.set("missing-token", a.missing_token);
  m.set("q", a.q);
  m.set("unbiased", a.unbiased);
  m.set("out-dir", a.out_dir);
  m.set("threads", std::uint64_t{a.threads});
  m.set("outputs", std::string("evaluation.csv"));
  m.set("wall_clock_seconds", seconds_since(t0));
  m.write(dir / "evaluate.manifest");
  std::cout << header.str() << '\n' << row.str() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowgem: particle-flow generation of complete data from MAR-missing data"};
  app.set_version_flag("--version", std::string(version));
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_path;
  auto add_common = [&](CLI::App* sub, unsigned& threads, std::string& out_dir) {
    sub->add_option("--config", config_path, "key=value file; explicit flags take precedence");
    sub->add_option("--threads", threads, "worker threads (output does not depend on it)")
        ->check(CLI::Range(1u, 1024u));
    sub->add_option("--out-dir", out_dir, "output directory");
  };

  SimulateArgs sim;
  unsigned sim_threads = 1;
  auto* s = app.add_subcommand("simulate", "draw a synthetic dataset and amputate it");
  add_common(s, sim_threads, sim.out_dir);
  s->add_option("--family", sim.family, "uniform (Gaussian copula) or gaussian")
      ->check(CLI::IsMember({"uniform", "gaussian"}));
  s->add_option("--n", sim.n, "rows in the training and held-out samples");
  s->add_option("--dependence", sim.dependence, "correlation between X1 and X2");
  s->add_option("--seed", sim.seed);
  s->add_option("--mechanism", sim.mechanism, "three-pattern or logistic")
      ->check(CLI::IsMember({"three-pattern", "logistic"}));
  s->add_option("--n-patterns", sim.n_patterns, "patterns for the logistic mechanism");
  s->add_option("--missing-frac", sim.missing_frac, "target masked fraction for the logistic mechanism");

  GenerateArgs gen;
  std::optional<double> min_unique;
  auto* g = app.add_subcommand("generate", "run the particle flow on a CSV with missing values");
  add_common(g, gen.threads, gen.out_dir);
  g->add_option("--input", gen.input, "CSV with a header row")->required();
  g->add_option("--missing-token", gen.missing_token);
  g->add_option("--eta", gen.eta, "initial step size");
  g->add_option("--steps", gen.steps, "maximum number of steps");
  g->add_option("--sigma", gen.sigma, "kernel bandwidth, or 'median'");
  g->add_flag("--no-standardize", gen.no_standardize, "run in the original coordinates");
  g->add_option("--n-tilde", gen.n_tilde, "number of particles (0: number of rows)");
  g->add_option("--seed", gen.seed);
  g->add_option("--tikhonov-eps", gen.tikhonov_eps);
  g->add_option("--early-stop-eps", gen.early_stop_eps, "0 disables early stopping");
  g->add_option("--trace", gen.trace, "write per-step diagnostics to this file");
  g->add_option("--trace-every", gen.trace_every, "energy snapshot cadence when --heldout is given");
  g->add_option("--heldout", gen.heldout, "complete sample used to score snapshots");
  g->add_option("--min-unique-frac", min_unique,
                "drop columns whose share of distinct observed values is below this");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score a generated sample against a held-out sample");
  add_common(e, ev.threads, ev.out_dir);
  e->add_option("--generated", ev.generated)->required();
  e->add_option("--heldout", ev.heldout)->required();
  e->add_option("--missing-token", ev.missing_token);
  e->add_option("--q", ev.q, "quantile level reported per column");
  e->add_flag("--unbiased", ev.unbiased, "also report the U-statistic energy distance");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? exit_ok : exit_usage;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_usage;
  }
  gen.min_unique_frac = min_unique;

  try {
    if (*s) cmd_simulate(sim);
    if (*g) cmd_generate(gen);
    if (*e) cmd_evaluate(ev);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_usage;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return exit_data;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_data;
  }
  return exit_ok;
}
