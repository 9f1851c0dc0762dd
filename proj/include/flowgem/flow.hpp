#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "flowgem/dataset.hpp"
#include "flowgem/error.hpp"
#include "flowgem/evaluate.hpp"
#include "flowgem/kernel.hpp"
#include "flowgem/matrix.hpp"
#include "flowgem/parallel.hpp"
#include "flowgem/rng.hpp"
#include "flowgem/velocity.hpp"

namespace flowgem {

struct FlowConfig {
  double eta = 0.01;
  std::size_t steps = 1000;             // T
  std::optional<double> sigma;          // nullopt: median heuristic on the initial ensemble
  double tikhonov_eps = 1e-5;
  double early_stop_eps = 0.01;         // 0 disables early stopping
  bool standardize = true;
  std::optional<std::size_t> n_tilde;   // nullopt: same as the number of data rows
  std::uint64_t seed = 0;
  unsigned threads = 1;

  // Observability. `trace_out` receives one line per step; snapshots of the
  // ensemble (original coordinates) are kept every `snapshot_every` steps.
  std::ostream* trace_out = nullptr;
  std::size_t snapshot_every = 0;       // 0: no snapshots
  const Matrix* trace_heldout = nullptr;  // complete sample scored at each snapshot

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta))
      throw DataError(DataErrc::invalid_argument, "eta must be positive");
    if (steps < 1) throw DataError(DataErrc::invalid_argument, "steps must be >= 1");
    if (!(tikhonov_eps >= 0.0)) throw DataError(DataErrc::invalid_argument, "tikhonov_eps must be >= 0");
    if (!(early_stop_eps >= 0.0))
      throw DataError(DataErrc::invalid_argument, "early_stop_eps must be >= 0");
    if (n_tilde && *n_tilde < 1) throw DataError(DataErrc::invalid_argument, "n_tilde must be >= 1");
    if (sigma) Bandwidth{*sigma};
  }
};

struct ParticleEnsemble {
  Matrix particles;  // n_tilde x d
  std::size_t step = 0;
};

struct Snapshot {
  std::size_t step;
  Matrix particles;
};

struct FlowReport {
  std::size_t steps_run = 0;
  bool stopped_early = false;
  bool aborted = false;
  std::vector<std::pair<std::size_t, double>> eta_history;  // (first step using eta, eta)
  std::vector<double> relative_change_history;              // rho_t
  std::vector<double> grad_norm_history;                    // g_t
  std::size_t kernel_underflow_count = 0;
  double sigma = 0.0;  // resolved bandwidth, in the coordinates the flow ran in
  std::vector<Snapshot> snapshots;
};

/// Raised when the ensemble leaves the finite range; carries the partial report.
class FlowAborted : public NumericalError {
 public:
  FlowAborted(const std::string& what, FlowReport report)
      : NumericalError(what), report_(std::move(report)) {}
  const FlowReport& report() const noexcept { return report_; }

 private:
  FlowReport report_;
};

/// Initial ensemble: each particle is a data row (row i when n_tilde == n,
/// otherwise a uniformly resampled row) whose missing cells are replaced by
/// uniform draws from the observed values of the same column.
inline ParticleEnsemble initialize_marginal(const MaskedDataset& ds, std::size_t n_tilde,
                                            CounterRng& rng) {
  const std::size_t n = ds.rows(), d = ds.cols();
  if (n_tilde < 1) throw DataError(DataErrc::invalid_argument, "n_tilde must be >= 1");
  std::vector<std::vector<double>> observed(d);
  for (std::size_t j = 0; j < d; ++j) {
    observed[j] = ds.observed_column(j);
    if (observed[j].empty())
      throw DataError(DataErrc::fully_missing_column, "column " + std::to_string(j) + " fully missing");
  }
  ParticleEnsemble ens{Matrix(n_tilde, d), 0};
  for (std::size_t i = 0; i < n_tilde; ++i) {
    const std::size_t src = n_tilde == n ? i : static_cast<std::size_t>(rng.index(n));
    for (std::size_t j = 0; j < d; ++j) {
      ens.particles(i, j) = ds.is_missing(src, j) ? observed[j][rng.index(observed[j].size())]
                                                  : ds.value(src, j);
    }
  }
  return ens;
}

struct StepDiagnostics {
  double rho = 0.0;  // mean |v_i| / mean |x_i|
  double g = 0.0;    // mean |v_i|
  double eta = 0.0;  // step size actually applied
  bool halved = false;
  std::size_t underflow = 0;
};

/// Mutable state carried between steps.
struct FlowState {
  double eta;
  double prev_g = std::numeric_limits<double>::infinity();
};

/// Velocities of every particle against the frozen ensemble.
inline Matrix compute_velocities(const Matrix& particles, const std::vector<PatternGroup>& groups,
                                 const PreparedTargets& targets, Bandwidth sigma, double tikhonov_eps,
                                 unsigned threads, std::size_t* underflow = nullptr) {
  const PreparedEnsemble prepared(groups, particles);
  Matrix v(particles.rows(), particles.cols());
  std::vector<std::size_t> under(particles.rows(), 0);
  parallel_for(particles.rows(), threads, [&](std::size_t i) {
    VelocityResult r = aggregate_velocity(groups, targets, prepared, particles.row(i), sigma, tikhonov_eps);
    std::copy(r.v.begin(), r.v.end(), v.row(i).begin());
    under[i] = r.underflow_patterns;
  });
  if (underflow) {
    std::size_t total = 0;
    for (auto u : under) total += u;
    *underflow = total;
  }
  return v;
}

inline double euclidean_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

/// One explicit Euler step X <- X + eta * V with V evaluated on the frozen
/// ensemble. If the mean velocity norm grew since the previous step, eta is
/// halved for every later step. Reports the early-stop ratio of the applied
/// velocities.
inline StepDiagnostics step(ParticleEnsemble& ensemble, const std::vector<PatternGroup>& groups,
                            const PreparedTargets& targets, Bandwidth sigma, double tikhonov_eps,
                            FlowState& state, unsigned threads = 1) {
  if (groups.empty()) throw DataError(DataErrc::invalid_argument, "step: no pattern groups");
  StepDiagnostics diag;
  const Matrix v =
      compute_velocities(ensemble.particles, groups, targets, sigma, tikhonov_eps, threads, &diag.underflow);

  double vnorm = 0.0, xnorm = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    vnorm += euclidean_norm(v.row(i));
    xnorm += euclidean_norm(ensemble.particles.row(i));
  }
  const double nt = static_cast<double>(v.rows());
  diag.g = vnorm / nt;
  if (xnorm > 0.0)
    diag.rho = diag.g / (xnorm / nt);
  else
    diag.rho = vnorm > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;

  diag.eta = state.eta;
  auto x = ensemble.particles.data();
  auto dv = v.data();
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = x[k] + diag.eta * dv[k];
  for (double xk : x)
    if (!std::isfinite(xk)) throw NumericalError("non-finite particle position");
  ++ensemble.step;

  if (diag.g > state.prev_g) {
    state.eta *= 0.5;
    diag.halved = true;
  }
  state.prev_g = diag.g;
  return diag;
}

struct FlowResult {
  Matrix generated;  // n_tilde x d, original coordinates
  FlowReport report;
  std::optional<Standardizer> standardizer;
};

/// Energy distance (standardized by the held-out sample) of every snapshot.
inline std::vector<double> objective_trace(const std::vector<Snapshot>& snapshots, const Matrix& heldout,
                                           unsigned threads = 1) {
  const Standardizer s = fit_standardizer(heldout);
  std::vector<double> out;
  out.reserve(snapshots.size());
  for (const auto& snap : snapshots)
    out.push_back(standardized_energy(snap.particles, heldout, &s, threads).e2);
  return out;
}

/// The full generation pipeline: optional standardization, marginal
/// initialization, bandwidth resolution, the particle loop with early stopping
/// and step halving, and mapping back to original coordinates.
inline FlowResult run(const MaskedDataset& ds, const FlowConfig& config) {
  config.validate();

  FlowResult out;
  const MaskedDataset* data = &ds;
  std::optional<MaskedDataset> standardized;
  if (config.standardize) {
    out.standardizer = fit_standardizer(ds);
    standardized.emplace(out.standardizer->apply(ds, Direction::forward));
    data = &*standardized;
  }
  const std::vector<PatternGroup> groups = partition_by_pattern(*data);
  if (groups.empty()) throw DataError(DataErrc::invalid_argument, "no row has an observed value");
  const PreparedTargets targets(groups);

  CounterRng init_rng(config.seed, Stream::initialization);
  ParticleEnsemble ens = initialize_marginal(*data, config.n_tilde.value_or(ds.rows()), init_rng);

  const Bandwidth sigma =
      config.sigma ? Bandwidth(*config.sigma) : median_heuristic(ens.particles, config.seed);
  FlowReport& rep = out.report;
  rep.sigma = sigma.value();

  std::optional<Standardizer> heldout_std;
  if (config.trace_heldout) heldout_std = fit_standardizer(*config.trace_heldout);
  auto to_original = [&](const Matrix& m) {
    return out.standardizer ? out.standardizer->apply(m, Direction::inverse) : m;
  };
  // Returns the energy of the snapshot when a held-out sample is configured.
  auto snapshot = [&](std::size_t t) -> std::optional<double> {
    Matrix m = to_original(ens.particles);
    std::optional<double> e;
    if (heldout_std)
      e = standardized_energy(m, *config.trace_heldout, &*heldout_std, config.threads).e2;
    rep.snapshots.push_back({t, std::move(m)});
    return e;
  };

  FlowState state{config.eta};
  rep.eta_history.emplace_back(0, state.eta);
  if (config.snapshot_every > 0) {
    auto e = snapshot(0);
    if (config.trace_out && e) *config.trace_out << "0,,,," << csv_detail::format_double(*e) << '\n';
  }
  for (std::size_t t = 0; t < config.steps; ++t) {
    StepDiagnostics diag;
    try {
      diag = step(ens, groups, targets, sigma, config.tikhonov_eps, state, config.threads);
    } catch (const NumericalError& e) {
      rep.aborted = true;
      throw FlowAborted("step " + std::to_string(t) + ": " + e.what(), rep);
    }
    if (diag.halved) rep.eta_history.emplace_back(t + 1, state.eta);
    rep.steps_run = t + 1;
    rep.relative_change_history.push_back(diag.rho);
    rep.grad_norm_history.push_back(diag.g);
    rep.kernel_underflow_count += diag.underflow;

    const bool stop = diag.rho < config.early_stop_eps;
    std::optional<double> energy;
    if (config.snapshot_every > 0 &&
        ((t + 1) % config.snapshot_every == 0 || stop || t + 1 == config.steps))
      energy = snapshot(t + 1);
    if (config.trace_out) {
      auto& os = *config.trace_out;
      os << t + 1 << ',' << csv_detail::format_double(diag.rho) << ','
         << csv_detail::format_double(diag.g) << ',' << csv_detail::format_double(diag.eta) << ',';
      if (energy) os << csv_detail::format_double(*energy);
      os << '\n';
    }
    if (stop) {
      rep.stopped_early = true;
      break;
    }
  }

  out.generated = to_original(ens.particles);
  return out;
}

}  // namespace flowgem
