#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "csv.hpp"
#include "line_network_sim.hpp"
#include "numerics.hpp"

namespace cascade_iv {

inline constexpr std::uint64_t kTrialBlockSize = 256;

/// Worker count: `requested` if positive, else hardware concurrency, capped
/// by CASCADE_IV_THREADS when set.
inline int resolve_parallelism(int requested = 0) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("CASCADE_IV_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<long>(n, cap);
  }
  return std::max(1, n);
}

/// Runs trials 0..num_trials-1 in fixed blocks. Each block fills a fresh
/// accumulator and blocks are merged strictly in index order, so the result
/// is the same for every thread count.
template <typename Acc, typename MakeAcc, typename TrialFn>
Acc run_blocks(std::uint64_t num_trials, int threads, MakeAcc make_acc, TrialFn trial_fn,
               std::uint64_t block_size = kTrialBlockSize) {
  Acc total = make_acc();
  if (num_trials == 0) return total;
  const std::uint64_t num_blocks = (num_trials + block_size - 1) / block_size;
  auto run_block = [&](std::uint64_t b) {
    Acc acc = make_acc();
    const std::uint64_t end = std::min(num_trials, (b + 1) * block_size);
    for (std::uint64_t i = b * block_size; i < end; ++i) trial_fn(acc, i);
    return acc;
  };

  threads = std::max(1, static_cast<int>(std::min<std::uint64_t>(threads, num_blocks)));
  if (threads == 1) {
    for (std::uint64_t b = 0; b < num_blocks; ++b) total.merge(run_block(b));
    return total;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::uint64_t next_block = 0;
  std::uint64_t next_merge = 0;
  std::map<std::uint64_t, Acc> pending;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      std::uint64_t b;
      {
        std::unique_lock lock(mu);
        // Bound the number of unmerged partials.
        cv.wait(lock, [&] {
          return failure || next_block >= num_blocks ||
                 next_block < next_merge + 4 * static_cast<std::uint64_t>(threads);
        });
        if (failure || next_block >= num_blocks) return;
        b = next_block++;
      }
      try {
        Acc acc = run_block(b);
        std::unique_lock lock(mu);
        pending.emplace(b, std::move(acc));
        while (!pending.empty() && pending.begin()->first == next_merge) {
          total.merge(pending.begin()->second);
          pending.erase(pending.begin());
          ++next_merge;
        }
      } catch (...) {
        std::unique_lock lock(mu);
        if (!failure) failure = std::current_exception();
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return total;
}

/// Sample mean and standard error from compensated first and second sums.
class Moment {
 public:
  void add(double x) {
    sum_.add(x);
    sum_sq_.add(x * x);
    ++n_;
  }
  void merge(const Moment& o) {
    sum_.merge(o.sum_);
    sum_sq_.merge(o.sum_sq_);
    n_ += o.n_;
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return n_ ? sum_.value() / static_cast<double>(n_) : 0.0; }
  double variance() const {
    if (n_ < 2) return 0.0;
    const double m = mean();
    const double v = (sum_sq_.value() - static_cast<double>(n_) * m * m) / static_cast<double>(n_ - 1);
    return std::max(v, 0.0);
  }
  double standard_error() const { return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  CompensatedSum sum_;
  CompensatedSum sum_sq_;
  std::uint64_t n_ = 0;
};

struct SimulationSpec {
  ChannelParams channel;
  SourceProcess source = SourceProcess::known_sample_random();
  NoiseModel noise;
  int r_max = 1;
  int t_max = 0;
  HopConvention convention = HopConvention::Instantaneous;
};

/// Per-cell statistics. Hop quantities for hop r (node r -> r+1) sit in
/// cell (r, t): power X_r(t)^2, lag product Y_r(t) Y_r(t-1), and the
/// orthogonality probe E_r(t) (E_{r+1}(t-1) - E_r(t)).
struct CellMoments {
  Moment squared_error;
  Moment power;
  Moment lag_product;
  Moment orthogonality;

  void merge(const CellMoments& o) {
    squared_error.merge(o.squared_error);
    power.merge(o.power);
    lag_product.merge(o.lag_product);
    orthogonality.merge(o.orthogonality);
  }
};

class MonteCarloAggregate {
 public:
  MonteCarloAggregate() = default;
  MonteCarloAggregate(int r_max, int t_max)
      : r_max_(r_max), t_max_(t_max), cells_(static_cast<std::size_t>(r_max + 1) * (t_max + 1)) {}

  void merge(const MonteCarloAggregate& o) {
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i].merge(o.cells_[i]);
    max_identity_residual_ = std::max(max_identity_residual_, o.max_identity_residual_);
    trials_ += o.trials_;
  }

  int max_relay() const { return r_max_; }
  int max_time() const { return t_max_; }
  std::uint64_t trials() const { return trials_; }
  double max_identity_residual() const { return max_identity_residual_; }

  const CellMoments& cell(int r, int t) const { return cells_.at(index(r, t)); }
  CellMoments& cell(int r, int t) { return cells_.at(index(r, t)); }

  void note_trial() { ++trials_; }
  void note_residual(double v) { max_identity_residual_ = std::max(max_identity_residual_, std::abs(v)); }

  /// Aggregate CSV `r,t,emp_mse,emp_power,stderr_mse,n_trials`; emp_power is
  /// nan where the node does not transmit.
  void write_csv(std::ostream& os) const {
    CsvWriter csv(os, {"r", "t", "emp_mse", "emp_power", "stderr_mse", "n_trials"});
    for (int r = 0; r <= r_max_; ++r)
      for (int t = 0; t <= t_max_; ++t) {
        const CellMoments& c = cell(r, t);
        const double power =
            c.power.count() ? c.power.mean() : std::numeric_limits<double>::quiet_NaN();
        csv.row(r, t, c.squared_error.mean(), power, c.squared_error.standard_error(), c.squared_error.count());
      }
  }

 private:
  std::size_t index(int r, int t) const {
    if (r < 0 || r > r_max_ || t < 0 || t > t_max_) throw std::out_of_range("aggregate cell out of range");
    return static_cast<std::size_t>(r) * (t_max_ + 1) + static_cast<std::size_t>(t);
  }

  int r_max_ = 0;
  int t_max_ = 0;
  std::vector<CellMoments> cells_;
  double max_identity_residual_ = 0.0;
  std::uint64_t trials_ = 0;
};

/// Trial i draws every random quantity from streams keyed by (master_seed, i).
inline MonteCarloAggregate run_monte_carlo(const SimulationSpec& spec, const GainTable& gains,
                                           std::uint64_t num_trials, std::uint64_t master_seed, int threads) {
  if (num_trials < 1) throw std::invalid_argument("num_trials must be >= 1");
  if (gains.max_relay() != spec.r_max || gains.max_time() != spec.t_max)
    throw std::invalid_argument("gain table does not match the simulation grid");
  const int r_max = spec.r_max;
  const int t_max = spec.t_max;
  auto make = [&] { return MonteCarloAggregate(r_max, t_max); };
  auto trial = [&](MonteCarloAggregate& acc, std::uint64_t i) {
    const SourceRealization src = spec.source.realize(master_seed, i, t_max);
    const TrialRng rng(master_seed, i, RngDomain::ChannelNoise);
    std::vector<double> last_y(static_cast<std::size_t>(r_max) + 1, 0.0);
    std::vector<char> has_last_y(last_y.size(), 0);
    run_trial_observed(gains, spec.noise, src, rng, SimulationOptions{spec.convention}, [&](const CellState& c) {
      acc.cell(c.r, c.t).squared_error.add(c.error * c.error);
      if (c.r == 0 || !c.active) return;
      CellMoments& hop = acc.cell(c.r - 1, c.t);
      hop.power.add(c.x * c.x);
      hop.orthogonality.add(c.upstream_error * (c.prev_error - c.upstream_error));
      if (has_last_y[c.r]) hop.lag_product.add(c.y * last_y[c.r]);
      last_y[c.r] = c.y;
      has_last_y[c.r] = 1;
      acc.note_residual(c.identity_residual);
    });
    acc.note_trial();
  };
  return run_blocks<MonteCarloAggregate>(num_trials, threads, make, trial);
}

struct Verdict {
  std::string name;
  bool passed = true;
  std::string detail;
};

inline void write_verdicts_csv(std::ostream& os, const std::vector<Verdict>& verdicts) {
  os << "check,passed,detail\n";
  for (const auto& v : verdicts) os << v.name << ',' << (v.passed ? 1 : 0) << ',' << v.detail << '\n';
}

inline bool all_passed(const std::vector<Verdict>& verdicts) {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
}

/// Tallies of one family of z-checks.
struct ZCheck {
  std::string name;
  int checked = 0;
  int failed = 0;
  double worst_z = 0.0;
  std::string worst_cell;

  explicit ZCheck(std::string check_name) : name(std::move(check_name)) {}

  void add(double deviation, double stderr, int r, int t, double sigmas = 3.0) {
    ++checked;
    double z;
    if (stderr > 0.0)
      z = std::abs(deviation) / stderr;
    else
      z = std::abs(deviation) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
    if (z > sigmas) ++failed;
    if (z > worst_z || worst_cell.empty()) {
      worst_z = std::max(worst_z, z);
      worst_cell = "(" + std::to_string(r) + ";" + std::to_string(t) + ")";
    }
  }

  Verdict verdict() const {
    return {name, failed == 0 && checked > 0,
            std::to_string(failed) + "/" + std::to_string(checked) + " cells beyond 3 sigma; worst z=" +
                format_double(worst_z) + " at " + worst_cell};
  }
};

struct SimulationChecks {
  bool mse = true;
  bool power = true;
  bool decorrelation = true;
  bool orthogonality = true;
  bool identity = true;
};

/// Theory-vs-simulation verdicts against the analytic grid.
inline std::vector<Verdict> verify_simulation(const MonteCarloAggregate& agg, const MseGrid& grid,
                                              const GainTable& gains, const ChannelParams& ch,
                                              HopConvention convention, const SimulationChecks& which = {}) {
  ZCheck mse{"mse_matches_grid"}, power{"power_equals_snr"}, decor{"outputs_uncorrelated"},
      ortho{"error_covariance_identity"};
  for (int r = 0; r <= agg.max_relay(); ++r)
    for (int t = 0; t <= agg.max_time(); ++t) {
      const CellMoments& c = agg.cell(r, t);
      if (r >= 1) {
        const double m = analytic_mse(grid, r, t, convention);
        mse.add(c.squared_error.mean() - m, c.squared_error.standard_error(), r, t);
      }
      if (r < agg.max_relay()) {
        const int tl = convention == HopConvention::Delayed ? t - (r + 1) : t;
        if (tl < 0 || gains.silent(r, tl)) continue;
        power.add(c.power.mean() - ch.snr, c.power.standard_error(), r, t);
        ortho.add(c.orthogonality.mean(), c.orthogonality.standard_error(), r, t);
        if (c.lag_product.count() > 0) decor.add(c.lag_product.mean(), c.lag_product.standard_error(), r, t);
      }
    }
  std::vector<Verdict> out;
  if (which.mse) out.push_back(mse.verdict());
  if (which.power) out.push_back(power.verdict());
  if (which.decorrelation) out.push_back(decor.verdict());
  if (which.orthogonality) out.push_back(ortho.verdict());
  if (which.identity)
    out.push_back({"per_step_identity", agg.max_identity_residual() <= 1e-12,
                   "max residual " + format_double(agg.max_identity_residual())});
  return out;
}

}  // namespace cascade_iv
