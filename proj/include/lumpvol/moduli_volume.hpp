#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumpvol/error.hpp"
#include "lumpvol/kw_vortex.hpp"
#include "lumpvol/l2_metric.hpp"
#include "lumpvol/rational_map.hpp"
#include "lumpvol/rng.hpp"

namespace lumpvol {

inline double fs_volume(int q) { return std::pow(kPi, q) / std::tgamma(q + 1.0); }

// Runs f(i) for i in [0, n) on a pool of workers; results are stored by index so
// the output never depends on the worker count.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, int threads, F&& f) {
  std::vector<R> out(n);
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) out[i] = f(i);
  };
  if (threads == 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}
inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

struct ChartSample {
  Eigen::VectorXcd w;  // affine coordinates, |w_a| <= 1
  int fixed = 0;       // index of the entry normalised to 1
};

// FS-uniform point of CP^q: projectivised complex Gaussian in the chart of its
// largest-modulus entry.
inline ChartSample sample_parameter(int q, StreamRng& rng) {
  if (q < 1) throw InvalidArgument("sample_parameter: q must be >= 1");
  Eigen::VectorXcd z(q + 1);
  for (int i = 0; i <= q; ++i) z(i) = rng.complex_normal();
  int best = 0;
  for (int i = 1; i <= q; ++i)
    if (std::abs(z(i)) > std::abs(z(best))) best = i;
  ChartSample s;
  s.fixed = best;
  s.w.resize(q);
  for (int i = 0, a = 0; i <= q; ++i)
    if (i != best) s.w(a++) = z(i) / z(best);
  return s;
}

inline ModuliChart chart_for_sample(int k, int r, const ChartSample& s) {
  return ModuliChart(k, r, CoeffIndex{s.fixed / (r + 1), s.fixed % (r + 1)});
}

struct SampleRecord {
  double ratio = 0.0;
  double boundary_proximity = 1.0;
  int band_limit = 0;
  bool failed = false;
  bool refined = false;
  std::string failure;
};

struct VolumeEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n_samples = 0;
  long n_used = 0;
  std::uint64_t seed = 0;
  double boundary_fraction = 0.0;
  long failures = 0;
  long refined = 0;
  int grid_L = 0;
  nlohmann::json config;
  std::vector<SampleRecord> samples;

  double failure_fraction() const { return n_samples > 0 ? static_cast<double>(failures) / n_samples : 0.0; }
};

// Mean and standard error of prefactor * ratio over non-failed samples, in index order.
// exclude_fraction drops that share of the samples closest to the boundary.
inline void summarize(VolumeEstimate& est, double prefactor, double exclude_fraction = 0.0) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < est.samples.size(); ++i)
    if (!est.samples[i].failed) keep.push_back(i);
  if (exclude_fraction > 0.0 && !keep.empty()) {
    const auto drop = static_cast<std::size_t>(std::floor(exclude_fraction * keep.size()));
    auto by_prox = keep;
    std::stable_sort(by_prox.begin(), by_prox.end(), [&](std::size_t a, std::size_t b) {
      return est.samples[a].boundary_proximity < est.samples[b].boundary_proximity;
    });
    std::vector<char> dropped(est.samples.size(), 0);
    for (std::size_t i = 0; i < drop; ++i) dropped[by_prox[i]] = 1;
    std::vector<std::size_t> kept;
    for (auto i : keep)
      if (!dropped[i]) kept.push_back(i);
    keep = std::move(kept);
  }
  std::vector<double> x;
  x.reserve(keep.size());
  for (auto i : keep) x.push_back(prefactor * est.samples[i].ratio);
  const std::size_t n = x.size();
  est.n_used = static_cast<long>(n);
  est.failures = 0;
  est.refined = 0;
  long near = 0;
  for (const auto& s : est.samples) {
    if (s.failed) ++est.failures;
    if (s.refined) ++est.refined;
    if (s.boundary_proximity < kBoundaryProximity) ++near;
  }
  est.boundary_fraction = est.samples.empty() ? 0.0 : static_cast<double>(near) / est.samples.size();
  if (n == 0) {
    est.mean = std::numeric_limits<double>::quiet_NaN();
    est.std_error = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  est.mean = pairwise_sum(x) / static_cast<double>(n);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x[i] - est.mean) * (x[i] - est.mean);
  const double var = n > 1 ? pairwise_sum(d2) / static_cast<double>(n - 1) : 0.0;
  est.std_error = std::sqrt(var / static_cast<double>(n));
}

struct McOptions {
  long n = 1000;
  std::uint64_t seed = 1;
  int band_limit = 32;
  int threads = 1;
  bool keep_samples = false;
};

namespace detail {

inline VolumeEstimate finish(std::vector<SampleRecord> samples, const McOptions& opt, double prefactor,
                             nlohmann::json config) {
  VolumeEstimate est;
  est.samples = std::move(samples);
  est.n_samples = opt.n;
  est.seed = opt.seed;
  est.grid_L = opt.band_limit;
  est.config = std::move(config);
  summarize(est, prefactor);
  if (!opt.keep_samples) est.samples.clear();
  return est;
}

}  // namespace detail

inline int moduli_dimension(int r, int k) { return (k + 1) * (r + 1) - 1; }

// L^2 volume of degree-r maps S^2 -> CP^k: (pi^q/q!) E_FS[det G / det G_ref].
inline VolumeEstimate mc_volume_l2(int r, int k, const McOptions& opt) {
  if (r < 1 || k < 1) throw InvalidArgument("mc_volume_l2: need r >= 1 and k >= 1");
  if (opt.n < 1) throw InvalidArgument("mc_volume_l2: need n >= 1");
  const int q = moduli_dimension(r, k);
  const auto grid = GridCache::get(opt.band_limit);
  auto samples = parallel_map<SampleRecord>(static_cast<std::size_t>(opt.n), opt.threads, [&](std::size_t i) {
    StreamRng rng(opt.seed, i);
    const auto s = sample_parameter(q, rng);
    const auto chart = chart_for_sample(k, r, s);
    SampleRecord rec;
    try {
      const auto M = l2_metric_matrix(chart.point(s.w), chart, grid);
      rec.ratio = density_ratio(M.g, s.w);
      rec.boundary_proximity = M.diagnostics.boundary_proximity;
      rec.band_limit = M.diagnostics.band_limit;
      rec.refined = M.diagnostics.refined;
    } catch (const Error& e) {
      rec.failed = true;
      rec.failure = e.what();
      rec.boundary_proximity = 0.0;
    }
    return rec;
  });
  nlohmann::json cfg = {{"mode", "l2"}, {"r", r}, {"k", k}, {"q", q}, {"n", opt.n}, {"seed", opt.seed}, {"L", opt.band_limit}};
  return detail::finish(std::move(samples), opt, fs_volume(q), cfg);
}

inline constexpr int kMaxVortexBandLimit = 96;

namespace detail {

inline double vortex_ratio(const PolyTuple& P, const VortexConfig& cfg, int L, const ModuliChart& chart,
                           const Eigen::VectorXcd& w, const VortexOptions& vo, double* proximity) {
  auto R = vortex_metric(P, cfg, GridCache::get(L), chart, vo);
  if (proximity) *proximity = R.boundary_proximity;
  return density_ratio(R.g.g, w);
}

}  // namespace detail

// Finite-s vortex volume: (pi^q/q!) E_FS[det g_s / det G_ref].
// Near-boundary samples are re-evaluated on doubled grids until the ratio settles.
inline VolumeEstimate mc_volume_vortex(int r, int k, double s2, const McOptions& opt, const SolverOptions& sopt = {}) {
  if (r < 1 || k < 1) throw InvalidArgument("mc_volume_vortex: need r >= 1 and k >= 1");
  if (opt.n < 1) throw InvalidArgument("mc_volume_vortex: need n >= 1");
  if (opt.band_limit < 1) throw InvalidArgument("mc_volume_vortex: need band limit >= 1");
  VortexConfig cfg{s2, r, k};
  cfg.validate();
  const int q = moduli_dimension(r, k);
  auto samples = parallel_map<SampleRecord>(static_cast<std::size_t>(opt.n), opt.threads, [&](std::size_t i) {
    StreamRng rng(opt.seed, i);
    const auto s = sample_parameter(q, rng);
    const auto chart = chart_for_sample(k, r, s);
    const auto P = chart.point(s.w);
    SampleRecord rec;
    VortexOptions vo;
    vo.solver = sopt;
    int L = opt.band_limit;
    try {
      double ratio = detail::vortex_ratio(P, cfg, L, chart, s.w, vo, &rec.boundary_proximity);
      if (rec.boundary_proximity < kBoundaryProximity) {
        for (int L2 = 2 * L; L2 <= kMaxVortexBandLimit; L2 *= 2) {
          const double next = detail::vortex_ratio(P, cfg, L2, chart, s.w, vo, nullptr);
          const double change = std::abs(next - ratio) / std::max(std::abs(next), 1e-300);
          ratio = next;
          L = L2;
          rec.refined = true;
          if (change < kBoundaryRefineTol) break;
        }
      }
      rec.ratio = ratio;
      rec.band_limit = L;
    } catch (const Error& e) {
      rec.failed = true;
      rec.failure = e.what();
      rec.boundary_proximity = 0.0;
    }
    return rec;
  });
  nlohmann::json c = {{"mode", "vortex"}, {"r", r}, {"k", k}, {"q", q}, {"s2", s2},
                      {"n", opt.n}, {"seed", opt.seed}, {"L", opt.band_limit}};
  return detail::finish(std::move(samples), opt, fs_volume(q), c);
}

enum class CalibrationMode { ratio, polydisc };

// Ratio mode feeds det G_ref through the estimator (integrand identically 1).
// Polydisc mode integrates det G_ref over the unit polydisc of one chart, which
// covers 1/(q+1) of CP^q.
inline VolumeEstimate calibrate_cpq(int q, const McOptions& opt, CalibrationMode mode = CalibrationMode::polydisc) {
  if (q < 1) throw InvalidArgument("calibrate_cpq: q must be >= 1");
  if (opt.n < 1) throw InvalidArgument("calibrate_cpq: need n >= 1");
  auto samples = parallel_map<SampleRecord>(static_cast<std::size_t>(opt.n), opt.threads, [&](std::size_t i) {
    StreamRng rng(opt.seed, i);
    SampleRecord rec;
    if (mode == CalibrationMode::ratio) {
      const auto s = sample_parameter(q, rng);
      rec.ratio = density_ratio(fs_reference_matrix(s.w), s.w);
    } else {
      Eigen::VectorXcd w(q);
      for (int a = 0; a < q; ++a) w(a) = std::polar(std::sqrt(rng.uniform()), 2.0 * kPi * rng.uniform());
      rec.ratio = volume_density(fs_reference_matrix(w));
    }
    return rec;
  });
  const double pref = mode == CalibrationMode::ratio ? fs_volume(q) : (q + 1.0) * std::pow(kPi, q);
  nlohmann::json c = {{"mode", mode == CalibrationMode::ratio ? "calibrate-ratio" : "calibrate-polydisc"},
                      {"q", q}, {"n", opt.n}, {"seed", opt.seed}};
  McOptions o = opt;
  o.band_limit = 0;
  return detail::finish(std::move(samples), o, pref, c);
}

inline nlohmann::json to_json_value(const VolumeEstimate& e) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  return {{"mean", num(e.mean)},
          {"stderr", num(e.std_error)},
          {"n", e.n_samples},
          {"n_used", e.n_used},
          {"seed", e.seed},
          {"boundary_fraction", e.boundary_fraction},
          {"failures", e.failures},
          {"refined", e.refined},
          {"grid_L", e.grid_L},
          {"config", e.config}};
}

}  // namespace lumpvol
