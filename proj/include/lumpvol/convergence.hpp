#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "lumpvol/kw_vortex.hpp"
#include "lumpvol/l2_metric.hpp"

namespace lumpvol {

struct ConvergenceRow {
  double s2 = 0.0;
  double g_diff = 0.0;        // max entrywise |g_s - G_L2|
  double phi_v_diff = 0.0;    // sup |phi_s - v_s|; NaN when v_s is undefined
  double phi_inf_diff = 0.0;  // sup |phi_s - phi_inf|
  double z_diff = 0.0;        // max entrywise |Z_s - G_L2|
  double x_norm = 0.0;        // max entrywise |X_s|
  double u_alpha = 0.0;       // max over directions of sup |u_s^alpha|
  double residual = 0.0;
  int newton_iterations = 0;
};

struct ConvergenceSweep {
  std::vector<ConvergenceRow> rows;
  Eigen::MatrixXcd limit;
  int band_limit = 0;
};

// s^2 = s2_min * 2^i, i = 0 .. while <= s2_max.
inline std::vector<double> geometric_sweep(double s2_min, double s2_max, double factor = 2.0) {
  if (!(s2_min > 0.0) || !(s2_max >= s2_min) || !(factor > 1.0)) throw InvalidArgument("geometric_sweep: bad range");
  std::vector<double> out;
  for (double s = s2_min; s <= s2_max * (1.0 + 1e-12); s *= factor) out.push_back(s);
  return out;
}

inline ConvergenceSweep convergence_sweep(const PolyTuple& P, const std::vector<double>& s2_values, const GridPtr& grid,
                                          const SolverOptions& opt = {}) {
  ConvergenceSweep out;
  const auto chart = ModuliChart::largest(P);
  out.limit = l2_metric_raw(P, chart, grid);
  out.band_limit = grid->band_limit();
  for (double s2 : s2_values) {
    VortexConfig cfg{s2, P.r(), P.k()};
    VortexOptions vo;
    vo.solver = opt;
    vo.keep_fields = true;
    const auto R = vortex_metric(P, cfg, grid, chart, vo);
    const auto& sol = *R.solution;
    const auto& h = *R.h;
    ConvergenceRow row;
    row.s2 = s2;
    row.g_diff = (R.g.g - out.limit).cwiseAbs().maxCoeff();
    row.z_diff = (R.Z - out.limit).cwiseAbs().maxCoeff();
    row.x_norm = R.X.cwiseAbs().maxCoeff();
    row.phi_inf_diff = sup_distance(sol.phi, phi_infinity(h));
    try {
      row.phi_v_diff = sup_distance(sol.phi, approx_solution(h, cfg).v);
    } catch (const DomainError&) {
      row.phi_v_diff = std::numeric_limits<double>::quiet_NaN();
    }
    // u_alpha uses the psi derivative of the same gauge as the solve.
    const auto m = sample_map(chart.normalize(P), grid);
    for (int a = 0; a < chart.q(); ++a) {
      const auto d = direction_derivatives(m, chart.direction(a), h, vo.gauge);
      const auto ua = 0.5 * sol.phi_derivatives[a] + d.psi;
      row.u_alpha = std::max(row.u_alpha, ua.sup_norm());
    }
    row.residual = R.kw_residual;
    row.newton_iterations = R.newton_iterations;
    out.rows.push_back(row);
  }
  return out;
}

// Least-squares slope of log y against log x over points with finite positive y.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(y[i] > 0.0) || !std::isfinite(y[i]) || !(x[i] > 0.0)) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}

// Slope against s (not s^2) for one column of a sweep.
template <class Get>
double sweep_slope(const ConvergenceSweep& sw, Get&& get) {
  std::vector<double> x, y;
  for (const auto& r : sw.rows) {
    x.push_back(std::sqrt(r.s2));
    y.push_back(get(r));
  }
  return loglog_slope(x, y);
}

}  // namespace lumpvol
