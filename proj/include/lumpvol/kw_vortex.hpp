#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumpvol/error.hpp"
#include "lumpvol/l2_metric.hpp"
#include "lumpvol/rational_map.hpp"
#include "lumpvol/sphere_grid.hpp"

namespace lumpvol {

struct VortexConfig {
  double s2 = 0.0;
  int r = 1;
  int k = 1;
  std::optional<double> c1_override;
  double c2 = 1.0;

  double c1() const { return c1_override ? *c1_override : 2.0 * kPi * r; }
  // c(s) = 2 c_1 - s^2; the Kazdan-Warner right-hand side constant.
  double c_of_s() const { return 2.0 * c1() - s2; }
  double bradlow_bound() const { return 4.0 * kPi * r; }

  void validate() const {
    if (!(s2 > 0.0)) throw DomainError("VortexConfig: s^2 must be positive");
    if (!c1_override && s2 < bradlow_bound())
      throw BradlowViolation("VortexConfig: s^2 = " + std::to_string(s2) + " is below the stability bound 4 pi r = " +
                             std::to_string(bradlow_bound()));
    if (!(s2 - 2.0 * c1() > 0.0))
      throw DomainError("VortexConfig: s^2 - 2 c_1 must be positive for a solution to exist");
  }
};

struct SolverOptions {
  double tol = 1e-10;
  int max_iterations = 50;
  double linear_tol = 1e-13;
  int max_linear_iterations = 2000;
};

struct LinearSolveInfo {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Preconditioned CG for (Delta + w) x = b in the quadrature inner product, w > 0 real.
inline ScalarField pcg_solve(const ScalarField& w, const ScalarField& b, double rel_tol, int max_it,
                             LinearSolveInfo* info = nullptr) {
  const SphereGrid& g = b.grid();
  const double wbar = integrate(w).real();
  if (!(wbar > 0.0) || w.min_real() <= 0.0) throw DomainError("pcg_solve: weight must be positive");
  auto apply = [&](const ScalarField& x) { return laplacian(x) + w * x; };
  auto precond = [&](const ScalarField& r) {
    auto a = r.coefficients();
    const auto proj = ScalarField::from_coefficients(r.grid_ptr(), a);
    for (int l = 0; l <= g.band_limit(); ++l)
      for (int m = -l; m <= l; ++m) a[SphereGrid::coeff_index(l, m)] /= g.eigenvalue(l) + wbar;
    auto z = ScalarField::from_coefficients(r.grid_ptr(), a);
    z += (r - proj) * cplx(1.0 / wbar);
    return z;
  };
  auto dot = [](const ScalarField& x, const ScalarField& y) { return inner(x, y); };

  const double bnorm = std::sqrt(std::abs(dot(b, b)));
  ScalarField x = ScalarField::constant(b.grid_ptr(), 0.0);
  if (bnorm == 0.0) {
    if (info) *info = {0, 0.0};
    return x;
  }
  ScalarField r = b;
  ScalarField z = precond(r);
  ScalarField p = z;
  cplx rz = dot(r, z);
  double rel = 1.0;
  int it = 0;
  for (; it < max_it; ++it) {
    const ScalarField Ap = apply(p);
    const cplx alpha = rz / dot(p, Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rel = std::sqrt(std::abs(dot(r, r))) / bnorm;
    if (rel < rel_tol) {
      ++it;
      break;
    }
    z = precond(r);
    const cplx rz_new = dot(r, z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (info) *info = {it, rel};
  if (!(rel < std::max(rel_tol, 1e-10)))
    throw NoConvergence("pcg_solve: linear solve did not converge", rel, it);
  return x;
}

struct KWSolution {
  ScalarField phi;
  double residual = 0.0;
  int iterations = 0;
  int linear_iterations = 0;
  bool approximate_guess = false;
  std::optional<ScalarField> psi;
  std::optional<ScalarField> u;
  std::vector<ScalarField> phi_derivatives;
};

// F(phi) = Delta phi + s^2 (-h) e^phi - (s^2 - 2 c_1).
inline ScalarField kw_residual(const ScalarField& phi, const ScalarField& h, const VortexConfig& cfg) {
  const double s2 = cfg.s2;
  auto nonlin = ScalarField::from_nodes(phi.grid_ptr(), [&](std::size_t n) {
    return cplx(s2 * (-h[n].real()) * std::exp(phi[n].real()));
  });
  return laplacian(phi) + nonlin + cplx(cfg.c_of_s());
}

struct ApproxSolution {
  ScalarField v;
  ScalarField error;
  ScalarField numerator;
};

// v_s = log(N / (-s^2 h)), N = Delta log(-h) - c(s); E_s = -Delta log(N / s^2).
inline ApproxSolution approx_solution(const ScalarField& h, const VortexConfig& cfg) {
  const auto logmh = h.map([](cplx x) { return cplx(std::log(-x.real())); });
  auto N = laplacian(logmh) - cplx(cfg.c_of_s());
  N = N.real();
  if (N.min_real() <= 0.0)
    throw DomainError("approx_solution: numerator Delta log(-h) - c(s) is not positive (s too small)");
  const double s2 = cfg.s2;
  const auto logNs = N.map([&](cplx x) { return cplx(std::log(x.real() / s2)); });
  ApproxSolution out{logNs - logmh, -laplacian(logNs).real(), N};
  return out;
}

inline ScalarField phi_infinity(const ScalarField& h, double c2 = 1.0) {
  return h.map([&](cplx x) { return cplx(std::log(c2 / (-x.real()))); });
}

inline KWSolution kw_solve(const ScalarField& h, const VortexConfig& cfg, const SolverOptions& opt = {},
                           const std::optional<ScalarField>& guess = std::nullopt) {
  cfg.validate();
  if (h.max_real() >= 0.0) throw DomainError("kw_solve: h must be strictly negative");
  const double s2 = cfg.s2;
  const double C = s2 - 2.0 * cfg.c1();
  KWSolution sol;
  if (guess) {
    sol.phi = *guess;
  } else {
    try {
      sol.phi = approx_solution(h, cfg).v;
      sol.approximate_guess = true;
    } catch (const DomainError&) {
      sol.phi = h.map([&](cplx x) { return cplx(std::log(C / s2) - std::log(-x.real())); });
    }
  }
  auto l2 = [](const ScalarField& f) { return std::sqrt(std::abs(inner(f, f))); };
  ScalarField F = kw_residual(sol.phi, h, cfg);
  double res = F.sup_norm();
  for (int it = 0;; ++it) {
    sol.iterations = it;
    sol.residual = res;
    if (res < opt.tol) break;
    if (it >= opt.max_iterations)
      throw NoConvergence("kw_solve: Newton iteration did not converge", res, it);
    const auto w = ScalarField::from_nodes(h.grid_ptr(), [&](std::size_t n) {
      return cplx(s2 * (-h[n].real()) * std::exp(sol.phi[n].real()));
    });
    LinearSolveInfo info;
    const auto delta = pcg_solve(w, -F, opt.linear_tol, opt.max_linear_iterations, &info).real();
    sol.linear_iterations += info.iterations;
    const double f0 = l2(F);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      ScalarField trial = sol.phi + t * delta;
      ScalarField Ft = kw_residual(trial, h, cfg);
      if (l2(Ft) < f0 || Ft.sup_norm() < opt.tol) {
        sol.phi = std::move(trial);
        F = std::move(Ft);
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NoConvergence("kw_solve: line search failed", res, it);
    res = F.sup_norm();
  }
  return sol;
}

// Zero-mean psi with Delta psi = c_1 - kappa.
inline ScalarField psi_solve(const MapOnGrid& m) {
  const auto kappa = curvature_field(m);
  return poisson_solve(cplx(2.0 * kPi * m.r) - kappa).real();
}
inline ScalarField psi_solve(const PolyTuple& P, const GridPtr& grid) { return psi_solve(sample_map(P, grid)); }

inline ScalarField norm_function_from_psi(const ScalarField& psi) {
  return psi.map([](cplx x) { return cplx(-std::exp(2.0 * x.real())); });
}

// h = -exp(2 psi) under the unit-norm choice of sections.
inline ScalarField norm_function(const PolyTuple& P, const GridPtr& grid) {
  return norm_function_from_psi(psi_solve(P, grid));
}

// Norm function built from the curvature of the divisor-stripped norm, defined
// also at tuples with common roots.
inline ScalarField extended_norm_function(const PolyTuple& P, const GridPtr& grid) {
  const auto kappa = extended_curvature_field(P, grid);
  const cplx mean = integrate(kappa);
  return norm_function_from_psi(poisson_solve(mean - kappa).real());
}

// Solves (Delta + s^2 (-h) e^phi) phi_a = s^2 h_a e^phi.
inline ScalarField linearized_solve(const KWSolution& sol, const ScalarField& h, const ScalarField& h_alpha,
                                    const VortexConfig& cfg, const SolverOptions& opt = {},
                                    LinearSolveInfo* info = nullptr) {
  const double s2 = cfg.s2;
  const auto w = ScalarField::from_nodes(h.grid_ptr(), [&](std::size_t n) {
    return cplx(s2 * (-h[n].real()) * std::exp(sol.phi[n].real()));
  });
  const auto rhs = ScalarField::from_nodes(h.grid_ptr(), [&](std::size_t n) {
    return s2 * h_alpha[n] * std::exp(sol.phi[n].real());
  });
  return pcg_solve(w, rhs, opt.linear_tol, opt.max_linear_iterations, info);
}

// Holomorphic moduli derivatives along one chart direction.
struct DirectionDerivatives {
  ScalarField log_norm;   // a_alpha = d_alpha log n
  ScalarField curvature;  // kappa_alpha
  ScalarField psi;        // psi_alpha, Delta psi_alpha = -kappa_alpha
  ScalarField h;          // h_alpha = 2 psi_alpha h
};

// How psi and psi_alpha are obtained: Poisson solves against the analytic
// curvature, or the equivalent closed forms psi = (log n - <log n>)/2 and
// psi_alpha = (a_alpha - <a_alpha>)/2, which need no curvature quadrature.
enum class GaugeMethod { poisson, closed_form };

inline ScalarField psi_closed_form(const MapOnGrid& m) {
  auto logn = ScalarField::from_nodes(m.grid, [&](std::size_t n) { return cplx(std::log(m.norm2[n])); });
  const cplx mean = integrate(logn);
  return 0.5 * (logn - mean);
}

inline DirectionDerivatives direction_derivatives(const MapOnGrid& m, CoeffIndex d, const ScalarField& h,
                                                  GaugeMethod gauge = GaugeMethod::closed_form) {
  const GridPtr& grid = m.grid;
  DirectionDerivatives out;
  out.log_norm = ScalarField::from_nodes(grid, [&](std::size_t n) {
    const long c = static_cast<long>(n);
    return m.mono(d.col, c) * std::conj(m.values(d.row, c)) / m.norm2[n];
  });
  out.curvature = ScalarField::from_nodes(grid, [&](std::size_t n) {
    const long c = static_cast<long>(n);
    const Eigen::VectorXcd P = m.values.col(c), v = m.dvalues.col(c);
    const double p2 = P.squaredNorm(), v2 = v.squaredNorm();
    const cplx vp = P.dot(v);  // <v, P>
    const cplx e = m.mono(d.col, c), de = m.dmono(d.col, c);
    const cplx dv2 = de * std::conj(v(d.row));
    const cplx dp2 = e * std::conj(P(d.row));
    const cplx dvp = de * std::conj(P(d.row));
    const cplx dpv = e * std::conj(v(d.row));
    const double num = v2 * p2 - std::norm(vp);
    const cplx dnum = dv2 * p2 + v2 * dp2 - (dvp * std::conj(vp) + vp * dpv);
    const double den = p2 * p2;
    const cplx dden = 2.0 * p2 * dp2;
    return 2.0 * kPi * (dnum * den - num * dden) / (den * den);
  });
  if (gauge == GaugeMethod::poisson) {
    out.psi = poisson_solve(-out.curvature);
  } else {
    const cplx mean = integrate(out.log_norm);
    out.psi = 0.5 * (out.log_norm - mean);
  }
  out.h = ScalarField::from_nodes(grid, [&](std::size_t n) { return 2.0 * out.psi[n] * h[n].real(); });
  return out;
}

struct VortexMetricReport {
  MetricMatrix g;
  Eigen::MatrixXcd X, Y, Z;
  VortexConfig config;
  double kw_residual = 0.0;
  int newton_iterations = 0;
  int linear_iterations = 0;
  double boundary_proximity = 1.0;
  GaugeMethod gauge = GaugeMethod::closed_form;
  // Pieces retained for diagnostics and tests.
  std::optional<KWSolution> solution;
  std::optional<ScalarField> h;
};

struct VortexOptions {
  SolverOptions solver;
  GaugeMethod gauge = GaugeMethod::closed_form;
  bool keep_fields = false;
};

inline VortexMetricReport vortex_metric(const PolyTuple& P, const VortexConfig& cfg, const GridPtr& grid,
                                        const ModuliChart& chart, const VortexOptions& vopt = {}) {
  const SolverOptions& opt = vopt.solver;
  cfg.validate();
  if (P.r() != cfg.r || P.k() != cfg.k) throw InvalidArgument("vortex_metric: tuple shape does not match config");
  const auto Pn = chart.normalize(P);
  const auto m = sample_map(Pn, grid);
  require_interior(m, "vortex_metric");
  const double s2 = cfg.s2;
  VortexConfig c = cfg;
  c.c1_override.reset();

  const auto psi = vopt.gauge == GaugeMethod::poisson ? psi_solve(m) : psi_closed_form(m);
  const auto h = norm_function_from_psi(psi);
  auto sol = kw_solve(h, c, opt);
  const auto e2u = ScalarField::from_nodes(grid, [&](std::size_t n) {
    return cplx(-h[n].real() * std::exp(sol.phi[n].real()));
  });

  const int q = chart.q();
  std::vector<ScalarField> u(q), L(q), dhe(q);
  int lin_total = 0;
  for (int a = 0; a < q; ++a) {
    const auto d = direction_derivatives(m, chart.direction(a), h, vopt.gauge);
    LinearSolveInfo info;
    auto phia = linearized_solve(sol, h, d.h, c, opt, &info);
    lin_total += info.iterations;
    u[a] = 0.5 * phia + d.psi;
    L[a] = 2.0 * u[a] - d.log_norm;
    dhe[a] = ScalarField::from_nodes(grid, [&](std::size_t n) {
      return (d.h[n] + h[n].real() * phia[n]) * std::exp(sol.phi[n].real());
    });
    sol.phi_derivatives.push_back(std::move(phia));
  }

  VortexMetricReport rep;
  rep.config = cfg;
  rep.X.resize(q, q);
  rep.Y.resize(q, q);
  std::vector<ScalarField> lapL(q);
  for (int a = 0; a < q; ++a) lapL[a] = laplacian(L[a]);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      rep.X(a, b) = inner(lapL[a], L[b]) / s2;
      rep.Y(a, b) = -2.0 * inner(dhe[a], u[b]);
    }
  rep.Z = detail::fs_direction_gram(m, chart, [&](std::size_t n) { return e2u[n]; });
  rep.g.g = rep.X + rep.Y + rep.Z;
  rep.g.chart = chart;
  rep.g.diagnostics.band_limit = grid->band_limit();
  rep.g.diagnostics.boundary_proximity = boundary_proximity(m);
  rep.g.diagnostics.near_boundary = rep.g.diagnostics.boundary_proximity < kBoundaryProximity;
  rep.kw_residual = sol.residual;
  rep.newton_iterations = sol.iterations;
  rep.linear_iterations = sol.linear_iterations + lin_total;
  rep.boundary_proximity = rep.g.diagnostics.boundary_proximity;
  rep.gauge = vopt.gauge;
  if (vopt.keep_fields) {
    sol.psi = psi;
    sol.u = 0.5 * sol.phi + psi;
    rep.solution = std::move(sol);
    rep.h = h;
  }
  return rep;
}

inline VortexMetricReport vortex_metric(const PolyTuple& P, const VortexConfig& cfg, const GridPtr& grid,
                                        const VortexOptions& opt = {}) {
  return vortex_metric(P, cfg, grid, ModuliChart::largest(P), opt);
}

// Maximum-principle comparison of he^phi against he^v, with Q = E / N:
// max Q * he^v <= he^phi - he^v <= min Q * he^v pointwise.
struct SandwichReport {
  double lower_violation = 0.0;  // max over nodes of (bound - value), <= 0 when satisfied
  double upper_violation = 0.0;  // max over nodes of (value - bound)
  double uniform_lhs = 0.0;      // sup |he^phi - he^v|
  double uniform_rhs = 0.0;      // (1/s^2) sup|he^v| sup|E / (he^v)|
  double integral_lhs = 0.0;     // |int he^phi|
  double k1 = 0.0;               // int |he^v|
  double integral_identity_error = 0.0;  // |int (-h e^phi) - (s^2 - 2c_1)/s^2|
  double literal_lower_violation = 0.0;  // orientation with E/(-s^2 h) coefficients
  double literal_upper_violation = 0.0;
  bool approximation_defined = true;  // false when v_s does not exist (N <= 0 somewhere)
};

// Without v_s only the integral identity is checked; the v_s-based fields are NaN.
inline SandwichReport check_max_principle(const ScalarField& phi, const ScalarField& h, const VortexConfig& cfg) {
  const double s2 = cfg.s2;
  const auto hephi_f = h * phi.map([](cplx x) { return std::exp(x.real()); });
  const double identity_error = std::abs(-integrate(hephi_f).real() - (s2 - 2.0 * cfg.c1()) / s2);
  ApproxSolution ap;
  try {
    ap = approx_solution(h, cfg);
  } catch (const DomainError&) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    SandwichReport rep{nan, nan, nan, nan, std::abs(integrate(hephi_f)), nan, identity_error, nan, nan, false};
    return rep;
  }
  const std::size_t N = h.size();
  std::vector<double> hev(N), hephi(N), Q(N), lit(N);
  double qmin = 1e300, qmax = -1e300, lmin = 1e300, lmax = -1e300, e_over_hev = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    hev[n] = h[n].real() * std::exp(ap.v[n].real());
    hephi[n] = h[n].real() * std::exp(phi[n].real());
    Q[n] = ap.error[n].real() / ap.numerator[n].real();
    lit[n] = ap.error[n].real() / (-s2 * h[n].real());
    qmin = std::min(qmin, Q[n]);
    qmax = std::max(qmax, Q[n]);
    lmin = std::min(lmin, lit[n]);
    lmax = std::max(lmax, lit[n]);
    e_over_hev = std::max(e_over_hev, std::abs(ap.error[n].real() / hev[n]));
  }
  SandwichReport rep;
  rep.lower_violation = rep.upper_violation = -1e300;
  rep.literal_lower_violation = rep.literal_upper_violation = -1e300;
  double sup_hev = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double d = hephi[n] - hev[n];
    rep.lower_violation = std::max(rep.lower_violation, qmax * hev[n] - d);
    rep.upper_violation = std::max(rep.upper_violation, d - qmin * hev[n]);
    rep.literal_lower_violation = std::max(rep.literal_lower_violation, lmin * hev[n] - d);
    rep.literal_upper_violation = std::max(rep.literal_upper_violation, d - lmax * hev[n]);
    rep.uniform_lhs = std::max(rep.uniform_lhs, std::abs(d));
    sup_hev = std::max(sup_hev, std::abs(hev[n]));
  }
  rep.uniform_rhs = sup_hev * e_over_hev / s2;
  const auto abs_hev = ScalarField::from_nodes(h.grid_ptr(), [&](std::size_t n) { return cplx(std::abs(hev[n])); });
  rep.integral_lhs = std::abs(integrate(hephi_f));
  rep.k1 = integrate(abs_hev).real();
  rep.integral_identity_error = identity_error;
  return rep;
}

inline nlohmann::json config_json(const VortexConfig& c) {
  nlohmann::json j = {{"s2", c.s2}, {"r", c.r}, {"k", c.k}, {"c1", c.c1()}, {"c_s", c.c_of_s()}, {"c2", c.c2}};
  return j;
}

inline nlohmann::json to_json_value(const VortexMetricReport& R) {
  return {{"config", config_json(R.config)},
          {"g_s", to_json_value(R.g)},
          {"X", complex_matrix_json(R.X)},
          {"Y", complex_matrix_json(R.Y)},
          {"Z", complex_matrix_json(R.Z)},
          {"solver",
           {{"kw_residual", R.kw_residual},
            {"newton_iterations", R.newton_iterations},
            {"linear_iterations", R.linear_iterations},
            {"boundary_proximity", R.boundary_proximity},
            {"gauge", R.gauge == GaugeMethod::poisson ? "poisson" : "closed_form"}}}};
}

}  // namespace lumpvol
