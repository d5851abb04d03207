// Acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace lumpvol;
using lumpvol::testing::random_interior_tuple;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("AC%d %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... xs) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool in_range(double x, double lo, double hi) { return std::isfinite(x) && x >= lo && x <= hi; }

FormulaInput input(int b, int r, int k) {
  FormulaInput f;
  f.b = b;
  f.r = r;
  f.k = k;
  return f;
}

void ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  const bool exact = main_volume(input(0, 1, 1)) == Rational(1, 6) && main_volume(input(0, 1, 2)) == Rational(1, 120);
  double worst = 0.0, worst_rel = 0.0;
  int cases = 0;
  for (int b = 0; b <= 3; ++b)
    for (int r = 1; r <= 6; ++r)
      for (int k = 1; k <= 3; ++k) {
        if (!(r > std::max(2 - 2 * b, 2 * b - 2))) continue;
        auto f = input(b, r, k);
        f.s2 = CouplingValue::real(1e8);
        const double mv = static_cast<double>(main_volume(f));
        const double d = static_cast<double>(abs(baptista_volume_big(f) - BigFloat(main_volume(f))));
        worst = std::max(worst, d);
        worst_rel = std::max(worst_rel, d / mv);
        ++cases;
      }
  const double secs = seconds_since(t0);
  report(1, exact && worst < 1e-12 && secs < 1.0,
         fmt("exact values %s; max |baptista - main| at s^2=1e8 over %d cases = %.3e (tol 1e-12, rel %.3e); %.3fs",
             exact ? "ok" : "WRONG", cases, worst, worst_rel, secs));
}

void ac2() {
  McOptions o;
  o.n = 4000;
  o.band_limit = 24;
  o.seed = 1;
  o.threads = 1;
  const auto e = mc_volume_l2(1, 1, o);
  const double target = 1.0 / 6.0;
  const bool ok = std::abs(e.mean - target) <= 3.0 * e.std_error && e.std_error / e.mean <= 0.02 &&
                  e.failure_fraction() <= 0.005;
  std::string audit;
  if (!ok) {
    McOptions o2 = o;
    const auto e2 = mc_volume_l2(1, 2, o2);
    const double c3 = std::cbrt(e.mean / target);
    const double c5 = std::pow(e2.mean / (1.0 / 120.0), 0.2);
    audit = fmt("; audit: (1,2) mean=%.5g, c from q=3: %.5f, c from q=5: %.5f (pi=%.5f)", e2.mean, c3, c5, kPi);
  }
  report(2, ok,
         fmt("L2 (1,1) L=24 n=4000 mean=%.6g stderr=%.3g target=1/6 |dev|/stderr=%.2f rel.stderr=%.4f failures=%ld%s",
             e.mean, e.std_error, std::abs(e.mean - target) / e.std_error, e.std_error / e.mean, e.failures,
             audit.c_str()));
}

void ac3() {
  McOptions o;
  o.n = 400;
  o.band_limit = 24;
  o.seed = 1;
  const auto e = mc_volume_vortex(1, 1, 16 * kPi, o);
  const double target = 27.0 / 384.0;
  const bool ok = std::abs(e.mean - target) <= 3.0 * e.std_error && e.failure_fraction() <= 0.005;
  const double pi3 = kPi * kPi * kPi;
  report(3, ok,
         fmt("vortex (1,1) s^2=16pi L=24 n=400 mean=%.6g stderr=%.3g target=27/384 |dev|/stderr=%.2f failures=%ld "
             "refined=%ld; mean/pi^3=%.6g (|dev|/stderr %.2f)",
             e.mean, e.std_error, std::abs(e.mean - target) / e.std_error, e.failures, e.refined, e.mean / pi3,
             std::abs(e.mean / pi3 - target) / (e.std_error / pi3)));
}

void ac4() {
  McOptions o;
  o.n = 20000;
  o.seed = 1;
  const auto p = calibrate_cpq(3, o);
  o.n = 200;
  const auto r = calibrate_cpq(3, o, CalibrationMode::ratio);
  const double target = fs_volume(3);
  const bool ok = std::abs(p.mean - target) <= 3.0 * p.std_error && std::abs(r.mean - target) <= 1e-12 * target &&
                  r.std_error <= 1e-12;
  report(4, ok,
         fmt("polydisc mean=%.6g stderr=%.3g target=pi^3/6=%.6g |dev|/stderr=%.2f; ratio mode mean-target=%.2e "
             "stderr=%.1e",
             p.mean, p.std_error, target, std::abs(p.mean - target) / p.std_error, r.mean - target, r.std_error));
}

struct SolveLog {
  double max_residual = 0.0;
  double max_slack = -1e300;
  double max_identity_error = 0.0;
  int solves = 0;
  int without_v = 0;
  void add(const KWSolution& sol, const ScalarField& h, const VortexConfig& cfg) {
    max_residual = std::max(max_residual, kw_residual(sol.phi, h, cfg).sup_norm());
    const auto b = check_max_principle(sol.phi, h, cfg);
    ++solves;
    max_identity_error = std::max(max_identity_error, b.integral_identity_error);
    if (!b.approximation_defined) {
      ++without_v;
      return;
    }
    max_slack = std::max({max_slack, b.lower_violation, b.upper_violation, b.uniform_lhs - b.uniform_rhs,
                          b.integral_lhs - (b.k1 + b.uniform_rhs)});
  }
};

std::vector<PolyTuple> ac6_maps() {
  return {random_interior_tuple(1, 1, 1, 0.05), random_interior_tuple(1, 1, 2, 0.05),
          random_interior_tuple(1, 1, 3, 0.05)};
}

void ac5(SolveLog& log) {
  // Constant h: phi = log(-1/h) when c_1 = 0, and log(1 - 4 pi / s^2) for h = -1, c_1 = 2 pi.
  const auto g12 = GridCache::get(12);
  SolverOptions tight;
  tight.tol = 1e-12;
  double const_err = 0.0;
  for (double s2 : {1.0, 10.0, 100.0})
    for (double hv : {-1.0, -2.0, -0.5}) {
      VortexConfig c{s2, 1, 1};
      c.c1_override = 0.0;
      const auto sol = kw_solve(ScalarField::constant(g12, hv), c, tight);
      const_err = std::max(const_err, sup_distance(sol.phi, ScalarField::constant(g12, std::log(-1.0 / hv))));
    }
  for (double s2 : {8 * kPi, 32 * kPi}) {
    const VortexConfig c{s2, 1, 1};
    const auto sol = kw_solve(ScalarField::constant(g12, -1.0), c, tight);
    const_err = std::max(const_err, sup_distance(sol.phi, ScalarField::constant(g12, std::log(1.0 - 4.0 * kPi / s2))));
  }
  // Manufactured: choose phi*, define h so that F(phi*) = 0.
  const auto g24 = GridCache::get(24);
  double manuf_err = 0.0;
  for (unsigned seed : {7u, 8u, 9u}) {
    const VortexConfig cfg{32 * kPi, 1, 1};
    auto phi_star = lumpvol::testing::random_band_limited(g24, 4, seed);
    phi_star *= 0.25 / phi_star.sup_norm();
    const auto lap = laplacian(phi_star);
    const auto h = ScalarField::from_nodes(g24, [&](std::size_t n) {
      return cplx((lap[n].real() + cfg.c_of_s()) / (cfg.s2 * std::exp(phi_star[n].real())));
    });
    const auto sol = kw_solve(h, cfg, tight);
    manuf_err = std::max(manuf_err, sup_distance(sol.phi, phi_star));
    log.add(sol, h, cfg);
  }
  report(5, manuf_err < 1e-9 && const_err < 1e-12 && log.max_residual < 1e-9,
         fmt("manufactured sup err=%.2e (tol 1e-9); constant-h err=%.2e (tol 1e-12); max residual over %d acceptance "
             "solves=%.2e (tol 1e-9)",
             manuf_err, const_err, log.solves, log.max_residual));
}

void ac6(SolveLog& log) {
  const auto grid = GridCache::get(32);
  const auto s2s = geometric_sweep(8 * kPi, 512 * kPi);
  bool ok = true;
  std::string detail;
  int m = 0;
  for (const auto& P : ac6_maps()) {
    const auto sw = convergence_sweep(P, s2s, grid);
    const double a = sweep_slope(sw, [](const ConvergenceRow& r) { return r.phi_inf_diff; });
    const double b = sweep_slope(sw, [](const ConvergenceRow& r) { return r.phi_v_diff; });
    const double c = sweep_slope(sw, [](const ConvergenceRow& r) { return r.g_diff; });
    ok = ok && in_range(a, -2.3, -1.7) && in_range(b, -2.3, -1.7) && in_range(c, -2.3, -1.7);
    int nv = 0;
    for (const auto& r : sw.rows) nv += std::isfinite(r.phi_v_diff);
    detail += fmt("%smap%d phi_inf %.2f, phi_v %.2f (%d pts), g %.2f", m ? "; " : "", m + 1, a, b, nv, c);
    // The same solves feed the residual and bound checks.
    const auto mm = sample_map(ModuliChart::largest(P).normalize(P), grid);
    const auto h = norm_function_from_psi(psi_closed_form(mm));
    for (double s2 : s2s) {
      const VortexConfig cfg{s2, 1, 1};
      log.add(kw_solve(h, cfg), h, cfg);
    }
    ++m;
  }
  report(6, ok, "slopes vs s over s^2 in [8pi,512pi], L=32, window [-2.3,-1.7]: " + detail);
}

void ac7(const SolveLog& log) {
  report(7, log.max_slack <= 1e-8 && log.max_identity_error <= 1e-8,
         fmt("max violation of sandwich/uniform/integral bounds = %.2e over %d solves (slack 1e-8); %d further solves "
             "below the range where v_s exists checked on the integral identity only; identity err %.1e",
             log.max_slack, log.solves - log.without_v, log.without_v, log.max_identity_error));
}

void ac8() {
  bool ok = true;
  std::vector<std::string> bad;
  const auto g24 = GridCache::get(24);
  const auto g64 = GridCache::get(64);
  double herm = 0.0, min_eig = 1e300, chart_dev = 0.0, unit_dev = 0.0, energy_dev = 0.0, curv_dev = 0.0;
  bool additivity = true;
  Eigen::Matrix2cd U;
  U << std::cos(0.7), cplx(0, std::sin(0.7)), cplx(0, std::sin(0.7)), std::cos(0.7);
  for (unsigned s = 0; s < 4; ++s) {
    const int r = 1 + s % 2;
    const auto P = random_interior_tuple(1, r, 300 + s, 0.1);
    const auto c1 = ModuliChart::largest(P);
    CoeffIndex other{0, 0};
    if (c1.fixed() == other) other = CoeffIndex{1, r};
    const ModuliChart c2(1, r, other);
    const VortexConfig cfg{16 * kPi * r, r, 1};
    for (int which = 0; which < 2; ++which) {
      auto metric = [&](const PolyTuple& Q, const ModuliChart& c) {
        return which == 0 ? l2_metric_matrix(Q, c, g24).g : vortex_metric(Q, cfg, g24, c).g.g;
      };
      const auto G1 = metric(P, c1);
      herm = std::max(herm, (G1 - G1.adjoint()).cwiseAbs().maxCoeff() / G1.cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (G1 + G1.adjoint()));
      min_eig = std::min(min_eig, es.eigenvalues()(0));
      const double d1 = density_ratio(G1, c1.coordinates(P));
      const double d2 = density_ratio(metric(P, c2), c2.coordinates(P));
      chart_dev = std::max(chart_dev, std::abs(d1 / d2 - 1.0));
      const PolyTuple Q(U * P.coeffs());
      const auto cq = ModuliChart::largest(Q);
      unit_dev = std::max(unit_dev, std::abs(d1 / density_ratio(metric(Q, cq), cq.coordinates(Q)) - 1.0));
    }
    energy_dev = std::max(energy_dev, std::abs(energy(P, g64) / (2.0 * kPi * r) - 1.0));
    curv_dev = std::max(curv_dev, std::abs(integrate(curvature_field(P, g64)).real() - 2.0 * kPi * r));
    // Additivity: multiplying by a known divisor adds its degree.
    const auto base = random_interior_tuple(1, 1, 400 + s, 0.1);
    Eigen::MatrixXcd c(2, 3);
    const cplx root(0.3 * s, -0.5);
    for (int i = 0; i < 2; ++i) {
      c(i, 0) = base.coeffs()(i, 0);
      c(i, 1) = base.coeffs()(i, 1) - root * base.coeffs()(i, 0);
      c(i, 2) = -root * base.coeffs()(i, 1);
    }
    const auto red = reduce(PolyTuple(c));
    additivity = additivity && red.divisor.degree() == 1 && red.reduced.r() == 1 &&
                 reduce(red.reduced).divisor.degree() == 0 && reduce(base).divisor.degree() == 0;
  }
  ok = herm < 1e-10 && min_eig > 0.0 && chart_dev < 1e-8 && unit_dev < 1e-8 && energy_dev < 1e-6 && curv_dev < 1e-8 &&
       additivity;
  report(8, ok,
         fmt("hermitian dev %.1e, min eig %.3e, chart dev %.1e, unitary dev %.1e, energy/(2 pi r) dev %.1e, curvature "
             "integral dev %.1e, reduce additivity %s",
             herm, min_eig, chart_dev, unit_dev, energy_dev, curv_dev, additivity ? "ok" : "BROKEN"));
}

void ac9() {
  McOptions o;
  o.n = 200;
  o.band_limit = 16;
  o.seed = 77;
  std::vector<std::string> l2, vx;
  for (int t : {1, 2, 4}) {
    o.threads = t;
    l2.push_back(to_json_value(mc_volume_l2(1, 1, o)).dump());
    McOptions v = o;
    v.n = 24;
    vx.push_back(to_json_value(mc_volume_vortex(1, 1, 16 * kPi, v)).dump());
  }
  const bool ok = l2[0] == l2[1] && l2[0] == l2[2] && vx[0] == vx[1] && vx[0] == vx[2];
  report(9, ok, fmt("VolumeEstimate JSON identical for threads 1/2/4: L2 %s, vortex %s", l2[0] == l2[1] && l2[0] == l2[2] ? "yes" : "no",
                    vx[0] == vx[1] && vx[0] == vx[2] ? "yes" : "no"));
}

}  // namespace

int main() {
  auto guard = [](int id, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  };
  SolveLog log;
  guard(1, ac1);
  guard(2, ac2);
  guard(3, ac3);
  guard(4, ac4);
  guard(6, [&] { ac6(log); });
  guard(5, [&] { ac5(log); });
  guard(7, [&] { ac7(log); });
  guard(8, ac8);
  guard(9, ac9);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
