#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "test_support.hpp"

using namespace lumpvol;
using lumpvol::testing::random_band_limited;

namespace {

double ring_weight_sum(const SphereGrid& g) {
  double s = 0.0;
  for (int i = 0; i < g.n_lat(); ++i) s += g.ring_weight(i);
  return s;
}

// Closed-form orthonormal harmonic of degree 3, order 2 in the unit-area measure.
cplx y32(double theta, double lambda) {
  const double c = 0.25 * std::sqrt(105.0 / (2.0 * kPi)) * std::sqrt(4.0 * kPi);
  return c * std::sin(theta) * std::sin(theta) * std::cos(theta) * std::polar(1.0, 2.0 * lambda);
}

}  // namespace

TEST(SphereGrid, BandLimitZeroHasTwoNodes) {
  auto g = build_grid(0);
  EXPECT_EQ(g->n_lat(), 1);
  EXPECT_EQ(g->n_lon(), 2);
  EXPECT_EQ(g->size(), 2u);
  EXPECT_NEAR(g->weight(0) + g->weight(1), 1.0, 1e-15);
}

TEST(SphereGrid, NodeCountAndWeights) {
  auto g = build_grid(16);
  EXPECT_EQ(g->n_lat(), 17);
  EXPECT_EQ(g->n_lon(), 34);
  EXPECT_EQ(g->size(), 17u * 34u);
  EXPECT_NEAR(ring_weight_sum(*g), 1.0, 1e-14);
  EXPECT_NEAR(integrate(ScalarField::constant(g, 1.0)).real(), 1.0, 1e-14);
  for (std::size_t n = 0; n < g->size(); ++n) EXPECT_GT(g->weight(n), 0.0);
}

TEST(SphereGrid, RejectsNegativeBandLimit) { EXPECT_THROW(build_grid(-1), InvalidArgument); }

TEST(SphereGrid, ColatitudesIncreaseAndChartIsStereographic) {
  auto g = build_grid(8);
  for (int i = 1; i < g->n_lat(); ++i) EXPECT_GT(g->ring_colatitude(i), g->ring_colatitude(i - 1));
  for (std::size_t n = 0; n < g->size(); n += 7) {
    const cplx z = g->chart_point(n);
    EXPECT_NEAR(std::abs(g->hom_b(n) / g->hom_a(n) - z), 0.0, 1e-12 * (1.0 + std::abs(z)));
    EXPECT_NEAR(std::norm(g->hom_a(n)) + std::norm(g->hom_b(n)), 1.0, 1e-15);
  }
}

TEST(SphereGrid, HarmonicMatchesClosedForm) {
  auto g = build_grid(16);
  const auto Y = ScalarField::harmonic(g, 3, 2);
  const auto ref = ScalarField::from_function(g, y32);
  EXPECT_LT(sup_distance(Y, ref), 1e-12);
  EXPECT_NEAR(std::abs(inner(Y, Y) - 1.0), 0.0, 1e-12);
}

TEST(SphereGrid, HarmonicsAreOrthonormal) {
  const int L = 10;
  auto g = build_grid(L);
  std::vector<ScalarField> Y;
  std::vector<std::pair<int, int>> lm;
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m) {
      Y.push_back(ScalarField::harmonic(g, l, m));
      lm.emplace_back(l, m);
    }
  double worst = 0.0;
  for (std::size_t a = 0; a < Y.size(); ++a)
    for (std::size_t b = a; b < Y.size(); ++b) {
      const cplx v = inner(Y[a], Y[b]);
      worst = std::max(worst, std::abs(v - (a == b ? 1.0 : 0.0)));
    }
  EXPECT_LT(worst, 1e-12);
}

TEST(SphereGrid, QuadratureExactToDegree2L) {
  // Product of two degree-L harmonics has degree 2L; the degree 2L + 2 product is not resolved.
  const int L = 12;
  auto g = build_grid(L);
  const auto f = ScalarField::from_function(g, [](double t, double) { return cplx(std::pow(std::cos(t), 2 * L)); });
  EXPECT_NEAR(integrate(f).real(), 1.0 / (2 * L + 1), 1e-14);
  const auto h = ScalarField::from_function(g, [](double t, double) { return cplx(std::pow(std::cos(t), 2 * L + 2)); });
  EXPECT_GT(std::abs(integrate(h).real() - 1.0 / (2 * L + 3)), 1e-10);
}

TEST(Integrate, ElementaryIntegrals) {
  auto g = build_grid(16);
  EXPECT_NEAR(std::abs(integrate(ScalarField::constant(g, 1.0)) - 1.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(integrate(ScalarField::harmonic(g, 1, 0).real())), 0.0, 1e-14);
  const auto s2 = ScalarField::from_function(g, [](double t, double) { return cplx(std::sin(t) * std::sin(t)); });
  EXPECT_NEAR(integrate(s2).real(), 2.0 / 3.0, 1e-14);
}

TEST(Transforms, RoundTrip) {
  auto g = build_grid(24);
  const auto f = random_band_limited(g, 24, 3, false);
  const auto back = ScalarField::from_coefficients(g, f.coefficients());
  EXPECT_LT(sup_distance(f, back), 1e-10 * f.sup_norm());
}

TEST(Laplacian, KernelAndEigenvalues) {
  auto g = build_grid(16);
  EXPECT_LT(laplacian(ScalarField::constant(g, 3.5)).sup_norm(), 1e-10);
  const auto y10 = ScalarField::harmonic(g, 1, 0).real();
  EXPECT_LT(sup_distance(laplacian(y10), 8.0 * kPi * y10), 1e-10 * 8.0 * kPi * y10.sup_norm());
  for (int l = 0; l <= 16; l += 3) {
    const auto y = ScalarField::harmonic(g, l, -l / 2);
    EXPECT_LT(sup_distance(laplacian(y), g->eigenvalue(l) * y), 1e-10 * std::max(1.0, g->eigenvalue(l)) * y.sup_norm());
  }
}

TEST(Laplacian, MatchesLaplaceBeltramiOfSmoothFunction) {
  // f = exp(cos theta); unit-area rescaling multiplies the round Laplace-Beltrami by 4 pi.
  auto g = build_grid(32);
  const auto f = ScalarField::from_function(g, [](double t, double) { return cplx(std::exp(std::cos(t))); });
  const auto expected = ScalarField::from_function(g, [](double t, double) {
    const double x = std::cos(t);
    return cplx(-4.0 * kPi * ((1.0 - x * x) - 2.0 * x) * std::exp(x));
  });
  EXPECT_LT(sup_distance(laplacian(f), expected), 1e-9);
}

TEST(Laplacian, IntegratesToZeroAndIsSelfAdjoint) {
  auto g = build_grid(20);
  const auto f = random_band_limited(g, 20, 11);
  const auto h = random_band_limited(g, 20, 12);
  EXPECT_LT(std::abs(integrate(laplacian(f))), 1e-10);
  const cplx a = integrate(f * laplacian(h)), b = integrate(h * laplacian(f));
  EXPECT_LT(std::abs(a - b), 1e-10 * std::abs(a));
}

TEST(Poisson, ExamplesAndInverse) {
  auto g = build_grid(16);
  EXPECT_LT(poisson_solve(ScalarField::constant(g, 0.0)).sup_norm(), 1e-15);
  const auto y20 = ScalarField::harmonic(g, 2, 0).real();
  EXPECT_LT(sup_distance(poisson_solve(y20), y20 * cplx(1.0 / (24.0 * kPi))), 1e-14);

  auto rhs = random_band_limited(g, 16, 5);
  rhs -= integrate(rhs);
  EXPECT_LT(sup_distance(laplacian(poisson_solve(rhs)), rhs), 1e-10 * rhs.sup_norm());

  const auto f = random_band_limited(g, 16, 6);
  EXPECT_LT(sup_distance(poisson_solve(laplacian(f)), f - integrate(f)), 1e-10 * f.sup_norm());
  EXPECT_LT(std::abs(integrate(poisson_solve(rhs))), 1e-14);
}

TEST(Poisson, RejectsNonZeroMean) {
  auto g = build_grid(8);
  EXPECT_THROW(poisson_solve(ScalarField::constant(g, 1.0)), NonZeroMean);
  EXPECT_NO_THROW(poisson_solve(ScalarField::constant(g, 1e-12)));
}

TEST(Refinement, StopsWhenConverged) {
  auto eval = [](const GridPtr& g) {
    return integrate(ScalarField::from_function(g, [](double t, double) { return cplx(1.0 / (2.0 + std::cos(t))); })).real();
  };
  auto change = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  const auto r = refine_band_limit(eval, change, 4, 1e-8, 128);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, 0.5 * std::log(3.0), 1e-12);
  EXPECT_THROW(refine_band_limit(eval, change, 0, 1e-8, 128), InvalidArgument);
}

TEST(GridCache, SharedAndThreadSafe) {
  std::vector<GridPtr> got(4);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) ts.emplace_back([&, t] { got[t] = GridCache::get(20); });
  for (auto& t : ts) t.join();
  for (int t = 1; t < 4; ++t) EXPECT_EQ(got[t].get(), got[0].get());
  const auto f = random_band_limited(got[0], 20, 9);
  std::vector<std::vector<cplx>> res(4);
  ts.clear();
  for (int t = 0; t < 4; ++t) ts.emplace_back([&, t] { res[t] = laplacian(f).values(); });
  for (auto& t : ts) t.join();
  for (int t = 1; t < 4; ++t) EXPECT_EQ(res[t], res[0]);
}
