#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumpvol/error.hpp"
#include "lumpvol/sphere_grid.hpp"

namespace nlohmann {
template <>
struct adl_serializer<std::complex<double>> {
  static void to_json(json& j, const std::complex<double>& z) { j = {{"re", z.real()}, {"im", z.imag()}}; }
  static void from_json(const json& j, std::complex<double>& z) {
    if (j.is_number()) {
      z = {j.get<double>(), 0.0};
      return;
    }
    z = {j.at("re").get<double>(), j.value("im", 0.0)};
  }
};
}  // namespace nlohmann

namespace lumpvol {

inline constexpr double kRootTolerance = 1e-9;
inline constexpr double kSingularTolerance = 1e-12;

// Row i holds the coefficients of p_i(z), highest degree first:
// p_i(z) = sum_j coeffs(i, j) z^{r-j}.
class PolyTuple {
 public:
  PolyTuple() = default;
  explicit PolyTuple(Eigen::MatrixXcd coeffs) : c_(std::move(coeffs)) {
    if (c_.rows() < 1 || c_.cols() < 1) throw InvalidArgument("PolyTuple: empty coefficient matrix");
    if (c_.cwiseAbs().maxCoeff() == 0.0) throw DegenerateTuple("PolyTuple: all coefficients are zero");
  }
  static PolyTuple identity() {
    Eigen::MatrixXcd c(2, 2);
    c << 1, 0, 0, 1;
    return PolyTuple(c);
  }

  int k() const { return static_cast<int>(c_.rows()) - 1; }
  int r() const { return static_cast<int>(c_.cols()) - 1; }
  const Eigen::MatrixXcd& coeffs() const { return c_; }
  cplx coefficient(int i, int j) const { return c_(i, j); }

 private:
  Eigen::MatrixXcd c_;
};

enum class ChartSide { south, north };

// South chart coordinate z, north chart coordinate w = 1/z.
struct ChartPoint {
  ChartSide side = ChartSide::south;
  cplx coord = 0.0;
};

// South chart: (p_0(z), ..., p_k(z)). North chart: w^r p_i(1/w).
inline Eigen::VectorXcd evaluate(const PolyTuple& P, const ChartPoint& x) {
  const auto& c = P.coeffs();
  Eigen::VectorXcd v(c.rows());
  for (int i = 0; i < c.rows(); ++i) {
    cplx acc = 0.0;
    if (x.side == ChartSide::south) {
      for (int j = 0; j < c.cols(); ++j) acc = acc * x.coord + c(i, j);
    } else {
      for (int j = static_cast<int>(c.cols()) - 1; j >= 0; --j) acc = acc * x.coord + c(i, j);
    }
    v(i) = acc;
  }
  return v;
}
inline Eigen::VectorXcd evaluate(const PolyTuple& P, cplx z) { return evaluate(P, ChartPoint{ChartSide::south, z}); }

struct DivisorPoint {
  cplx location = 0.0;
  bool at_infinity = false;
  int multiplicity = 0;
};

struct Divisor {
  std::vector<DivisorPoint> points;
  int degree() const {
    int d = 0;
    for (const auto& p : points) d += p.multiplicity;
    return d;
  }
  bool empty() const { return points.empty(); }
};

struct Reduction {
  Divisor divisor;
  PolyTuple reduced;
};

namespace detail {

inline cplx horner(const std::vector<cplx>& c, cplx z) {
  cplx acc = 0.0;
  for (auto x : c) acc = acc * z + x;
  return acc;
}
inline double horner_abs(const std::vector<cplx>& c, double az) {
  double acc = 0.0;
  for (auto x : c) acc = acc * az + std::abs(x);
  return acc;
}

// Roots of a polynomial given highest-degree-first with nonzero leading term.
inline std::vector<cplx> poly_roots(const std::vector<cplx>& c) {
  const int d = static_cast<int>(c.size()) - 1;
  if (d < 1) return {};
  Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(d, d);
  for (int j = 0; j < d; ++j) comp(0, j) = -c[j + 1] / c[0];
  for (int i = 1; i < d; ++i) comp(i, i - 1) = 1.0;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(comp, false);
  std::vector<cplx> roots(es.eigenvalues().data(), es.eigenvalues().data() + d);
  // Newton polish against the original polynomial.
  for (auto& z : roots) {
    for (int it = 0; it < 3; ++it) {
      cplx p = 0.0, dp = 0.0;
      for (auto x : c) {
        dp = dp * z + p;
        p = p * z + x;
      }
      if (std::abs(dp) < 1e-300) break;
      const cplx step = p / dp;
      if (!std::isfinite(std::abs(step))) break;
      z -= step;
    }
  }
  return roots;
}

inline std::vector<cplx> deflate(const std::vector<cplx>& c, cplx zeta) {
  std::vector<cplx> q(c.size() - 1);
  cplx acc = 0.0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    acc = acc * zeta + c[i];
    q[i] = acc;
  }
  return q;
}

inline std::vector<cplx> trim_leading(const std::vector<cplx>& c, double tol) {
  std::size_t s = 0;
  while (s + 1 < c.size() && std::abs(c[s]) <= tol) ++s;
  return std::vector<cplx>(c.begin() + static_cast<long>(s), c.end());
}

}  // namespace detail

// Splits off the common-root divisor (finite roots and the root at infinity of
// degree-deficient tuples) by repeated common-root deflation.
inline Reduction reduce(const PolyTuple& P, double tau_root = kRootTolerance) {
  const auto& c = P.coeffs();
  const int rows = static_cast<int>(c.rows());
  const int r = P.r();
  const double scale = c.cwiseAbs().maxCoeff();
  if (scale == 0.0) throw DegenerateTuple("reduce: all rows are the zero polynomial");
  const double zero_tol = tau_root * scale;

  Divisor div;
  int lead = 0;
  while (lead < r && c.col(lead).cwiseAbs().maxCoeff() <= zero_tol) ++lead;
  if (lead > 0) div.points.push_back({0.0, true, lead});

  const int R0 = r - lead;
  std::vector<std::vector<cplx>> poly(rows, std::vector<cplx>(R0 + 1));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j <= R0; ++j) poly[i][j] = c(i, lead + j);

  std::vector<cplx> found;
  while (static_cast<int>(poly[0].size()) > 1) {
    int best = -1;
    std::size_t best_deg = 0;
    std::vector<std::vector<cplx>> trimmed(rows);
    for (int i = 0; i < rows; ++i) {
      double rmax = 0.0;
      for (auto x : poly[i]) rmax = std::max(rmax, std::abs(x));
      if (rmax <= zero_tol) continue;
      trimmed[i] = detail::trim_leading(poly[i], tau_root * rmax);
      const std::size_t deg = trimmed[i].size() - 1;
      if (best < 0 || deg < best_deg) {
        best = i;
        best_deg = deg;
      }
    }
    if (best < 0 || best_deg == 0) break;
    const auto cand = detail::poly_roots(trimmed[best]);
    bool hit = false;
    cplx zeta = 0.0;
    double best_res = 0.0;
    for (auto z : cand) {
      double worst = 0.0;
      for (int i = 0; i < rows; ++i) {
        if (trimmed[i].empty()) continue;
        const double mag = detail::horner_abs(trimmed[i], std::abs(z));
        worst = std::max(worst, std::abs(detail::horner(trimmed[i], z)) / mag);
      }
      if (worst <= tau_root && (!hit || worst < best_res)) {
        hit = true;
        zeta = z;
        best_res = worst;
      }
    }
    if (!hit) break;
    found.push_back(zeta);
    for (int i = 0; i < rows; ++i) poly[i] = detail::deflate(poly[i], zeta);
  }

  // Cluster deflated roots into divisor points.
  std::vector<DivisorPoint> finite;
  for (auto z : found) {
    bool merged = false;
    for (auto& p : finite) {
      if (std::abs(p.location - z) <= 1e-5 * std::max(1.0, std::abs(z))) {
        p.location = (p.location * static_cast<double>(p.multiplicity) + z) / static_cast<double>(p.multiplicity + 1);
        ++p.multiplicity;
        merged = true;
        break;
      }
    }
    if (!merged) finite.push_back({z, false, 1});
  }
  for (auto& p : finite) div.points.push_back(p);

  const int Rred = static_cast<int>(poly[0].size()) - 1;
  Eigen::MatrixXcd red(rows, Rred + 1);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j <= Rred; ++j) red(i, j) = poly[i][j];
  return {div, PolyTuple(red)};
}

// Single-row tuple whose section vanishes exactly on the divisor (a polynomial
// of degree deg(D), with the root at infinity realised as degree deficiency).
inline PolyTuple divisor_section(const Divisor& D) {
  std::vector<cplx> c{1.0};
  int inf = 0;
  for (const auto& p : D.points) {
    if (p.at_infinity) {
      inf += p.multiplicity;
      continue;
    }
    for (int m = 0; m < p.multiplicity; ++m) {
      std::vector<cplx> n(c.size() + 1, 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        n[i] += c[i];
        n[i + 1] -= p.location * c[i];
      }
      c = std::move(n);
    }
  }
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(1, static_cast<long>(c.size()) + inf);
  for (std::size_t i = 0; i < c.size(); ++i) m(0, inf + static_cast<long>(i)) = c[i];
  return PolyTuple(m);
}

// Values of a tuple and its tangent derivative in unit homogeneous coordinates:
// column n of values is P(a, b) with P_i(a, b) = sum_j c_ij b^{r-j} a^j, which
// equals p_i(z) / (1+|z|^2)^{r/2} up to a unit phase. The tangent derivative
// dP(t) uses t = (-conj b, conj a).
struct MapOnGrid {
  GridPtr grid;
  int k = 0, r = 0;
  Eigen::MatrixXcd mono;   // (r+1) x N monomials b^{r-j} a^j
  Eigen::MatrixXcd dmono;  // (r+1) x N tangent derivatives of the monomials
  Eigen::MatrixXcd values; // (k+1) x N
  Eigen::MatrixXcd dvalues;
  std::vector<double> norm2;
  double min_norm2 = 0.0, max_norm2 = 0.0;
};

inline MapOnGrid sample_map(const PolyTuple& P, const GridPtr& grid) {
  const SphereGrid& g = *grid;
  const int r = P.r();
  const std::size_t N = g.size();
  MapOnGrid m;
  m.grid = grid;
  m.k = P.k();
  m.r = r;
  m.mono.resize(r + 1, static_cast<long>(N));
  m.dmono.resize(r + 1, static_cast<long>(N));
  std::vector<cplx> pa(r + 1), pb(r + 1);
  for (std::size_t n = 0; n < N; ++n) {
    const cplx a = g.hom_a(n), b = g.hom_b(n);
    pa[0] = pb[0] = 1.0;
    for (int e = 1; e <= r; ++e) {
      pa[e] = pa[e - 1] * a;
      pb[e] = pb[e - 1] * b;
    }
    const cplx ta = -std::conj(b), tb = std::conj(a);
    for (int j = 0; j <= r; ++j) {
      m.mono(j, static_cast<long>(n)) = pb[r - j] * pa[j];
      cplx d = 0.0;
      if (j > 0) d += ta * static_cast<double>(j) * pb[r - j] * pa[j - 1];
      if (j < r) d += tb * static_cast<double>(r - j) * pb[r - j - 1] * pa[j];
      m.dmono(j, static_cast<long>(n)) = d;
    }
  }
  m.values = P.coeffs() * m.mono;
  m.dvalues = P.coeffs() * m.dmono;
  m.norm2.resize(N);
  for (std::size_t n = 0; n < N; ++n) m.norm2[n] = m.values.col(static_cast<long>(n)).squaredNorm();
  m.min_norm2 = *std::min_element(m.norm2.begin(), m.norm2.end());
  m.max_norm2 = *std::max_element(m.norm2.begin(), m.norm2.end());
  return m;
}

inline double boundary_proximity(const MapOnGrid& m) { return m.max_norm2 > 0 ? m.min_norm2 / m.max_norm2 : 0.0; }

inline void require_interior(const MapOnGrid& m, const char* who) {
  if (!(m.min_norm2 > kSingularTolerance * m.max_norm2))
    throw SingularField(std::string(who) + ": section norm vanishes on the grid (not an interior point)");
}

// n(z) = sum |p_i(z)|^2 / (1+|z|^2)^r.
inline ScalarField section_norm_field(const PolyTuple& P, const GridPtr& grid) {
  const auto m = sample_map(P, grid);
  return ScalarField::from_nodes(grid, [&](std::size_t n) { return cplx(m.norm2[n]); });
}

// Fubini-Study quotient (<v,w>|p|^2 - <v,p><p,w>) / |p|^4 with <x,y> = sum x_i conj(y_i).
inline cplx fs_pairing(const Eigen::VectorXcd& v, const Eigen::VectorXcd& w, const Eigen::VectorXcd& p) {
  const double n = p.squaredNorm();
  const cplx vw = w.dot(v), vp = p.dot(v), pw = w.dot(p);
  return (vw * n - vp * pw) / (n * n);
}

inline ScalarField curvature_field(const MapOnGrid& m) {
  require_interior(m, "curvature_field");
  return ScalarField::from_nodes(m.grid, [&](std::size_t n) {
    const long c = static_cast<long>(n);
    return cplx(2.0 * kPi * fs_pairing(m.dvalues.col(c), m.dvalues.col(c), m.values.col(c)).real());
  });
}

// Contracted curvature of the pulled-back Fubini-Study metric on O(r);
// integrates to 2 pi r.
inline ScalarField curvature_field(const PolyTuple& P, const GridPtr& grid) {
  return curvature_field(sample_map(P, grid));
}

// Curvature of the divisor-stripped norm: 2 pi (r - l) - (1/2) Delta log(n(P)/n(D)).
// n(P)/n(D) is a constant multiple of n of the reduced tuple, which is used
// directly so that grid nodes on the divisor are harmless. Smooth across common roots.
inline ScalarField extended_curvature_field(const PolyTuple& P, const GridPtr& grid) {
  const auto red = reduce(P);
  const auto mr = sample_map(red.reduced, grid);
  require_interior(mr, "extended_curvature_field");
  const int deg = P.r() - red.divisor.degree();
  auto logq = ScalarField::from_nodes(grid, [&](std::size_t n) { return cplx(std::log(mr.norm2[n])); });
  return -0.5 * laplacian(logq) + cplx(2.0 * kPi * deg);
}

// Dirichlet energy computed in the chart: density 2 pi (1+|z|^2)^2 FS(p', p'),
// switching to w = 1/z on the northern hemisphere.
inline double energy(const PolyTuple& P, const GridPtr& grid) {
  const SphereGrid& g = *grid;
  const auto& c = P.coeffs();
  const int rows = static_cast<int>(c.rows()), r = P.r();
  const auto m = sample_map(P, grid);
  require_interior(m, "energy");
  Eigen::VectorXcd p(rows), dp(rows);
  double total = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const bool south = g.colatitude(n) <= 0.5 * kPi;
    const cplx z = south ? g.chart_point(n) : 1.0 / g.chart_point(n);
    for (int i = 0; i < rows; ++i) {
      cplx v = 0.0, d = 0.0;
      for (int jj = 0; jj <= r; ++jj) {
        const int j = south ? jj : r - jj;
        d = d * z + v;
        v = v * z + c(i, j);
      }
      p(i) = v;
      dp(i) = d;
    }
    const double t = 1.0 + std::norm(z);
    total += g.weight(n) * 2.0 * kPi * t * t * fs_pairing(dp, dp, p).real();
  }
  return total;
}

struct CoeffIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CoeffIndex&) const = default;
};

// Affine chart of the projectivised coefficient space fixing one coefficient to 1.
class ModuliChart {
 public:
  ModuliChart() = default;
  ModuliChart(int k, int r, CoeffIndex fixed) : k_(k), r_(r), fixed_(fixed) {
    if (k < 0 || r < 0) throw InvalidArgument("ModuliChart: negative dimensions");
    if (fixed.row < 0 || fixed.row > k || fixed.col < 0 || fixed.col > r)
      throw InvalidArgument("ModuliChart: fixed coefficient out of range");
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= r; ++j)
        if (!(CoeffIndex{i, j} == fixed)) dirs_.push_back({i, j});
  }
  // Chart fixing the largest-modulus coefficient (first in row-major order on ties).
  static ModuliChart largest(const PolyTuple& P) {
    const auto& c = P.coeffs();
    CoeffIndex best{0, 0};
    double bm = -1.0;
    for (int i = 0; i < c.rows(); ++i)
      for (int j = 0; j < c.cols(); ++j)
        if (std::abs(c(i, j)) > bm) {
          bm = std::abs(c(i, j));
          best = {i, j};
        }
    return ModuliChart(P.k(), P.r(), best);
  }

  int k() const { return k_; }
  int r() const { return r_; }
  int q() const { return static_cast<int>(dirs_.size()); }
  CoeffIndex fixed() const { return fixed_; }
  const std::vector<CoeffIndex>& directions() const { return dirs_; }
  CoeffIndex direction(int alpha) const {
    if (alpha < 0 || alpha >= q()) throw InvalidArgument("ModuliChart: direction index out of range");
    return dirs_[alpha];
  }

  PolyTuple normalize(const PolyTuple& P) const {
    check(P);
    const cplx f = P.coeffs()(fixed_.row, fixed_.col);
    if (std::abs(f) == 0.0) throw InvalidArgument("ModuliChart: point lies outside this chart");
    return PolyTuple(P.coeffs() / f);
  }
  Eigen::VectorXcd coordinates(const PolyTuple& P) const {
    const auto N = normalize(P);
    Eigen::VectorXcd w(q());
    for (int a = 0; a < q(); ++a) w(a) = N.coeffs()(dirs_[a].row, dirs_[a].col);
    return w;
  }
  PolyTuple point(const Eigen::VectorXcd& w) const {
    if (w.size() != q()) throw InvalidArgument("ModuliChart: coordinate vector has wrong length");
    Eigen::MatrixXcd c(k_ + 1, r_ + 1);
    c(fixed_.row, fixed_.col) = 1.0;
    for (int a = 0; a < q(); ++a) c(dirs_[a].row, dirs_[a].col) = w(a);
    return PolyTuple(c);
  }
  void check(const PolyTuple& P) const {
    if (P.k() != k_ || P.r() != r_) throw InvalidArgument("ModuliChart: tuple shape does not match chart");
  }

 private:
  int k_ = 0, r_ = 0;
  CoeffIndex fixed_;
  std::vector<CoeffIndex> dirs_;
};

// Unit coefficient direction e_{i(alpha), j(alpha)}.
inline Eigen::MatrixXcd variation(const ModuliChart& chart, int alpha) {
  const auto d = chart.direction(alpha);
  Eigen::MatrixXcd e = Eigen::MatrixXcd::Zero(chart.k() + 1, chart.r() + 1);
  e(d.row, d.col) = 1.0;
  return e;
}
inline Eigen::MatrixXcd variation(const ModuliChart& chart, CoeffIndex idx) {
  if (idx == chart.fixed()) throw InvalidArgument("variation: the chart-fixed coefficient has no direction");
  const auto& ds = chart.directions();
  auto it = std::find(ds.begin(), ds.end(), idx);
  if (it == ds.end()) throw InvalidArgument("variation: coefficient index out of range");
  return variation(chart, static_cast<int>(it - ds.begin()));
}

inline nlohmann::json complex_matrix_json(const Eigen::MatrixXcd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline void to_json(nlohmann::json& j, const PolyTuple& P) {
  j = {{"k", P.k()}, {"r", P.r()}, {"coeffs", complex_matrix_json(P.coeffs())}};
}
inline void from_json(const nlohmann::json& j, PolyTuple& P) {
  const auto& rows = j.at("coeffs");
  const int k = j.contains("k") ? j.at("k").get<int>() : static_cast<int>(rows.size()) - 1;
  const int r = j.contains("r") ? j.at("r").get<int>() : static_cast<int>(rows.at(0).size()) - 1;
  if (static_cast<int>(rows.size()) != k + 1) throw InvalidArgument("PolyTuple JSON: expected k+1 rows");
  Eigen::MatrixXcd c(k + 1, r + 1);
  for (int i = 0; i <= k; ++i) {
    if (static_cast<int>(rows.at(i).size()) != r + 1) throw InvalidArgument("PolyTuple JSON: expected r+1 coefficients per row");
    for (int jj = 0; jj <= r; ++jj) c(i, jj) = rows.at(i).at(jj).get<cplx>();
  }
  P = PolyTuple(c);
}

}  // namespace lumpvol
