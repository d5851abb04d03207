#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstring>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "lumpvol/error.hpp"

namespace lumpvol {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

// Gauss-Legendre x Fourier grid on the round sphere of total area 1.
// Node n = ring * n_lon() + j, rings ordered by increasing colatitude.
class SphereGrid {
 public:
  explicit SphereGrid(int L) : L_(L) {
    if (L < 0) throw InvalidArgument("build_grid: band limit must be >= 0, got " + std::to_string(L));
    build_rings();
    build_longitudes();
    build_legendre();
  }
  ~SphereGrid() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  SphereGrid(const SphereGrid&) = delete;
  SphereGrid& operator=(const SphereGrid&) = delete;

  int band_limit() const { return L_; }
  int n_lat() const { return L_ + 1; }
  int n_lon() const { return 2 * L_ + 2; }
  std::size_t size() const { return static_cast<std::size_t>(n_lat()) * n_lon(); }
  std::size_t n_coeffs() const { return static_cast<std::size_t>(L_ + 1) * (L_ + 1); }
  static std::size_t coeff_index(int l, int m) { return static_cast<std::size_t>(l * l + l + m); }

  int ring_of(std::size_t node) const { return static_cast<int>(node / n_lon()); }
  int column_of(std::size_t node) const { return static_cast<int>(node % n_lon()); }

  double ring_colatitude(int i) const { return theta_[i]; }
  double ring_cos(int i) const { return x_[i]; }
  // Quadrature weight of a whole ring; ring weights sum to 1.
  double ring_weight(int i) const { return gw_[i] * 0.5; }
  double longitude(int j) const { return 2.0 * kPi * j / n_lon(); }

  double colatitude(std::size_t node) const { return theta_[ring_of(node)]; }
  double longitude_of(std::size_t node) const { return longitude(column_of(node)); }
  double weight(std::size_t node) const { return gw_[ring_of(node)] * 0.5 / n_lon(); }

  // Stereographic chart z = tan(theta/2) e^{i lambda}.
  cplx chart_point(std::size_t node) const {
    return std::polar(std::tan(0.5 * colatitude(node)), longitude_of(node));
  }
  // Unit homogeneous coordinates (a, b) with z = b / a.
  double hom_a(std::size_t node) const { return std::cos(0.5 * colatitude(node)); }
  cplx hom_b(std::size_t node) const { return std::polar(std::sin(0.5 * colatitude(node)), longitude_of(node)); }

  double eigenvalue(int l) const { return 4.0 * kPi * l * (l + 1.0); }

  // Orthonormal harmonic (unit-area measure), Condon-Shortley phase.
  cplx harmonic(int l, int m, std::size_t node) const {
    if (l < 0 || l > L_ || std::abs(m) > l) throw InvalidArgument("harmonic: index out of range");
    const int am = std::abs(m);
    const double p = plm(l, am, ring_of(node));
    const cplx e = std::polar(1.0, am * longitude_of(node));
    if (m >= 0) return p * e;
    return ((am % 2) ? -1.0 : 1.0) * p * std::conj(e);
  }

  std::vector<cplx> analyze(const std::vector<cplx>& f) const {
    if (f.size() != size()) throw InvalidArgument("analyze: field size mismatch");
    const int nl = n_lat(), no = n_lon();
    std::vector<cplx> spec(size());
    std::vector<cplx> in(f);
    fftw_execute_dft(fwd_, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(spec.data()));
    // four[(mu + L) * nl + i]: weighted ring Fourier coefficient of order mu.
    std::vector<cplx> four(static_cast<std::size_t>(nl) * (2 * L_ + 1));
    for (int i = 0; i < nl; ++i)
      for (int mu = -L_; mu <= L_; ++mu)
        four[static_cast<std::size_t>(mu + L_) * nl + i] =
            spec[static_cast<std::size_t>(i) * no + ((mu % no + no) % no)] * (0.5 * gw_[i] / no);
    std::vector<cplx> a(n_coeffs(), 0.0);
    for (int m = 0; m <= L_; ++m) {
      const double sgn = (m % 2) ? -1.0 : 1.0;
      const cplx* fp = &four[static_cast<std::size_t>(L_ + m) * nl];
      const cplx* fn = &four[static_cast<std::size_t>(L_ - m) * nl];
      for (int l = m; l <= L_; ++l) {
        const double* p = &plm_[plm_offset(l, m)];
        cplx pos = 0.0, neg = 0.0;
        for (int i = 0; i < nl; ++i) pos += p[i] * fp[i];
        a[coeff_index(l, m)] = pos;
        if (m > 0) {
          for (int i = 0; i < nl; ++i) neg += p[i] * fn[i];
          a[coeff_index(l, -m)] = sgn * neg;
        }
      }
    }
    return a;
  }

  std::vector<cplx> synthesize(const std::vector<cplx>& a) const {
    if (a.size() != n_coeffs()) throw InvalidArgument("synthesize: coefficient count mismatch");
    const int nl = n_lat(), no = n_lon();
    std::vector<cplx> S(static_cast<std::size_t>(nl) * (2 * L_ + 1), cplx(0.0));
    for (int m = 0; m <= L_; ++m) {
      const double sgn = (m % 2) ? -1.0 : 1.0;
      cplx* sp = &S[static_cast<std::size_t>(L_ + m) * nl];
      cplx* sn = &S[static_cast<std::size_t>(L_ - m) * nl];
      for (int l = m; l <= L_; ++l) {
        const double* p = &plm_[plm_offset(l, m)];
        const cplx cp = a[coeff_index(l, m)];
        if (cp != 0.0)
          for (int i = 0; i < nl; ++i) sp[i] += cp * p[i];
        if (m > 0) {
          const cplx cn = sgn * a[coeff_index(l, -m)];
          if (cn != 0.0)
            for (int i = 0; i < nl; ++i) sn[i] += cn * p[i];
        }
      }
    }
    std::vector<cplx> spec(size(), cplx(0.0));
    for (int i = 0; i < nl; ++i)
      for (int mu = -L_; mu <= L_; ++mu)
        spec[static_cast<std::size_t>(i) * no + ((mu % no + no) % no)] = S[static_cast<std::size_t>(L_ + mu) * nl + i];
    std::vector<cplx> f(size());
    fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(spec.data()), reinterpret_cast<fftw_complex*>(f.data()));
    return f;
  }

 private:
  void build_rings() {
    const int n = L_ + 1;
    x_.resize(n);
    gw_.resize(n);
    theta_.resize(n);
    for (int i = 0; i < n; ++i) {
      double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 1.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        double pn = n == 1 ? x : p1;
        double pm = n == 1 ? 1.0 : p0;
        dp = n * (x * pn - pm) / (x * x - 1.0);
        const double dx = pn / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      if (n == 1) {
        x = 0.0;
        dp = 1.0;
      } else {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
      }
      x_[i] = x;
      gw_[i] = 2.0 / ((1.0 - x * x) * dp * dp);
      theta_[i] = std::acos(x);
    }
  }

  static std::mutex& fftw_mutex() {
    static std::mutex mu;
    return mu;
  }

  // Batched out-of-place longitude transforms over all rings.
  void build_longitudes() {
    const int no = n_lon(), nl = n_lat();
    std::lock_guard<std::mutex> lock(fftw_mutex());
    auto* a = fftw_alloc_complex(size());
    auto* b = fftw_alloc_complex(size());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd_ = fftw_plan_many_dft(1, &no, nl, a, nullptr, 1, no, b, nullptr, 1, no, FFTW_FORWARD, flags);
    bwd_ = fftw_plan_many_dft(1, &no, nl, a, nullptr, 1, no, b, nullptr, 1, no, FFTW_BACKWARD, flags);
    fftw_free(a);
    fftw_free(b);
  }

  std::size_t plm_offset(int l, int m) const {
    return (m_offset_[m] + static_cast<std::size_t>(l - m)) * static_cast<std::size_t>(L_ + 1);
  }
  double plm(int l, int m, int ring) const { return plm_[plm_offset(l, m) + ring]; }

  // sqrt(4 pi) * normalized associated Legendre functions, per ring.
  void build_legendre() {
    const int n = L_ + 1;
    m_offset_.resize(L_ + 2);
    m_offset_[0] = 0;
    for (int m = 0; m <= L_; ++m) m_offset_[m + 1] = m_offset_[m] + static_cast<std::size_t>(L_ + 1 - m);
    plm_.assign(m_offset_[L_ + 1] * n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double x = x_[i];
      const double st = std::sqrt(std::max(0.0, 1.0 - x * x));
      double pmm = 1.0;
      for (int m = 0; m <= L_; ++m) {
        if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * st;
        plm_[plm_offset(m, m) + i] = pmm;
        if (m == L_) continue;
        double pm1 = std::sqrt(2.0 * m + 3.0) * x * pmm;
        plm_[plm_offset(m + 1, m) + i] = pm1;
        double pprev = pmm, pcur = pm1;
        for (int l = m + 2; l <= L_; ++l) {
          const double dl = l, dm = m;
          const double a = std::sqrt((4.0 * dl * dl - 1.0) / (dl * dl - dm * dm));
          const double b = std::sqrt(((dl - 1.0) * (dl - 1.0) - dm * dm) / (4.0 * (dl - 1.0) * (dl - 1.0) - 1.0));
          const double pnext = a * (x * pcur - b * pprev);
          plm_[plm_offset(l, m) + i] = pnext;
          pprev = pcur;
          pcur = pnext;
        }
      }
    }
  }

  int L_;
  std::vector<double> x_, gw_, theta_;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
  std::vector<std::size_t> m_offset_;
  std::vector<double> plm_;
};

using GridPtr = std::shared_ptr<const SphereGrid>;

inline GridPtr build_grid(int L) { return std::make_shared<const SphereGrid>(L); }

// Process-wide memo of grids keyed by band limit; grids are immutable.
class GridCache {
 public:
  static GridPtr get(int L) {
    static std::mutex mu;
    static std::map<int, GridPtr> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(L);
    if (it != cache.end()) return it->second;
    auto g = build_grid(L);
    cache.emplace(L, g);
    return g;
  }
};

class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(GridPtr grid, std::vector<cplx> values) : grid_(std::move(grid)), v_(std::move(values)) {
    if (!grid_) throw InvalidArgument("ScalarField: null grid");
    if (v_.size() != grid_->size()) throw InvalidArgument("ScalarField: value count does not match grid");
  }

  static ScalarField constant(GridPtr grid, cplx c) {
    const auto n = grid->size();
    return ScalarField(std::move(grid), std::vector<cplx>(n, c));
  }
  template <class F>
  static ScalarField from_nodes(GridPtr grid, F&& f) {
    std::vector<cplx> v(grid->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(i);
    return ScalarField(std::move(grid), std::move(v));
  }
  // f(colatitude, longitude)
  template <class F>
  static ScalarField from_function(GridPtr grid, F&& f) {
    const SphereGrid& g = *grid;
    return from_nodes(grid, [&](std::size_t i) -> cplx { return f(g.colatitude(i), g.longitude_of(i)); });
  }
  static ScalarField harmonic(GridPtr grid, int l, int m) {
    const SphereGrid& g = *grid;
    return from_nodes(grid, [&](std::size_t i) { return g.harmonic(l, m, i); });
  }
  static ScalarField from_coefficients(GridPtr grid, const std::vector<cplx>& a) {
    auto v = grid->synthesize(a);
    return ScalarField(std::move(grid), std::move(v));
  }

  const SphereGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return v_.size(); }
  const std::vector<cplx>& values() const { return v_; }
  std::vector<cplx>& values() { return v_; }
  cplx operator[](std::size_t i) const { return v_[i]; }
  cplx& operator[](std::size_t i) { return v_[i]; }

  std::vector<cplx> coefficients() const { return grid_->analyze(v_); }

  template <class F>
  ScalarField map(F&& f) const {
    std::vector<cplx> out(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = f(v_[i]);
    return ScalarField(grid_, std::move(out));
  }
  ScalarField conj() const {
    return map([](cplx x) { return std::conj(x); });
  }
  ScalarField real() const {
    return map([](cplx x) { return cplx(x.real(), 0.0); });
  }

  double sup_norm() const {
    double s = 0.0;
    for (auto x : v_) s = std::max(s, std::abs(x));
    return s;
  }
  double min_real() const {
    double s = v_.empty() ? 0.0 : v_[0].real();
    for (auto x : v_) s = std::min(s, x.real());
    return s;
  }
  double max_real() const {
    double s = v_.empty() ? 0.0 : v_[0].real();
    for (auto x : v_) s = std::max(s, x.real());
    return s;
  }

  ScalarField& operator+=(const ScalarField& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  ScalarField& operator*=(const ScalarField& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
    return *this;
  }
  ScalarField& operator/=(const ScalarField& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] /= o.v_[i];
    return *this;
  }
  ScalarField& operator+=(cplx c) {
    for (auto& x : v_) x += c;
    return *this;
  }
  ScalarField& operator-=(cplx c) {
    for (auto& x : v_) x -= c;
    return *this;
  }
  ScalarField& operator*=(cplx c) {
    for (auto& x : v_) x *= c;
    return *this;
  }

  void check(const ScalarField& o) const {
    if (grid_ != o.grid_ && (!grid_ || !o.grid_ || grid_->band_limit() != o.grid_->band_limit()))
      throw InvalidArgument("ScalarField: fields live on different grids");
  }

 private:
  GridPtr grid_;
  std::vector<cplx> v_;
};

inline ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
inline ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
inline ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
inline ScalarField operator/(ScalarField a, const ScalarField& b) { return a /= b; }
inline ScalarField operator+(ScalarField a, cplx c) { return a += c; }
inline ScalarField operator-(ScalarField a, cplx c) { return a -= c; }
inline ScalarField operator*(ScalarField a, cplx c) { return a *= c; }
inline ScalarField operator*(cplx c, ScalarField a) { return a *= c; }
inline ScalarField operator+(cplx c, ScalarField a) { return a += c; }
inline ScalarField operator-(cplx c, ScalarField a) {
  for (auto& x : a.values()) x = c - x;
  return a;
}
inline ScalarField operator-(ScalarField a) { return a *= -1.0; }

inline ScalarField exp(const ScalarField& f) {
  return f.map([](cplx x) { return std::exp(x); });
}
inline ScalarField log(const ScalarField& f) {
  return f.map([](cplx x) { return std::log(x); });
}

inline cplx integrate(const ScalarField& f) {
  const SphereGrid& g = f.grid();
  const int no = g.n_lon();
  cplx total = 0.0;
  for (int i = 0; i < g.n_lat(); ++i) {
    cplx ring = 0.0;
    for (int j = 0; j < no; ++j) ring += f[static_cast<std::size_t>(i) * no + j];
    total += ring * (g.ring_weight(i) / no);
  }
  return total;
}

// Integral of f * conj(g).
inline cplx inner(const ScalarField& f, const ScalarField& g) { return integrate(f * g.conj()); }

inline double sup_distance(const ScalarField& a, const ScalarField& b) { return (a - b).sup_norm(); }

// Positive Laplacian: eigenvalue 4 pi l (l+1) on degree-l harmonics.
inline ScalarField laplacian(const ScalarField& f) {
  const SphereGrid& g = f.grid();
  auto a = f.coefficients();
  for (int l = 0; l <= g.band_limit(); ++l)
    for (int m = -l; m <= l; ++m) a[SphereGrid::coeff_index(l, m)] *= g.eigenvalue(l);
  return ScalarField::from_coefficients(f.grid_ptr(), a);
}

inline constexpr double kSolvabilityTol = 1e-8;

inline ScalarField poisson_solve(const ScalarField& rhs) {
  const cplx mean = integrate(rhs);
  const double scale = std::max(1.0, rhs.sup_norm());
  if (std::abs(mean) > kSolvabilityTol * scale)
    throw NonZeroMean("poisson_solve: right-hand side has mean " + std::to_string(std::abs(mean)));
  const SphereGrid& g = rhs.grid();
  auto a = rhs.coefficients();
  a[0] = 0.0;
  for (int l = 1; l <= g.band_limit(); ++l)
    for (int m = -l; m <= l; ++m) a[SphereGrid::coeff_index(l, m)] /= g.eigenvalue(l);
  return ScalarField::from_coefficients(rhs.grid_ptr(), a);
}

template <class T>
struct Refined {
  T value;
  int band_limit = 0;
  double relative_change = 0.0;
  bool converged = false;
};

// Evaluates eval(grid) at L0, 2 L0, ... until rel_change(previous, current) < tol
// or the band limit would exceed L_max.
template <class Eval, class Change>
auto refine_band_limit(Eval&& eval, Change&& rel_change, int L0, double tol, int L_max)
    -> Refined<decltype(eval(GridCache::get(L0)))> {
  using T = decltype(eval(GridCache::get(L0)));
  if (L0 < 1) throw InvalidArgument("refine_band_limit: starting band limit must be >= 1");
  Refined<T> out{eval(GridCache::get(L0)), L0, std::numeric_limits<double>::infinity(), false};
  for (int L = 2 * L0; L <= L_max; L *= 2) {
    T next = eval(GridCache::get(L));
    out.relative_change = rel_change(out.value, next);
    out.value = std::move(next);
    out.band_limit = L;
    if (out.relative_change < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace lumpvol
