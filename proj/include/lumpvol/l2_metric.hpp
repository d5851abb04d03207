#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "lumpvol/error.hpp"
#include "lumpvol/rational_map.hpp"
#include "lumpvol/sphere_grid.hpp"

namespace lumpvol {

inline constexpr double kBoundaryProximity = 1e-3;
inline constexpr double kBoundaryRefineTol = 1e-6;
inline constexpr int kMaxBandLimit = 192;

struct MetricDiagnostics {
  int band_limit = 0;
  double quadrature_error = std::numeric_limits<double>::quiet_NaN();
  double boundary_proximity = 1.0;
  bool near_boundary = false;
  bool refined = false;
};

struct MetricMatrix {
  Eigen::MatrixXcd g;
  ModuliChart chart;
  MetricDiagnostics diagnostics;
};

namespace detail {

// Pointwise Fubini-Study pairing of two coefficient directions on a sampled map.
// Direction alpha contributes the vector with the single entry mono(j_alpha) in row i_alpha.
inline cplx fs_direction_pair(const MapOnGrid& m, CoeffIndex a, CoeffIndex b, long n) {
  const double nn = m.norm2[n];
  const cplx ma = m.mono(a.col, n), mb = m.mono(b.col, n);
  const cplx inner = (a.row == b.row) ? ma * std::conj(mb) : cplx(0.0);
  const cplx ap = ma * std::conj(m.values(a.row, n));
  const cplx pb = m.values(b.row, n) * std::conj(mb);
  return (inner * nn - ap * pb) / (nn * nn);
}

// Integral over the sphere of FS(e_alpha, e_beta) * weight(n).
template <class Weight>
Eigen::MatrixXcd fs_direction_gram(const MapOnGrid& m, const ModuliChart& chart, Weight&& weight) {
  const SphereGrid& g = *m.grid;
  const int q = chart.q();
  const auto& dirs = chart.directions();
  Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(q, q);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double w = g.weight(n);
    const cplx f = weight(n);
    const long c = static_cast<long>(n);
    for (int a = 0; a < q; ++a)
      for (int b = a; b < q; ++b) G(a, b) += w * f * fs_direction_pair(m, dirs[a], dirs[b], c);
  }
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < a; ++b) G(a, b) = std::conj(G(b, a));
  return G;
}

inline double relative_matrix_change(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  const double s = std::max(b.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (a - b).cwiseAbs().maxCoeff() / s;
}

}  // namespace detail

// G[a][b] = integral of FS(d_a p, d_b p) over the sphere, at one band limit.
inline Eigen::MatrixXcd l2_metric_raw(const PolyTuple& P, const ModuliChart& chart, const GridPtr& grid) {
  const auto N = chart.normalize(P);
  const auto m = sample_map(N, grid);
  require_interior(m, "l2_metric_matrix");
  return detail::fs_direction_gram(m, chart, [](std::size_t) { return cplx(1.0); });
}

// Near-boundary points (min n < 1e-3 max n) are re-evaluated at doubled band limits
// until entries settle; the quadrature error estimate compares against L/2.
inline MetricMatrix l2_metric_matrix(const PolyTuple& P, const ModuliChart& chart, const GridPtr& grid) {
  MetricMatrix out;
  out.chart = chart;
  const auto N = chart.normalize(P);
  const auto m = sample_map(N, grid);
  require_interior(m, "l2_metric_matrix");
  out.g = detail::fs_direction_gram(m, chart, [](std::size_t) { return cplx(1.0); });
  out.diagnostics.band_limit = grid->band_limit();
  out.diagnostics.boundary_proximity = boundary_proximity(m);
  out.diagnostics.near_boundary = out.diagnostics.boundary_proximity < kBoundaryProximity;
  const int L = grid->band_limit();
  if (L >= 2) {
    const auto coarse = l2_metric_raw(N, chart, GridCache::get(L / 2));
    out.diagnostics.quadrature_error = detail::relative_matrix_change(coarse, out.g);
  }
  if (out.diagnostics.near_boundary) {
    Eigen::MatrixXcd prev = out.g;
    for (int Lr = 2 * std::max(L, 1); Lr <= kMaxBandLimit; Lr *= 2) {
      auto next = l2_metric_raw(N, chart, GridCache::get(Lr));
      const double change = detail::relative_matrix_change(prev, next);
      out.g = next;
      out.diagnostics.band_limit = Lr;
      out.diagnostics.quadrature_error = change;
      out.diagnostics.refined = true;
      prev = next;
      if (change < kBoundaryRefineTol) break;
    }
  }
  return out;
}

inline MetricMatrix l2_metric_matrix(const PolyTuple& P, const GridPtr& grid) {
  return l2_metric_matrix(P, ModuliChart::largest(P), grid);
}

// Fubini-Study metric of CP^q in the affine chart w.
inline Eigen::MatrixXcd fs_reference_matrix(const Eigen::VectorXcd& w) {
  const long q = w.size();
  const double t = 1.0 + w.squaredNorm();
  Eigen::MatrixXcd G(q, q);
  for (long a = 0; a < q; ++a)
    for (long b = 0; b < q; ++b) G(a, b) = ((a == b ? t : 0.0) - std::conj(w(a)) * w(b)) / (t * t);
  return G;
}

inline MetricMatrix fs_reference_metric(const Eigen::VectorXcd& w) {
  MetricMatrix out;
  out.g = fs_reference_matrix(w);
  return out;
}

inline MetricMatrix fs_reference_metric(const PolyTuple& P, const ModuliChart& chart) {
  MetricMatrix out;
  out.g = fs_reference_matrix(chart.coordinates(P));
  out.chart = chart;
  return out;
}

inline constexpr double kHermitianTol = 1e-8;

inline double volume_density(const Eigen::MatrixXcd& G) {
  if (G.rows() != G.cols()) throw NonHermitian("volume_density: matrix is not square");
  if (G.size() == 0) return 1.0;
  const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
  if ((G - G.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol * scale)
    throw NonHermitian("volume_density: matrix is not Hermitian");
  const Eigen::MatrixXcd H = 0.5 * (G + G.adjoint());
  const double d = H.determinant().real();
  if (d < 0.0 && d >= -1e-10) return 0.0;
  return d;
}

inline double volume_density(const MetricMatrix& G) { return volume_density(G.g); }

// det(G) / det(G_ref) at the same chart point; chart invariant.
inline double density_ratio(const Eigen::MatrixXcd& G, const Eigen::VectorXcd& w) {
  return volume_density(G) * std::pow(1.0 + w.squaredNorm(), static_cast<double>(w.size() + 1));
}

inline nlohmann::json to_json_value(const MetricMatrix& M) {
  nlohmann::json d = {{"band_limit", M.diagnostics.band_limit},
                      {"boundary_proximity", M.diagnostics.boundary_proximity},
                      {"near_boundary", M.diagnostics.near_boundary},
                      {"refined", M.diagnostics.refined}};
  if (std::isfinite(M.diagnostics.quadrature_error))
    d["quadrature_error"] = M.diagnostics.quadrature_error;
  else
    d["quadrature_error"] = nullptr;
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& c : M.chart.directions()) dirs.push_back({c.row, c.col});
  return {{"q", M.g.rows()},
          {"chart", {{"fixed", {M.chart.fixed().row, M.chart.fixed().col}}, {"directions", dirs}}},
          {"matrix", complex_matrix_json(M.g)},
          {"determinant", volume_density(M.g)},
          {"diagnostics", d}};
}

}  // namespace lumpvol
