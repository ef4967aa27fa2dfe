/*
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MIMOCE_ESTIMATORS_HPP
#define MIMOCE_ESTIMATORS_HPP

#include <limits>
#include <vector>

#include "mimoce/channel.hpp"
#include "mimoce/numerics.hpp"
#include "mimoce/pilots.hpp"
#include "mimoce/structure.hpp"

namespace mimoce {

// ---------------------------------------------------------------------------
// Genie (conditional) MMSE
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::LLT<CMatrix> observation_covariance_llt(const ChannelCovariance& cov, const PilotSet& pilots,
                                                      double sigma2) {
  require(sigma2 > 0.0 && std::isfinite(sigma2), "genie MMSE: sigma2 must be finite and > 0");
  require(cov.s() == pilots.s() && cov.u() == pilots.u(), "genie MMSE: covariance/pilot shape mismatch");
  const CMatrix& x = pilots.x_lifted();
  CMatrix cy = x * cov.full * x.adjoint();
  cy.diagonal().array() += sigma2;
  Eigen::LLT<CMatrix> llt(cy);
  require(llt.info() == Eigen::Success, "genie MMSE: observation covariance is singular");
  return llt;
}

}  // namespace detail

/// W = C X^H (X C X^H + sigma^2 I)^-1, an SU x SN matrix.
inline CMatrix genie_filter(const ChannelCovariance& cov, const PilotSet& pilots, double sigma2) {
  const auto llt = detail::observation_covariance_llt(cov, pilots, sigma2);
  // W^H = Cy^-1 X C since Cy and C are Hermitian
  const CMatrix wh = llt.solve(pilots.x_lifted() * cov.full);
  return wh.adjoint();
}

inline CVector genie_mmse(const CVector& y, const ChannelCovariance& cov, const PilotSet& pilots, double sigma2) {
  require(y.size() == pilots.s() * pilots.n(), "genie_mmse: observation length must be S*N");
  const auto llt = detail::observation_covariance_llt(cov, pilots, sigma2);
  return cov.full * (pilots.x_lifted().adjoint() * llt.solve(y));
}

/// log|I - X W|. The determinant is real positive for MMSE filters; a phase
/// beyond 1e-6 rad means the filter is not one and is reported as an error.
inline double log_det_identity_minus(const CMatrix& xw) {
  require(xw.rows() == xw.cols(), "log_det_identity_minus: X W must be square");
  const LogDet ld = log_det(CMatrix::Identity(xw.rows(), xw.cols()) - xw);
  require(std::abs(ld.phase) <= 1e-6, "log_det_identity_minus: determinant is not real positive (phase " +
                                          std::to_string(ld.phase) + ")");
  require(std::isfinite(ld.log_abs), "log_det_identity_minus: non-finite log-determinant");
  return ld.log_abs;
}

// ---------------------------------------------------------------------------
// Gridded estimator
// ---------------------------------------------------------------------------

enum class GridKind {
  kExact,       // W_i from the Toeplitz covariance, stored dense
  kStructured,  // W_i = Q^H diablk(w_i) Q X^H from the circulant surrogate, stored packed
};

/// Filters for a uniform discrete prior over P grid points.
struct GridFilters {
  std::vector<Delta> deltas;
  std::vector<CMatrix> dense;  // W_i, SU x SN (exact path)
  // Column i holds w_i: SU^2 rows in diablk order, or SU rows if `diagonal`.
  CMatrix packed;
  bool diagonal = false;
  RVector biases;  // b_i = log|I - X W_i|
  Index s = 0;
  Index u = 0;

  Index size() const { return biases.size(); }
  bool has_dense() const { return !dense.empty(); }
  bool has_packed() const { return packed.size() > 0; }

  DiablkVector packed_filter(Index i) const {
    if (diagonal) return embed_diagonal(packed.col(i), s, u);
    return {packed.col(i), s, u};
  }
};

/// Per-side grid sizes: P_T = min(max(U, 4), P) transmit angles and
/// P_R = floor(P / P_T) receive angles, uniform in sin(theta) over [-1, 1).
struct GridShape {
  Index tx = 1;
  Index rx = 1;
  Index size() const { return tx * rx; }
};

inline GridShape grid_shape(Index u, Index p) {
  require(p >= 1, "grid: P must be >= 1");
  GridShape g;
  g.tx = std::min<Index>(std::max<Index>(u, 4), p);
  g.rx = p / g.tx;
  return g;
}

inline std::vector<Delta> grid_deltas(const ScenarioConfig& cfg, Index p) {
  const GridShape g = grid_shape(cfg.U, p);
  std::vector<Delta> out;
  out.reserve(static_cast<std::size_t>(g.size()));
  for (Index t = 0; t < g.tx; ++t)
    for (Index r = 0; r < g.rx; ++r) {
      Delta d;
      d.spread_tx = deg2rad(cfg.spread_tx_deg);
      d.spread_rx = deg2rad(cfg.spread_rx_deg);
      const double st = -1.0 + 2.0 * static_cast<double>(t) / static_cast<double>(g.tx);
      const double sr = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(g.rx);
      d.clusters.push_back({std::asin(st), std::asin(sr), 1.0});
      out.push_back(std::move(d));
    }
  return out;
}

/// Structured filter from circulant eigenvalues c (length SU):
/// per frequency bin s, M_s = D_s (G D_s + sigma^2 I)^-1 with G = F_U G' F_U^H,
/// which is sigma^-2 (sigma^-2 Q~Q~^H + D^-1)^-1 without inverting D.
/// Returns the diablk vector and log|I - X W|.
inline std::pair<DiablkVector, double> structured_filter(const RVector& c, const PilotSet& pilots, double sigma2) {
  const Index s = pilots.s();
  const Index u = pilots.u();
  require(c.size() == s * u, "structured_filter: eigenvalue vector must have length S*U");
  require(sigma2 > 0.0, "structured_filter: sigma2 must be > 0");
  const CMatrix fu = dft_matrix(u);
  const CMatrix g = fu * pilots.small_gram() * fu.adjoint();
  DiablkVector w = DiablkVector::zero(s, u);
  double logdet = 0.0;
  for (Index k = 0; k < s; ++k) {
    CMatrix d = CMatrix::Zero(u, u);
    for (Index p = 0; p < u; ++p) d(p, p) = std::max(c(p * s + k), 0.0);
    CMatrix sys = g * d;
    sys.diagonal().array() += sigma2;
    // M = D sys^-1  <=>  sys^T M^T = D^T
    const CMatrix m = sys.transpose().partialPivLu().solve(d.transpose()).transpose();
    for (Index p = 0; p < u; ++p)
      for (Index q = 0; q < u; ++q) w(p, q, k) = m(p, q);
    logdet += log_det_identity_minus(m * g);
  }
  return {std::move(w), logdet};
}

/// Builds the grid filters for P points at the scenario's SNR. The exact kind
/// stores dense W_i; the structured kind stores w_i packed (diagonal when the
/// pilots are orthogonal).
inline GridFilters build_grid(const ScenarioConfig& cfg, const PilotSet& pilots, Index p,
                              GridKind kind = GridKind::kExact) {
  require(p >= 1, "build_grid: P must be >= 1");
  require(cfg.S == pilots.s() && cfg.U == pilots.u() && cfg.N == pilots.n(), "build_grid: scenario/pilot mismatch");
  GridFilters grid;
  grid.s = cfg.S;
  grid.u = cfg.U;
  grid.deltas = grid_deltas(cfg, p);
  const GridShape shape = grid_shape(cfg.U, p);
  const Index np = shape.size();

  std::vector<CMatrix> tx_cov;
  std::vector<CMatrix> rx_cov;
  for (Index t = 0; t < shape.tx; ++t) {
    const auto& d = grid.deltas[static_cast<std::size_t>(t * shape.rx)];
    tx_cov.push_back(side_covariance(tx_components(d), d.spread_tx, cfg.U));
  }
  for (Index r = 0; r < shape.rx; ++r) {
    const auto& d = grid.deltas[static_cast<std::size_t>(r)];
    rx_cov.push_back(side_covariance(rx_components(d), d.spread_rx, cfg.S));
  }

  grid.biases.resize(np);
  grid.diagonal = kind == GridKind::kStructured && pilots.is_orthogonal();
  if (kind == GridKind::kStructured)
    grid.packed.resize(grid.diagonal ? cfg.S * cfg.U : cfg.S * cfg.U * cfg.U, np);

  for (Index t = 0; t < shape.tx; ++t)
    for (Index r = 0; r < shape.rx; ++r) {
      const Index i = t * shape.rx + r;
      const ChannelCovariance cov =
          make_covariance(tx_cov[static_cast<std::size_t>(t)], rx_cov[static_cast<std::size_t>(r)]);
      const double sigma2 = noise_variance_for_snr(cov, pilots, cfg.snr_db);
      if (kind == GridKind::kExact) {
        CMatrix w = genie_filter(cov, pilots, sigma2);
        grid.biases(i) = log_det_identity_minus(pilots.x_lifted() * w);
        grid.dense.push_back(std::move(w));
      } else {
        auto [w, b] = structured_filter(circulant_eigenvalues(cov), pilots, sigma2);
        grid.biases(i) = b;
        if (grid.diagonal) {
          for (Index q = 0; q < cfg.U; ++q) grid.packed.col(i).segment(q * cfg.S, cfg.S) = w.data.segment(w.offset(q, q), cfg.S);
        } else {
          grid.packed.col(i) = w.data;
        }
      }
    }
  return grid;
}

/// Materializes W_i = Q^H diablk(w_i) Q X^H for every packed filter.
inline void materialize_dense(GridFilters& grid, const PilotSet& pilots, const QTransform& qt) {
  require(grid.has_packed(), "materialize_dense: grid has no packed filters");
  const CMatrix q = qt.dense();
  grid.dense.clear();
  for (Index i = 0; i < grid.size(); ++i)
    grid.dense.push_back(q.adjoint() * diablk_expand(grid.packed_filter(i)) * q * pilots.x_lifted().adjoint());
}

/// Softmax weights of the grid given scores tr(X W_i C_hat) + b_i.
inline RVector ge_weights_dense(const CVector& y, const GridFilters& grid, const PilotSet& pilots, double sigma2,
                                std::vector<CVector>* filtered = nullptr) {
  require(grid.has_dense(), "ge_estimate: grid has no dense filters");
  require(sigma2 > 0.0, "ge_estimate: sigma2 must be > 0");
  require(y.size() == pilots.s() * pilots.n(), "ge_estimate: observation length must be S*N");
  const CVector xhy = apply_xh(y, pilots);
  RVector scores(grid.size());
  if (filtered) filtered->resize(static_cast<std::size_t>(grid.size()));
  for (Index i = 0; i < grid.size(); ++i) {
    CVector wy = grid.dense[static_cast<std::size_t>(i)] * y;
    // tr(X W y y^H) / sigma^2 = (X^H y)^H (W y) / sigma^2
    scores(i) = xhy.dot(wy).real() / sigma2 + grid.biases(i);
    if (filtered) (*filtered)[static_cast<std::size_t>(i)] = std::move(wy);
  }
  return softmax(scores);
}

/// GE through the dense filters: sum_i softmax_i W_i y.
inline CVector ge_estimate(const CVector& y, const GridFilters& grid, const PilotSet& pilots, double sigma2) {
  std::vector<CVector> filtered;
  const RVector p = ge_weights_dense(y, grid, pilots, sigma2, &filtered);
  CVector out = CVector::Zero(grid.s * grid.u);
  for (Index i = 0; i < grid.size(); ++i) out += p(i) * filtered[static_cast<std::size_t>(i)];
  return out;
}

/// GE through the packed filters: w = A softmax(A^T c_bar + b), then
/// Q^H diablk(w) Q X^H y.
inline CVector ge_estimate_diablk(const CVector& y, const GridFilters& grid, const PilotSet& pilots,
                                  const QTransform& qt, double sigma2) {
  require(grid.has_packed(), "ge_estimate_diablk: grid has no packed filters");
  if (grid.diagonal) {
    const RVector chat = fe_input_chat(y, pilots, qt, sigma2);
    const RVector scores = (grid.packed.transpose() * chat.cast<cplx>()).real() + grid.biases;
    const CVector w = grid.packed * softmax(scores).cast<cplx>();
    return apply_diag_filter(w, y, pilots, qt);
  }
  const DiablkVector cbar = ge_input_cbar(y, pilots, qt, sigma2);
  const RVector scores = (grid.packed.transpose() * cbar.data.conjugate()).real() + grid.biases;
  const DiablkVector w(grid.packed * softmax(scores).cast<cplx>(), grid.s, grid.u);
  return apply_structured_filter(w, y, pilots, qt);
}

// ---------------------------------------------------------------------------
// Fast estimator
// ---------------------------------------------------------------------------

struct FeParams {
  RVector w0;       // length SU, transform-domain filter of the reference grid point
  double b0 = 0.0;  // bias shared by all circular shifts
};

/// w0 from the circulant surrogate of a broadside single cluster at the
/// scenario's spreads; b0 = log|I - X W_0|.
inline FeParams make_fe_params(const ScenarioConfig& cfg, const PilotSet& pilots) {
  require(pilots.is_orthogonal(), "make_fe_params: requires orthogonal pilots");
  Delta ref;
  ref.spread_tx = deg2rad(cfg.spread_tx_deg);
  ref.spread_rx = deg2rad(cfg.spread_rx_deg);
  ref.clusters.push_back({0.0, 0.0, 1.0});
  const ChannelCovariance cov = build_covariance(ref, cfg.S, cfg.U);
  const double sigma2 = noise_variance_for_snr(cov, pilots, cfg.snr_db);
  const RVector c = circulant_eigenvalues(cov).cwiseMax(0.0);
  const double ratio = static_cast<double>(pilots.n()) / static_cast<double>(pilots.u());
  FeParams fe;
  fe.w0 = c.array() / (ratio * c.array() + sigma2);
  fe.b0 = (sigma2 / (ratio * c.array() + sigma2)).log().sum();
  return fe;
}

/// Transform-domain filter w = w0 * softmax(flip(w0) * c_hat + b0).
inline RVector fe_filter_vector(const RVector& chat, const FeParams& fe, Index s, Index u) {
  require(chat.size() == s * u && fe.w0.size() == s * u, "fe_filter_vector: length mismatch");
  const RVector z = (fft2_circ_conv(flip2d(fe.w0, s, u), chat, s, u).array() + fe.b0).matrix();
  return fft2_circ_conv(fe.w0, softmax(z), s, u);
}

inline CVector fe_estimate(const CVector& y, const FeParams& fe, const PilotSet& pilots, const QTransform& qt,
                           double sigma2) {
  require(pilots.is_orthogonal(), "fe_estimate: requires orthogonal pilots (use the diablk GE path otherwise)");
  const RVector chat = fe_input_chat(y, pilots, qt, sigma2);
  const RVector w = fe_filter_vector(chat, fe, pilots.s(), pilots.u());
  return apply_diag_filter(w.cast<cplx>(), y, pilots, qt);
}

/// The grid of all SU circular shifts of w0 (diagonal packing, equal biases).
/// The GE on this grid coincides with the FE.
inline GridFilters circulant_grid(const FeParams& fe, Index s, Index u) {
  require(fe.w0.size() == s * u, "circulant_grid: kernel length must be S*U");
  GridFilters g;
  g.s = s;
  g.u = u;
  g.diagonal = true;
  g.packed.resize(s * u, s * u);
  for (Index ju = 0; ju < u; ++ju)
    for (Index js = 0; js < s; ++js)
      for (Index iu = 0; iu < u; ++iu)
        for (Index is = 0; is < s; ++is)
          g.packed(is + s * iu, js + s * ju) = fe.w0((is - js + s) % s + s * ((iu - ju + u) % u));
  g.biases = RVector::Constant(s * u, fe.b0);
  return g;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Structured-covariance ML estimate with clipped eigenvalues
/// c = [|Q X^H y|^2 - sigma^2]_+ (orthogonal pilots).
inline CVector ml_estimate(const CVector& y, const PilotSet& pilots, const QTransform& qt, double sigma2) {
  require(pilots.is_orthogonal(), "ml_estimate: requires orthogonal pilots");
  require(sigma2 > 0.0, "ml_estimate: sigma2 must be > 0");
  check_filter_shapes(y, pilots, qt, "ml_estimate");
  const CVector uvec = qt.forward(apply_xh(y, pilots));
  const RVector c = (uvec.cwiseAbs2().array() - sigma2).max(0.0).matrix();
  const double ratio = static_cast<double>(pilots.n()) / static_cast<double>(pilots.u());
  const RVector gain = c.array() / (ratio * c.array() + sigma2);
  return qt.adjoint(gain.cast<cplx>().cwiseProduct(uvec));
}

struct LsResult {
  CVector h;
  bool rank_deficient = false;
};

/// Minimum-norm least squares for y = X h: H = Y pinv(X').
inline LsResult ls_estimate(const CVector& y, const PilotSet& pilots) {
  const Index s = pilots.s();
  require(y.size() == s * pilots.n(), "ls_estimate: observation length must be S*N");
  const Eigen::Map<const CMatrix> ymat(y.data(), s, pilots.n());
  // H X' = Y  <=>  X'^T H^T = Y^T
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(pilots.x_small().transpose());
  const CMatrix ht = cod.solve(CMatrix(ymat.transpose()));
  const CMatrix hmat = ht.transpose();
  LsResult r;
  r.h = Eigen::Map<const CVector>(hmat.data(), hmat.size());
  r.rank_deficient = cod.rank() < pilots.u();
  return r;
}

/// S x (factor*S) oversampled DFT dictionary with unit-norm columns.
inline CMatrix oversampled_dft_dictionary(Index s, Index factor) {
  require(s >= 1 && factor >= 1, "oversampled_dft_dictionary: S and factor must be >= 1");
  const Index m = s * factor;
  CMatrix d(s, m);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s));
  for (Index r = 0; r < s; ++r)
    for (Index c = 0; c < m; ++c)
      d(r, c) = std::polar(scale, -2.0 * kPi * static_cast<double>((r * c) % m) / static_cast<double>(m));
  return d;
}

/// Greedy OMP on y ~ Phi t, returning the coefficient vector after each of
/// the first k_max iterations (fewer if the residual vanishes). The active set
/// is refit by least squares after every selection.
inline std::vector<CVector> omp_path(const CVector& y, const CMatrix& phi, Index k_max) {
  require(k_max >= 1, "omp: k_max must be >= 1");
  require(phi.rows() == y.size(), "omp: sensing matrix rows must match observation length");
  const RVector norms = phi.colwise().norm().transpose();
  std::vector<Index> active;
  std::vector<char> used(static_cast<std::size_t>(phi.cols()), 0);
  std::vector<CVector> path;
  CVector residual = y;
  const double ynorm = y.norm();
  for (Index k = 0; k < std::min(k_max, phi.cols()); ++k) {
    if (residual.norm() <= 1e-14 * std::max(ynorm, 1e-300)) break;
    const CVector corr = phi.adjoint() * residual;
    Index best = -1;
    double best_val = -1.0;
    for (Index j = 0; j < phi.cols(); ++j) {
      if (used[static_cast<std::size_t>(j)] || norms(j) == 0.0) continue;
      const double v = std::abs(corr(j)) / norms(j);
      if (v > best_val) {
        best_val = v;
        best = j;
      }
    }
    if (best < 0) break;
    active.push_back(best);
    used[static_cast<std::size_t>(best)] = 1;
    CMatrix sub(phi.rows(), static_cast<Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) sub.col(static_cast<Index>(a)) = phi.col(active[a]);
    const CVector coef = sub.householderQr().solve(y);
    residual = y - sub * coef;
    CVector t = CVector::Zero(phi.cols());
    for (std::size_t a = 0; a < active.size(); ++a) t(active[a]) = coef(static_cast<Index>(a));
    path.push_back(std::move(t));
  }
  return path;
}

struct OmpResult {
  CVector h;
  Index sparsity = 0;
};

/// OMP over (I_U kron D) with the sparsity level picked by the true channel.
inline OmpResult omp_genie_detailed(const CVector& y, const CVector& h_true, const PilotSet& pilots,
                                    Index oversampling, Index k_max) {
  require(k_max >= 1, "omp_genie: k_max must be >= 1");
  const Index s = pilots.s();
  const Index u = pilots.u();
  require(h_true.size() == s * u, "omp_genie: true channel must have length S*U");
  require(y.size() == s * pilots.n(), "omp_genie: observation length must be S*N");
  const CMatrix dict = oversampled_dft_dictionary(s, oversampling);
  const Index m = dict.cols();
  // X (I_U kron D) = X'^T kron D
  const CMatrix phi = kron(pilots.x_small().transpose(), dict);
  const auto path = omp_path(y, phi, k_max);
  OmpResult best;
  best.h = CVector::Zero(s * u);
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < path.size(); ++k) {
    const Eigen::Map<const CMatrix> tmat(path[k].data(), m, u);
    const CMatrix hmat = dict * tmat;
    const CVector h = Eigen::Map<const CVector>(hmat.data(), hmat.size());
    const double err = (h_true - h).squaredNorm();
    if (err < best_err) {
      best_err = err;
      best.h = h;
      best.sparsity = static_cast<Index>(k) + 1;
    }
  }
  return best;
}

inline CVector omp_genie(const CVector& y, const CVector& h_true, const PilotSet& pilots, Index oversampling,
                         Index k_max) {
  return omp_genie_detailed(y, h_true, pilots, oversampling, k_max).h;
}

inline Index default_omp_kmax(const ScenarioConfig& cfg) { return 2 * cfg.num_clusters * cfg.U; }

}  // namespace mimoce

#endif  // MIMOCE_ESTIMATORS_HPP
