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

#ifndef MIMOCE_STRUCTURE_HPP
#define MIMOCE_STRUCTURE_HPP

#include "mimoce/numerics.hpp"
#include "mimoce/pilots.hpp"

namespace mimoce {

/// Block-diagonal packing of an SU x SU matrix made of a U x U grid of S x S
/// diagonal blocks. Entry s of block (p, q) lives at data[(p*U + q)*S + s].
struct DiablkVector {
  CVector data;
  Index s = 0;
  Index u = 0;

  DiablkVector() = default;
  DiablkVector(CVector d, Index s_, Index u_) : data(std::move(d)), s(s_), u(u_) {
    require(s >= 1 && u >= 1, "DiablkVector: S, U must be >= 1");
    require(data.size() == s * u * u, "DiablkVector: expected length S*U^2 = " + std::to_string(s * u * u) +
                                          ", got " + std::to_string(data.size()));
  }

  static DiablkVector zero(Index s, Index u) { return {CVector::Zero(s * u * u), s, u}; }

  Index offset(Index p, Index q) const { return (p * u + q) * s; }
  cplx operator()(Index p, Index q, Index k) const { return data(offset(p, q) + k); }
  cplx& operator()(Index p, Index q, Index k) { return data(offset(p, q) + k); }
};

inline CMatrix diablk_expand(const DiablkVector& v) {
  require(v.data.size() == v.s * v.u * v.u, "diablk_expand: length mismatch");
  const Index n = v.s * v.u;
  CMatrix m = CMatrix::Zero(n, n);
  for (Index p = 0; p < v.u; ++p)
    for (Index q = 0; q < v.u; ++q)
      for (Index k = 0; k < v.s; ++k) m(p * v.s + k, q * v.s + k) = v(p, q, k);
  return m;
}

/// Block diagonals of an SU x SU matrix; entries off the block diagonals are discarded.
inline DiablkVector diablk_extract(const CMatrix& m, Index s, Index u) {
  require(s >= 1 && u >= 1, "diablk_extract: S, U must be >= 1");
  require(m.rows() == s * u && m.cols() == s * u,
          "diablk_extract: expected a " + std::to_string(s * u) + " x " + std::to_string(s * u) + " matrix");
  DiablkVector v = DiablkVector::zero(s, u);
  for (Index p = 0; p < u; ++p)
    for (Index q = 0; q < u; ++q)
      for (Index k = 0; k < s; ++k) v(p, q, k) = m(p * s + k, q * s + k);
  return v;
}

/// diablk(w) applied to a length-SU vector in O(SU^2).
inline CVector apply_diablk(const DiablkVector& w, const CVector& v) {
  require(v.size() == w.s * w.u, "apply_diablk: length mismatch");
  CVector out = CVector::Zero(v.size());
  for (Index p = 0; p < w.u; ++p)
    for (Index q = 0; q < w.u; ++q)
      out.segment(p * w.s, w.s) += w.data.segment(w.offset(p, q), w.s).cwiseProduct(v.segment(q * w.s, w.s));
  return out;
}

/// tr(diablk(w) L) = w^T diablk(L^T). Only the block diagonals of L are read.
/// When diablk(w) is Hermitian this equals w^H diablk(L); the untransposed
/// w^T diablk(L) agrees only when the block diagonals of L are symmetric in (p, q).
inline cplx diablk_trace(const DiablkVector& w, const CMatrix& lambda) {
  const Index n = w.s * w.u;
  require(lambda.rows() == n && lambda.cols() == n, "diablk_trace: shape mismatch");
  cplx acc{0.0, 0.0};
  for (Index p = 0; p < w.u; ++p)
    for (Index q = 0; q < w.u; ++q)
      for (Index k = 0; k < w.s; ++k) acc += w(p, q, k) * lambda(q * w.s + k, p * w.s + k);
  return acc;
}

/// Packs an SU-vector into the diagonal blocks (p, p) only.
inline DiablkVector embed_diagonal(const CVector& w, Index s, Index u) {
  require(w.size() == s * u, "embed_diagonal: length mismatch");
  DiablkVector v = DiablkVector::zero(s, u);
  for (Index p = 0; p < u; ++p) v.data.segment(v.offset(p, p), s) = w.segment(p * s, s);
  return v;
}

inline void check_filter_shapes(const CVector& y, const PilotSet& pilots, const QTransform& qt, const char* who) {
  require(qt.s() == pilots.s() && qt.u() == pilots.u(), std::string(who) + ": QTransform/pilot shape mismatch");
  require(y.size() == pilots.s() * pilots.n(), std::string(who) + ": observation length must be S*N");
}

/// Q^H diablk(w) Q X^H y, matrix-free.
inline CVector apply_structured_filter(const DiablkVector& w, const CVector& y, const PilotSet& pilots,
                                       const QTransform& qt) {
  check_filter_shapes(y, pilots, qt, "apply_structured_filter");
  require(w.s == pilots.s() && w.u == pilots.u(), "apply_structured_filter: filter shape mismatch");
  return qt.adjoint(apply_diablk(w, qt.forward(apply_xh(y, pilots))));
}

/// Q^H diag(w) Q X^H y for a diagonal (orthogonal-pilot) filter.
inline CVector apply_diag_filter(const CVector& w, const CVector& y, const PilotSet& pilots, const QTransform& qt) {
  check_filter_shapes(y, pilots, qt, "apply_diag_filter");
  require(w.size() == pilots.s() * pilots.u(), "apply_diag_filter: filter length must be S*U");
  return qt.adjoint(w.cwiseProduct(qt.forward(apply_xh(y, pilots))));
}

/// c_bar = sigma^-2 diablk(u u^H) with u = Q X^H y; the SU x SU outer product
/// is never formed.
inline DiablkVector ge_input_cbar(const CVector& y, const PilotSet& pilots, const QTransform& qt, double sigma2) {
  check_filter_shapes(y, pilots, qt, "ge_input_cbar");
  require(sigma2 > 0.0, "ge_input_cbar: sigma2 must be > 0");
  const CVector uvec = qt.forward(apply_xh(y, pilots));
  const Index s = pilots.s();
  const Index u = pilots.u();
  DiablkVector c = DiablkVector::zero(s, u);
  for (Index p = 0; p < u; ++p)
    for (Index q = 0; q < u; ++q)
      c.data.segment(c.offset(p, q), s) =
          uvec.segment(p * s, s).cwiseProduct(uvec.segment(q * s, s).conjugate()) / sigma2;
  return c;
}

/// c_hat = sigma^-2 |Q X^H y|^2 (orthogonal pilots only).
inline RVector fe_input_chat(const CVector& y, const PilotSet& pilots, const QTransform& qt, double sigma2) {
  require(pilots.is_orthogonal(), "fe_input_chat: requires orthogonal pilots; use ge_input_cbar for general pilots");
  check_filter_shapes(y, pilots, qt, "fe_input_chat");
  require(sigma2 > 0.0, "fe_input_chat: sigma2 must be > 0");
  return qt.forward(apply_xh(y, pilots)).cwiseAbs2() / sigma2;
}

/// Block-circulant A with circulant blocks generated by w0, materialized as
/// Q^H diag(sqrt(SU) Q w0) Q, so that A x equals the 2D circular convolution w0 * x.
inline CMatrix circulant_matrix(const RVector& w0, const QTransform& qt) {
  const Index n = qt.s() * qt.u();
  require(w0.size() == n, "circulant_matrix: kernel length must be S*U");
  const CMatrix q = qt.dense();
  const CVector spectrum = std::sqrt(static_cast<double>(n)) * (q * w0.cast<cplx>());
  return q.adjoint() * spectrum.asDiagonal() * q;
}

/// Materializes A and checks every column against the FFT convolution path.
/// Throws if any entry deviates by more than 1e-9 relative.
inline CMatrix circulant_factorization_check(const RVector& w0, const QTransform& qt) {
  const CMatrix a = circulant_matrix(w0, qt);
  const Index n = a.rows();
  const double scale = std::max(1.0, w0.cwiseAbs().maxCoeff());
  for (Index j = 0; j < n; ++j) {
    RVector e = RVector::Zero(n);
    e(j) = 1.0;
    const RVector conv = fft2_circ_conv(w0, e, qt.s(), qt.u());
    const double dev = (a.col(j) - conv.cast<cplx>()).cwiseAbs().maxCoeff();
    require(dev <= 1e-9 * scale, "circulant_factorization_check: column " + std::to_string(j) +
                                     " deviates from the circular convolution by " + std::to_string(dev));
  }
  return a;
}

}  // namespace mimoce

#endif  // MIMOCE_STRUCTURE_HPP
