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

#ifndef MIMOCE_PILOTS_HPP
#define MIMOCE_PILOTS_HPP

#include <fstream>
#include <sstream>
#include <string>

#include "mimoce/numerics.hpp"

namespace mimoce {

/// Pilot matrix X' (U x N) together with its lift X = X'^T kron I_S, which
/// maps vec(H) (H is S x U) to vec(H X').
class PilotSet {
 public:
  PilotSet(Index s, CMatrix x_small) : s_(s), x_small_(std::move(x_small)) {
    require(s_ >= 1, "PilotSet: S must be >= 1");
    require(x_small_.rows() >= 1 && x_small_.cols() >= 1, "PilotSet: empty pilot matrix");
    require(x_small_.allFinite(), "PilotSet: non-finite pilot entry");
    x_lifted_ = kron(x_small_.transpose(), CMatrix::Identity(s_, s_));
    // X^H X = conj(X') X'^T kron I_S
    const CMatrix gram = x_small_.conjugate() * x_small_.transpose();
    const double ratio = static_cast<double>(n()) / static_cast<double>(u());
    is_orthogonal_ =
        (gram - ratio * CMatrix::Identity(u(), u())).norm() < 1e-10 * static_cast<double>(u());
  }

  Index s() const { return s_; }
  Index u() const { return x_small_.rows(); }
  Index n() const { return x_small_.cols(); }
  const CMatrix& x_small() const { return x_small_; }
  const CMatrix& x_lifted() const { return x_lifted_; }
  bool is_orthogonal() const { return is_orthogonal_; }

  /// U x U matrix G' with X^H X = G' kron I_S.
  CMatrix small_gram() const { return x_small_.conjugate() * x_small_.transpose(); }

 private:
  Index s_;
  CMatrix x_small_;
  CMatrix x_lifted_;
  bool is_orthogonal_ = false;
};

/// X' = U^{-1/2} times the first U rows of the (unnormalized) N-point DFT,
/// so that X^H X = (N/U) I.
inline PilotSet dft_pilots(Index s, Index u, Index n) {
  require(u >= 1 && n >= 1, "dft_pilots: U and N must be >= 1");
  require(u <= n, "dft_pilots: orthogonal DFT pilots need U <= N (got U=" + std::to_string(u) +
                      ", N=" + std::to_string(n) + ")");
  CMatrix x(u, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(u));
  for (Index r = 0; r < u; ++r)
    for (Index c = 0; c < n; ++c)
      x(r, c) = std::polar(scale, -2.0 * kPi * static_cast<double>((r * c) % n) / static_cast<double>(n));
  return PilotSet(s, std::move(x));
}

/// Reads X' from a text file: header "U N", then U*N complex entries as
/// "re im" decimal pairs in row-major order.
inline PilotSet load_pilots_file(const std::string& path, Index s) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open pilot file '" + path + "'");
  Index u = 0;
  Index n = 0;
  require(static_cast<bool>(in >> u >> n) && u >= 1 && n >= 1,
          "pilot file '" + path + "': malformed header, expected \"U N\"");
  std::vector<cplx> entries;
  entries.reserve(static_cast<std::size_t>(u * n));
  for (Index i = 0; i < u * n; ++i) {
    double re = 0.0;
    double im = 0.0;
    require(static_cast<bool>(in >> re >> im),
            "pilot file '" + path + "': expected " + std::to_string(u * n) + " complex entries, got " +
                std::to_string(i));
    entries.emplace_back(re, im);
  }
  return PilotSet(s, make_cmatrix(u, n, entries));
}

inline void save_pilots_file(const std::string& path, const CMatrix& x_small) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write pilot file '" + path + "'");
  out.precision(17);
  out << x_small.rows() << ' ' << x_small.cols() << '\n';
  for (Index r = 0; r < x_small.rows(); ++r)
    for (Index c = 0; c < x_small.cols(); ++c) out << x_small(r, c).real() << ' ' << x_small(r, c).imag() << '\n';
}

/// Q = F_U kron F_S (unitary DFTs) applied matrix-free through the 2D FFT
/// of the S x U reshape.
class QTransform {
 public:
  enum class Direction { kForward, kAdjoint };

  QTransform(Index s, Index u) : s_(s), u_(u) { require(s >= 1 && u >= 1, "QTransform: S, U must be >= 1"); }

  Index s() const { return s_; }
  Index u() const { return u_; }

  CVector apply(const CVector& v, Direction dir) const {
    require(v.size() == s_ * u_, "QTransform: expected length S*U = " + std::to_string(s_ * u_) + ", got " +
                                     std::to_string(v.size()));
    return dir == Direction::kForward ? fft2_unitary(v, s_, u_) : ifft2_unitary(v, s_, u_);
  }
  CVector forward(const CVector& v) const { return apply(v, Direction::kForward); }
  CVector adjoint(const CVector& v) const { return apply(v, Direction::kAdjoint); }

  /// Dense Q, for tests and small-size oracles.
  CMatrix dense() const { return kron(dft_matrix(u_), dft_matrix(s_)); }

 private:
  Index s_;
  Index u_;
};

/// X^H y = vec(Y X'^H) with Y the S x N reshape of y; O(SUN).
inline CVector apply_xh(const CVector& y, const PilotSet& pilots) {
  const Index s = pilots.s();
  require(y.size() == s * pilots.n(), "apply_xh: expected length S*N = " + std::to_string(s * pilots.n()));
  const Eigen::Map<const CMatrix> ymat(y.data(), s, pilots.n());
  CMatrix out = ymat * pilots.x_small().adjoint();
  return Eigen::Map<CVector>(out.data(), out.size());
}

/// X h = vec(H X') with H the S x U reshape of h.
inline CVector apply_x(const CVector& h, const PilotSet& pilots) {
  const Index s = pilots.s();
  require(h.size() == s * pilots.u(), "apply_x: expected length S*U = " + std::to_string(s * pilots.u()));
  const Eigen::Map<const CMatrix> hmat(h.data(), s, pilots.u());
  CMatrix out = hmat * pilots.x_small();
  return Eigen::Map<CVector>(out.data(), out.size());
}

}  // namespace mimoce

#endif  // MIMOCE_PILOTS_HPP
