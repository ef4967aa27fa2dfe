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

#ifndef MIMOCE_NUMERICS_HPP
#define MIMOCE_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

namespace mimoce {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

/// Raised for every contract violation (shape mismatch, invalid argument,
/// non-finite data). Carries a human-readable message only.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Validated construction of a complex matrix from row-major entries.
inline CMatrix make_cmatrix(Index rows, Index cols, const std::vector<cplx>& row_major) {
  require(rows >= 0 && cols >= 0, "make_cmatrix: negative dimension");
  require(static_cast<Index>(row_major.size()) == rows * cols,
          "make_cmatrix: expected " + std::to_string(rows * cols) + " entries, got " +
              std::to_string(row_major.size()));
  CMatrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      const cplx v = row_major[static_cast<std::size_t>(r * cols + c)];
      require(std::isfinite(v.real()) && std::isfinite(v.imag()), "make_cmatrix: non-finite entry");
      m(r, c) = v;
    }
  return m;
}

// ---------------------------------------------------------------------------
// DFT
// ---------------------------------------------------------------------------

/// Unitary n-point DFT matrix, F[j,k] = exp(-2 pi i jk/n) / sqrt(n).
inline CMatrix dft_matrix(Index n) {
  require(n >= 1, "dft_matrix: n must be >= 1");
  CMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index j = 0; j < n; ++j)
    for (Index k = 0; k < n; ++k) {
      // reduce jk mod n first so the phase stays accurate for large n
      const double ang = -2.0 * kPi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      f(j, k) = std::polar(scale, ang);
    }
  return f;
}

namespace detail {

inline Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine = [] {
    Eigen::FFT<double> e;
    e.SetFlag(Eigen::FFT<double>::Unscaled);
    return e;
  }();
  return engine;
}

// In-place unnormalized transform along both axes of a column-major rows x cols
// array. inverse=true uses exp(+2 pi i ...) without scaling.
inline void fft2_inplace(cplx* data, Index rows, Index cols, bool inverse) {
  auto& fft = fft_engine();
  std::vector<cplx> in(static_cast<std::size_t>(std::max(rows, cols)));
  std::vector<cplx> out(in.size());
  if (rows > 1) {
    for (Index c = 0; c < cols; ++c) {
      cplx* col = data + c * rows;
      std::copy(col, col + rows, in.begin());
      if (inverse)
        fft.inv(out.data(), in.data(), rows);
      else
        fft.fwd(out.data(), in.data(), rows);
      std::copy(out.begin(), out.begin() + rows, col);
    }
  }
  if (cols > 1) {
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) in[static_cast<std::size_t>(c)] = data[r + c * rows];
      if (inverse)
        fft.inv(out.data(), in.data(), cols);
      else
        fft.fwd(out.data(), in.data(), cols);
      for (Index c = 0; c < cols; ++c) data[r + c * rows] = out[static_cast<std::size_t>(c)];
    }
  }
}

}  // namespace detail

/// Unitary 2D DFT of the column-major rows x cols reshape of v, i.e.
/// (F_cols kron F_rows) v.
inline CVector fft2_unitary(const CVector& v, Index rows, Index cols) {
  require(v.size() == rows * cols, "fft2_unitary: length mismatch");
  CVector out = v;
  detail::fft2_inplace(out.data(), rows, cols, false);
  out /= std::sqrt(static_cast<double>(rows * cols));
  return out;
}

/// Adjoint (= inverse) of fft2_unitary.
inline CVector ifft2_unitary(const CVector& v, Index rows, Index cols) {
  require(v.size() == rows * cols, "ifft2_unitary: length mismatch");
  CVector out = v;
  detail::fft2_inplace(out.data(), rows, cols, true);
  out /= std::sqrt(static_cast<double>(rows * cols));
  return out;
}

// ---------------------------------------------------------------------------
// 2D circular convolution on S x U reshapes (column-major, S rows)
// ---------------------------------------------------------------------------

/// vec of the 2D circular convolution of the S x U reshapes of kernel and
/// input: out[s,u] = sum_{s',u'} kernel[s',u'] input[(s-s') mod S, (u-u') mod U].
/// O(SU log SU) via the 2D FFT.
inline RVector fft2_circ_conv(const RVector& kernel, const RVector& input, Index s, Index u) {
  require(s >= 1 && u >= 1, "fft2_circ_conv: S and U must be >= 1");
  require(kernel.size() == s * u && input.size() == s * u,
          "fft2_circ_conv: expected vectors of length S*U = " + std::to_string(s * u));
  CVector k = kernel.cast<cplx>();
  CVector x = input.cast<cplx>();
  detail::fft2_inplace(k.data(), s, u, false);
  detail::fft2_inplace(x.data(), s, u, false);
  CVector prod = k.cwiseProduct(x);
  detail::fft2_inplace(prod.data(), s, u, true);
  return prod.real() / static_cast<double>(s * u);
}

/// 2D circular flip of the S x U reshape: (s,u) -> ((S-s) mod S, (U-u) mod U).
inline RVector flip2d(const RVector& v, Index s, Index u) {
  require(v.size() == s * u, "flip2d: length mismatch");
  RVector out(v.size());
  for (Index cu = 0; cu < u; ++cu)
    for (Index cs = 0; cs < s; ++cs) out((s - cs) % s + s * ((u - cu) % u)) = v(cs + s * cu);
  return out;
}

/// Circular cross-correlation: out[k] = sum_i a[i] b[i - k] (2D indices).
inline RVector fft2_circ_corr(const RVector& a, const RVector& b, Index s, Index u) {
  return fft2_circ_conv(a, flip2d(b, s, u), s, u);
}

// ---------------------------------------------------------------------------
// Structured matrices
// ---------------------------------------------------------------------------

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Hermitian Toeplitz matrix with first column c: T[m,n] = c[m-n] for m >= n,
/// conj(c[n-m]) otherwise.
inline CMatrix toeplitz_from_first_column(const CVector& c) {
  require(c.size() >= 1, "toeplitz_from_first_column: empty column");
  require(std::abs(c(0).imag()) <= 1e-12 * std::max(1.0, std::abs(c(0).real())),
          "toeplitz_from_first_column: c[0] must be real for a Hermitian Toeplitz matrix");
  require(c.allFinite(), "toeplitz_from_first_column: non-finite entry");
  const Index n = c.size();
  CMatrix t(n, n);
  for (Index m = 0; m < n; ++m)
    for (Index k = 0; k < n; ++k) t(m, k) = m >= k ? c(m - k) : std::conj(c(k - m));
  t.diagonal() = t.diagonal().real().cast<cplx>();
  return t;
}

inline bool is_hermitian(const CMatrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Numerically stable softmax (max-subtracted).
inline RVector softmax(const RVector& z) {
  require(z.size() >= 1, "softmax: empty input");
  const RVector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; derives independent child seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Caller-owned random stream. Complex draws have unit variance with i.i.d.
/// N(0, 1/2) real and imaginary parts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  cplx complex_normal() {
    const double s = std::sqrt(0.5);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }
  CVector complex_normal(Index n) {
    CVector g(n);
    for (Index i = 0; i < n; ++i) g(i) = complex_normal();
    return g;
  }
  /// Normal truncated (by resampling) to [-2 std, 2 std].
  double truncated_normal(double std) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return std * z;
    }
  }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// PSD factorization and Gaussian sampling
// ---------------------------------------------------------------------------

/// Factor L with L L^H = cov. Eigenvalues below 1e-12 * max are floored to
/// zero and dropped, so L may have fewer columns than rows.
inline CMatrix psd_factor(const CMatrix& cov) {
  require(cov.rows() == cov.cols(), "psd_factor: covariance must be square");
  require(cov.allFinite(), "psd_factor: non-finite covariance");
  require(is_hermitian(cov, 1e-10), "psd_factor: covariance is not Hermitian");
  const Index n = cov.rows();
  if (n == 0) return CMatrix(0, 0);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(cov);
  require(eig.info() == Eigen::Success, "psd_factor: eigendecomposition failed");
  const RVector& lam = eig.eigenvalues();
  const double lmax = lam.maxCoeff();
  if (!(lmax > 0.0)) return CMatrix::Zero(n, 0);
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (lam(i) > 1e-12 * lmax) keep.push_back(i);
  CMatrix l(n, static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    l.col(static_cast<Index>(k)) = eig.eigenvectors().col(keep[k]) * std::sqrt(lam(keep[k]));
  return l;
}

/// One draw from N_C(0, cov).
inline CVector chol_sample(const CMatrix& cov, Rng& rng) {
  const CMatrix l = psd_factor(cov);
  if (l.cols() == 0) return CVector::Zero(cov.rows());
  return l * rng.complex_normal(l.cols());
}

/// log|det(m)| and the determinant phase via partial-pivot LU.
struct LogDet {
  double log_abs = 0.0;
  double phase = 0.0;  // in (-pi, pi]
};

inline LogDet log_det(const CMatrix& m) {
  require(m.rows() == m.cols(), "log_det: matrix must be square");
  Eigen::PartialPivLU<CMatrix> lu(m);
  const CMatrix& packed = lu.matrixLU();
  LogDet out;
  cplx phase{1.0, 0.0};
  for (Index i = 0; i < packed.rows(); ++i) {
    const cplx d = packed(i, i);
    out.log_abs += std::log(std::abs(d));
    phase *= d / std::abs(d);
  }
  phase *= static_cast<double>(lu.permutationP().determinant());
  out.phase = std::arg(phase);
  return out;
}

}  // namespace mimoce

#endif  // MIMOCE_NUMERICS_HPP
