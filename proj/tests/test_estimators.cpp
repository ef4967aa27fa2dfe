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

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mimoce;

namespace {

CMatrix random_pd(Index n, Rng& rng) {
  const CMatrix a = oracle::random_cmatrix(n, n, rng);
  return a * a.adjoint() + 0.1 * CMatrix::Identity(n, n);
}

ChannelCovariance random_covariance(Index s, Index u, Rng& rng) {
  ScenarioConfig cfg;
  cfg.num_clusters = 2;
  Delta d = sample_delta(cfg, rng);
  d.spread_tx = deg2rad(rng.uniform(5.0, 40.0));
  d.spread_rx = deg2rad(rng.uniform(2.0, 20.0));
  return build_covariance(d, s, u);
}

ScenarioConfig small_cfg(Index s, Index u, Index n, double snr = 5.0) {
  ScenarioConfig c;
  c.S = s;
  c.U = u;
  c.N = n;
  c.snr_db = snr;
  return c;
}

/// Dense C X^H (X C X^H + sigma^2 I)^-1 y from scratch.
CVector dense_lmmse(const CMatrix& c, const CMatrix& x, const CVector& y, double sigma2) {
  CMatrix cy = x * c * x.adjoint();
  cy += sigma2 * CMatrix::Identity(cy.rows(), cy.cols());
  return c * x.adjoint() * cy.partialPivLu().solve(y);
}

}  // namespace

// ---------------------------------------------------------------------------
// Genie MMSE
// ---------------------------------------------------------------------------

TEST(Genie, HugeNoiseGivesPriorMean) {
  Rng rng(1);
  const PilotSet p = dft_pilots(4, 2, 2);
  const ChannelCovariance cov = random_covariance(4, 2, rng);
  const Observation obs = sample_observation(cov, p, 1e12, rng);
  Rng rng2(2);
  const Observation clean = sample_observation(cov, p, 0.0, rng2);
  EXPECT_LT(genie_mmse(obs.y, cov, p, 1e12).norm(), 1e-4 * clean.h.norm());
}

TEST(Genie, ScalarWienerFilter) {
  Rng rng(3);
  const Index s = 5;
  const double c = 2.5, sigma2 = 0.4;
  const ChannelCovariance cov = make_covariance(CMatrix::Constant(1, 1, c), CMatrix::Identity(s, s));
  const PilotSet p = dft_pilots(s, 1, 1);
  const CVector y = oracle::random_cvector(s, rng);
  EXPECT_LT((genie_mmse(y, cov, p, sigma2) - c / (c + sigma2) * y).norm(), 1e-12);
}

TEST(Genie, MatchesInformationForm) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Index s = 2 + t % 3, u = 1 + t % 3, n = 1 + (t + 1) % 4;
    const PilotSet p(s, oracle::random_cmatrix(u, n, rng));
    const ChannelCovariance cov = make_covariance(random_pd(u, rng), random_pd(s, rng));
    const double sigma2 = rng.uniform(0.05, 2.0);
    const CVector y = oracle::random_cvector(s * n, rng);
    const CMatrix x = oracle::dense_lift(p.x_small(), s);
    const CMatrix info = cov.full.inverse() + x.adjoint() * x / sigma2;
    const CVector ref = info.partialPivLu().solve(x.adjoint() * y / sigma2);
    EXPECT_LT((genie_mmse(y, cov, p, sigma2) - ref).norm(), 1e-9 * ref.norm());
    EXPECT_LT((genie_filter(cov, p, sigma2) * y - ref).norm(), 1e-9 * ref.norm());
  }
}

TEST(Genie, PrecisionIdentity) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Index s = 1 + t % 8, u = 1 + (t / 8) % 4, n = u + t % 3;
    const PilotSet p = (t % 2 == 0) ? dft_pilots(s, u, n) : PilotSet(s, oracle::random_cmatrix(u, n, rng));
    const ChannelCovariance cov = random_covariance(s, u, rng);
    const double sigma2 = std::pow(10.0, rng.uniform(-2.0, 1.0));
    const CMatrix x = oracle::dense_lift(p.x_small(), s);
    CMatrix cy = x * cov.full * x.adjoint();
    cy += sigma2 * CMatrix::Identity(s * n, s * n);
    const CMatrix lhs = cy.inverse();
    const CMatrix rhs = (CMatrix::Identity(s * n, s * n) - x * genie_filter(cov, p, sigma2)) / sigma2;
    EXPECT_LT(oracle::rel_err(lhs, rhs), 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Structured (circulant) filters
// ---------------------------------------------------------------------------

TEST(StructuredFilter, MatchesDenseCirculantLmmse) {
  Rng rng(6);
  for (int t = 0; t < 12; ++t) {
    const Index s = 2 + t % 3, u = 1 + t % 3, n = u + t % 2;
    const PilotSet p = (t % 3 == 0) ? PilotSet(s, oracle::random_cmatrix(u, n, rng)) : dft_pilots(s, u, n);
    const RVector c = oracle::random_rvector(s * u, rng).cwiseAbs();
    const double sigma2 = rng.uniform(0.1, 1.0);
    const auto [w, b] = structured_filter(c, p, sigma2);
    const CMatrix q = oracle::dense_q(s, u);
    const CMatrix x = oracle::dense_lift(p.x_small(), s);
    const CMatrix ct = q.adjoint() * c.cast<cplx>().asDiagonal() * q;
    CMatrix cy = x * ct * x.adjoint();
    cy += sigma2 * CMatrix::Identity(s * n, s * n);
    const CMatrix w_dense = ct * x.adjoint() * cy.inverse();
    const CMatrix w_packed = q.adjoint() * diablk_expand(w) * q * x.adjoint();
    EXPECT_LT(oracle::rel_err(w_packed, w_dense), 1e-9);
    const LogDet ld = log_det(CMatrix::Identity(s * n, s * n) - x * w_dense);
    EXPECT_NEAR(b, ld.log_abs, 1e-8 * std::max(1.0, std::abs(b)));
  }
}

TEST(StructuredFilter, OrthogonalPilotClosedForm) {
  Rng rng(7);
  const Index s = 4, u = 2, n = 4;
  const PilotSet p = dft_pilots(s, u, n);
  const RVector c = oracle::random_rvector(s * u, rng).cwiseAbs();
  const double sigma2 = 0.3, ratio = 2.0;
  const auto [w, b] = structured_filter(c, p, sigma2);
  double bref = 0.0;
  for (Index q = 0; q < u; ++q)
    for (Index k = 0; k < s; ++k) {
      const double ci = c(q * s + k);
      EXPECT_NEAR(std::abs(w(q, q, k) - cplx(ci / (ratio * ci + sigma2), 0)), 0.0, 1e-12);
      bref += std::log(sigma2 / (ratio * ci + sigma2));
    }
  EXPECT_NEAR(b, bref, 1e-10);
  for (Index k = 0; k < s; ++k) EXPECT_NEAR(std::abs(w(0, 1, k)), 0.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Gridded estimator
// ---------------------------------------------------------------------------

TEST(Grid, SinglePointIsItsGenieFilter) {
  Rng rng(8);
  const ScenarioConfig cfg = small_cfg(4, 2, 2);
  const PilotSet p = dft_pilots(4, 2, 2);
  const GridFilters grid = build_grid(cfg, p, 1);
  ASSERT_EQ(grid.size(), 1);
  const ChannelCovariance cov = build_covariance(grid.deltas[0], 4, 2);
  const double sigma2 = noise_variance_for_snr(cov, p, cfg.snr_db);
  const CVector y = oracle::random_cvector(8, rng);
  const CVector ref = dense_lmmse(cov.full, oracle::dense_lift(p.x_small(), 4), y, sigma2);
  EXPECT_LT((ge_estimate(y, grid, p, sigma2) - ref).norm(), 1e-10 * ref.norm());
}

TEST(Grid, DuplicatedPointsDoNotChangeTheEstimate) {
  Rng rng(9);
  const ScenarioConfig cfg = small_cfg(4, 2, 2);
  const PilotSet p = dft_pilots(4, 2, 2);
  const GridFilters one = build_grid(cfg, p, 1);
  GridFilters two = one;
  two.deltas.push_back(one.deltas[0]);
  two.dense.push_back(one.dense[0]);
  two.biases = RVector::Constant(2, one.biases(0));
  const CVector y = oracle::random_cvector(8, rng);
  EXPECT_LT((ge_estimate(y, two, p, 0.3) - ge_estimate(y, one, p, 0.3)).norm(), 1e-12);
}

TEST(Grid, BiasesAreFiniteAndNegative) {
  for (GridKind kind : {GridKind::kExact, GridKind::kStructured}) {
    const ScenarioConfig cfg = small_cfg(8, 2, 2);
    const GridFilters grid = build_grid(cfg, dft_pilots(8, 2, 2), 32, kind);
    EXPECT_EQ(grid.size(), 32);
    for (Index i = 0; i < grid.size(); ++i) {
      EXPECT_TRUE(std::isfinite(grid.biases(i)));
      EXPECT_LT(grid.biases(i), 0.0);
    }
  }
}

TEST(Grid, ShapeSplitsTransmitAndReceiveAngles) {
  EXPECT_EQ(grid_shape(2, 256).tx, 4);
  EXPECT_EQ(grid_shape(2, 256).rx, 64);
  EXPECT_EQ(grid_shape(8, 16).tx, 8);
  EXPECT_EQ(grid_shape(2, 3).tx, 3);
  EXPECT_EQ(grid_shape(2, 3).rx, 1);
  const auto deltas = grid_deltas(small_cfg(4, 2, 2), 8);
  ASSERT_EQ(deltas.size(), 8u);
  EXPECT_NEAR(std::sin(deltas[0].clusters[0].angle_tx), -1.0, 1e-15);
  EXPECT_NEAR(std::sin(deltas[1].clusters[0].angle_rx), 0.0, 1e-15);
}

TEST(Grid, AdjacentStructuredFiltersAreNearShifts) {
  const Index s = 64, u = 2;
  const ScenarioConfig cfg = small_cfg(s, u, u);
  const GridFilters grid = build_grid(cfg, dft_pilots(s, u, u), 16 * s, GridKind::kStructured);
  ASSERT_TRUE(grid.diagonal);
  const GridShape shape = grid_shape(u, 16 * s);
  double worst_interior = 1.0;
  Index good = 0, total = 0;
  for (Index t = 0; t < shape.tx; ++t)
    for (Index r = 0; r + 1 < shape.rx; ++r) {
      const RVector a = grid.packed.col(t * shape.rx + r).real();
      const RVector b = grid.packed.col(t * shape.rx + r + 1).real();
      double best = -1.0;
      for (Index ds = 0; ds < s; ++ds)
        for (Index du = 0; du < u; ++du) {
          double dot = 0.0;
          for (Index iu = 0; iu < u; ++iu)
            for (Index is = 0; is < s; ++is) dot += a(is + s * iu) * b((is + ds) % s + s * ((iu + du) % u));
          best = std::max(best, dot / (a.norm() * b.norm()));
        }
      const double sin_r = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(shape.rx);
      if (std::abs(sin_r) <= 0.95) worst_interior = std::min(worst_interior, best);
      good += best > 0.99 ? 1 : 0;
      ++total;
    }
  // the lobe folds over at endfire, so only the interior is held to the bound
  EXPECT_GT(worst_interior, 0.99);
  EXPECT_GE(static_cast<double>(good), 0.98 * static_cast<double>(total));
}

TEST(Grid, DensePathMatchesPackedPath) {
  Rng rng(10);
  for (int t = 0; t < 12; ++t) {
    const Index s = 1 + t % 4, u = 1 + (t / 4) % 4;
    const Index n = u + t % 2;
    const bool orth = t % 3 != 0;
    const PilotSet p = orth ? dft_pilots(s, u, n) : PilotSet(s, oracle::random_cmatrix(u, n, rng));
    const QTransform qt(s, u);
    ScenarioConfig cfg = small_cfg(s, u, n, rng.uniform(-5.0, 15.0));
    GridFilters grid = build_grid(cfg, p, 2 + t % 7, GridKind::kStructured);
    materialize_dense(grid, p, qt);
    const double sigma2 = rng.uniform(0.05, 1.0);
    for (int d = 0; d < 3; ++d) {
      const CVector y = oracle::random_cvector(s * n, rng);
      const CVector dense = ge_estimate(y, grid, p, sigma2);
      const CVector packed = ge_estimate_diablk(y, grid, p, qt, sigma2);
      EXPECT_LT((dense - packed).norm(), 1e-8 * std::max(1e-12, dense.norm())) << "trial " << t;
    }
  }
}

// ---------------------------------------------------------------------------
// Fast estimator
// ---------------------------------------------------------------------------

TEST(Fe, ImpulseKernelsGiveSoftmaxOfInput) {
  Rng rng(11);
  const Index s = 4, u = 2;
  const PilotSet p = dft_pilots(s, u, u);
  const QTransform qt(s, u);
  FeParams fe;
  fe.w0 = RVector::Zero(s * u);
  fe.w0(0) = 1.0;
  fe.b0 = 0.0;
  const CVector y = oracle::random_cvector(s * u, rng);
  const RVector chat = fe_input_chat(y, p, qt, 0.8);
  const CMatrix q = oracle::dense_q(s, u);
  const CVector ref =
      q.adjoint() * softmax(chat).cast<cplx>().asDiagonal() * q * oracle::dense_lift(p.x_small(), s).adjoint() * y;
  EXPECT_LT((fe_estimate(y, fe, p, qt, 0.8) - ref).norm(), 1e-12);
}

TEST(Fe, EqualsGeOnShiftGrid) {
  Rng rng(12);
  for (auto [s, u, n] : {std::tuple<Index, Index, Index>{2, 2, 2}, {4, 2, 4}, {8, 1, 1}, {3, 3, 3}}) {
    const PilotSet p = dft_pilots(s, u, n);
    const QTransform qt(s, u);
    ScenarioConfig cfg = small_cfg(s, u, n, 2.0);
    const FeParams fe = make_fe_params(cfg, p);
    GridFilters grid = circulant_grid(fe, s, u);
    materialize_dense(grid, p, qt);
    for (int d = 0; d < 5; ++d) {
      const CVector y = oracle::random_cvector(s * n, rng);
      const double sigma2 = rng.uniform(0.1, 1.0);
      const CVector f = fe_estimate(y, fe, p, qt, sigma2);
      EXPECT_LT((f - ge_estimate_diablk(y, grid, p, qt, sigma2)).norm(), 1e-9 * f.norm());
      EXPECT_LT((f - ge_estimate(y, grid, p, sigma2)).norm(), 1e-9 * f.norm());
    }
  }
}

TEST(Fe, ReferenceFilterMatchesStructuredGridPoint) {
  const Index s = 8, u = 2;
  const PilotSet p = dft_pilots(s, u, u);
  const ScenarioConfig cfg = small_cfg(s, u, u, 5.0);
  const FeParams fe = make_fe_params(cfg, p);
  Delta ref;
  ref.spread_tx = deg2rad(cfg.spread_tx_deg);
  ref.spread_rx = deg2rad(cfg.spread_rx_deg);
  ref.clusters.push_back({0.0, 0.0, 1.0});
  const ChannelCovariance cov = build_covariance(ref, s, u);
  const auto [w, b] = structured_filter(circulant_eigenvalues(cov), p, noise_variance_for_snr(cov, p, 5.0));
  for (Index q = 0; q < u; ++q)
    for (Index k = 0; k < s; ++k) EXPECT_NEAR(fe.w0(q * s + k), w(q, q, k).real(), 1e-12);
  EXPECT_NEAR(fe.b0, b, 1e-10);
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

TEST(Ml, ClipsToZeroBelowNoise) {
  const Index s = 4, u = 2;
  const PilotSet p = dft_pilots(s, u, u);
  const QTransform qt(s, u);
  Rng rng(13);
  CVector y = oracle::random_cvector(s * u, rng);
  const double s_max = qt.forward(apply_xh(y, p)).cwiseAbs2().maxCoeff();
  EXPECT_EQ(ml_estimate(y, p, qt, s_max).norm(), 0.0);
  EXPECT_EQ(ml_estimate(y, p, qt, 2.0 * s_max).norm(), 0.0);
}

TEST(Ml, VanishingNoiseGivesScaledMatchedFilter) {
  Rng rng(14);
  const Index s = 4, u = 2, n = 4;
  const PilotSet p = dft_pilots(s, u, n);
  const QTransform qt(s, u);
  const CVector y = oracle::random_cvector(s * n, rng);
  const CVector ref = 0.5 * apply_xh(y, p);
  EXPECT_LT((ml_estimate(y, p, qt, 1e-12) - ref).norm(), 1e-6 * ref.norm());
}

TEST(Ml, MatchesDenseFormula) {
  Rng rng(15);
  for (Index n : {2, 3}) {
    const Index s = 2, u = 2;
    const PilotSet p = dft_pilots(s, u, n);
    const QTransform qt(s, u);
    const CVector y = oracle::random_cvector(s * n, rng);
    const double sigma2 = 0.4;
    const CMatrix q = oracle::dense_q(s, u);
    const CMatrix qtilde = q * oracle::dense_lift(p.x_small(), s).adjoint();
    const CVector sv = (qtilde * y).cwiseAbs2().cast<cplx>();
    CMatrix dc = CMatrix::Zero(s * u, s * u);
    for (Index i = 0; i < s * u; ++i) dc(i, i) = std::max(sv(i).real() - sigma2, 0.0);
    const CMatrix mid = static_cast<double>(n) / u * dc + sigma2 * CMatrix::Identity(s * u, s * u);
    const CVector ref = q.adjoint() * dc * mid.inverse() * qtilde * y;
    EXPECT_LT((ml_estimate(y, p, qt, sigma2) - ref).norm(), 1e-12 * std::max(1.0, ref.norm()));
  }
}

TEST(Ls, NoiselessRecoveryIsExact) {
  Rng rng(16);
  for (auto [s, u, n] : {std::tuple<Index, Index, Index>{4, 2, 2}, {8, 2, 5}, {3, 1, 1}}) {
    const PilotSet p = dft_pilots(s, u, n);
    const CVector h = oracle::random_cvector(s * u, rng);
    const LsResult r = ls_estimate(apply_x(h, p), p);
    EXPECT_FALSE(r.rank_deficient);
    EXPECT_LT((r.h - h).norm(), 1e-10 * h.norm());
  }
}

TEST(Ls, OrthogonalPilotsGiveScaledMatchedFilter) {
  Rng rng(17);
  const PilotSet p = dft_pilots(4, 2, 4);
  const CVector y = oracle::random_cvector(16, rng);
  EXPECT_LT((ls_estimate(y, p).h - 0.5 * apply_xh(y, p)).norm(), 1e-12);
}

TEST(Ls, ResidualIsOrthogonalToColumns) {
  Rng rng(18);
  const PilotSet p(3, oracle::random_cmatrix(2, 5, rng));
  const CVector y = oracle::random_cvector(15, rng);
  const CVector h = ls_estimate(y, p).h;
  EXPECT_LT(apply_xh(y - apply_x(h, p), p).norm(), 1e-9);
}

TEST(Ls, FlagsRankDeficiency) {
  const PilotSet p = PilotSet(3, CMatrix::Ones(2, 1));
  EXPECT_TRUE(ls_estimate(CVector::Ones(3), p).rank_deficient);
}

TEST(Omp, OneSparseNoiselessIsExact) {
  const Index s = 8, u = 2, factor = 4;
  const PilotSet p = dft_pilots(s, u, u);
  const CMatrix dict = oversampled_dft_dictionary(s, factor);
  CVector h = CVector::Zero(s * u);
  h.segment(s, s) = cplx(0.7, -1.2) * dict.col(13);
  const OmpResult r = omp_genie_detailed(apply_x(h, p), h, p, factor, 4);
  EXPECT_LT((r.h - h).norm(), 1e-8 * h.norm());
  EXPECT_EQ(r.sparsity, 1);
}

TEST(Omp, GenieIsBestOverThePath) {
  Rng rng(19);
  ScenarioConfig cfg = small_cfg(16, 2, 2, 5.0);
  cfg.num_clusters = 3;
  const PilotSet p = dft_pilots(16, 2, 2);
  for (int t = 0; t < 10; ++t) {
    const Draw d = make_draw(cfg, p, mix_seed(7, t));
    const CMatrix dict = oversampled_dft_dictionary(16, 4);
    const auto path = omp_path(d.obs.y, kron(p.x_small().transpose(), dict), 12);
    const CVector best = omp_genie(d.obs.y, d.obs.h, p, 4, 12);
    const double best_err = (best - d.obs.h).squaredNorm();
    for (const auto& t_k : path) {
      const Eigen::Map<const CMatrix> tm(t_k.data(), dict.cols(), 2);
      const CMatrix hm = dict * tm;
      const CVector hk = Eigen::Map<const CVector>(hm.data(), hm.size());
      EXPECT_LE(best_err, (hk - d.obs.h).squaredNorm() + 1e-12);
    }
  }
}

TEST(Omp, MatchesIndependentImplementation) {
  ScenarioConfig cfg = small_cfg(16, 2, 2, 5.0);
  cfg.num_clusters = 3;
  const PilotSet p = dft_pilots(16, 2, 2);
  const CMatrix dict = oversampled_dft_dictionary(16, 4);
  const CMatrix phi = oracle::elementwise_kron(p.x_small().transpose(), dict);
  for (int t = 0; t < 5; ++t) {
    const Draw d = make_draw(cfg, p, mix_seed(11, t));
    const auto ours = omp_path(d.obs.y, phi, 12);
    const auto ref = oracle::naive_omp(d.obs.y, phi, 12);
    ASSERT_EQ(ours.size(), ref.size());
    for (std::size_t k = 0; k < ours.size(); ++k)
      EXPECT_LT((ours[k] - ref[k]).norm(), 1e-8 * ref[k].norm()) << "draw " << t << " step " << k;
  }
}

TEST(Omp, DictionaryHasUnitColumns) {
  const CMatrix d = oversampled_dft_dictionary(8, 4);
  EXPECT_EQ(d.cols(), 32);
  for (Index j = 0; j < d.cols(); ++j) EXPECT_NEAR(d.col(j).norm(), 1.0, 1e-14);
}
