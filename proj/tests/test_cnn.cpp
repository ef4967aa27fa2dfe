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

#include <filesystem>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mimoce;

namespace {

CnnParams random_params(Index s, Index u, Activation act, Rng& rng, double scale = 0.5) {
  CnnParams p = CnnParams::zeros(s, u, act);
  p.a1 = scale * oracle::random_rvector(s * u, rng);
  p.b1 = scale * oracle::random_rvector(s * u, rng);
  p.a2 = scale * oracle::random_rvector(s * u, rng);
  p.b2 = scale * oracle::random_rvector(s * u, rng);
  return p;
}

Sample random_sample(const PilotSet& pilots, Rng& rng) {
  Sample smp;
  smp.h = oracle::random_cvector(pilots.s() * pilots.u(), rng);
  smp.y = apply_x(smp.h, pilots) + 0.5 * oracle::random_cvector(pilots.s() * pilots.n(), rng);
  smp.sigma2 = 0.25;
  return smp;
}

double loss_at(const CnnParams& p, const Sample& smp, const PilotSet& pilots, const QTransform& qt) {
  return sample_loss(cnn_forward_sample(p, smp, pilots, qt));
}

}  // namespace

TEST(CnnForward, IdentityNetworkOnNonnegativeInput) {
  Rng rng(1);
  CnnParams p = CnnParams::zeros(4, 2, Activation::kRelu);
  p.a1(0) = 1.0;
  p.a2(0) = 1.0;
  const RVector chat = oracle::random_rvector(8, rng).cwiseAbs();
  EXPECT_LT((cnn_forward(p, chat).first - chat).norm(), 1e-12);
}

TEST(CnnForward, ZeroSecondKernelGivesConstant) {
  Rng rng(2);
  for (Activation act : {Activation::kRelu, Activation::kSoftmax}) {
    CnnParams p = random_params(4, 2, act, rng);
    p.a2.setZero();
    p.b2.setConstant(0.37);
    const RVector w = cnn_forward(p, oracle::random_rvector(8, rng).cwiseAbs()).first;
    EXPECT_LT((w - RVector::Constant(8, 0.37)).norm(), 1e-12);
  }
}

TEST(CnnForward, FeParametersReproduceFe) {
  Rng rng(3);
  for (auto [s, u] : {std::pair<Index, Index>{16, 2}, {4, 4}, {8, 1}}) {
    ScenarioConfig cfg;
    cfg.S = s;
    cfg.U = u;
    cfg.N = u;
    const PilotSet pilots = dft_pilots(s, u, u);
    const FeParams fe = make_fe_params(cfg, pilots);
    const CnnParams p = params_from_fe(fe, s, u);
    EXPECT_EQ(p.activation, Activation::kSoftmax);
    for (int t = 0; t < 5; ++t) {
      const RVector chat = 10.0 * oracle::random_rvector(s * u, rng).cwiseAbs();
      const RVector ref = fe_filter_vector(chat, fe, s, u);
      EXPECT_LT((cnn_forward(p, chat).first - ref).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(CnnEstimate, ZeroOutputGivesZero) {
  Rng rng(4);
  const PilotSet pilots = dft_pilots(4, 2, 2);
  const CnnParams p = CnnParams::zeros(4, 2, Activation::kRelu);
  EXPECT_EQ(cnn_estimate(p, oracle::random_cvector(8, rng), pilots, QTransform(4, 2), 0.5).norm(), 0.0);
}

TEST(CnnEstimate, UnitOutputGivesMatchedFilter) {
  Rng rng(5);
  const PilotSet pilots = dft_pilots(4, 2, 2);
  CnnParams p = CnnParams::zeros(4, 2, Activation::kRelu);
  p.b2.setOnes();
  const CVector y = oracle::random_cvector(8, rng);
  EXPECT_LT((cnn_estimate(p, y, pilots, QTransform(4, 2), 0.5) - apply_xh(y, pilots)).norm(), 1e-12);
}

TEST(CnnEstimate, MatchesDenseFilter) {
  Rng rng(6);
  const Index s = 3, u = 2, n = 4;
  const PilotSet pilots = dft_pilots(s, u, n);
  const QTransform qt(s, u);
  for (Activation act : {Activation::kRelu, Activation::kSoftmax}) {
    const CnnParams p = random_params(s, u, act, rng);
    const CVector y = oracle::random_cvector(s * n, rng);
    const double sigma2 = 0.6;
    const CMatrix q = oracle::dense_q(s, u);
    const CMatrix x = oracle::dense_lift(pilots.x_small(), s);
    const RVector chat = (q * x.adjoint() * y).cwiseAbs2() / sigma2;
    // dense circulant kernels
    CMatrix a1 = CMatrix::Zero(s * u, s * u), a2 = CMatrix::Zero(s * u, s * u);
    for (Index j = 0; j < s * u; ++j) {
      RVector e = RVector::Zero(s * u);
      e(j) = 1.0;
      a1.col(j) = oracle::naive_circ_conv(p.a1, e, s, u).cast<cplx>();
      a2.col(j) = oracle::naive_circ_conv(p.a2, e, s, u).cast<cplx>();
    }
    const RVector z = (a1 * chat.cast<cplx>()).real() + p.b1;
    const RVector hid = act == Activation::kRelu ? RVector(z.cwiseMax(0.0)) : softmax(z);
    const RVector w = (a2 * hid.cast<cplx>()).real() + p.b2;
    const CVector ref = q.adjoint() * w.cast<cplx>().asDiagonal() * q * x.adjoint() * y;
    EXPECT_LT((cnn_estimate(p, y, pilots, qt, sigma2) - ref).norm(), 1e-11 * ref.norm());
  }
}

TEST(CnnBackward, ZeroResidualGivesZeroOutputGradients) {
  Rng rng(7);
  const PilotSet pilots = dft_pilots(4, 2, 2);
  const QTransform qt(4, 2);
  const CnnParams p = random_params(4, 2, Activation::kRelu, rng);
  Sample smp = random_sample(pilots, rng);
  // choose h so that the estimate is exact
  smp.h = cnn_estimate(p, smp.y, pilots, qt, smp.sigma2);
  const CnnGradients g = cnn_backward(p, cnn_forward_sample(p, smp, pilots, qt));
  EXPECT_LT(g.a2.norm(), 1e-12);
  EXPECT_LT(g.b2.norm(), 1e-12);
  EXPECT_LT(g.loss, 1e-20);
}

TEST(CnnBackward, MatchesCentralDifferences) {
  Rng rng(8);
  const double step = 1e-4;
  for (Activation act : {Activation::kRelu, Activation::kSoftmax}) {
    int checked = 0;
    for (int t = 0; t < 20; ++t) {
      const Index s = 2, u = 2;
      const PilotSet pilots = dft_pilots(s, u, 2 + t % 2);
      const QTransform qt(s, u);
      const CnnParams p = random_params(s, u, act, rng);
      const Sample smp = random_sample(pilots, rng);
      const CnnCache cache = cnn_forward_sample(p, smp, pilots, qt);
      if (act == Activation::kRelu && cache.z1.cwiseAbs().minCoeff() < 1e-2) continue;  // kink too close
      const double lambda = 0.01;
      const RVector g = cnn_backward(p, cache, lambda).flatten();
      const RVector theta = p.flatten();
      for (Index i = 0; i < theta.size(); ++i) {
        CnnParams plus = p, minus = p;
        RVector tp = theta, tm = theta;
        tp(i) += step;
        tm(i) -= step;
        plus.unflatten(tp);
        minus.unflatten(tm);
        auto reg = [&](const CnnParams& q) { return lambda * (q.a1.squaredNorm() + q.a2.squaredNorm()); };
        const double fd =
            (loss_at(plus, smp, pilots, qt) + reg(plus) - loss_at(minus, smp, pilots, qt) - reg(minus)) / (2 * step);
        EXPECT_LT(std::abs(fd - g(i)), 1e-5 * std::max(1.0, std::abs(fd))) << "param " << i << " trial " << t;
      }
      ++checked;
    }
    EXPECT_GE(checked, 10);
  }
}

TEST(CnnBackward, EmptyBatchGivesPureWeightDecay) {
  Rng rng(9);
  const PilotSet pilots = dft_pilots(4, 2, 2);
  const CnnParams p = random_params(4, 2, Activation::kRelu, rng);
  const CnnGradients g = batch_gradient(p, {}, pilots, QTransform(4, 2), 0.3);
  EXPECT_LT((g.a1 - 0.6 * p.a1).norm(), 1e-15);
  EXPECT_LT((g.a2 - 0.6 * p.a2).norm(), 1e-15);
  EXPECT_EQ(g.b1.norm(), 0.0);
  EXPECT_EQ(g.b2.norm(), 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  RVector theta(3);
  theta << 1.0, -2.0, 0.5;
  const RVector before = theta;
  AdamState st(3);
  for (int i = 0; i < 5; ++i) adam_step(st, RVector::Zero(3), theta, AdamConfig{});
  EXPECT_EQ((theta - before).norm(), 0.0);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  RVector theta = RVector::Zero(1);
  AdamState st(1);
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  RVector g(1);
  g << 3.7;
  double last = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double prev = theta(0);
    adam_step(st, g, theta, cfg);
    last = prev - theta(0);
  }
  EXPECT_NEAR(last, 0.01, 1e-4);
}

TEST(Adam, FirstStepHandComputed) {
  RVector theta(2);
  theta << 1.0, 1.0;
  RVector g(2);
  g << 0.5, -2e-8;
  AdamState st(2);
  adam_step(st, g, theta, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  // m_hat = g, v_hat = g^2: step = lr g / (|g| + eps)
  EXPECT_NEAR(theta(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(theta(1), 1.0 + 0.1 * 2e-8 / (2e-8 + 1e-8), 1e-15);
}

TEST(Train, ZeroLearningRateKeepsInitialisation) {
  ScenarioConfig sc;
  sc.S = 8;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batches_per_epoch = 3;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0;
  cfg.seed = 5;
  const TrainResult r = train(cfg, sc);
  Rng init(mix_seed(5, 0));
  const CnnParams ref = random_init(8, 2, Activation::kRelu, cfg.init_std, init);
  EXPECT_EQ((r.params.flatten() - ref.flatten()).norm(), 0.0);
  EXPECT_EQ(r.nmse_history.size(), 2u);
}

TEST(Train, ReproducibleForSeed) {
  ScenarioConfig sc;
  sc.S = 8;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batches_per_epoch = 4;
  cfg.batch_size = 5;
  cfg.seed = 17;
  const TrainResult a = train(cfg, sc);
  const TrainResult b = train(cfg, sc);
  ASSERT_EQ(a.nmse_history.size(), b.nmse_history.size());
  for (std::size_t i = 0; i < a.nmse_history.size(); ++i) EXPECT_EQ(a.nmse_history[i], b.nmse_history[i]);
  EXPECT_EQ((a.params.flatten() - b.params.flatten()).norm(), 0.0);
}

TEST(Train, FeWarmStartUsesFeParameters) {
  ScenarioConfig sc;
  sc.S = 8;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batches_per_epoch = 1;
  cfg.batch_size = 1;
  cfg.learning_rate = 0.0;
  cfg.init = CnnInit::kFe;
  cfg.activation = Activation::kSoftmax;
  const TrainResult r = train(cfg, sc);
  const CnnParams ref = params_from_fe(make_fe_params(sc, dft_pilots(8, 2, 2)), 8, 2);
  EXPECT_EQ((r.params.flatten() - ref.flatten()).norm(), 0.0);
}

TEST(Train, HalvesTrainingError) {
  ScenarioConfig sc;  // one cluster, S=16, U=N=2
  TrainConfig cfg;    // defaults apart from the run length
  cfg.epochs = 15;
  const TrainResult r = train(cfg, sc);
  const double first = r.nmse_history.front();
  double tail = 0.0;
  for (std::size_t i = r.nmse_history.size() - 5; i < r.nmse_history.size(); ++i) tail += r.nmse_history[i];
  tail /= 5.0;
  EXPECT_LT(tail, 0.5 * first) << "first " << first << " last " << tail;
}

TEST(ModelFile, RoundtripIsExact) {
  Rng rng(10);
  const CnnParams p = random_params(5, 3, Activation::kSoftmax, rng);
  const auto path = std::filesystem::temp_directory_path() / "mimoce_model_test.cnn";
  save_model(path.string(), p);
  const CnnParams q = load_model(path.string());
  EXPECT_EQ(q.s, 5);
  EXPECT_EQ(q.u, 3);
  EXPECT_EQ(q.activation, Activation::kSoftmax);
  EXPECT_EQ((q.flatten() - p.flatten()).norm(), 0.0);
  {
    std::ofstream out(path);
    out << "CNNv1 2 2 relu\n1\n2\n";
  }
  EXPECT_THROW(load_model(path.string()), Error);
  {
    std::ofstream out(path);
    out << "CNNv2 2 2 relu\n";
  }
  EXPECT_THROW(load_model(path.string()), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path.string()), Error);
  EXPECT_THROW(parse_activation("tanh"), Error);
}
