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

#ifndef MIMOCE_CNN_HPP
#define MIMOCE_CNN_HPP

#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "mimoce/channel.hpp"
#include "mimoce/estimators.hpp"
#include "mimoce/numerics.hpp"
#include "mimoce/pilots.hpp"
#include "mimoce/structure.hpp"

namespace mimoce {

enum class Activation { kRelu, kSoftmax };

inline std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "softmax"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "softmax") return Activation::kSoftmax;
  throw Error("unknown activation '" + s + "' (expected relu|softmax)");
}

/// Two circular-convolution layers: w = a2 * psi(a1 * c_hat + b1) + b2.
struct CnnParams {
  Index s = 0;
  Index u = 0;
  RVector a1, b1, a2, b2;
  Activation activation = Activation::kRelu;

  Index size() const { return s * u; }

  static CnnParams zeros(Index s, Index u, Activation act) {
    CnnParams p;
    p.s = s;
    p.u = u;
    p.a1 = p.b1 = p.a2 = p.b2 = RVector::Zero(s * u);
    p.activation = act;
    return p;
  }

  void validate() const {
    require(s >= 1 && u >= 1, "CnnParams: S, U must be >= 1");
    const Index n = s * u;
    require(a1.size() == n && b1.size() == n && a2.size() == n && b2.size() == n,
            "CnnParams: every parameter vector must have length S*U");
    require(a1.allFinite() && b1.allFinite() && a2.allFinite() && b2.allFinite(), "CnnParams: non-finite parameter");
  }

  /// Parameters as one vector [a1; b1; a2; b2].
  RVector flatten() const {
    const Index n = size();
    RVector v(4 * n);
    v << a1, b1, a2, b2;
    return v;
  }

  void unflatten(const RVector& v) {
    const Index n = size();
    require(v.size() == 4 * n, "CnnParams::unflatten: length mismatch");
    a1 = v.segment(0, n);
    b1 = v.segment(n, n);
    a2 = v.segment(2 * n, n);
    b2 = v.segment(3 * n, n);
  }
};

/// The FE expressed as a network: a1 = flip(w0), b1 = b0, a2 = w0, b2 = 0, softmax.
inline CnnParams params_from_fe(const FeParams& fe, Index s, Index u) {
  CnnParams p = CnnParams::zeros(s, u, Activation::kSoftmax);
  require(fe.w0.size() == s * u, "params_from_fe: kernel length must be S*U");
  p.a1 = flip2d(fe.w0, s, u);
  p.b1 = RVector::Constant(s * u, fe.b0);
  p.a2 = fe.w0;
  return p;
}

struct CnnCache {
  RVector chat;    // network input
  RVector z1;      // pre-activation
  RVector hidden;  // psi(z1)
  RVector w;       // network output
  CVector uvec;    // Q X^H y
  CVector qh;      // Q h (only filled by cnn_forward_sample)
};

inline RVector activate(const RVector& z, Activation act) {
  return act == Activation::kRelu ? RVector(z.cwiseMax(0.0)) : softmax(z);
}

inline std::pair<RVector, CnnCache> cnn_forward(const CnnParams& params, const RVector& chat) {
  require(chat.size() == params.size(), "cnn_forward: input length must be S*U");
  CnnCache cache;
  cache.chat = chat;
  cache.z1 = fft2_circ_conv(params.a1, chat, params.s, params.u) + params.b1;
  cache.hidden = activate(cache.z1, params.activation);
  cache.w = fft2_circ_conv(params.a2, cache.hidden, params.s, params.u) + params.b2;
  RVector w = cache.w;
  return {std::move(w), std::move(cache)};
}

inline CVector cnn_estimate(const CnnParams& params, const CVector& y, const PilotSet& pilots, const QTransform& qt,
                            double sigma2) {
  require(params.s == pilots.s() && params.u == pilots.u(), "cnn_estimate: model shape does not match pilots");
  const RVector chat = fe_input_chat(y, pilots, qt, sigma2);
  const RVector w = cnn_forward(params, chat).first;
  return apply_diag_filter(w.cast<cplx>(), y, pilots, qt);
}

/// One training pair.
struct Sample {
  CVector y;
  CVector h;
  double sigma2 = 1.0;
};

/// Forward pass that also keeps what the backward pass needs.
inline CnnCache cnn_forward_sample(const CnnParams& params, const Sample& sample, const PilotSet& pilots,
                                   const QTransform& qt) {
  require(sample.h.size() == params.size(), "cnn_forward_sample: channel length must be S*U");
  require(pilots.is_orthogonal(), "cnn_forward_sample: requires orthogonal pilots");
  require(sample.sigma2 > 0.0, "cnn_forward_sample: sigma2 must be > 0");
  const CVector uvec = qt.forward(apply_xh(sample.y, pilots));
  CnnCache cache = cnn_forward(params, uvec.cwiseAbs2() / sample.sigma2).second;
  cache.uvec = uvec;
  cache.qh = qt.forward(sample.h);
  return cache;
}

/// ||h - Q^H diag(w) Q X^H y||^2 evaluated from a cache.
inline double sample_loss(const CnnCache& cache) {
  return (cache.qh - cache.w.cast<cplx>().cwiseProduct(cache.uvec)).squaredNorm();
}

struct CnnGradients {
  RVector a1, b1, a2, b2;
  double loss = 0.0;  // data loss of the sample(s), without the L2 term

  static CnnGradients zeros(Index n) {
    CnnGradients g;
    g.a1 = g.b1 = g.a2 = g.b2 = RVector::Zero(n);
    return g;
  }

  RVector flatten() const {
    RVector v(4 * a1.size());
    v << a1, b1, a2, b2;
    return v;
  }
};

/// Analytic gradient of ||h - h_hat||^2 + l2_lambda (||a1||^2 + ||a2||^2).
inline CnnGradients cnn_backward(const CnnParams& params, const CnnCache& cache, double l2_lambda = 0.0) {
  const Index s = params.s;
  const Index u = params.u;
  require(cache.w.size() == s * u && cache.uvec.size() == s * u && cache.qh.size() == s * u,
          "cnn_backward: cache does not come from cnn_forward_sample");
  CnnGradients g;
  const CVector resid = cache.qh - cache.w.cast<cplx>().cwiseProduct(cache.uvec);  // Q r
  g.loss = resid.squaredNorm();
  const RVector gw = -2.0 * (cache.uvec.conjugate().cwiseProduct(resid)).real();

  g.b2 = gw;
  g.a2 = fft2_circ_corr(gw, cache.hidden, s, u);
  const RVector gh = fft2_circ_corr(gw, params.a2, s, u);

  RVector gz(s * u);
  if (params.activation == Activation::kRelu) {
    for (Index i = 0; i < gz.size(); ++i) gz(i) = cache.z1(i) > 0.0 ? gh(i) : 0.0;
  } else {
    const RVector& p = cache.hidden;
    gz = p.cwiseProduct((gh.array() - gh.dot(p)).matrix());
  }
  g.b1 = gz;
  g.a1 = fft2_circ_corr(gz, cache.chat, s, u);

  g.a1 += 2.0 * l2_lambda * params.a1;
  g.a2 += 2.0 * l2_lambda * params.a2;
  return g;
}

/// Mean data gradient over a batch plus the L2 gradient. An empty batch
/// yields the L2 term alone.
inline CnnGradients batch_gradient(const CnnParams& params, const std::vector<Sample>& batch, const PilotSet& pilots,
                                   const QTransform& qt, double l2_lambda) {
  CnnGradients acc = CnnGradients::zeros(params.size());
  for (const auto& smp : batch) {
    const CnnGradients g = cnn_backward(params, cnn_forward_sample(params, smp, pilots, qt), 0.0);
    acc.a1 += g.a1;
    acc.b1 += g.b1;
    acc.a2 += g.a2;
    acc.b2 += g.b2;
    acc.loss += g.loss;
  }
  if (!batch.empty()) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    acc.a1 *= inv;
    acc.b1 *= inv;
    acc.a2 *= inv;
    acc.b2 *= inv;
    acc.loss *= inv;
  }
  acc.a1 += 2.0 * l2_lambda * params.a1;
  acc.a2 += 2.0 * l2_lambda * params.a2;
  return acc;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  RVector m;
  RVector v;
  std::size_t t = 0;

  explicit AdamState(Index n = 0) : m(RVector::Zero(n)), v(RVector::Zero(n)) {}
};

/// One bias-corrected Adam step; updates params in place.
inline void adam_step(AdamState& state, const RVector& grad, RVector& params, const AdamConfig& cfg) {
  require(state.m.size() == params.size() && state.v.size() == params.size() && grad.size() == params.size(),
          "adam_step: state, gradient and parameter sizes differ");
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -= cfg.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class CnnInit { kRandom, kFe };

struct TrainConfig {
  Index epochs = 250;
  Index batches_per_epoch = 40;
  Index batch_size = 20;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double l2_lambda = 1e-5;
  double init_std = 0.05;
  std::uint64_t seed = 1;
  Activation activation = Activation::kRelu;
  CnnInit init = CnnInit::kRandom;

  void validate() const {
    require(epochs >= 1 && batches_per_epoch >= 1 && batch_size >= 1, "TrainConfig: counts must be positive");
    require(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0,
            "TrainConfig: Adam betas must lie in (0, 1)");
    require(learning_rate >= 0.0 && adam_eps > 0.0 && l2_lambda >= 0.0 && init_std >= 0.0,
            "TrainConfig: invalid learning rate, eps, lambda or init_std");
  }
};

struct TrainResult {
  CnnParams params;
  std::vector<double> nmse_history;  // per-epoch mean training NMSE
};

inline CnnParams random_init(Index s, Index u, Activation act, double std, Rng& rng) {
  CnnParams p = CnnParams::zeros(s, u, act);
  for (Index i = 0; i < p.size(); ++i) p.a1(i) = rng.truncated_normal(std);
  for (Index i = 0; i < p.size(); ++i) p.a2(i) = rng.truncated_normal(std);
  return p;
}

/// Draws one training pair with a fresh delta from the channel model.
inline Sample draw_sample(const ScenarioConfig& scenario, const PilotSet& pilots, Rng& rng) {
  const Delta delta = sample_delta(scenario, rng);
  const ChannelCovariance cov = build_covariance(delta, scenario.S, scenario.U);
  Sample smp;
  smp.sigma2 = noise_variance_for_snr(cov, pilots, scenario.snr_db);
  Observation obs = sample_observation(cov, pilots, smp.sigma2, rng);
  smp.y = std::move(obs.y);
  smp.h = std::move(obs.h);
  return smp;
}

/// Online training on fresh channel draws. `on_epoch` (optional) receives the
/// epoch index and its mean training NMSE.
inline TrainResult train(const TrainConfig& cfg, const ScenarioConfig& scenario,
                         const std::function<void(Index, double)>& on_epoch = {}) {
  cfg.validate();
  scenario.validate();
  const PilotSet pilots = dft_pilots(scenario.S, scenario.U, scenario.N);
  const QTransform qt(scenario.S, scenario.U);
  Rng init_rng(mix_seed(cfg.seed, 0));
  Rng data_rng(mix_seed(cfg.seed, 1));

  TrainResult result;
  if (cfg.init == CnnInit::kFe) {
    result.params = params_from_fe(make_fe_params(scenario, pilots), scenario.S, scenario.U);
    result.params.activation = cfg.activation;
  } else {
    result.params = random_init(scenario.S, scenario.U, cfg.activation, cfg.init_std, init_rng);
  }

  const AdamConfig adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  RVector theta = result.params.flatten();
  AdamState state(theta.size());
  const double su = static_cast<double>(scenario.S * scenario.U);
  std::vector<Sample> batch(static_cast<std::size_t>(cfg.batch_size));

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (Index b = 0; b < cfg.batches_per_epoch; ++b) {
      for (auto& smp : batch) smp = draw_sample(scenario, pilots, data_rng);
      const CnnGradients g = batch_gradient(result.params, batch, pilots, qt, cfg.l2_lambda);
      if (!std::isfinite(g.loss) || !g.flatten().allFinite()) {
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                    " (learning rate " + std::to_string(cfg.learning_rate) + " is likely too high)");
      }
      epoch_loss += g.loss;
      adam_step(state, g.flatten(), theta, adam);
      result.params.unflatten(theta);
    }
    const double nmse = epoch_loss / static_cast<double>(cfg.batches_per_epoch) / su;
    result.nmse_history.push_back(nmse);
    if (on_epoch) on_epoch(epoch, nmse);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Header "CNNv1 S U activation", then a1, b1, a2, b2, one value per line.
inline void save_model(const std::string& path, const CnnParams& params) {
  params.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write model file '" + path + "'");
  out << "CNNv1 " << params.s << ' ' << params.u << ' ' << to_string(params.activation) << '\n';
  char buf[64];
  for (const RVector* v : {&params.a1, &params.b1, &params.a2, &params.b2})
    for (Index i = 0; i < v->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", (*v)(i));
      out << buf << '\n';
    }
  require(static_cast<bool>(out), "error writing model file '" + path + "'");
}

inline CnnParams load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open model file '" + path + "'");
  std::string magic;
  std::string act;
  Index s = 0;
  Index u = 0;
  require(static_cast<bool>(in >> magic >> s >> u >> act) && magic == "CNNv1" && s >= 1 && u >= 1,
          "model file '" + path + "': malformed header, expected \"CNNv1 S U activation\"");
  CnnParams p = CnnParams::zeros(s, u, parse_activation(act));
  for (RVector* v : {&p.a1, &p.b1, &p.a2, &p.b2})
    for (Index i = 0; i < v->size(); ++i)
      require(static_cast<bool>(in >> (*v)(i)), "model file '" + path + "': truncated parameter block");
  p.validate();
  return p;
}

}  // namespace mimoce

#endif  // MIMOCE_CNN_HPP
