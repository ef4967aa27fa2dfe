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

#ifndef MIMOCE_CHANNEL_HPP
#define MIMOCE_CHANNEL_HPP

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimoce/numerics.hpp"
#include "mimoce/pilots.hpp"

namespace mimoce {

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

/// Experiment knobs. The receive side is the BS (S antennas), the transmit
/// side the MS (U antennas).
struct ScenarioConfig {
  Index S = 16;
  Index U = 2;
  Index N = 2;
  Index num_clusters = 1;
  double spread_tx_deg = 35.0;
  double spread_rx_deg = 2.0;
  double snr_db = 5.0;
  std::uint64_t seed = 1;

  void validate() const {
    require(S >= 1 && U >= 1 && N >= 1, "ScenarioConfig: S, U, N must be >= 1");
    require(num_clusters >= 1, "ScenarioConfig: num_clusters must be >= 1");
    require(spread_tx_deg > 0.0 && spread_rx_deg > 0.0, "ScenarioConfig: angular spreads must be > 0");
    require(std::isfinite(snr_db), "ScenarioConfig: snr_db must be finite");
  }
};

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{{"S", c.S},
                     {"U", c.U},
                     {"N", c.N},
                     {"num_clusters", c.num_clusters},
                     {"spread_tx_deg", c.spread_tx_deg},
                     {"spread_rx_deg", c.spread_rx_deg},
                     {"snr_db", c.snr_db},
                     {"seed", c.seed}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  static const std::vector<std::string> known = {"S",  "U", "N", "num_clusters", "spread_tx_deg", "spread_rx_deg",
                                                 "snr_db", "seed"};
  require(j.is_object(), "scenario config must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(), "scenario config: unknown key '" + key + "'");
  if (j.contains("S")) j.at("S").get_to(c.S);
  if (j.contains("U")) j.at("U").get_to(c.U);
  if (j.contains("N")) j.at("N").get_to(c.N);
  if (j.contains("num_clusters")) j.at("num_clusters").get_to(c.num_clusters);
  if (j.contains("spread_tx_deg")) j.at("spread_tx_deg").get_to(c.spread_tx_deg);
  if (j.contains("spread_rx_deg")) j.at("spread_rx_deg").get_to(c.spread_rx_deg);
  if (j.contains("snr_db")) j.at("snr_db").get_to(c.snr_db);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("scenario file '" + path + "': " + e.what());
  }
  ScenarioConfig cfg = j.get<ScenarioConfig>();
  cfg.validate();
  return cfg;
}

inline void save_scenario(const std::string& path, const ScenarioConfig& cfg) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write scenario file '" + path + "'");
  out << nlohmann::json(cfg).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Prior parameters
// ---------------------------------------------------------------------------

struct Cluster {
  double angle_tx = 0.0;  // radians
  double angle_rx = 0.0;  // radians
  double gain = 1.0;
};

struct Delta {
  std::vector<Cluster> clusters;
  double spread_tx = deg2rad(35.0);  // radians
  double spread_rx = deg2rad(2.0);   // radians
};

/// One Laplace lobe of the angular power density.
struct LaplaceComponent {
  double mean = 0.0;
  double weight = 1.0;
};

inline std::vector<LaplaceComponent> tx_components(const Delta& d) {
  std::vector<LaplaceComponent> out;
  for (const auto& c : d.clusters) out.push_back({c.angle_tx, c.gain});
  return out;
}

inline std::vector<LaplaceComponent> rx_components(const Delta& d) {
  std::vector<LaplaceComponent> out;
  for (const auto& c : d.clusters) out.push_back({c.angle_rx, c.gain});
  return out;
}

inline Delta sample_delta(const ScenarioConfig& cfg, Rng& rng) {
  require(cfg.num_clusters >= 1, "sample_delta: num_clusters must be >= 1");
  Delta d;
  d.spread_tx = deg2rad(cfg.spread_tx_deg);
  d.spread_rx = deg2rad(cfg.spread_rx_deg);
  double total = 0.0;
  for (Index i = 0; i < cfg.num_clusters; ++i) {
    Cluster c;
    c.angle_tx = rng.uniform(-kPi / 2.0, kPi / 2.0);
    c.angle_rx = rng.uniform(-kPi / 2.0, kPi / 2.0);
    c.gain = 1.0 - rng.uniform(0.0, 1.0);  // (0, 1]
    total += c.gain;
    d.clusters.push_back(c);
  }
  for (auto& c : d.clusters) c.gain /= total;
  return d;
}

// ---------------------------------------------------------------------------
// Array response and covariances
// ---------------------------------------------------------------------------

/// ULA steering vector with half-wavelength spacing: a[k] = exp(-j k pi sin(theta)).
inline CVector steering_vector(double theta, Index n) {
  require(n >= 1, "steering_vector: n must be >= 1");
  CVector a(n);
  const double phi = -kPi * std::sin(theta);
  for (Index k = 0; k < n; ++k) a(k) = std::polar(1.0, phi * static_cast<double>(k));
  return a;
}

namespace detail {

// First column sum_k of int L(theta) exp(-j pi k sin theta) dtheta for one
// Laplace lobe truncated to [-pi, pi] and normalized to unit mass.
// Composite Simpson with the grid split at the cusp; beyond 40 spreads the
// density is below 1e-24 of its peak and is dropped.
inline CVector laplace_lobe_column(double mean, double spread, Index n) {
  constexpr int kIntervalsPerSide = 2048;
  const double b = spread / std::sqrt(2.0);  // Laplace scale parameter
  const double lo = std::max(-kPi, mean - 40.0 * spread);
  const double hi = std::min(kPi, mean + 40.0 * spread);
  const double cusp = std::clamp(mean, -kPi, kPi);
  CVector col = CVector::Zero(n);
  double mass = 0.0;
  std::vector<cplx> powers(static_cast<std::size_t>(n));
  auto accumulate = [&](double a, double z) {
    if (!(z > a)) return;
    const double h = (z - a) / kIntervalsPerSide;
    for (int i = 0; i <= kIntervalsPerSide; ++i) {
      const double theta = a + h * i;
      const double simpson = (i == 0 || i == kIntervalsPerSide) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      const double w = simpson * h / 3.0 * std::exp(-std::abs(theta - mean) / b);
      mass += w;
      const cplx step = std::polar(1.0, -kPi * std::sin(theta));
      cplx p{1.0, 0.0};
      for (Index k = 0; k < n; ++k) {
        col(k) += w * p;
        p *= step;
      }
    }
  };
  accumulate(lo, cusp);
  accumulate(cusp, hi);
  require(mass > 0.0 && std::isfinite(mass), "side_covariance: quadrature produced zero or non-finite mass");
  col /= mass;
  return col;
}

}  // namespace detail

/// Hermitian Toeplitz side covariance int g(theta) a(theta) a(theta)^H dtheta
/// with g a weighted sum of truncated Laplace densities. Unit diagonal.
inline CMatrix side_covariance(std::span<const LaplaceComponent> comps, double spread, Index n) {
  require(spread > 0.0, "side_covariance: spread must be > 0");
  require(n >= 1, "side_covariance: n must be >= 1");
  require(!comps.empty(), "side_covariance: no density components");
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  require(wsum > 0.0, "side_covariance: weights must sum to a positive value");
  CVector col = CVector::Zero(n);
  for (const auto& c : comps) col += (c.weight / wsum) * detail::laplace_lobe_column(c.mean, spread, n);
  require(col.allFinite(), "side_covariance: non-finite quadrature result");
  col(0) = cplx(col(0).real(), 0.0);
  return toeplitz_from_first_column(col);
}

inline CMatrix side_covariance(const std::vector<LaplaceComponent>& comps, double spread, Index n) {
  return side_covariance(std::span<const LaplaceComponent>(comps), spread, n);
}

/// C = C_T kron C_R, with C_T the U x U (MS) and C_R the S x S (BS) factor.
struct ChannelCovariance {
  CMatrix cov_tx;
  CMatrix cov_rx;
  CMatrix full;

  Index s() const { return cov_rx.rows(); }
  Index u() const { return cov_tx.rows(); }
};

inline ChannelCovariance make_covariance(CMatrix cov_tx, CMatrix cov_rx) {
  ChannelCovariance c;
  c.cov_tx = std::move(cov_tx);
  c.cov_rx = std::move(cov_rx);
  c.full = kron(c.cov_tx, c.cov_rx);
  return c;
}

inline ChannelCovariance build_covariance(const Delta& delta, Index s, Index u) {
  return make_covariance(side_covariance(tx_components(delta), delta.spread_tx, u),
                         side_covariance(rx_components(delta), delta.spread_rx, s));
}

/// Circulant eigenvalue approximation c = diag(Q C Q^H) = diag(F_U C_T F_U^H) kron diag(F_S C_R F_S^H).
inline RVector circulant_eigenvalues(const ChannelCovariance& cov) {
  const CMatrix fu = dft_matrix(cov.u());
  const CMatrix fs = dft_matrix(cov.s());
  const RVector ct = (fu * cov.cov_tx * fu.adjoint()).diagonal().real();
  const RVector cr = (fs * cov.cov_rx * fs.adjoint()).diagonal().real();
  RVector c(ct.size() * cr.size());
  for (Index t = 0; t < ct.size(); ++t) c.segment(t * cr.size(), cr.size()) = ct(t) * cr;
  return c;
}

// ---------------------------------------------------------------------------
// Noise and observations
// ---------------------------------------------------------------------------

/// sigma^2 = tr(C X^H X) / (S N 10^(snr/10)).
inline double noise_variance_for_snr(const ChannelCovariance& cov, const PilotSet& pilots, double snr_db) {
  require(std::isfinite(snr_db), "noise_variance_for_snr: snr_db must be finite");
  require(cov.u() == pilots.u() && cov.s() == pilots.s(), "noise_variance_for_snr: covariance/pilot shape mismatch");
  // tr((C_T kron C_R)(G' kron I_S)) = tr(C_T G') tr(C_R)
  const double tr = (cov.cov_tx * pilots.small_gram()).trace().real() * cov.cov_rx.trace().real();
  return tr / (static_cast<double>(pilots.s() * pilots.n()) * std::pow(10.0, snr_db / 10.0));
}

struct Observation {
  CVector h;  // vec(H), length S*U
  CVector y;  // X h + z, length S*N
};

inline Observation sample_observation(const ChannelCovariance& cov, const PilotSet& pilots, double sigma2, Rng& rng) {
  require(sigma2 >= 0.0 && std::isfinite(sigma2), "sample_observation: sigma2 must be finite and >= 0");
  require(cov.u() == pilots.u() && cov.s() == pilots.s(), "sample_observation: covariance/pilot shape mismatch");
  const CMatrix lt = psd_factor(cov.cov_tx);
  const CMatrix lr = psd_factor(cov.cov_rx);
  CMatrix g(lr.cols(), lt.cols());
  for (Index c = 0; c < g.cols(); ++c)
    for (Index r = 0; r < g.rows(); ++r) g(r, c) = rng.complex_normal();
  // vec(L_R G L_T^T) = (L_T kron L_R) vec(G)
  CMatrix hmat = lr * g * lt.transpose();
  if (hmat.size() == 0) hmat = CMatrix::Zero(cov.s(), cov.u());
  Observation obs;
  obs.h = Eigen::Map<CVector>(hmat.data(), hmat.size());
  obs.y = apply_x(obs.h, pilots);
  const double noise_std = std::sqrt(sigma2);
  for (Index i = 0; i < obs.y.size(); ++i) obs.y(i) += noise_std * rng.complex_normal();
  return obs;
}

}  // namespace mimoce

#endif  // MIMOCE_CHANNEL_HPP
