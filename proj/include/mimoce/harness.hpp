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

#ifndef MIMOCE_HARNESS_HPP
#define MIMOCE_HARNESS_HPP

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mimoce/channel.hpp"
#include "mimoce/cnn.hpp"
#include "mimoce/estimators.hpp"
#include "mimoce/pilots.hpp"

namespace mimoce {

/// Mean of ||h - h_hat||^2 / (S U) over draws.
inline double nmse(const std::vector<CVector>& h_hats, const std::vector<CVector>& hs, Index s, Index u) {
  require(!hs.empty(), "nmse: no draws");
  require(h_hats.size() == hs.size(), "nmse: estimate and channel lists differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    require(hs[i].size() == s * u && h_hats[i].size() == s * u, "nmse: vector length must be S*U");
    acc += (hs[i] - h_hats[i]).squaredNorm();
  }
  return acc / (static_cast<double>(hs.size()) * static_cast<double>(s * u));
}

// ---------------------------------------------------------------------------
// Estimator registry
// ---------------------------------------------------------------------------

enum class EstimatorKind { kGenie, kGe, kFe, kMl, kLs, kOmp, kCnn };

inline const std::vector<std::pair<std::string, EstimatorKind>>& estimator_names() {
  static const std::vector<std::pair<std::string, EstimatorKind>> names = {
      {"genie", EstimatorKind::kGenie}, {"ge", EstimatorKind::kGe}, {"fe", EstimatorKind::kFe},
      {"ml", EstimatorKind::kMl},       {"ls", EstimatorKind::kLs}, {"omp", EstimatorKind::kOmp},
      {"cnn", EstimatorKind::kCnn}};
  return names;
}

inline EstimatorKind parse_estimator(const std::string& name) {
  for (const auto& [n, k] : estimator_names())
    if (n == name) return k;
  throw Error("unknown estimator '" + name + "' (expected genie|ge|fe|ml|ls|omp|cnn)");
}

inline std::string estimator_name(EstimatorKind kind) {
  for (const auto& [n, k] : estimator_names())
    if (k == kind) return n;
  return "?";
}

/// Pilot choice: DFT pilots, or X' read from a file.
struct PilotChoice {
  std::string file;  // empty = DFT pilots

  static PilotChoice parse(const std::string& flag) {
    if (flag == "dft") return {};
    if (flag.rfind("file:", 0) == 0 && flag.size() > 5) return {flag.substr(5)};
    throw Error("invalid --pilots value '" + flag + "' (expected dft or file:<path>)");
  }

  PilotSet build(const ScenarioConfig& cfg) const {
    if (file.empty()) return dft_pilots(cfg.S, cfg.U, cfg.N);
    PilotSet p = load_pilots_file(file, cfg.S);
    require(p.u() == cfg.U && p.n() == cfg.N, "pilot file '" + file + "' is " + std::to_string(p.u()) + "x" +
                                                  std::to_string(p.n()) + " but the scenario needs U=" +
                                                  std::to_string(cfg.U) + ", N=" + std::to_string(cfg.N));
    return p;
  }
};

struct EstimatorOptions {
  Index ge_grid_size = 0;  // 0 = 16 S
  Index omp_oversampling = 4;
  Index omp_kmax = 0;  // 0 = 2 * num_clusters * U
};

/// Everything the estimators precompute for one scenario.
class EstimatorBank {
 public:
  EstimatorBank(const ScenarioConfig& cfg, PilotSet pilots, const std::vector<EstimatorKind>& kinds,
                const EstimatorOptions& opts = {}, std::optional<CnnParams> cnn = std::nullopt)
      : cfg_(cfg), pilots_(std::move(pilots)), qt_(cfg.S, cfg.U), opts_(opts) {
    for (EstimatorKind k : kinds) {
      if (k == EstimatorKind::kGe && !grid_)
        grid_ = std::make_unique<GridFilters>(
            build_grid(cfg_, pilots_, opts_.ge_grid_size > 0 ? opts_.ge_grid_size : 16 * cfg_.S));
      if (k == EstimatorKind::kFe && !fe_) fe_ = make_fe_params(cfg_, pilots_);
      if (k == EstimatorKind::kCnn) {
        require(cnn.has_value(), "estimator 'cnn' needs a trained model");
        require(cnn->s == cfg_.S && cnn->u == cfg_.U, "CNN model shape (S=" + std::to_string(cnn->s) +
                                                          ", U=" + std::to_string(cnn->u) +
                                                          ") does not match the scenario");
        cnn_ = std::move(cnn);
      }
    }
  }

  const PilotSet& pilots() const { return pilots_; }
  const QTransform& qt() const { return qt_; }
  const ScenarioConfig& scenario() const { return cfg_; }

  CVector estimate(EstimatorKind kind, const CVector& y, const CVector& h_true, const ChannelCovariance& cov,
                   double sigma2) const {
    switch (kind) {
      case EstimatorKind::kGenie:
        return genie_mmse(y, cov, pilots_, sigma2);
      case EstimatorKind::kGe:
        return ge_estimate(y, *grid_, pilots_, sigma2);
      case EstimatorKind::kFe:
        return fe_estimate(y, *fe_, pilots_, qt_, sigma2);
      case EstimatorKind::kMl:
        return ml_estimate(y, pilots_, qt_, sigma2);
      case EstimatorKind::kLs:
        return ls_estimate(y, pilots_).h;
      case EstimatorKind::kOmp:
        return omp_genie(y, h_true, pilots_, opts_.omp_oversampling,
                         opts_.omp_kmax > 0 ? opts_.omp_kmax : default_omp_kmax(cfg_));
      case EstimatorKind::kCnn:
        return cnn_estimate(*cnn_, y, pilots_, qt_, sigma2);
    }
    throw Error("unhandled estimator");
  }

 private:
  ScenarioConfig cfg_;
  PilotSet pilots_;
  QTransform qt_;
  EstimatorOptions opts_;
  std::unique_ptr<GridFilters> grid_;
  std::optional<FeParams> fe_;
  std::optional<CnnParams> cnn_;
};

/// One Monte-Carlo draw of the scenario. The seed fully determines delta, h and z.
struct Draw {
  Delta delta;
  ChannelCovariance cov;
  double sigma2 = 0.0;
  Observation obs;
};

inline Draw make_draw(const ScenarioConfig& cfg, const PilotSet& pilots, std::uint64_t seed) {
  Rng rng(seed);
  Draw d;
  d.delta = sample_delta(cfg, rng);
  d.cov = build_covariance(d.delta, cfg.S, cfg.U);
  d.sigma2 = noise_variance_for_snr(d.cov, pilots, cfg.snr_db);
  d.obs = sample_observation(d.cov, pilots, d.sigma2, rng);
  return d;
}

struct ResultRow {
  std::string estimator;
  std::string sweep_kind;
  double sweep_value = 0.0;
  double nmse = 0.0;
  Index draws = 0;
  double wall_time_ms = 0.0;  // median per-draw estimation time
};

/// Evaluates all estimators on common draws: draw d uses seed mix_seed(seed, d).
inline std::vector<ResultRow> evaluate_point(const EstimatorBank& bank, const std::vector<EstimatorKind>& kinds,
                                             Index num_draws, std::uint64_t seed, bool record_timing = true) {
  require(num_draws >= 1, "evaluate: number of draws must be >= 1");
  const ScenarioConfig& cfg = bank.scenario();
  std::vector<double> err(kinds.size(), 0.0);
  std::vector<std::vector<double>> times(kinds.size());
  for (Index d = 0; d < num_draws; ++d) {
    const Draw draw = make_draw(cfg, bank.pilots(), mix_seed(seed, static_cast<std::uint64_t>(d)));
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      const CVector h_hat = bank.estimate(kinds[k], draw.obs.y, draw.obs.h, draw.cov, draw.sigma2);
      const auto t1 = std::chrono::steady_clock::now();
      if (record_timing) times[k].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      err[k] += (draw.obs.h - h_hat).squaredNorm();
    }
  }
  std::vector<ResultRow> rows;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    ResultRow r;
    r.estimator = estimator_name(kinds[k]);
    r.nmse = err[k] / (static_cast<double>(num_draws) * static_cast<double>(cfg.S * cfg.U));
    r.draws = num_draws;
    if (record_timing) {
      auto& t = times[k];
      std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
      r.wall_time_ms = t[t.size() / 2];
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepKind { kSnr, kPilots, kAntennas };

inline SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "snr") return SweepKind::kSnr;
  if (s == "pilots") return SweepKind::kPilots;
  if (s == "antennas" || s == "bs_antennas") return SweepKind::kAntennas;
  throw Error("unknown sweep kind '" + s + "' (expected snr|pilots|antennas)");
}

inline std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::kSnr:
      return "snr";
    case SweepKind::kPilots:
      return "pilots";
    case SweepKind::kAntennas:
      return "antennas";
  }
  return "?";
}

inline std::vector<double> default_sweep_values(SweepKind k) {
  switch (k) {
    case SweepKind::kSnr:
      return {-15, -10, -5, 0, 5, 10, 15, 20};
    case SweepKind::kPilots:
      return {2, 4, 8, 16};
    case SweepKind::kAntennas:
      return {8, 16, 32, 64};
  }
  return {};
}

struct SweepSpec {
  SweepKind kind = SweepKind::kSnr;
  std::vector<double> values;
  ScenarioConfig fixed;
  std::vector<std::string> estimators;
  Index num_draws = 20000;
  std::uint64_t seed = 1;
  PilotChoice pilots;
  EstimatorOptions options;
  // Path of the CNN model per sweep point; "{}" is replaced by the sweep value
  // (formatted with %g). Without "{}" one model serves every point.
  std::string cnn_model_pattern;
  bool record_timing = true;

  void validate() const {
    require(!values.empty(), "sweep: values must be nonempty");
    require(std::is_sorted(values.begin(), values.end()), "sweep: values must be sorted");
    require(num_draws >= 1, "sweep: num_draws must be >= 1");
    require(!estimators.empty(), "sweep: no estimators given");
    for (const auto& e : estimators) parse_estimator(e);
  }
};

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline ScenarioConfig scenario_at(const SweepSpec& spec, double value) {
  ScenarioConfig cfg = spec.fixed;
  switch (spec.kind) {
    case SweepKind::kSnr:
      cfg.snr_db = value;
      break;
    case SweepKind::kPilots:
      require(value >= 1 && value == std::floor(value), "sweep: pilot counts must be positive integers");
      cfg.N = static_cast<Index>(value);
      break;
    case SweepKind::kAntennas:
      require(value >= 1 && value == std::floor(value), "sweep: antenna counts must be positive integers");
      cfg.S = static_cast<Index>(value);
      break;
  }
  cfg.validate();
  return cfg;
}

inline std::string cnn_model_path(const SweepSpec& spec, double value) {
  std::string path = spec.cnn_model_pattern;
  const auto pos = path.find("{}");
  if (pos != std::string::npos) path.replace(pos, 2, format_value(value));
  return path;
}

/// Runs every sweep point; point i draws from seed mix_seed(spec.seed, i), so
/// all estimators see the same (h, y) stream at a point.
inline std::vector<ResultRow> run_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<EstimatorKind> kinds;
  for (const auto& e : spec.estimators) kinds.push_back(parse_estimator(e));
  const bool wants_cnn = std::find(kinds.begin(), kinds.end(), EstimatorKind::kCnn) != kinds.end();
  if (wants_cnn) {
    require(!spec.cnn_model_pattern.empty(), "sweep: estimator 'cnn' needs a model path or pattern");
    std::vector<std::string> missing;
    for (double v : spec.values) {
      const std::string p = cnn_model_path(spec, v);
      if (!std::filesystem::exists(p) && std::find(missing.begin(), missing.end(), p) == missing.end())
        missing.push_back(p);
    }
    if (!missing.empty()) {
      std::string msg = "sweep: missing CNN model files:";
      for (const auto& m : missing) msg += "\n  " + m;
      throw Error(msg);
    }
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    const double value = spec.values[i];
    const ScenarioConfig cfg = scenario_at(spec, value);
    std::optional<CnnParams> model;
    if (wants_cnn) model = load_model(cnn_model_path(spec, value));
    const EstimatorBank bank(cfg, spec.pilots.build(cfg), kinds, spec.options, model);
    auto point = evaluate_point(bank, kinds, spec.num_draws, mix_seed(spec.seed, i), spec.record_timing);
    for (auto& r : point) {
      r.sweep_kind = to_string(spec.kind);
      r.sweep_value = value;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader = "estimator,sweep_kind,sweep_value,nmse,draws,wall_time_ms";

inline std::string csv_line(const ResultRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g,%lld,%.12g", r.estimator.c_str(), r.sweep_kind.c_str(),
                r.sweep_value, r.nmse, static_cast<long long>(r.draws), r.wall_time_ms);
  return buf;
}

inline void emit_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << csv_line(r) << '\n';
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing: " + std::strerror(errno));
  emit_csv(rows, out);
  out.flush();
  if (!out) throw Error("error writing '" + path + "': " + std::strerror(errno));
}

inline std::vector<ResultRow> parse_csv(std::istream& in, const std::string& name = "<csv>") {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == kCsvHeader, name + ": missing or unexpected header");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    require(f.size() == 6, name + ":" + std::to_string(lineno) + ": expected 6 fields");
    ResultRow r;
    try {
      r.estimator = f[0];
      r.sweep_kind = f[1];
      r.sweep_value = std::stod(f[2]);
      r.nmse = std::stod(f[3]);
      r.draws = std::stoll(f[4]);
      r.wall_time_ms = std::stod(f[5]);
    } catch (const std::exception&) {
      throw Error(name + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ResultRow> parse_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  return parse_csv(in, path);
}

}  // namespace mimoce

#endif  // MIMOCE_HARNESS_HPP
