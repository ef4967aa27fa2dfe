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

// mimoce: simulate channels, train the CNN estimator, evaluate and sweep.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mimoce/mimoce.hpp"

namespace {

using namespace mimoce;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

ScenarioConfig scenario_from(const std::string& path) {
  ScenarioConfig cfg = path.empty() ? ScenarioConfig{} : load_scenario(path);
  cfg.validate();
  return cfg;
}

nlohmann::json complex_array(const CVector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back({v(i).real(), v(i).imag()});
  return a;
}

/// Writes to `path`, or to stdout when the path is empty or "-".
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  fn(out);
  out.flush();
  if (!out) throw Error("error writing '" + path + "'");
}

struct SimulateArgs {
  std::string scenario;
  std::string pilots = "dft";
  Index draws = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void run_simulate(const SimulateArgs& a) {
  require(a.draws >= 1, "simulate: --draws must be >= 1");
  const ScenarioConfig cfg = scenario_from(a.scenario);
  const PilotSet pilots = PilotChoice::parse(a.pilots).build(cfg);
  with_output(a.out, [&](std::ostream& os) {
    for (Index d = 0; d < a.draws; ++d) {
      const Draw draw = make_draw(cfg, pilots, mix_seed(a.seed.value_or(cfg.seed), static_cast<std::uint64_t>(d)));
      nlohmann::json clusters = nlohmann::json::array();
      for (const auto& c : draw.delta.clusters)
        clusters.push_back({{"angle_tx", c.angle_tx}, {"angle_rx", c.angle_rx}, {"gain", c.gain}});
      const nlohmann::json rec = {{"draw", d},
                                  {"S", cfg.S},
                                  {"U", cfg.U},
                                  {"N", cfg.N},
                                  {"sigma2", draw.sigma2},
                                  {"clusters", clusters},
                                  {"h", complex_array(draw.obs.h)},
                                  {"y", complex_array(draw.obs.y)}};
      os << rec.dump() << '\n';
    }
  });
}

struct TrainArgs {
  std::string scenario;
  std::string out;
  std::string history;
  std::string activation = "relu";
  std::string init = "random";
  TrainConfig cfg;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void run_train(TrainArgs a) {
  const ScenarioConfig scenario = scenario_from(a.scenario);
  a.cfg.seed = a.seed.value_or(scenario.seed);
  a.cfg.activation = parse_activation(a.activation);
  if (a.init == "random") {
    a.cfg.init = CnnInit::kRandom;
  } else if (a.init == "fe") {
    a.cfg.init = CnnInit::kFe;
  } else {
    throw Error("train: --init must be random or fe, got '" + a.init + "'");
  }
  const TrainResult result = train(a.cfg, scenario, [&](Index epoch, double nmse) {
    if (!a.quiet) std::fprintf(stderr, "epoch %lld  train nmse %.6g\n", static_cast<long long>(epoch + 1), nmse);
  });
  save_model(a.out, result.params);
  if (!a.history.empty()) {
    with_output(a.history, [&](std::ostream& os) {
      os << "epoch,nmse\n";
      char buf[64];
      for (std::size_t i = 0; i < result.nmse_history.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, result.nmse_history[i]);
        os << buf;
      }
    });
  }
}

struct EvalArgs {
  std::string scenario;
  std::string model;
  std::string estimators;
  std::string pilots = "dft";
  Index draws = 20000;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_timing = false;
  EstimatorOptions options;
};

void run_evaluate(const EvalArgs& a) {
  const ScenarioConfig cfg = scenario_from(a.scenario);
  std::vector<std::string> names = split_list(a.estimators);
  if (names.empty()) {
    names = {"genie", "ge", "fe", "ml", "ls", "omp"};
    if (!a.model.empty()) names.push_back("cnn");
  }
  std::vector<EstimatorKind> kinds;
  for (const auto& n : names) kinds.push_back(parse_estimator(n));
  std::optional<CnnParams> model;
  if (!a.model.empty()) model = load_model(a.model);
  const EstimatorBank bank(cfg, PilotChoice::parse(a.pilots).build(cfg), kinds, a.options, model);
  auto rows = evaluate_point(bank, kinds, a.draws, a.seed.value_or(cfg.seed), !a.no_timing);
  for (auto& r : rows) {
    r.sweep_kind = "snr";
    r.sweep_value = cfg.snr_db;
  }
  with_output(a.out, [&](std::ostream& os) { emit_csv(rows, os); });
}

struct SweepArgs {
  std::string kind = "snr";
  std::string scenario;
  std::string estimators = "genie,ge,fe,ml,ls,omp";
  std::string values;
  std::string pilots = "dft";
  std::string model_pattern;
  Index draws = 20000;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_timing = false;
  EstimatorOptions options;
};

void run_sweep_cmd(const SweepArgs& a) {
  SweepSpec spec;
  spec.kind = parse_sweep_kind(a.kind);
  spec.fixed = scenario_from(a.scenario);
  spec.estimators = split_list(a.estimators);
  if (a.values.empty()) {
    spec.values = default_sweep_values(spec.kind);
  } else {
    for (const auto& v : split_list(a.values)) {
      try {
        std::size_t used = 0;
        spec.values.push_back(std::stod(v, &used));
        require(used == v.size(), "");
      } catch (const std::exception&) {
        throw Error("sweep: invalid value '" + v + "' in --values");
      }
    }
  }
  spec.num_draws = a.draws;
  spec.seed = a.seed.value_or(spec.fixed.seed);
  spec.pilots = PilotChoice::parse(a.pilots);
  spec.options = a.options;
  spec.cnn_model_pattern = a.model_pattern;
  spec.record_timing = !a.no_timing;
  const auto rows = run_sweep(spec);
  with_output(a.out, [&](std::ostream& os) { emit_csv(rows, os); });
}

void add_estimator_options(CLI::App* cmd, EstimatorOptions& o) {
  cmd->add_option("--ge-grid", o.ge_grid_size, "GE grid size P (0 = 16 S)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--omp-oversampling", o.omp_oversampling, "OMP dictionary oversampling factor")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--omp-kmax", o.omp_kmax, "largest OMP sparsity tried (0 = 2 * clusters * U)")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIMO channel estimation: simulation, CNN training and Monte-Carlo evaluation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "draw channels and observations, one JSON object per line");
  c_sim->add_option("--scenario", sim.scenario, "scenario JSON file (defaults if omitted)");
  c_sim->add_option("--pilots", sim.pilots, "dft or file:<path>");
  c_sim->add_option("--draws", sim.draws, "number of draws")->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "master seed (scenario seed if omitted)");
  c_sim->add_option("--out", sim.out, "output path (stdout if omitted)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train the CNN estimator on fresh channel draws");
  c_train->add_option("--scenario", tr.scenario, "scenario JSON file (defaults if omitted)");
  c_train->add_option("--out", tr.out, "model file to write")->required();
  c_train->add_option("--epochs", tr.cfg.epochs, "epochs")->check(CLI::PositiveNumber);
  c_train->add_option("--batches", tr.cfg.batches_per_epoch, "batches per epoch")->check(CLI::PositiveNumber);
  c_train->add_option("--batch-size", tr.cfg.batch_size, "samples per batch")->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate")->check(CLI::NonNegativeNumber);
  c_train->add_option("--lambda", tr.cfg.l2_lambda, "L2 penalty on the kernels")->check(CLI::NonNegativeNumber);
  c_train->add_option("--activation", tr.activation, "relu or softmax");
  c_train->add_option("--init", tr.init, "random or fe");
  c_train->add_option("--seed", tr.seed, "training seed (scenario seed if omitted)");
  c_train->add_option("--history", tr.history, "write per-epoch training NMSE as CSV");
  c_train->add_flag("--quiet", tr.quiet, "do not print per-epoch progress");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Monte-Carlo NMSE of estimators at one scenario");
  c_eval->add_option("--scenario", ev.scenario, "scenario JSON file (defaults if omitted)");
  c_eval->add_option("--model", ev.model, "trained CNN model file");
  c_eval->add_option("--estimators", ev.estimators, "comma list of genie|ge|fe|ml|ls|omp|cnn");
  c_eval->add_option("--pilots", ev.pilots, "dft or file:<path>");
  c_eval->add_option("--draws", ev.draws, "Monte-Carlo draws")->check(CLI::PositiveNumber);
  c_eval->add_option("--seed", ev.seed, "master seed (scenario seed if omitted)");
  c_eval->add_option("--out", ev.out, "CSV output path (stdout if omitted)");
  c_eval->add_flag("--no-timing", ev.no_timing, "write 0 in wall_time_ms for byte-reproducible output");
  add_estimator_options(c_eval, ev.options);

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "NMSE versus SNR, number of pilots or number of BS antennas");
  c_sweep->add_option("--kind", sw.kind, "snr, pilots or antennas");
  c_sweep->add_option("--scenario", sw.scenario, "scenario JSON file for the fixed parameters");
  c_sweep->add_option("--estimators", sw.estimators, "comma list of genie|ge|fe|ml|ls|omp|cnn");
  c_sweep->add_option("--values", sw.values, "comma list of sweep values (default grid if omitted)");
  c_sweep->add_option("--pilots", sw.pilots, "dft or file:<path>");
  c_sweep->add_option("--model-pattern", sw.model_pattern, "CNN model path; {} is replaced by the sweep value");
  c_sweep->add_option("--draws", sw.draws, "Monte-Carlo draws per point")->check(CLI::PositiveNumber);
  c_sweep->add_option("--seed", sw.seed, "master seed (scenario seed if omitted)");
  c_sweep->add_option("--out", sw.out, "CSV output path (stdout if omitted)");
  c_sweep->add_flag("--no-timing", sw.no_timing, "write 0 in wall_time_ms for byte-reproducible output");
  add_estimator_options(c_sweep, sw.options);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_sim->parsed()) run_simulate(sim);
    if (c_train->parsed()) run_train(tr);
    if (c_eval->parsed()) run_evaluate(ev);
    if (c_sweep->parsed()) run_sweep_cmd(sw);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
