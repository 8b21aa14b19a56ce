// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tmenhance/tmenhance.hpp"

namespace {

using namespace tmenhance;

// Flags shared by every subcommand; unset flags leave the config file (or
// built-in default) value alone.
struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
  std::optional<std::string> context;
  std::optional<std::string> tilt_mode;
  std::optional<std::string> spacing;
  std::optional<int> workers;

  void Attach(CLI::App* app) {
    app->add_option("--config", config, "key = value configuration file");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--scheme", scheme, "envelope mapping scheme")
        ->check(CLI::IsMember({"sm", "hm", "pdsm", "pdhm"}));
    app->add_option("--context", context, "phone context source")
        ->check(CLI::IsMember({"true", "gmm", "file"}));
    app->add_option("--tilt-mode", tilt_mode, "tilt gain rule")
        ->check(CLI::IsMember({"power", "literal"}));
    app->add_option("--spacing", spacing, "filter bank spacing")
        ->check(CLI::IsMember({"linear", "mel"}));
    app->add_option("--workers", workers, "worker threads (0 = all cores)");
  }

  RunConfig Resolve() const {
    RunConfig cfg;
    if (config) LoadConfigFile(*config, cfg);
    if (seed) cfg.seed = *seed;
    if (scheme) cfg.scheme = ParseScheme(*scheme);
    if (context) cfg.context = ParseContext(*context);
    if (tilt_mode) cfg.tilt_mode = ParseTiltMode(*tilt_mode);
    if (spacing) cfg.spacing = ParseSpacing(*spacing);
    if (workers) cfg.workers = *workers;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Throat-microphone speech enhancement"};
  app.require_subcommand(1);

  std::string manifest, model, input, labels, out, mode = "aa";

  CommonFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "simulate TM recordings for a clean corpus");
  simulate->add_option("manifest", manifest, "manifest of clean recordings")->required();
  simulate->add_option("--out", out, "output directory")->required();
  sim_flags.Attach(simulate);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train envelope and excitation mappings");
  train->add_option("manifest", manifest, "parallel corpus manifest")->required();
  train->add_option("--out", out, "model file to write")->required();
  train_flags.Attach(train);

  CommonFlags enh_flags;
  auto* enhance = app.add_subcommand("enhance", "enhance one TM recording");
  enhance->add_option("model", model, "model file")->required();
  enhance->add_option("input", input, "TM recording (16 kHz PCM WAV)")->required();
  enhance->add_option("--labels", labels, "phone label file");
  enhance->add_option("--mode", mode, "synthesis mode")
      ->check(CLI::IsMember({"aa", "at", "ta", "tt"}));
  enhance->add_option("--out", out, "output WAV")->required();
  enh_flags.Attach(enhance);

  CommonFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "score the test split");
  evaluate->add_option("model", model, "model file")->required();
  evaluate->add_option("manifest", manifest, "parallel corpus manifest")->required();
  evaluate->add_option("--mode", mode, "synthesis mode")
      ->check(CLI::IsMember({"aa", "at", "ta", "tt"}));
  evaluate->add_option("--out", out, "key-value report file");
  eval_flags.Attach(evaluate);

  auto* inspect = app.add_subcommand("inspect", "print a model file header");
  inspect->add_option("model", model, "model file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto path = cmd_simulate(manifest, out, sim_flags.Resolve());
      std::cout << "wrote " << path.string() << "\n";
    } else if (train->parsed()) {
      cmd_train(manifest, out, train_flags.Resolve(), &std::cout);
      std::cout << "wrote " << out << "\n";
    } else if (enhance->parsed()) {
      std::optional<fs::path> label_path;
      if (!labels.empty()) label_path = labels;
      const auto stats = cmd_enhance(model, input, label_path, ParseMode(mode),
                                     out, enh_flags.Resolve());
      if (stats.fallbacks) {
        std::cerr << stats.fallbacks << " frames used the global model\n";
      }
    } else if (evaluate->parsed()) {
      const auto r = cmd_evaluate(model, manifest, ParseMode(mode),
                                  eval_flags.Resolve());
      std::cout << "mode " << mode << ", " << r.utterances << " test utterances\n"
                << FormatLsdTable(r.lsd, &r.band);
      if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw Error(ErrorKind::kIoError, "cannot write " + out);
        f << FormatKeyValues(r.lsd, &r.band);
      }
    } else if (inspect->parsed()) {
      std::cout << cmd_inspect(model);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
