// Copyright 2026 The reweight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// reweight: data generation, single runs, sweeps and oracle verification.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "reweight/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;

reweight::ExperimentConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  reweight::ExperimentConfig c = path.empty() ? reweight::ExperimentConfig{} : reweight::load_config(path);
  if (seed) {
    c.seed = *seed;
    c.sweep_seeds.clear();
  }
  return c;
}

unsigned resolve_threads(const std::optional<unsigned>& flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("REWEIGHT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
    throw reweight::ConfigError("REWEIGHT_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online instance reweighting experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool wrong_sign = false;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "Flat JSON config (defaults apply when omitted)")
        ->check(CLI::ExistingFile);
    auto* out = sub->add_option("--out", out_path, "Output file or directory");
    if (needs_out) out->required();
    sub->add_option("--seed", seed, "Override the config seed");
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic regression dataset as CSV");
  add_common(gen, true);
  auto* run = app.add_subcommand("run", "Run one training trajectory and write it as CSV");
  add_common(run, true);
  auto* sweep = app.add_subcommand("sweep", "Run strategy x r x seed cells and summarize them");
  add_common(sweep, true);
  sweep->add_option("--threads", threads, "Worker threads (falls back to REWEIGHT_THREADS)");
  auto* verify = app.add_subcommand("verify", "Check production code paths against the oracles");
  verify->add_flag("--inject-wrong-sign-gradient", wrong_sign)->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      reweight::VerifyOptions opts;
      opts.inject_wrong_sign_gradient = wrong_sign;
      return reweight::cmd_verify(std::cout, opts);
    }
    const reweight::ExperimentConfig cfg = resolve_config(config_path, seed);
    if (*gen) return reweight::cmd_gen_data(cfg, out_path, std::cout);
    if (*run) return reweight::cmd_run(cfg, out_path, std::cout);
    if (*sweep) return reweight::cmd_sweep(cfg, out_path, resolve_threads(threads), std::cout);
  } catch (const reweight::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
