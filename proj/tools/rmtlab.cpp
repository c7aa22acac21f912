/*
 * Copyright 2026 The rmtlab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// rmtlab command-line entry point.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rmtlab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"rmtlab: resolvent and spectral statistic experiments for sample covariance matrices"};
  app.set_version_flag("--version", std::string(RMTLAB_VERSION));
  app.require_subcommand(1);

  std::string config_path;
  std::string manifest_path;
  std::string out_dir = ".";
  std::size_t workers = 0;

  for (const char* name : {"law", "kernel", "simulate", "lss", "gp"}) {
    CLI::App* sub = app.add_subcommand(name);
    auto* cfg = sub->add_option("-c,--config", config_path, "JSON configuration file");
    auto* man = sub->add_option("--manifest", manifest_path, "rerun from a manifest.json");
    cfg->excludes(man);
    sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("-w,--workers", workers, "worker threads (default: config, then RMTLAB_WORKERS, then 1)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : rmtlab::cli::kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  nlohmann::json config;
  try {
    if (config_path.empty() && manifest_path.empty()) {
      throw rmtlab::config_error("one of --config or --manifest is required");
    }
    config = manifest_path.empty() ? rmtlab::cli::load_config(config_path, false)
                                   : rmtlab::cli::load_config(manifest_path, true);
  } catch (const rmtlab::config_error& e) {
    std::cerr << "rmtlab: configuration error: " << e.what() << '\n';
    return rmtlab::cli::kConfigError;
  }
  rmtlab::cli::RunContext ctx;
  ctx.out_dir = out_dir;
  ctx.workers = workers;
  return rmtlab::cli::run_command(command, config, ctx);
}
