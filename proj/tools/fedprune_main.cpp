// SPDX-License-Identifier: Apache-2.0
// fedprune: run experiments, extract plot series, inspect checkpoints.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fedprune/checkpoint.hpp"
#include "fedprune/config.hpp"
#include "fedprune/error.hpp"
#include "fedprune/experiment.hpp"
#include "fedprune/io.hpp"
#include "fedprune/kernels.hpp"
#include "fedprune/metrics.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

using namespace fedprune;

int cmd_run(const std::string& path, bool quiet) {
  exp::ExperimentConfig cfg = exp::parse_config(path);
  if (const char* env = std::getenv("FEDPRUNE_SEED")) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError("FEDPRUNE_SEED must be an unsigned integer, got '" + std::string(env) + "'");
    }
  }
  if (!quiet) std::cerr << "kernels: " << kernels::active().name << ", seed " << cfg.seed << '\n';
  const auto res = exp::run_experiment(cfg, quiet ? nullptr : &std::cerr);
  std::cout << exp::kSummaryHeader << '\n' << exp::format_summary(res.summary) << '\n';
  return kOk;
}

int cmd_plot(const std::string& metrics, const std::string& kind, const std::string& out) {
  const auto k = exp::parse_plot_kind(kind);
  std::vector<fed::RoundMetrics> rows;
  try {
    rows = exp::read_metrics(metrics);
  } catch (const ArgumentError& e) {
    throw DecodeError(e.what(), 0);
  }
  const std::string series = exp::emit_plot_data(rows, k);
  if (out.empty() || out == "-")
    std::cout << series;
  else
    io::write_file_atomic(out, series);
  return kOk;
}

int cmd_inspect(const std::string& path) {
  const nn::ParamSet p = nn::load_checkpoint(path);
  const auto& spec = p.spec();
  std::cout << "model " << nn::model_name(spec.id) << ", " << p.parameter_count() << " parameters\n";
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = p.layer(l);
    double sum = 0.0, sq = 0.0;
    std::size_t zeros = 0;
    for (float v : layer.weight) {
      sum += v;
      sq += static_cast<double>(v) * v;
      zeros += v == 0.0f;
    }
    const double n = static_cast<double>(layer.weight.size());
    const double mean = sum / n;
    std::cout << "  " << layer.name << ".weight " << layer.weight_shape.str() << " mean " << mean << " std "
              << std::sqrt(std::max(0.0, sq / n - mean * mean)) << " zeros " << zeros << '\n';
    std::cout << "  " << layer.name << ".bias [" << layer.bias.size() << "]\n";
  }
  const auto& mask = p.mask();
  std::cout << "mask layer " << mask.layer << " (" << spec.layers[static_cast<std::size_t>(mask.layer)].name
            << "): " << mask.pruned_count() << " of " << mask.size() << " channels pruned";
  if (mask.pruned_count()) {
    std::cout << " [";
    bool first = true;
    for (std::size_t c = 0; c < mask.size(); ++c)
      if (!mask.kept(c)) {
        std::cout << (first ? "" : " ") << c;
        first = false;
      }
    std::cout << ']';
  }
  std::cout << "\nfinite " << (p.all_finite() ? "yes" : "no") << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated backdoor-defense simulator"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file (key = value lines)")->required();
  run->add_flag("-q,--quiet", quiet, "Print only the summary row");
  auto* keys = app.add_subcommand("keys", "List every config key with its type and default");

  std::string metrics_path, kind, out_path;
  auto* plot = app.add_subcommand("plot", "Write a tab-separated series from metrics.csv");
  plot->add_option("metrics", metrics_path, "metrics.csv of a run")->required();
  plot->add_option("--kind", kind, "training-curve, prune-curve or delta-curve")->required();
  plot->add_option("-o,--out", out_path, "Output file (default stdout)");

  std::string ckpt_path;
  auto* inspect = app.add_subcommand("inspect", "Describe a checkpoint");
  inspect->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, quiet);
    if (keys->parsed()) {
      std::cout << exp::config_reference();
      return kOk;
    }
    if (plot->parsed()) return cmd_plot(metrics_path, kind, out_path);
    if (inspect->parsed()) return cmd_inspect(ckpt_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
