// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "doctest.h"
#include "fedprune/error.hpp"
#include "fedprune/experiment.hpp"
#include "fedprune/io.hpp"
#include "fedprune/metrics.hpp"
#include "helpers.hpp"

using namespace fedprune;

TEST_CASE("metrics format and parse round trip") {
  std::vector<fed::RoundMetrics> rows{{0, fed::Phase::train, 0.1, 0.0, 0.0, 0.0},
                                      {3, fed::Phase::prune, 0.95, 0.5, 0.0, 0.0},
                                      {2.5, fed::Phase::adjust, 0.9, 0.01, 0.0, 1.25}};
  const auto csv = exp::format_metrics(rows);
  CHECK(csv.rfind(std::string(exp::kMetricsHeader) + "\n", 0) == 0);
  CHECK(csv.find("2.5,adjust,0.900000,0.010000,0.000000,1.250\n") != std::string::npos);
  const auto back = exp::parse_metrics(csv);
  REQUIRE(back.size() == 3);
  CHECK(back[1].phase == fed::Phase::prune);
  CHECK(back[2].x == 2.5);
  CHECK(exp::format_metrics(back) == csv);
}

TEST_CASE("malformed metrics name the line") {
  try {
    exp::parse_metrics(std::string(exp::kMetricsHeader) + "\n1,train,0.5,0.1,0,0\n2,train,oops,0,0,0\n");
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(exp::parse_metrics("not,a,header\n"), ArgumentError);
}

TEST_CASE("plot data selects one phase") {
  std::vector<fed::RoundMetrics> rows{{0, fed::Phase::train, 0.1, 0.0, 0.0, 0.0},
                                      {1, fed::Phase::train, 0.5, 0.2, 0.3, 0.0},
                                      {4, fed::Phase::prune, 0.45, 0.1, 0.0, 0.0}};
  const auto t = exp::emit_plot_data(rows, exp::PlotKind::training_curve);
  CHECK(t == "round\ttest_acc\tatk_acc\n0\t0.100000\t0.000000\n1\t0.500000\t0.200000\n");
  CHECK(exp::emit_plot_data(rows, exp::PlotKind::prune_curve) == "pruned\ttest_acc\tatk_acc\n4\t0.450000\t0.100000\n");
  CHECK(exp::parse_plot_kind("delta-curve") == exp::PlotKind::delta_curve);
  CHECK_THROWS_AS(exp::parse_plot_kind("histogram"), ArgumentError);
}

namespace {

exp::Inputs synthetic_inputs() {
  exp::Inputs in;
  in.train = testutil::random_dataset(200, 1);
  in.test = testutil::random_dataset(60, 2);
  in.validation = testutil::random_dataset(40, 3);
  in.norm = testutil::unit_norm();
  return in;
}

exp::ExperimentConfig small_config(const std::filesystem::path& out) {
  exp::ExperimentConfig cfg;
  cfg.model = "mnist-small";
  cfg.output_dir = out.string();
  cfg.clients = 4;
  cfg.labels_per_client = 5;
  cfg.local_epochs = 1;
  cfg.attacker_epochs = 1;
  cfg.rounds = 2;
  return cfg;
}

}  // namespace

TEST_CASE("zero rounds without defense writes the header and a baseline row") {
  const auto dir = testutil::scratch_dir("exp_zero");
  auto cfg = small_config(dir);
  cfg.rounds = 0;
  cfg.defense = "none";
  const auto res = exp::run_experiment(cfg, synthetic_inputs());
  const auto rows = exp::read_metrics(dir / "metrics.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].x == 0.0);
  CHECK(rows[0].phase == fed::Phase::train);
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "config.ini"));
  CHECK(nn::bitwise_equal(res.trained, res.final_model));
}

TEST_CASE("a full small pipeline is deterministic and writes every artifact") {
  const auto a_dir = testutil::scratch_dir("exp_a");
  const auto b_dir = testutil::scratch_dir("exp_b");
  auto cfg = small_config(a_dir);
  cfg.fine_tune = true;
  cfg.finetune_rounds = 2;
  cfg.curves = true;
  cfg.checkpoint_every = 1;
  const auto inputs = synthetic_inputs();
  std::ostringstream log;
  const auto a = exp::run_experiment(cfg, inputs, &log);
  cfg.output_dir = b_dir.string();
  const auto b = exp::run_experiment(cfg, inputs);
  CHECK(io::read_file(a_dir / "metrics.csv") == io::read_file(b_dir / "metrics.csv"));
  CHECK(nn::bitwise_equal(a.final_model, b.final_model));
  for (const char* f : {"trained.fpn", "pruned.fpn", "adjusted.fpn", "finetuned.fpn", "final.fpn", "prune_report.txt",
                        "prune_curve.csv", "delta_curve.csv", "checkpoints/round_0001.fpn"})
    CHECK_MESSAGE(std::filesystem::exists(a_dir / f), f);
  CHECK_FALSE(log.str().empty());

  const auto rows = exp::read_metrics(a_dir / "metrics.csv");
  int adjust_rows = 0;
  for (const auto& r : rows) adjust_rows += r.phase == fed::Phase::adjust;
  CHECK(adjust_rows >= 1);
  CHECK(rows.front().phase == fed::Phase::train);
  CHECK(rows.front().x == 0.0);
}

TEST_CASE("failures are tagged with their phase") {
  const auto dir = testutil::scratch_dir("exp_fail");
  auto cfg = small_config(dir);
  auto inputs = synthetic_inputs();
  inputs.test = data::Dataset(1, 28, 28);
  for (std::size_t i = 0; i < 5; ++i) inputs.test.push_back(testutil::random_dataset(1, 9).at(0));
  try {
    exp::run_experiment(cfg, inputs);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(':') != std::string::npos);
  }
}
