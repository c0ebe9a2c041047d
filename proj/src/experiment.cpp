// SPDX-License-Identifier: Apache-2.0
#include "fedprune/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fedprune/attacks.hpp"
#include "fedprune/backdoor.hpp"
#include "fedprune/checkpoint.hpp"
#include "fedprune/error.hpp"
#include "fedprune/io.hpp"
#include "fedprune/loaders.hpp"
#include "fedprune/metrics.hpp"
#include "fedprune/normalize.hpp"
#include "fedprune/partition.hpp"
#include "fedprune/rng.hpp"

namespace fedprune::exp {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

template <class T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>)
    return num(*v);
  else
    return std::to_string(*v);
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

fed::FedConfig fed_config(const ExperimentConfig& cfg) {
  fed::FedConfig f;
  f.clients = cfg.clients;
  f.participation = cfg.participation;
  f.global_lr = cfg.global_lr;
  f.local.epochs = cfg.local_epochs;
  f.local.batch_size = cfg.batch_size;
  f.local.lr = static_cast<float>(cfg.local_lr);
  f.local.lambda_last_conv = static_cast<float>(cfg.lambda_last_conv);
  f.attacker_epochs = cfg.attacker_epochs;
  f.rounds = cfg.rounds;
  f.seed = cfg.seed;
  f.mode = fed::parse_aggregation(cfg.aggregation);
  f.record_timing = cfg.record_timing;
  return f;
}

data::BackdoorSpec global_backdoor(const ExperimentConfig& cfg, const data::Dataset& ref) {
  auto trigger = cfg.pattern == "strips" ? data::strip_pattern(ref.channels())
                                         : data::corner_pattern(cfg.pattern_size, ref.channels(), ref.width());
  auto spec = data::make_backdoor_spec(std::move(trigger), cfg.vic_label, cfg.atk_label, cfg.alpha,
                                       cfg.poison_fraction);
  spec.check_bounds(ref.channels(), ref.height(), ref.width());
  return spec;
}

fed::AttackPlan attack_plan(const ExperimentConfig& cfg, const data::BackdoorSpec& global,
                            const std::vector<int>& ids) {
  fed::AttackPlan plan;
  if (ids.empty()) return plan;
  const int m = static_cast<int>(ids.size());
  std::vector<data::BackdoorSpec> parts =
      cfg.dba && m > 1 ? data::decompose_dba(global, m) : std::vector<data::BackdoorSpec>(ids.size(), global);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    parts[i].alpha = global.alpha / m;
    plan.adversaries.push_back({ids[i], parts[i]});
  }
  if (cfg.pruning_aware) plan.oracle_mask = nn::load_checkpoint(cfg.oracle_checkpoint).mask();
  return plan;
}

std::vector<int> dormancy_order(const ExperimentConfig& cfg, const nn::ParamSet& model,
                                const std::vector<data::ClientShard>& shards, const data::NormStats& norm,
                                const fed::AttackPlan& plan) {
  std::vector<defense::NeuronRanking> ranks;
  std::vector<defense::VoteMask> votes;
  for (const auto& s : shards) {
    if (s.data.empty()) continue;
    auto profile = defense::client_profile(model, s.data, norm, s.id);
    const bool lie = cfg.adversarial_ranking && plan.find(s.id) != nullptr;
    if (cfg.defense == "vote") {
      if (lie)
        for (double& v : profile.mean) v = -v;
      votes.push_back(defense::vote_mask(profile, cfg.vote_rate));
    } else {
      auto r = defense::rank_neurons(profile);
      if (lie) r.ranks = attacks::adversarial_ranking(r.ranks);
      ranks.push_back(std::move(r));
    }
  }
  return cfg.defense == "vote" ? defense::aggregate_votes(votes) : defense::aggregate_rankings(ranks);
}

class Run {
 public:
  Run(const ExperimentConfig& cfg, const Inputs& in, std::ostream* log) : cfg_(cfg), in_(in), log_(log) {}

  ExperimentResult go();

 private:
  template <class Fn>
  auto phase(const char* name, Fn&& fn) {
    try {
      return fn();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const PhaseError&) {
      throw;
    } catch (const Error& e) {
      throw PhaseError(name, e.what());
    }
  }

  void flush_metrics() { write_metrics(out_ / "metrics.csv", res_.metrics); }
  fed::RoundMetrics measure(const nn::ParamSet& p, double x, fed::Phase ph, double loss = 0.0) const {
    return fed::measure(p, eval_, x, ph, loss);
  }
  void checkpoint(const char* name, const nn::ParamSet& p) const { nn::save_checkpoint(p, out_ / name); }
  void adjust_to(nn::ParamSet& p, double delta, std::size_t* zeroed) const {
    *zeroed = 0;
    if (std::isfinite(delta)) *zeroed = defense::adjust_extreme_weights(p, p.spec().prune_layer, delta).zeroed;
  }

  const ExperimentConfig& cfg_;
  const Inputs& in_;
  std::ostream* log_;
  fs::path out_;
  fed::EvalSets eval_;
  ExperimentResult res_;
};

ExperimentResult Run::go() {
  out_ = cfg_.output_dir;
  const auto& spec = nn::ModelSpec::get(cfg_.model_name());
  const fed::FedConfig fcfg = fed_config(cfg_);

  data::BackdoorSpec backdoor;
  data::Dataset backdoor_test;
  fed::AttackPlan plan;
  std::vector<data::ClientShard> shards;
  phase("setup", [&] {
    fcfg.validate();
    backdoor = global_backdoor(cfg_, in_.test);
    backdoor_test = data::build_backdoor_testset(in_.test, backdoor);
    shards = data::partition_k_label(in_.train, cfg_.clients, cfg_.labels_per_client, cfg_.seed);
    const auto ids = cfg_.resolved_attacker_ids([&](int c) {
      const auto& d = shards[static_cast<std::size_t>(c)].data;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d.label(i) == cfg_.vic_label) return true;
      return false;
    });
    plan = attack_plan(cfg_, backdoor, ids);
    ExperimentConfig resolved = cfg_;
    resolved.attacker_ids = ids;
    resolved.norm_mean = in_.norm.mean;
    resolved.norm_std = in_.norm.stddev;
    io::write_file_atomic(out_ / "config.ini", serialize_config(resolved));
    return 0;
  });
  eval_ = {&in_.test, &backdoor_test, &in_.norm};
  res_.summary.vic = cfg_.vic_label;
  res_.summary.atk = cfg_.atk_label;

  nn::ParamSet model = phase("train", [&] {
    nn::ParamSet init = nn::init_params(spec, cfg_.seed);
    res_.metrics.push_back(measure(init, 0, fed::Phase::train));
    flush_metrics();
    say(log_, "round 0 test " + num(res_.metrics.back().test_acc) + " atk " + num(res_.metrics.back().atk_acc));
    auto trained = fed::train_loop(std::move(init), shards, fcfg, plan, eval_,
                                   [&](int r, const nn::ParamSet& g, const fed::RoundMetrics& m) {
                                     res_.metrics.push_back(m);
                                     flush_metrics();
                                     say(log_, "round " + std::to_string(r) + " test " + num(m.test_acc) + " atk " +
                                                   num(m.atk_acc) + " loss " + num(m.train_loss));
                                     if (cfg_.checkpoint_every > 0 && r % cfg_.checkpoint_every == 0) {
                                       char name[32];
                                       std::snprintf(name, sizeof name, "round_%04d.fpn", r);
                                       nn::save_checkpoint(g, out_ / "checkpoints" / name);
                                     }
                                   });
    checkpoint("trained.fpn", trained.global);
    return trained.global;
  });
  res_.trained = model;
  res_.summary.train_test = res_.metrics.back().test_acc;
  res_.summary.train_atk = res_.metrics.back().atk_acc;

  const bool prune = cfg_.defense == "rank" || cfg_.defense == "vote";
  const bool adjust = cfg_.defense == "adjust" || (prune && cfg_.adjust_weights);

  if (prune) {
    model = phase("prune", [&] {
      const auto order = dormancy_order(cfg_, model, shards, in_.norm, plan);
      const int channels = spec.designated().out_channels;
      const int step = cfg_.prune_step > 0 ? cfg_.prune_step : defense::default_prune_step(channels);
      std::vector<fed::RoundMetrics> rows;
      defense::PruneResult pr;
      if (cfg_.feedback_prune) {
        const int k = defense::client_feedback_prune(order, shards, model, in_.norm, cfg_.drop_threshold, step);
        pr.params = nn::apply_channel_mask(model, defense::prefix_mask(spec, order, k));
        pr.state.order = order;
        pr.state.mask = pr.params.mask();
        pr.state.pruned = k;
        pr.state.points.push_back({k, nn::evaluate(pr.params, in_.validation, in_.norm).accuracy});
        rows.push_back(measure(pr.params, k, fed::Phase::prune));
      } else {
        pr = defense::iterative_prune(
            model, order, in_.validation, in_.norm, cfg_.drop_threshold, step,
            [&](int k, const nn::ParamSet& masked) { rows.push_back(measure(masked, k, fed::Phase::prune)); },
            cfg_.curves);
      }
      if (cfg_.curves) {
        res_.prune_curve = rows;
        write_metrics(out_ / "prune_curve.csv", rows);
      }
      for (const auto& r : rows) {
        res_.metrics.push_back(r);
        if (static_cast<int>(r.x) == pr.state.pruned) break;
      }
      flush_metrics();
      io::write_file_atomic(out_ / "prune_report.txt", pr.state.report());
      checkpoint("pruned.fpn", pr.params);
      res_.prune = pr.state;
      say(log_, "pruned " + std::to_string(pr.state.pruned) + " of " + std::to_string(channels) + " channels, test " +
                    num(res_.metrics.back().test_acc) + " atk " + num(res_.metrics.back().atk_acc));
      return pr.params;
    });
    res_.summary.prune_n = res_.prune->pruned;
    res_.summary.prune_test = res_.metrics.back().test_acc;
    res_.summary.prune_atk = res_.metrics.back().atk_acc;
  }

  if (adjust) {
    model = phase("adjust", [&] {
      double delta = cfg_.delta;
      if (cfg_.delta_sweep) {
        res_.sweep = defense::sweep_delta(model, in_.validation, in_.norm, cfg_.delta_grid, cfg_.drop_threshold);
        delta = res_.sweep->delta;
      }
      if (cfg_.curves) {
        for (double d : cfg_.delta_grid) {
          nn::ParamSet copy = model;
          std::size_t zeroed = 0;
          adjust_to(copy, d, &zeroed);
          res_.delta_curve.push_back(measure(copy, d, fed::Phase::adjust));
        }
        write_metrics(out_ / "delta_curve.csv", res_.delta_curve);
      }
      std::size_t zeroed = 0;
      adjust_to(model, delta, &zeroed);
      res_.delta_used = delta;
      res_.summary.adj_n = zeroed;
      res_.metrics.push_back(measure(model, delta, fed::Phase::adjust));
      flush_metrics();
      checkpoint("adjusted.fpn", model);
      say(log_, "adjusted delta " + num(delta) + ": zeroed " + std::to_string(zeroed) + " weights, test " +
                    num(res_.metrics.back().test_acc) + " atk " + num(res_.metrics.back().atk_acc));
      return model;
    });
    res_.summary.adj_test = res_.metrics.back().test_acc;
    res_.summary.adj_atk = res_.metrics.back().atk_acc;
  }

  if (cfg_.fine_tune && cfg_.defense != "none") {
    model = phase("finetune", [&] {
      fed::AttackPlan ft_plan = plan;
      ft_plan.active = cfg_.finetune_attack;
      ft_plan.oracle_mask.reset();
      auto ft = defense::fine_tune(model, shards, fcfg, ft_plan, eval_, in_.validation, cfg_.finetune_rounds,
                                   cfg_.finetune_patience);
      for (const auto& m : ft.metrics) {
        res_.metrics.push_back(m);
        say(log_, "finetune " + num(m.x) + " test " + num(m.test_acc) + " atk " + num(m.atk_acc));
      }
      res_.finetune_rounds = static_cast<int>(ft.metrics.size());
      checkpoint("finetuned.fpn", ft.global);
      std::size_t zeroed = 0;
      if (adjust) adjust_to(ft.global, res_.delta_used, &zeroed);
      res_.metrics.push_back(
          measure(ft.global, static_cast<double>(ft.metrics.size() + 1), fed::Phase::finetune));
      flush_metrics();
      say(log_, "after fine-tuning and adjustment: test " + num(res_.metrics.back().test_acc) + " atk " +
                    num(res_.metrics.back().atk_acc));
      return ft.global;
    });
    res_.summary.ft_test = res_.metrics.back().test_acc;
    res_.summary.ft_atk = res_.metrics.back().atk_acc;
  }

  phase("report", [&] {
    checkpoint("final.fpn", model);
    flush_metrics();
    io::write_file_atomic(out_ / "summary.csv", std::string(kSummaryHeader) + "\n" + format_summary(res_.summary) + "\n");
    return 0;
  });
  res_.final_model = std::move(model);
  return std::move(res_);
}

}  // namespace

std::string format_summary(const SummaryRow& r) {
  return std::to_string(r.vic) + ',' + std::to_string(r.atk) + ',' + num(r.train_test) + ',' + num(r.train_atk) +
         ',' + opt(r.prune_n) + ',' + opt(r.prune_test) + ',' + opt(r.prune_atk) + ',' + opt(r.adj_n) + ',' +
         opt(r.adj_test) + ',' + opt(r.adj_atk) + ',' + opt(r.ft_test) + ',' + opt(r.ft_atk);
}

Inputs prepare_inputs(const ExperimentConfig& cfg) {
  cfg.validate();
  cfg.check_files();
  const auto files = data_files(cfg.dataset, cfg.data_root());
  Inputs in;
  data::Dataset train, test;
  try {
    if (cfg.dataset == "cifar10") {
      train = data::load_cifar10(files.train);
      test = data::load_cifar10(files.test);
    } else {
      train = data::load_idx(files.train[0], files.train[1]);
      test = data::load_idx(files.test[0], files.test[1]);
    }
  } catch (const Error& e) {
    throw PhaseError("load", e.what());
  }
  const auto& spec = nn::ModelSpec::get(cfg.model_name());
  if (train.channels() != spec.in_channels || train.height() != spec.in_h || train.width() != spec.in_w)
    throw ConfigError("dataset images do not match model " + cfg.model_name());

  if (cfg.train_subset > 0 && static_cast<std::size_t>(cfg.train_subset) < train.size()) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {0x5b5e7}));
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(static_cast<std::size_t>(cfg.train_subset));
    std::sort(idx.begin(), idx.end());
    train = train.subset(idx);
  }
  auto split = data::split_validation(test, cfg.validation_fraction);
  in.train = std::move(train);
  in.test = std::move(split.test);
  in.validation = std::move(split.validation);
  try {
    in.norm = cfg.norm_mean.empty() ? data::compute_norm_stats(in.validation)
                                    : data::NormStats{cfg.norm_mean, cfg.norm_std};
  } catch (const Error& e) {
    throw PhaseError("load", e.what());
  }
  return in;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  const Inputs in = prepare_inputs(cfg);
  return run_experiment(cfg, in, log);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Inputs& inputs, std::ostream* log) {
  cfg.validate();
  Run run(cfg, inputs, log);
  return run.go();
}

}  // namespace fedprune::exp
