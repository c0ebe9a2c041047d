// SPDX-License-Identifier: Apache-2.0
#include "fedprune/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <variant>

#include "fedprune/error.hpp"
#include "fedprune/io.hpp"
#include "fedprune/model.hpp"

#ifndef FEDPRUNE_DEFAULT_DATA_DIR
#define FEDPRUNE_DEFAULT_DATA_DIR "data"
#endif

namespace fedprune::exp {
namespace {

using C = ExperimentConfig;
using Member = std::variant<std::string C::*, int C::*, std::uint64_t C::*, double C::*, bool C::*,
                            std::vector<double> C::*, std::vector<int> C::*>;

struct Field {
  const char* key;
  Member member;
  const char* doc;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"dataset", &C::dataset, "mnist, fmnist or cifar10"},
      {"model", &C::model, "mnist-small, mnist-std, fmnist or cifar10; empty picks the dataset's model"},
      {"data_dir", &C::data_dir, "directory holding mnist/, fmnist/ and cifar10/; empty uses the build default"},
      {"output_dir", &C::output_dir, "where metrics, checkpoints and reports are written"},
      {"seed", &C::seed, "base seed; FEDPRUNE_SEED overrides it"},
      {"clients", &C::clients, "number of clients N"},
      {"labels_per_client", &C::labels_per_client, "labels K held by each client"},
      {"participation", &C::participation, "fraction k of clients selected per round"},
      {"rounds", &C::rounds, "training rounds"},
      {"local_epochs", &C::local_epochs, "local epochs of a benign client"},
      {"attacker_epochs", &C::attacker_epochs, "local epochs of an attacker"},
      {"local_lr", &C::local_lr, "client SGD learning rate"},
      {"batch_size", &C::batch_size, "client mini-batch size"},
      {"global_lr", &C::global_lr, "server learning rate eta (weighted aggregation)"},
      {"aggregation", &C::aggregation, "simplified or weighted"},
      {"lambda_last_conv", &C::lambda_last_conv, "L2 coefficient on the last conv layer for benign clients"},
      {"train_subset", &C::train_subset, "use this many training images (0 = all)"},
      {"validation_fraction", &C::validation_fraction, "tail of the test set held by the server"},
      {"norm_mean", &C::norm_mean, "per-channel mean of pixel/255; empty computes it from the validation set"},
      {"norm_std", &C::norm_std, "per-channel standard deviation matching norm_mean"},
      {"attackers", &C::attackers, "number of attackers"},
      {"attacker_ids", &C::attacker_ids, "attacker client ids; empty picks the lowest ids holding vic_label"},
      {"pattern", &C::pattern, "corner (top-right pixels) or strips (four 1x4 strips)"},
      {"pattern_size", &C::pattern_size, "pixels of the corner pattern, 1 to 9"},
      {"vic_label", &C::vic_label, "victim label T"},
      {"atk_label", &C::atk_label, "target label F"},
      {"alpha", &C::alpha, "amplification coefficient, shared by all attackers"},
      {"poison_fraction", &C::poison_fraction, "share of triggered images in the attacker's training set"},
      {"dba", &C::dba, "split the trigger among the attackers"},
      {"adversarial_ranking", &C::adversarial_ranking, "attackers report reversed dormancy information"},
      {"pruning_aware", &C::pruning_aware, "attackers train through the final pruning mask (oracle)"},
      {"oracle_checkpoint", &C::oracle_checkpoint, "checkpoint whose mask the pruning-aware attackers know"},
      {"defense", &C::defense, "rank, vote, adjust (weights only) or none"},
      {"vote_rate", &C::vote_rate, "pruning rate p of each client's vote"},
      {"drop_threshold", &C::drop_threshold, "largest accepted accuracy drop between testing points"},
      {"prune_step", &C::prune_step, "channels per testing point; 0 uses max(1, C/25)"},
      {"feedback_prune", &C::feedback_prune, "choose the stop point from client accuracy reports"},
      {"adjust_weights", &C::adjust_weights, "zero extreme last-conv weights after pruning"},
      {"delta", &C::delta, "threshold multiplier for extreme weights"},
      {"delta_sweep", &C::delta_sweep, "pick delta on the validation set from delta_grid"},
      {"delta_grid", &C::delta_grid, "descending delta values for the sweep"},
      {"fine_tune", &C::fine_tune, "federated fine-tuning after adjustment, then adjust again"},
      {"finetune_rounds", &C::finetune_rounds, "maximum fine-tuning rounds"},
      {"finetune_patience", &C::finetune_patience, "rounds without validation improvement before stopping"},
      {"finetune_attack", &C::finetune_attack, "attackers keep attacking during fine-tuning"},
      {"checkpoint_every", &C::checkpoint_every, "save a checkpoint every this many rounds (0 = phases only)"},
      {"record_timing", &C::record_timing, "write wall-clock seconds instead of 0 in metrics.csv"},
      {"curves", &C::curves, "also evaluate the full prune and delta curves"},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& s, const char* type) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("expected " + std::string(type) + ", got '" + s + "'");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw ConfigError("value must be finite, got '" + s + "'");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const char* type) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(parse_number<T>(trim(std::string_view(s).substr(start, comma - start)), type));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

struct Assign {
  C& cfg;
  const std::string& value;
  void operator()(std::string C::*m) const { cfg.*m = value; }
  void operator()(int C::*m) const { cfg.*m = parse_number<int>(value, "an integer"); }
  void operator()(std::uint64_t C::*m) const { cfg.*m = parse_number<std::uint64_t>(value, "an unsigned integer"); }
  void operator()(double C::*m) const { cfg.*m = parse_number<double>(value, "a number"); }
  void operator()(bool C::*m) const { cfg.*m = parse_bool(value); }
  void operator()(std::vector<double> C::*m) const { cfg.*m = parse_list<double>(value, "a number"); }
  void operator()(std::vector<int> C::*m) const { cfg.*m = parse_list<int>(value, "an integer"); }
};

struct Format {
  const C& cfg;
  std::string operator()(std::string C::*m) const { return cfg.*m; }
  std::string operator()(int C::*m) const { return std::to_string(cfg.*m); }
  std::string operator()(std::uint64_t C::*m) const { return std::to_string(cfg.*m); }
  std::string operator()(double C::*m) const { return format_double(cfg.*m); }
  std::string operator()(bool C::*m) const { return cfg.*m ? "true" : "false"; }
  std::string operator()(std::vector<double> C::*m) const {
    std::string s;
    for (double v : cfg.*m) s += (s.empty() ? "" : ", ") + format_double(v);
    return s;
  }
  std::string operator()(std::vector<int> C::*m) const {
    std::string s;
    for (int v : cfg.*m) s += (s.empty() ? "" : ", ") + std::to_string(v);
    return s;
  }
};

struct TypeName {
  const char* operator()(std::string C::*) const { return "string"; }
  const char* operator()(int C::*) const { return "int"; }
  const char* operator()(std::uint64_t C::*) const { return "uint64"; }
  const char* operator()(double C::*) const { return "real"; }
  const char* operator()(bool C::*) const { return "bool"; }
  const char* operator()(std::vector<double> C::*) const { return "real list"; }
  const char* operator()(std::vector<int> C::*) const { return "int list"; }
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::string ExperimentConfig::model_name() const {
  if (!model.empty()) return model;
  if (dataset == "fmnist") return "fmnist";
  if (dataset == "cifar10") return "cifar10";
  return "mnist-std";
}

std::filesystem::path ExperimentConfig::data_root() const {
  return data_dir.empty() ? std::filesystem::path(FEDPRUNE_DEFAULT_DATA_DIR) : std::filesystem::path(data_dir);
}

std::vector<int> ExperimentConfig::resolved_attacker_ids(const std::function<bool(int)>& holds_victim) const {
  if (!attacker_ids.empty()) return attacker_ids;
  std::vector<int> ids;
  if (holds_victim)
    for (int c = 0; c < clients && static_cast<int>(ids.size()) < attackers; ++c)
      if (holds_victim(c)) ids.push_back(c);
  for (int c = 0; c < clients && static_cast<int>(ids.size()) < attackers; ++c)
    if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ExperimentConfig::validate() const {
  require(dataset == "mnist" || dataset == "fmnist" || dataset == "cifar10",
          "dataset must be mnist, fmnist or cifar10, got '" + dataset + "'");
  nn::ModelId id;
  try {
    id = nn::parse_model_id(model_name());
  } catch (const Error&) {
    throw ConfigError("unknown model '" + model_name() + "'");
  }
  require((dataset == "cifar10") == (id == nn::ModelId::cifar10),
          "model " + model_name() + " does not fit dataset " + dataset);
  require(clients >= 1, "clients must be at least 1");
  require(labels_per_client >= 1 && labels_per_client <= 10, "labels_per_client must be in [1, 10]");
  require(clients * labels_per_client >= 10, "clients * labels_per_client must be at least 10");
  require(participation > 0.0 && participation <= 1.0, "participation must be in (0, 1]");
  require(rounds >= 0, "rounds must be nonnegative");
  require(local_epochs >= 1 && attacker_epochs >= 1, "local_epochs and attacker_epochs must be at least 1");
  require(local_lr > 0.0, "local_lr must be positive");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(global_lr > 0.0, "global_lr must be positive");
  require(aggregation == "simplified" || aggregation == "weighted", "aggregation must be simplified or weighted");
  require(lambda_last_conv >= 0.0, "lambda_last_conv must be nonnegative");
  require(train_subset >= 0, "train_subset must be nonnegative");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must be in (0, 1)");
  const std::size_t channels = dataset == "cifar10" ? 3 : 1;
  require(norm_mean.size() == norm_std.size(), "norm_mean and norm_std must have the same length");
  require(norm_mean.empty() || norm_mean.size() == channels,
          "norm_mean needs " + std::to_string(channels) + " value(s) for " + dataset);
  for (double s : norm_std) require(s > 0.0, "norm_std values must be positive");

  require(attackers >= 0 && attackers <= clients, "attackers must be in [0, clients]");
  require(attacker_ids.empty() || static_cast<int>(attacker_ids.size()) == attackers,
          "attacker_ids lists " + std::to_string(attacker_ids.size()) + " ids but attackers = " +
              std::to_string(attackers));
  std::set<int> seen;
  for (int a : attacker_ids) {
    require(a >= 0 && a < clients, "attacker id " + std::to_string(a) + " is not a client");
    require(seen.insert(a).second, "attacker id " + std::to_string(a) + " is listed twice");
  }
  require(pattern == "corner" || pattern == "strips", "pattern must be corner or strips");
  require(pattern_size >= 1 && pattern_size <= 9, "pattern_size must be in [1, 9]");
  require(vic_label >= 0 && vic_label <= 9 && atk_label >= 0 && atk_label <= 9, "labels must be in [0, 9]");
  require(vic_label != atk_label,
          "vic_label and atk_label must differ (T != F), both are " + std::to_string(vic_label));
  require(alpha >= 1.0, "alpha must be at least 1");
  require(poison_fraction >= 0.0 && poison_fraction <= 1.0, "poison_fraction must be in [0, 1]");
  require(!dba || attackers >= 1, "dba needs at least one attacker");
  require(!pruning_aware || !oracle_checkpoint.empty(), "pruning_aware needs oracle_checkpoint");

  require(defense == "rank" || defense == "vote" || defense == "adjust" || defense == "none",
          "defense must be rank, vote, adjust or none");
  require(vote_rate > 0.0 && vote_rate < 1.0, "vote_rate must be in (0, 1)");
  require(drop_threshold > 0.0, "drop_threshold must be positive");
  require(prune_step >= 0, "prune_step must be nonnegative");
  require(delta > 0.0, "delta must be positive");
  require(!delta_grid.empty(), "delta_grid must not be empty");
  for (std::size_t i = 0; i < delta_grid.size(); ++i) {
    require(delta_grid[i] > 0.0, "delta_grid values must be positive");
    require(i == 0 || delta_grid[i] < delta_grid[i - 1], "delta_grid must be strictly descending");
  }
  require(finetune_rounds >= 0, "finetune_rounds must be nonnegative");
  require(finetune_patience >= 1, "finetune_patience must be at least 1");
  require(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
}

DataFiles data_files(std::string_view dataset, const std::filesystem::path& root) {
  DataFiles f;
  if (dataset == "cifar10") {
    for (int i = 1; i <= 5; ++i) f.train.push_back(root / "cifar10" / ("data_batch_" + std::to_string(i) + ".bin"));
    f.test.push_back(root / "cifar10" / "test_batch.bin");
  } else {
    const auto dir = root / std::string(dataset);
    f.train = {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte"};
    f.test = {dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
  }
  return f;
}

void ExperimentConfig::check_files() const {
  const auto files = data_files(dataset, data_root());
  for (const auto* list : {&files.train, &files.test})
    for (const auto& p : *list) require(std::filesystem::is_regular_file(p), "missing data file " + p.string());
  if (pruning_aware)
    require(std::filesystem::is_regular_file(oracle_checkpoint), "missing oracle checkpoint " + oracle_checkpoint);
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string> assigned;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!assigned.insert(key).second) throw ConfigError(where + "key '" + key + "' is set twice");
    try {
      std::visit(Assign{cfg, value}, it->member);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig cfg = parse_config_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  cfg.check_files();
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + std::visit(Format{cfg}, f.member) + "\n";
  return out;
}

std::string config_reference() {
  const ExperimentConfig defaults;
  std::ostringstream out;
  for (const auto& f : fields()) {
    std::string def = std::visit(Format{defaults}, f.member);
    out << f.key << " (" << std::visit(TypeName{}, f.member) << ", default " << (def.empty() ? "empty" : def)
        << "): " << f.doc << '\n';
  }
  return out.str();
}

}  // namespace fedprune::exp
