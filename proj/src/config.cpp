#include "aprune/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "aprune/errors.hpp"
#include "json.hpp"

namespace aprune {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Collects every problem before failing, so one round trip surfaces the
// whole list.
struct FieldErrors {
  std::vector<std::string> items;

  void add(const std::string& path, const std::string& what) {
    items.push_back(path + ": " + what);
  }
  void raise_if_any(const char* header) const {
    if (items.empty()) return;
    std::ostringstream msg;
    msg << header;
    for (const auto& e : items) msg << "\n  - " << e;
    throw ConfigError(msg.str());
  }
};

std::string dotted(const std::string& prefix, const char* key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Typed readers: absent keys keep the default; present keys must carry the
// right JSON type (no silent float->int truncation).

void read(const json& j, const std::string& prefix, const char* key, int& out,
          FieldErrors& errs) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer())
    errs.add(dotted(prefix, key), "expected an integer");
  else
    out = j.at(key).get<int>();
}

void read(const json& j, const std::string& prefix, const char* key,
          uint32_t& out, FieldErrors& errs) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer() ||
      (j.at(key).is_number_integer() && j.at(key).get<int64_t>() < 0))
    errs.add(dotted(prefix, key), "expected a non-negative integer");
  else
    out = (uint32_t)j.at(key).get<int64_t>();
}

void read(const json& j, const std::string& prefix, const char* key,
          double& out, FieldErrors& errs) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number())
    errs.add(dotted(prefix, key), "expected a number");
  else
    out = j.at(key).get<double>();
}

void read(const json& j, const std::string& prefix, const char* key, bool& out,
          FieldErrors& errs) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean())
    errs.add(dotted(prefix, key), "expected true or false");
  else
    out = j.at(key).get<bool>();
}

void read(const json& j, const std::string& prefix, const char* key,
          std::string& out, FieldErrors& errs) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string())
    errs.add(dotted(prefix, key), "expected a string");
  else
    out = j.at(key).get<std::string>();
}

void read(const json& j, const std::string& prefix, const char* key,
          std::vector<int>& out, FieldErrors& errs) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array()) {
    errs.add(dotted(prefix, key), "expected an array of integers");
    return;
  }
  std::vector<int> parsed;
  for (const auto& e : v) {
    if (!e.is_number_integer()) {
      errs.add(dotted(prefix, key), "expected an array of integers");
      return;
    }
    parsed.push_back(e.get<int>());
  }
  out = std::move(parsed);
}

void read(const json& j, const std::string& prefix, const char* key,
          std::vector<std::string>& out, FieldErrors& errs) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array()) {
    errs.add(dotted(prefix, key), "expected an array of strings");
    return;
  }
  std::vector<std::string> parsed;
  for (const auto& e : v) {
    if (!e.is_string()) {
      errs.add(dotted(prefix, key), "expected an array of strings");
      return;
    }
    parsed.push_back(e.get<std::string>());
  }
  out = std::move(parsed);
}

void flag_unknown_keys(const json& j, const std::string& prefix,
                       const std::set<std::string>& known,
                       FieldErrors& errs) {
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      errs.add(dotted(prefix, item.key().c_str()), "unknown field");
}

void expect_object(const json& j, const char* key, FieldErrors& errs) {
  if (j.contains(key) && !j.at(key).is_object())
    errs.add(key, "expected an object");
}

void parse_arch(const json& j, ArchConfig& a, FieldErrors& errs) {
  read(j, "arch", "family", a.family, errs);
  read(j, "arch", "depth", a.depth, errs);
  read(j, "arch", "widths", a.widths, errs);
  read(j, "arch", "multiplier", a.multiplier, errs);
  read(j, "arch", "num_classes", a.num_classes, errs);
  read(j, "arch", "input_hw", a.input_hw, errs);
  flag_unknown_keys(
      j, "arch",
      {"family", "depth", "widths", "multiplier", "num_classes", "input_hw"},
      errs);
}

void parse_data(const json& j, DataConfig& d, FieldErrors& errs) {
  read(j, "data", "source", d.source, errs);
  read(j, "data", "path", d.path, errs);
  read(j, "data", "per_class", d.per_class, errs);
  read(j, "data", "noise", d.noise, errs);
  read(j, "data", "seed", d.seed, errs);
  read(j, "data", "train_ratio", d.train_ratio, errs);
  read(j, "data", "split_seed", d.split_seed, errs);
  flag_unknown_keys(j, "data",
                    {"source", "path", "per_class", "noise", "seed",
                     "train_ratio", "split_seed"},
                    errs);
}

void parse_search(const json& j, SearchSettings& s, FieldErrors& errs) {
  read(j, "search", "epochs", s.epochs, errs);
  read(j, "search", "batch_size", s.batch_size, errs);
  std::string schedule = to_string(s.schedule);
  read(j, "search", "schedule", schedule, errs);
  try {
    s.schedule = schedule_kind_from_string(schedule);
  } catch (const ConfigError& e) {
    errs.add("search.schedule", e.what());
  }
  read(j, "search", "t0", s.t0, errs);
  read(j, "search", "annealing", s.annealing, errs);
  read(j, "search", "bilevel", s.bilevel, errs);
  read(j, "search", "w_lr", s.w_lr, errs);
  read(j, "search", "w_momentum", s.w_momentum, errs);
  read(j, "search", "w_weight_decay", s.w_weight_decay, errs);
  read(j, "search", "a_lr", s.a_lr, errs);
  read(j, "search", "a_weight_decay", s.a_weight_decay, errs);
  read(j, "search", "trace_every", s.trace_every, errs);
  read(j, "search", "augment", s.augment, errs);
  read(j, "search", "hflip", s.hflip, errs);
  read(j, "search", "seed", s.seed, errs);
  flag_unknown_keys(j, "search",
                    {"epochs", "batch_size", "schedule", "t0", "annealing",
                     "bilevel", "w_lr", "w_momentum", "w_weight_decay", "a_lr",
                     "a_weight_decay", "trace_every", "augment", "hflip",
                     "seed"},
                    errs);
}

void parse_penalties(const json& j, PenaltyConfig& p, FieldErrors& errs) {
  read(j, "penalties", "active", p.active, errs);
  read(j, "penalties", "lambda_flops", p.lambda_flops, errs);
  read(j, "penalties", "epsilon", p.epsilon, errs);
  read(j, "penalties", "lambda_symmetry", p.lambda_symmetry, errs);
  read(j, "penalties", "lambda_lasso", p.lambda_lasso, errs);
  read(j, "penalties", "flops_target", p.flops_target, errs);
  read(j, "penalties", "target_is_fraction", p.target_is_fraction, errs);
  flag_unknown_keys(j, "penalties",
                    {"active", "lambda_flops", "epsilon", "lambda_symmetry",
                     "lambda_lasso", "flops_target", "target_is_fraction"},
                    errs);
}

void parse_finetune(const json& j, FinetuneSettings& f, FieldErrors& errs) {
  read(j, "finetune", "epochs", f.epochs, errs);
  read(j, "finetune", "warmup_epochs", f.warmup_epochs, errs);
  read(j, "finetune", "lr", f.lr, errs);
  read(j, "finetune", "momentum", f.momentum, errs);
  read(j, "finetune", "weight_decay", f.weight_decay, errs);
  read(j, "finetune", "batch_size", f.batch_size, errs);
  read(j, "finetune", "augment", f.augment, errs);
  read(j, "finetune", "hflip", f.hflip, errs);
  read(j, "finetune", "seed", f.seed, errs);
  flag_unknown_keys(j, "finetune",
                    {"epochs", "warmup_epochs", "lr", "momentum",
                     "weight_decay", "batch_size", "augment", "hflip", "seed"},
                    errs);
}

void parse_space(const json& j, SpaceConfig& s, FieldErrors& errs) {
  read(j, "space", "kind", s.kind, errs);
  read(j, "space", "instances", s.instances, errs);
  read(j, "space", "band_low", s.band_low, errs);
  read(j, "space", "band_high", s.band_high, errs);
  read(j, "space", "slim_lasso", s.slim_lasso, errs);
  read(j, "space", "seed", s.seed, errs);
  flag_unknown_keys(
      j, "space",
      {"kind", "instances", "band_low", "band_high", "slim_lasso", "seed"},
      errs);
}

bool is_known_penalty(const std::string& name) {
  return name == "flops" || name == "symmetry" || name == "lasso";
}

void validate_into(const RunConfig& cfg, FieldErrors& errs);

}  // namespace

ArchitectureSpec ArchConfig::build() const {
  if (family == "resnet")
    return build_resnet_spec(depth, widths, num_classes, input_hw);
  if (family == "mobilenet")
    return build_mobilenet_spec(multiplier, num_classes, input_hw);
  throw ConfigError("arch.family: unknown family \"" + family + "\"");
}

SplitDataset DataConfig::load(const ArchConfig& arch) const {
  Dataset ds;
  if (source == "synthetic") {
    ds = make_synthetic_task(arch.num_classes, per_class, arch.input_hw, seed,
                             noise);
  } else {
    ds = load_small_image_corpus(path);
    FieldErrors errs;
    if (ds.num_classes != arch.num_classes)
      errs.add("arch.num_classes",
               "config says " + std::to_string(arch.num_classes) +
                   " but the corpus at data.path has " +
                   std::to_string(ds.num_classes));
    if (ds.height != arch.input_hw || ds.width != arch.input_hw)
      errs.add("arch.input_hw",
               "config says " + std::to_string(arch.input_hw) +
                   " but the corpus images are " + std::to_string(ds.height) +
                   "x" + std::to_string(ds.width));
    errs.raise_if_any("config does not match the corpus:");
  }
  return split(ds, train_ratio, split_seed);
}

RegularizerConfig PenaltyConfig::resolve(long long unpruned_flops) const {
  auto on = [&](const char* name) {
    for (const auto& a : active)
      if (a == name) return true;
    return false;
  };
  RegularizerConfig rc;
  rc.lambda_flops = on("flops") ? lambda_flops : 0.0;
  rc.lambda_sym = on("symmetry") ? lambda_symmetry : 0.0;
  rc.lambda_lasso = on("lasso") ? lambda_lasso : 0.0;
  rc.epsilon = epsilon;
  rc.target_flops = target_is_fraction
                        ? std::llround(flops_target * (double)unpruned_flops)
                        : std::llround(flops_target);
  return rc;
}

DesignSpaceConfig SpaceConfig::resolve(const ArchitectureSpec& base) const {
  DesignSpaceConfig d;
  d.base_spec = base;
  d.kind = space_kind_from_string(kind);
  d.num_instances = instances;
  d.slim_lasso = slim_lasso;
  d.seed = seed;
  if (band_low != 0.0 || band_high != 1.0) {
    const long long full = discrete_flops(base).total;
    d.has_band = true;
    d.band_low = (long long)std::llround(band_low * (double)full);
    d.band_high = (long long)std::llround(band_high * (double)full);
  }
  return d;
}

void RunConfig::validate() const {
  FieldErrors errs;
  validate_into(*this, errs);
  errs.raise_if_any("invalid config:");
}

namespace {

void validate_into(const RunConfig& cfg, FieldErrors& errs) {
  const ArchConfig& arch = cfg.arch;
  const DataConfig& data = cfg.data;
  const SearchSettings& search = cfg.search;
  const PenaltyConfig& penalties = cfg.penalties;
  const DeriveConfig& derive = cfg.derive;
  const FinetuneSettings& finetune = cfg.finetune;
  const SpaceConfig& space = cfg.space;

  // arch
  if (arch.family != "resnet" && arch.family != "mobilenet")
    errs.add("arch.family", "must be \"resnet\" or \"mobilenet\", got \"" +
                                arch.family + "\"");
  if (arch.family == "resnet") {
    if (arch.depth < 8 || (arch.depth - 2) % 6 != 0)
      errs.add("arch.depth", "residual depth must be 6n+2 with n >= 1, got " +
                                 std::to_string(arch.depth));
    if (arch.widths.size() != 3)
      errs.add("arch.widths", "need exactly 3 stage widths, got " +
                                  std::to_string(arch.widths.size()));
    for (int w : arch.widths)
      if (w < 1) {
        errs.add("arch.widths", "stage widths must be positive");
        break;
      }
  }
  if (arch.family == "mobilenet" &&
      (arch.multiplier <= 0.0 || arch.multiplier > 4.0))
    errs.add("arch.multiplier", "must lie in (0, 4], got " +
                                    std::to_string(arch.multiplier));
  if (arch.num_classes < 2)
    errs.add("arch.num_classes",
             "need at least 2 classes, got " + std::to_string(arch.num_classes));
  if (arch.input_hw < 8 || arch.input_hw % 4 != 0)
    errs.add("arch.input_hw", "must be a multiple of 4 and at least 8, got " +
                                  std::to_string(arch.input_hw));

  // data
  if (data.source != "synthetic" && data.source != "file")
    errs.add("data.source", "must be \"synthetic\" or \"file\", got \"" +
                                data.source + "\"");
  if (data.source == "file") {
    if (data.path.empty())
      errs.add("data.path", "required when data.source is \"file\"");
    else if (!std::filesystem::exists(data.path))
      errs.add("data.path", "no such file: " + data.path);
  }
  if (data.source == "synthetic" && data.per_class < 2)
    errs.add("data.per_class", "need at least 2 examples per class, got " +
                                   std::to_string(data.per_class));
  if (data.noise < 0.0)
    errs.add("data.noise", "must be non-negative");
  if (data.train_ratio <= 0.0 || data.train_ratio >= 1.0)
    errs.add("data.train_ratio",
             "must lie in (0,1), got " + std::to_string(data.train_ratio));

  // search
  if (search.epochs < 1) errs.add("search.epochs", "must be at least 1");
  if (search.batch_size < 1)
    errs.add("search.batch_size", "must be at least 1");
  if (search.t0 <= 0.0) errs.add("search.t0", "must be positive");
  if (search.w_lr <= 0.0) errs.add("search.w_lr", "must be positive");
  if (search.a_lr <= 0.0) errs.add("search.a_lr", "must be positive");
  if (search.w_momentum < 0.0 || search.w_momentum >= 1.0)
    errs.add("search.w_momentum", "must lie in [0,1)");
  if (search.w_weight_decay < 0.0)
    errs.add("search.w_weight_decay", "must be non-negative");
  if (search.a_weight_decay < 0.0)
    errs.add("search.a_weight_decay", "must be non-negative");
  if (search.trace_every < 1)
    errs.add("search.trace_every", "must be at least 1");

  // penalties
  for (const auto& name : penalties.active)
    if (!is_known_penalty(name))
      errs.add("penalties.active",
               "unknown penalty \"" + name +
                   "\" (choose from flops, symmetry, lasso)");
  if (penalties.lambda_flops < 0.0 || penalties.lambda_symmetry < 0.0 ||
      penalties.lambda_lasso < 0.0)
    errs.add("penalties", "penalty strengths must be non-negative");
  if (penalties.epsilon <= 0.0 || penalties.epsilon >= 1.0)
    errs.add("penalties.epsilon", "must lie in (0,1), got " +
                                      std::to_string(penalties.epsilon));
  if (penalties.flops_target <= 0.0)
    errs.add("penalties.flops_target", "must be positive");
  else if (penalties.target_is_fraction && penalties.flops_target > 1.0)
    errs.add("penalties.flops_target",
             "a fractional target cannot exceed 1.0, got " +
                 std::to_string(penalties.flops_target));

  // derive
  if (derive.threshold <= 0.0 || derive.threshold >= 1.0)
    errs.add("derive.threshold",
             "must lie in (0,1), got " + std::to_string(derive.threshold));

  // finetune
  if (finetune.epochs < 0) errs.add("finetune.epochs", "must be >= 0");
  if (finetune.warmup_epochs < 0)
    errs.add("finetune.warmup_epochs", "must be >= 0");
  if (finetune.lr <= 0.0) errs.add("finetune.lr", "must be positive");
  if (finetune.batch_size < 1)
    errs.add("finetune.batch_size", "must be at least 1");
  if (finetune.momentum < 0.0 || finetune.momentum >= 1.0)
    errs.add("finetune.momentum", "must lie in [0,1)");
  if (finetune.weight_decay < 0.0)
    errs.add("finetune.weight_decay", "must be non-negative");

  // space
  try {
    (void)space_kind_from_string(space.kind);
  } catch (const ConfigError& e) {
    errs.add("space.kind", e.what());
  }
  if (space.instances < 1) errs.add("space.instances", "must be at least 1");
  if (space.band_low < 0.0 || space.band_high > 1.0 ||
      space.band_low >= space.band_high)
    errs.add("space.band_low/band_high",
             "need 0 <= band_low < band_high <= 1");
  if (space.kind == "slimming" && space.band_high >= 1.0)
    errs.add("space.band_high",
             "slimming needs a cost band below the full model");
  if (space.slim_lasso < 0.0)
    errs.add("space.slim_lasso", "must be non-negative");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  // One pass collects every problem — structural, type, unknown-key, and
  // semantic — so a broken config is fixable in a single round trip.
  FieldErrors errs;
  for (const char* section :
       {"arch", "data", "search", "penalties", "derive", "finetune", "space"})
    expect_object(j, section, errs);
  flag_unknown_keys(j, "",
                    {"arch", "data", "search", "penalties", "derive",
                     "finetune", "space", "resolved"},
                    errs);

  RunConfig cfg;
  auto section_ok = [&](const char* name) {
    return j.contains(name) && j[name].is_object();
  };
  if (section_ok("arch")) parse_arch(j["arch"], cfg.arch, errs);
  if (section_ok("data")) parse_data(j["data"], cfg.data, errs);
  if (section_ok("search")) parse_search(j["search"], cfg.search, errs);
  if (section_ok("penalties"))
    parse_penalties(j["penalties"], cfg.penalties, errs);
  if (section_ok("derive")) {
    read(j["derive"], "derive", "threshold", cfg.derive.threshold, errs);
    flag_unknown_keys(j["derive"], "derive", {"threshold"}, errs);
  }
  if (section_ok("finetune")) parse_finetune(j["finetune"], cfg.finetune, errs);
  if (section_ok("space")) parse_space(j["space"], cfg.space, errs);

  validate_into(cfg, errs);
  errs.raise_if_any("invalid config:");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_to_json(const RunConfig& cfg,
                               long long unpruned_flops) {
  ordered_json j;
  j["arch"] = {{"family", cfg.arch.family},
               {"depth", cfg.arch.depth},
               {"widths", cfg.arch.widths},
               {"multiplier", cfg.arch.multiplier},
               {"num_classes", cfg.arch.num_classes},
               {"input_hw", cfg.arch.input_hw}};
  j["data"] = {{"source", cfg.data.source},
               {"path", cfg.data.path},
               {"per_class", cfg.data.per_class},
               {"noise", cfg.data.noise},
               {"seed", cfg.data.seed},
               {"train_ratio", cfg.data.train_ratio},
               {"split_seed", cfg.data.split_seed}};
  j["search"] = {{"epochs", cfg.search.epochs},
                 {"batch_size", cfg.search.batch_size},
                 {"schedule", to_string(cfg.search.schedule)},
                 {"t0", cfg.search.t0},
                 {"annealing", cfg.search.annealing},
                 {"bilevel", cfg.search.bilevel},
                 {"w_lr", cfg.search.w_lr},
                 {"w_momentum", cfg.search.w_momentum},
                 {"w_weight_decay", cfg.search.w_weight_decay},
                 {"a_lr", cfg.search.a_lr},
                 {"a_weight_decay", cfg.search.a_weight_decay},
                 {"trace_every", cfg.search.trace_every},
                 {"augment", cfg.search.augment},
                 {"hflip", cfg.search.hflip},
                 {"seed", cfg.search.seed}};
  j["penalties"] = {{"active", cfg.penalties.active},
                    {"lambda_flops", cfg.penalties.lambda_flops},
                    {"epsilon", cfg.penalties.epsilon},
                    {"lambda_symmetry", cfg.penalties.lambda_symmetry},
                    {"lambda_lasso", cfg.penalties.lambda_lasso},
                    {"flops_target", cfg.penalties.flops_target},
                    {"target_is_fraction", cfg.penalties.target_is_fraction}};
  j["derive"] = {{"threshold", cfg.derive.threshold}};
  j["finetune"] = {{"epochs", cfg.finetune.epochs},
                   {"warmup_epochs", cfg.finetune.warmup_epochs},
                   {"lr", cfg.finetune.lr},
                   {"momentum", cfg.finetune.momentum},
                   {"weight_decay", cfg.finetune.weight_decay},
                   {"batch_size", cfg.finetune.batch_size},
                   {"augment", cfg.finetune.augment},
                   {"hflip", cfg.finetune.hflip},
                   {"seed", cfg.finetune.seed}};
  j["space"] = {{"kind", cfg.space.kind},
                {"instances", cfg.space.instances},
                {"band_low", cfg.space.band_low},
                {"band_high", cfg.space.band_high},
                {"slim_lasso", cfg.space.slim_lasso},
                {"seed", cfg.space.seed}};
  if (unpruned_flops > 0) {
    const RegularizerConfig rc = cfg.penalties.resolve(unpruned_flops);
    j["resolved"] = {
        {"unpruned_flops", unpruned_flops},
        {"flops_target_absolute", (long long)std::llround(rc.target_flops)},
        {"dead_zone_low",
         (long long)std::llround((1.0 - rc.epsilon) * rc.target_flops)}};
  }
  return j.dump(2) + "\n";
}

}  // namespace aprune
