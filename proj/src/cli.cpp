#include "aprune/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "aprune/derive.hpp"
#include "aprune/errors.hpp"
#include "aprune/space.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace aprune {

const char* kToolVersion = "0.1.0";

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::string percent(double fraction, int decimals = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, fraction * 100.0);
  return buf;
}

std::string human_flops(long long f) {
  char buf[32];
  if (f >= 1000000000LL)
    std::snprintf(buf, sizeof buf, "%.2fG", (double)f / 1e9);
  else if (f >= 1000000LL)
    std::snprintf(buf, sizeof buf, "%.2fM", (double)f / 1e6);
  else if (f >= 1000LL)
    std::snprintf(buf, sizeof buf, "%.2fK", (double)f / 1e3);
  else
    std::snprintf(buf, sizeof buf, "%lld", f);
  return buf;
}

std::string model_name(const ArchConfig& arch) {
  if (arch.family == "resnet") return "resnet" + std::to_string(arch.depth);
  std::ostringstream s;
  s << "mobilenet-" << arch.multiplier;
  return s.str();
}

// Numbers behind both `eval` and `report`.
struct EvalNumbers {
  double unpruned_accuracy = 0.0;
  double pruned_accuracy = 0.0;
  double acc_drop = 0.0;  // unpruned - pruned; negative = improvement
  long long flops_unpruned = 0;
  long long flops_pruned = 0;
  double flops_ratio = 1.0;
  double pruning_ratio = 0.0;
  std::string weights;  // "derived" | "finetuned"
};

void require_artifact(const std::string& run_dir, const std::string& file,
                      const std::string& producer) {
  if (!fs::exists(run_dir + "/" + file))
    throw ConfigError("no " + file + " in " + run_dir + "; run `" + producer +
                      "` first");
}

ArchitectureSpec load_run_spec(const std::string& run_dir) {
  require_artifact(run_dir, "supernet.arch", "search");
  ArchitectureSpec spec = spec_from_text(read_text(run_dir + "/supernet.arch"));
  spec.validate();
  return spec;
}

EvalNumbers compute_eval(const std::string& run_dir, const RunConfig& cfg) {
  ArchitectureSpec spec = load_run_spec(run_dir);
  Network supernet(spec, 0);
  load_network_weights(supernet, run_dir + "/supernet.weights");

  require_artifact(run_dir, "pruned.arch", "derive");
  PrunedModel model = load_pruned(run_dir + "/pruned");

  EvalNumbers n;
  n.weights = "derived";
  if (fs::exists(run_dir + "/finetuned.weights")) {
    load_network_weights(model.net, run_dir + "/finetuned.weights");
    n.weights = "finetuned";
  }

  SplitDataset data = cfg.data.load(cfg.arch);
  n.unpruned_accuracy =
      evaluate_accuracy(supernet, data.val, cfg.finetune.batch_size);
  n.pruned_accuracy =
      evaluate_accuracy(model.net, data.val, cfg.finetune.batch_size);
  n.acc_drop = n.unpruned_accuracy - n.pruned_accuracy;
  n.flops_unpruned = discrete_flops(spec).total;
  n.flops_pruned = discrete_flops(model.spec).total;
  n.flops_ratio = n.flops_unpruned
                      ? (double)n.flops_pruned / (double)n.flops_unpruned
                      : 1.0;
  n.pruning_ratio = 1.0 - n.flops_ratio;
  return n;
}

void write_eval_json(const EvalNumbers& n, const std::string& path) {
  ordered_json j;
  j["weights"] = n.weights;
  j["unpruned_accuracy"] = n.unpruned_accuracy;
  j["pruned_accuracy"] = n.pruned_accuracy;
  j["acc_drop"] = n.acc_drop;
  j["flops_unpruned"] = n.flops_unpruned;
  j["flops_pruned"] = n.flops_pruned;
  j["flops_ratio"] = n.flops_ratio;
  j["pruning_ratio"] = n.pruning_ratio;
  write_text(path, j.dump(2) + "\n");
}

EvalNumbers read_eval_json(const std::string& path) {
  json j = json::parse(read_text(path));
  EvalNumbers n;
  n.weights = j.at("weights").get<std::string>();
  n.unpruned_accuracy = j.at("unpruned_accuracy").get<double>();
  n.pruned_accuracy = j.at("pruned_accuracy").get<double>();
  n.acc_drop = j.at("acc_drop").get<double>();
  n.flops_unpruned = j.at("flops_unpruned").get<long long>();
  n.flops_pruned = j.at("flops_pruned").get<long long>();
  n.flops_ratio = j.at("flops_ratio").get<double>();
  n.pruning_ratio = j.at("pruning_ratio").get<double>();
  return n;
}

std::string default_run_dir(const std::string& config_path,
                            const char* suffix) {
  const char* root = std::getenv("APRUNE_RUN_ROOT");
  std::string base = (root && *root) ? root : "runs";
  return base + "/" + fs::path(config_path).stem().string() + suffix;
}

}  // namespace

void RunManifest::add_artifact(const std::string& name,
                               const std::string& rel_path) {
  for (auto& [k, v] : artifacts)
    if (k == name) {
      v = rel_path;
      return;
    }
  artifacts.emplace_back(name, rel_path);
}

const std::string* RunManifest::find_artifact(const std::string& name) const {
  for (const auto& [k, v] : artifacts)
    if (k == name) return &v;
  return nullptr;
}

std::string iso_utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void save_manifest(RunManifest& m, const std::string& run_dir) {
  m.updated = iso_utc_now();
  if (m.created.empty()) m.created = m.updated;
  if (m.version.empty()) m.version = kToolVersion;
  ordered_json j;
  j["version"] = m.version;
  j["created"] = m.created;
  j["updated"] = m.updated;
  j["seed"] = m.seed;
  j["config"] = ordered_json::parse(m.config_json);
  ordered_json arts = ordered_json::object();
  for (const auto& [k, v] : m.artifacts) arts[k] = v;
  j["artifacts"] = arts;
  write_text(run_dir + "/manifest.json", j.dump(2) + "\n");
}

RunManifest load_manifest(const std::string& run_dir) {
  const std::string path = run_dir + "/manifest.json";
  if (!fs::exists(path))
    throw IoError("not a run directory (no manifest.json): " + run_dir);
  ordered_json j;
  try {
    j = ordered_json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path + " is not valid JSON: " + e.what());
  }
  RunManifest m;
  m.version = j.value("version", "");
  m.created = j.value("created", "");
  m.updated = j.value("updated", "");
  m.seed = j.value("seed", 0u);
  if (!j.contains("config"))
    throw IoError(path + " has no config snapshot");
  m.config_json = j["config"].dump(2);
  if (j.contains("artifacts"))
    for (const auto& item : j["artifacts"].items())
      m.artifacts.emplace_back(item.key(), item.value().get<std::string>());
  return m;
}

void save_alpha_snapshot(const IndicatorSet& set, const std::string& path) {
  ordered_json j;
  j["temperature"] = set.temperature();
  ordered_json sites = ordered_json::array();
  for (int i = 0; i < set.num_sites(); ++i) {
    ordered_json s;
    s["name"] = set.site(i).name;
    ordered_json vals = ordered_json::array();
    // store in double: exact for every float, and JSON round-trips doubles
    for (float a : set.alpha(i).tensor.data()) vals.push_back((double)a);
    s["alpha"] = vals;
    sites.push_back(s);
  }
  j["sites"] = sites;
  write_text(path, j.dump(2) + "\n");
}

void load_alpha_snapshot(IndicatorSet& set, const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path + " is not valid JSON: " + e.what());
  }
  if (!j.contains("sites") || !j["sites"].is_array() ||
      (int)j["sites"].size() != set.num_sites())
    throw IoError(path + ": snapshot does not match the architecture (" +
                  std::to_string(set.num_sites()) + " sites expected)");
  for (int i = 0; i < set.num_sites(); ++i) {
    const auto& s = j["sites"][i];
    if (s.at("name").get<std::string>() != set.site(i).name)
      throw IoError(path + ": site " + std::to_string(i) + " is \"" +
                    s.at("name").get<std::string>() + "\", expected \"" +
                    set.site(i).name + "\"");
    const auto& vals = s.at("alpha");
    auto& alpha = set.alpha(i).tensor.data();
    if (vals.size() != alpha.size())
      throw IoError(path + ": site " + set.site(i).name + " has " +
                    std::to_string(vals.size()) + " channels, expected " +
                    std::to_string(alpha.size()));
    for (size_t c = 0; c < alpha.size(); ++c)
      alpha[c] = (float)vals[c].get<double>();
  }
  set.set_temperature(j.at("temperature").get<double>());
}

int cmd_search(const SearchCmdOptions& opt, std::ostream& out) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (opt.no_annealing) cfg.search.annealing = false;
  if (opt.no_bilevel) cfg.search.bilevel = false;
  if (!opt.reg.empty()) {
    if (opt.reg.size() == 1 && opt.reg[0] == "none")
      cfg.penalties.active.clear();
    else
      cfg.penalties.active = opt.reg;
  }
  if (opt.seed >= 0) cfg.search.seed = (uint32_t)opt.seed;
  cfg.validate();

  ArchitectureSpec spec = cfg.arch.build();
  spec.validate();
  const long long full = discrete_flops(spec).total;
  RegularizerConfig reg = cfg.penalties.resolve(full);
  reg.validate(full);
  const std::string snapshot = run_config_to_json(cfg, full);

  if (opt.dry_run) {
    out << snapshot;
    return kExitOk;
  }

  fs::create_directories(opt.run_dir);
  write_text(opt.run_dir + "/config.json", snapshot);

  SplitDataset data = cfg.data.load(cfg.arch);
  out << "corpus: " << data.train.size() << " train / " << data.val.size()
      << " val examples (train checksum " << std::hex
      << dataset_checksum(data.train) << std::dec << ")\n";
  out << "searching " << cfg.search.epochs << " epochs over "
      << spec.sites.size() << " sites, unpruned cost " << full << ", target "
      << (long long)std::llround(reg.target_flops) << "\n";

  std::ofstream ndjson(opt.run_dir + "/search_metrics.ndjson");
  std::ofstream trace(opt.run_dir + "/search_trace.csv");
  if (!ndjson || !trace)
    throw IoError("cannot write logs under " + opt.run_dir);
  SearchResult res = run_search(spec, cfg.search, reg, data, &ndjson, &trace);

  save_network_weights(res.net, opt.run_dir + "/supernet.weights");
  save_alpha_snapshot(res.indicators, opt.run_dir + "/alpha.json");
  write_text(opt.run_dir + "/supernet.arch", spec_to_text(res.spec));

  RunManifest m;
  m.seed = cfg.search.seed;
  m.config_json = snapshot;
  m.add_artifact("config", "config.json");
  m.add_artifact("search_metrics", "search_metrics.ndjson");
  m.add_artifact("search_trace", "search_trace.csv");
  m.add_artifact("supernet_weights", "supernet.weights");
  m.add_artifact("alpha_snapshot", "alpha.json");
  m.add_artifact("supernet_arch", "supernet.arch");
  save_manifest(m, opt.run_dir);

  const EpochMetrics& last = res.history.back();
  out << "search finished: temperature " << last.temperature
      << ", expected cost " << std::llround(last.e_flops) << " ("
      << percent(last.e_flops / (double)full, 1) << " of unpruned)\n";
  out << "binarized fraction: " << binarized_fraction(res.indicators) << "\n";
  out << "run directory: " << opt.run_dir << "\n";
  return kExitOk;
}

int cmd_derive(const std::string& run_dir, double threshold_override,
               std::ostream& out) {
  RunManifest m = load_manifest(run_dir);
  RunConfig cfg = parse_run_config(m.config_json);
  ArchitectureSpec spec = load_run_spec(run_dir);
  Network supernet(spec, 0);
  load_network_weights(supernet, run_dir + "/supernet.weights");
  IndicatorSet indicators(indicator_sites_for(spec), 0);
  load_alpha_snapshot(indicators, run_dir + "/alpha.json");

  const double threshold =
      threshold_override >= 0.0 ? threshold_override : cfg.derive.threshold;
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("derive threshold must lie in (0,1), got " +
                      std::to_string(threshold));

  auto keep = keep_masks(indicators, threshold);
  PrunedModel model = derive(supernet, keep);  // CollapseError exits 4

  // spot-check: the derived model must match the hard-masked supernet
  SplitDataset data = cfg.data.load(cfg.arch);
  Batcher batch(data.val, (int)std::min<int64_t>(16, data.val.size()), 1,
                false, false);
  batch.start_epoch(0);
  Tensor images;
  std::vector<int> labels;
  batch.next(&images, &labels);
  const double gap = verify_equivalence(supernet, keep, model, images);

  save_pruned(model, run_dir + "/pruned");

  std::ofstream fcsv(run_dir + "/pruned_flops.csv");
  if (!fcsv) throw IoError("cannot write " + run_dir + "/pruned_flops.csv");
  fcsv << "layer,flops\n";
  for (const auto& e : model.flops.per_layer)
    fcsv << e.layer << "," << e.flops << "\n";
  fcsv << "total," << model.flops.total << "\n";
  fcsv << std::setprecision(17) << "ratio_vs_unpruned,"
       << model.flops.ratio_vs_unpruned << "\n";

  m.add_artifact("pruned_arch", "pruned.arch");
  m.add_artifact("pruned_kept", "pruned.kept");
  m.add_artifact("pruned_weights", "pruned.weights");
  m.add_artifact("pruned_flops", "pruned_flops.csv");
  save_manifest(m, run_dir);

  out << "derived pruned model at threshold " << threshold << "\n";
  for (size_t s = 0; s < spec.sites.size(); ++s)
    out << "  " << spec.sites[s].name << ": kept " << model.kept[s].size()
        << " of " << spec.sites[s].width << "\n";
  out << "cost " << model.flops.total << " ("
      << percent(model.flops.ratio_vs_unpruned, 1) << " of unpruned, pruning "
      << "ratio " << percent(1.0 - model.flops.ratio_vs_unpruned, 1) << ")\n";
  out << "max logit gap vs the masked supernet: " << gap << "\n";
  return kExitOk;
}

int cmd_finetune(const std::string& run_dir, std::ostream& out) {
  RunManifest m = load_manifest(run_dir);
  RunConfig cfg = parse_run_config(m.config_json);
  require_artifact(run_dir, "pruned.arch", "derive");
  PrunedModel model = load_pruned(run_dir + "/pruned");
  SplitDataset data = cfg.data.load(cfg.arch);

  out << "fine-tuning for " << cfg.finetune.epochs << " epochs\n";
  FinetuneResult res = finetune(model.net, data, cfg.finetune);

  save_network_weights(model.net, run_dir + "/finetuned.weights");
  std::ofstream log(run_dir + "/finetune_log.csv");
  if (!log) throw IoError("cannot write " + run_dir + "/finetune_log.csv");
  log << std::setprecision(9) << "epoch,lr,train_loss,val_accuracy\n";
  for (size_t e = 0; e < res.lr_trace.size(); ++e)
    log << e << "," << res.lr_trace[e] << "," << res.train_loss_history[e]
        << "," << res.val_acc_history[e] << "\n";

  m.add_artifact("finetuned_weights", "finetuned.weights");
  m.add_artifact("finetune_log", "finetune_log.csv");
  save_manifest(m, run_dir);

  out << "fine-tune finished: best " << percent(res.best_val_accuracy)
      << ", final " << percent(res.final_val_accuracy) << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, std::ostream& out) {
  RunManifest m = load_manifest(run_dir);
  RunConfig cfg = parse_run_config(m.config_json);
  EvalNumbers n = compute_eval(run_dir, cfg);
  write_eval_json(n, run_dir + "/eval.json");
  m.add_artifact("eval", "eval.json");
  save_manifest(m, run_dir);

  out << "unpruned supernet accuracy: " << percent(n.unpruned_accuracy)
      << "\n";
  out << "pruned model accuracy (" << n.weights
      << " weights): " << percent(n.pruned_accuracy) << "\n";
  out << "accuracy drop: " << percent(n.acc_drop)
      << " (negative means the pruned model is better)\n";
  out << "cost: " << human_flops(n.flops_pruned) << " of "
      << human_flops(n.flops_unpruned) << " multiply-accumulates, pruning "
      << "ratio " << percent(n.pruning_ratio, 1) << "\n";
  return kExitOk;
}

int cmd_report(const std::string& run_dir, std::ostream& out) {
  RunManifest m = load_manifest(run_dir);
  RunConfig cfg = parse_run_config(m.config_json);

  EvalNumbers n;
  if (fs::exists(run_dir + "/eval.json")) {
    n = read_eval_json(run_dir + "/eval.json");
  } else {
    n = compute_eval(run_dir, cfg);
    write_eval_json(n, run_dir + "/eval.json");
    m.add_artifact("eval", "eval.json");
  }

  const std::string name = model_name(cfg.arch);
  const std::string flops_col =
      human_flops(n.flops_pruned) + " (" + percent(n.pruning_ratio, 1) + ")";
  out << std::left << std::setw(16) << "Model" << std::setw(14)
      << "Pruning Acc" << std::setw(11) << "Acc Drop"
      << "FLOPs (pruning ratio)\n";
  out << std::left << std::setw(16) << name << std::setw(14)
      << percent(n.pruned_accuracy) << std::setw(11) << percent(n.acc_drop)
      << flops_col << "\n";

  std::ofstream csv(run_dir + "/report.csv");
  if (!csv) throw IoError("cannot write " + run_dir + "/report.csv");
  csv << std::setprecision(9)
      << "model,pruning_acc,acc_drop,flops,flops_ratio,pruning_ratio\n"
      << name << "," << n.pruned_accuracy << "," << n.acc_drop << ","
      << n.flops_pruned << "," << n.flops_ratio << "," << n.pruning_ratio
      << "\n";

  m.add_artifact("report", "report.csv");
  save_manifest(m, run_dir);
  return kExitOk;
}

int cmd_space(const SpaceCmdOptions& opt, std::ostream& out) {
  RunConfig cfg = load_run_config(opt.config_path);
  if (!opt.kind.empty()) cfg.space.kind = opt.kind;
  if (opt.instances > 0) cfg.space.instances = opt.instances;
  if (opt.seed >= 0) cfg.space.seed = (uint32_t)opt.seed;
  cfg.validate();

  ArchitectureSpec spec = cfg.arch.build();
  spec.validate();
  DesignSpaceConfig d = cfg.space.resolve(spec);
  d.validate();
  SplitDataset data = cfg.data.load(cfg.arch);

  fs::create_directories(opt.run_dir);
  write_text(opt.run_dir + "/config.json",
             run_config_to_json(cfg, discrete_flops(spec).total));

  out << "sweeping " << d.num_instances << " " << to_string(d.kind)
      << " instances\n";
  SpaceEvaluation ev = evaluate_space(d, data, cfg.finetune, &out);

  std::ofstream csv(opt.run_dir + "/space.csv");
  if (!csv) throw IoError("cannot write " + opt.run_dir + "/space.csv");
  export_space_csv(ev, csv);

  ordered_json j;
  j["kind"] = to_string(d.kind);
  j["instances"] = d.num_instances;
  j["trained"] = ev.summary.trained;
  j["out_of_band"] = ev.summary.out_of_band;
  j["diverged"] = ev.summary.diverged;
  j["best_id"] = ev.summary.best_id;
  j["best_accuracy"] = ev.summary.best_accuracy;
  j["mean_accuracy"] = ev.summary.mean_accuracy;
  j["stdev_accuracy"] = ev.summary.stdev_accuracy;
  j["status"] = ev.summary.status;
  write_text(opt.run_dir + "/space_summary.json", j.dump(2) + "\n");

  RunManifest m;
  m.seed = cfg.space.seed;
  m.config_json = run_config_to_json(cfg, discrete_flops(spec).total);
  m.add_artifact("config", "config.json");
  m.add_artifact("space_csv", "space.csv");
  m.add_artifact("space_summary", "space_summary.json");
  save_manifest(m, opt.run_dir);

  out << "status: " << ev.summary.status << "; trained " << ev.summary.trained
      << ", out of band " << ev.summary.out_of_band << ", diverged "
      << ev.summary.diverged << "\n";
  if (ev.summary.best_id >= 0)
    out << "best instance " << ev.summary.best_id << ": accuracy "
        << percent(ev.summary.best_accuracy) << " (mean "
        << percent(ev.summary.mean_accuracy) << ")\n";
  out << "run directory: " << opt.run_dir << "\n";
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
#ifdef _OPENMP
  if (const char* threads = std::getenv("APRUNE_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) omp_set_num_threads(n);
  }
#endif

  CLI::App app{
      "aprune: differentiable channel-width search, pruning, and evaluation"};
  app.set_version_flag("--version", std::string("aprune ") + kToolVersion);
  app.require_subcommand(1);

  SearchCmdOptions sopt;
  auto* search = app.add_subcommand(
      "search", "Optimize channel indicators and write a run directory");
  search->add_option("config", sopt.config_path, "JSON config file")
      ->required();
  search->add_option("-o,--out", sopt.run_dir,
                     "run directory (default $APRUNE_RUN_ROOT/<config stem>)");
  search->add_flag("--dry-run", sopt.dry_run,
                   "print the resolved config (with the absolute FLOPs "
                   "target) and exit without training");
  search->add_flag("--no-annealing", sopt.no_annealing,
                   "ablation: hold the temperature at t0");
  search->add_flag("--no-bilevel", sopt.no_bilevel,
                   "ablation: update weights and indicators on one merged "
                   "split");
  search
      ->add_option("--reg", sopt.reg,
                   "ablation: replace the active penalty set "
                   "(comma-separated from flops,symmetry,lasso; or none)")
      ->delimiter(',');
  search->add_option("--seed", sopt.seed, "override search.seed");

  std::string derive_dir;
  double threshold = -1.0;
  auto* derive_cmd = app.add_subcommand(
      "derive", "Cut the searched supernet into a standalone pruned model");
  derive_cmd->add_option("run_dir", derive_dir, "run directory from `search`")
      ->required();
  derive_cmd->add_option("--threshold", threshold,
                         "keep-iff-indicator-above threshold (default from "
                         "the config)");

  std::string finetune_dir;
  auto* finetune_cmd =
      app.add_subcommand("finetune", "Train the derived pruned model");
  finetune_cmd
      ->add_option("run_dir", finetune_dir, "run directory from `derive`")
      ->required();

  std::string eval_dir;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Measure pruned vs unpruned validation accuracy");
  eval_cmd->add_option("run_dir", eval_dir, "run directory")->required();

  std::string report_dir;
  auto* report_cmd = app.add_subcommand(
      "report", "Summary table: Pruning Acc / Acc Drop / FLOPs");
  report_cmd->add_option("run_dir", report_dir, "run directory")->required();

  SpaceCmdOptions spopt;
  auto* space_cmd = app.add_subcommand(
      "space", "Sample and train a width design-space baseline");
  space_cmd->add_option("config", spopt.config_path, "JSON config file")
      ->required();
  space_cmd->add_option("-o,--out", spopt.run_dir,
                        "run directory (default $APRUNE_RUN_ROOT/<config "
                        "stem>-space)");
  space_cmd->add_option("--kind", spopt.kind,
                        "override space.kind (random|constrained|slimming)");
  space_cmd->add_option("-n,--instances", spopt.instances,
                        "override space.instances");
  space_cmd->add_option("--seed", spopt.seed, "override space.seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (search->parsed()) {
      if (sopt.run_dir.empty())
        sopt.run_dir = default_run_dir(sopt.config_path, "");
      return cmd_search(sopt, out);
    }
    if (derive_cmd->parsed()) return cmd_derive(derive_dir, threshold, out);
    if (finetune_cmd->parsed()) return cmd_finetune(finetune_dir, out);
    if (eval_cmd->parsed()) return cmd_eval(eval_dir, out);
    if (report_cmd->parsed()) return cmd_report(report_dir, out);
    if (space_cmd->parsed()) {
      if (spopt.run_dir.empty())
        spopt.run_dir = default_run_dir(spopt.config_path, "-space");
      return cmd_space(spopt, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n" << e.snapshot() << "\n";
    return kExitDivergence;
  } catch (const CollapseError& e) {
    err << "derivation collapse: " << e.what() << "\n";
    return kExitCollapse;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;  // unreachable: a subcommand is required
}

}  // namespace aprune
