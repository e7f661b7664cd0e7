#include "aprune/search.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "aprune/errors.hpp"
#include "aprune/ops.hpp"

namespace aprune {

namespace {

std::vector<Parameter*> alpha_params(IndicatorSet& set) {
  std::vector<Parameter*> out;
  for (auto& p : set.alphas()) out.push_back(&p);
  return out;
}

void check_finite(double v, const char* what, const SearchState& st,
                  int batch) {
  if (std::isfinite(v)) return;
  std::ostringstream snap;
  snap << "epoch=" << st.epoch << " batch=" << batch
       << " temperature=" << st.indicators.temperature() << " " << what << "="
       << v;
  throw DivergenceError(std::string(what) + " is not finite", snap.str());
}

Dataset concat(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.images.insert(out.images.end(), b.images.begin(), b.images.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

}  // namespace

std::vector<IndicatorSite> indicator_sites_for(const ArchitectureSpec& spec) {
  std::vector<IndicatorSite> sites;
  for (const auto& s : spec.sites) {
    std::vector<std::string> names;
    for (int l : s.masked_layers) names.push_back(spec.layers[l].name);
    sites.push_back({s.name, s.width, std::move(names)});
  }
  return sites;
}

SearchState::SearchState(const ArchitectureSpec& spec_in,
                         const SearchSettings& settings_in,
                         const RegularizerConfig& reg_in)
    : settings(settings_in),
      reg(reg_in),
      spec(spec_in),
      net(spec_in, settings_in.seed),
      indicators(indicator_sites_for(spec_in), settings_in.seed ^ 0xA11CEu),
      w_opt(net.parameters(), settings_in.w_momentum,
            settings_in.w_weight_decay),
      a_opt(alpha_params(indicators), settings_in.a_lr, 0.5, 0.999,
            settings_in.a_weight_decay) {
  if (settings.epochs < 0) throw ConfigError("negative epoch count");
  reg.validate(discrete_flops(spec).total);
  indicators.set_temperature(settings.t0);
}

EpochMetrics search_epoch(SearchState& st, const SplitDataset& data) {
  const SearchSettings& s = st.settings;
  if (st.epoch >= s.epochs)
    throw ConfigError("epoch " + std::to_string(st.epoch) +
                      " past the end of a " + std::to_string(s.epochs) +
                      "-epoch search");

  TemperatureSchedule schedule{s.schedule, s.t0, s.epochs};
  const double t =
      s.annealing ? temperature_at(schedule, st.epoch + 1) : s.t0;
  st.indicators.set_temperature(t);
  const double wlr = cosine_lr(s.w_lr, st.epoch, s.epochs);

  EpochMetrics m;
  m.epoch = st.epoch;
  m.temperature = t;
  m.w_lr = wlr;

  Batcher train(data.train, s.batch_size, s.seed * 2654435761u + 1,
                /*shuffle=*/true, s.augment, s.hflip);
  train.start_epoch(st.epoch);
  Batcher val(data.val, s.batch_size, s.seed * 2654435761u + 2,
              /*shuffle=*/true, /*augment=*/false);
  int val_round = 0;
  val.start_epoch(st.epoch * 1000 + val_round);

  const bool alpha_steps = s.a_lr > 0.0;
  Tensor x;
  std::vector<int> y;
  int w_steps = 0, a_steps = 0;

  while (train.next(&x, &y)) {
    if (alpha_steps) {
      Tensor vx;
      std::vector<int> vy;
      if (!val.next(&vx, &vy)) {  // validation split is smaller: cycle it
        val.start_epoch(st.epoch * 1000 + ++val_round);
        val.next(&vx, &vy);
      }
      st.a_opt.zero_grad();
      Tensor val_loss = ops::softmax_cross_entropy(
          forward_masked(st.net, st.indicators, vx, /*training=*/true), vy);
      Tensor objective =
          ops::add(val_loss, reg::total_penalty(st.indicators, st.spec, st.reg));
      check_finite(objective.item(), "val_objective", st, a_steps);
      backward(objective);
      st.a_opt.step();
      m.val_loss += val_loss.item();
      ++a_steps;
    }

    st.w_opt.zero_grad();
    Tensor train_loss = ops::softmax_cross_entropy(
        forward_masked(st.net, st.indicators, x, /*training=*/true), y);
    check_finite(train_loss.item(), "train_loss", st, w_steps);
    backward(train_loss);
    st.w_opt.step(wlr);
    m.train_loss += train_loss.item();
    ++w_steps;
  }

  m.train_loss = w_steps ? m.train_loss / w_steps : 0.0;
  if (a_steps) {
    m.val_loss /= a_steps;
  } else {
    // no alpha updates this run: measure the val loss in eval mode instead
    NoGradGuard eval_only;
    Batcher eval(data.val, s.batch_size, 1, false, false);
    eval.start_epoch(0);
    double acc = 0.0;
    int batches = 0;
    Tensor vx;
    std::vector<int> vy;
    while (eval.next(&vx, &vy)) {
      acc += ops::softmax_cross_entropy(
                 forward_masked(st.net, st.indicators, vx, false), vy)
                 .item();
      ++batches;
    }
    m.val_loss = batches ? acc / batches : 0.0;
  }

  m.e_flops = reg::flops_expectation_value(st.indicators, st.spec);
  if (st.reg.lambda_flops != 0.0 && m.e_flops > 0.0)
    m.r_flops = reg::flops_regularizer_value(m.e_flops, st.reg.target_flops,
                                             st.reg.epsilon);
  m.r_sym = reg::symmetry_value(st.indicators, st.spec.residual_pairs);
  m.r_lasso = reg::lasso_value(st.indicators);
  m.trace_counts = st.indicators.trace_counts();

  ++st.epoch;
  return m;
}

double binarized_fraction(const IndicatorSet& indicators, double band) {
  int64_t total = 0, sharp = 0;
  for (int i = 0; i < indicators.num_sites(); ++i) {
    for (float a : indicators.alpha(i).tensor.data()) {
      const double h = relaxed_indicator(a, indicators.temperature());
      ++total;
      if (std::min(h, 1.0 - h) < band) ++sharp;
    }
  }
  return total ? (double)sharp / total : 1.0;
}

SearchResult run_search(const ArchitectureSpec& spec,
                        const SearchSettings& settings,
                        const RegularizerConfig& reg, const SplitDataset& data,
                        std::ostream* metrics_ndjson,
                        std::ostream* trace_csv) {
  SearchState st(spec, settings, reg);

  SplitDataset merged;
  const SplitDataset* active = &data;
  if (!settings.bilevel) {
    merged.train = concat(data.train, data.val);
    merged.val = merged.train;
    active = &merged;
  }

  if (trace_csv) {
    *trace_csv << "epoch";
    for (const auto& s : spec.sites) *trace_csv << "," << s.name;
    *trace_csv << "\n";
  }

  std::vector<EpochMetrics> history;
  for (int e = 0; e < settings.epochs; ++e) {
    EpochMetrics m = search_epoch(st, *active);

    if (metrics_ndjson) {
      nlohmann::json j;
      j["epoch"] = m.epoch;
      j["temperature"] = m.temperature;
      j["w_lr"] = m.w_lr;
      j["train_loss"] = m.train_loss;
      j["val_loss"] = m.val_loss;
      j["e_flops"] = m.e_flops;
      j["r_flops"] = m.r_flops;
      j["r_sym"] = m.r_sym;
      j["r_lasso"] = m.r_lasso;
      j["trace"] = m.trace_counts;
      *metrics_ndjson << j.dump() << "\n";
    }
    const bool cadence =
        settings.trace_every > 0 && (e + 1) % settings.trace_every == 0;
    if (trace_csv && (cadence || e + 1 == settings.epochs)) {
      *trace_csv << (e + 1);
      for (int c : m.trace_counts) *trace_csv << "," << c;
      *trace_csv << "\n";
    }
    history.push_back(std::move(m));
  }
  return SearchResult{spec, std::move(st.net), std::move(st.indicators),
                      std::move(history)};
}

FinetuneResult finetune(Network& net, const SplitDataset& data,
                        const FinetuneSettings& s) {
  FinetuneResult result;
  result.best_val_accuracy = evaluate_accuracy(net, data.val, s.batch_size);
  result.final_val_accuracy = result.best_val_accuracy;
  if (s.epochs == 0) return result;

  Sgd opt(net.parameters(), s.momentum, s.weight_decay);
  Batcher train(data.train, s.batch_size, s.seed * 2654435761u + 3,
                /*shuffle=*/true, s.augment, s.hflip);

  for (int e = 0; e < s.epochs; ++e) {
    const double lr = warmup_cosine_lr(s.lr, e, s.epochs, s.warmup_epochs);
    result.lr_trace.push_back(lr);
    train.start_epoch(e);
    Tensor x;
    std::vector<int> y;
    double loss_sum = 0.0;
    int batches = 0;
    while (train.next(&x, &y)) {
      opt.zero_grad();
      Tensor loss =
          ops::softmax_cross_entropy(net.forward(x, nullptr, true), y);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        std::ostringstream snap;
        snap << "finetune epoch=" << e << " batch=" << batches
             << " lr=" << lr << " loss=" << lv;
        throw DivergenceError("fine-tune loss is not finite", snap.str());
      }
      backward(loss);
      opt.step(lr);
      loss_sum += lv;
      ++batches;
    }
    result.train_loss_history.push_back(batches ? loss_sum / batches : 0.0);
    const double acc = evaluate_accuracy(net, data.val, s.batch_size);
    result.val_acc_history.push_back(acc);
    result.final_val_accuracy = acc;
    result.best_val_accuracy = std::max(result.best_val_accuracy, acc);
  }
  return result;
}

double evaluate_accuracy(Network& net, const Dataset& ds, int batch_size) {
  NoGradGuard eval_only;
  Batcher batches(ds, batch_size, 1, false, false);
  batches.start_epoch(0);
  Tensor x;
  std::vector<int> y;
  int64_t hits = 0, seen = 0;
  while (batches.next(&x, &y)) {
    Tensor logits = net.forward(x, nullptr, false);
    hits += (int64_t)std::llround(accuracy(logits, y) * y.size());
    seen += (int64_t)y.size();
  }
  return seen ? (double)hits / seen : 0.0;
}

}  // namespace aprune
