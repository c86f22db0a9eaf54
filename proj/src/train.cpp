#include "summit/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <thread>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

namespace {

// Samples per gradient chunk. Chunks are reduced in index order, so the
// result does not depend on how many threads computed them.
constexpr std::size_t kChunk = 16;

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t tasks, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::min(resolve_threads(threads), tasks);
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct Adam {
  ParamSet<float> m, v;
  std::size_t step = 0;
};

void adam_update(ParamSet<float>& params, const ParamSet<float>& grads, Adam& st, const TrainConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const auto b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto eps = static_cast<float>(cfg.epsilon);
  const auto ic1 = static_cast<float>(1.0 / c1), ic2 = static_cast<float>(1.0 / c2);
  for (auto& [path, p] : params) {
    auto g = grads.at(path).values();
    auto m = st.m.at(path).values();
    auto v = st.v.at(path).values();
    auto w = p.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] * ic1) / (std::sqrt(v[i] * ic2) + eps);
    }
  }
}

double grad_norm(const ParamSet<float>& g) {
  double s = 0.0;
  for (const auto& [_, t] : g) {
    for (float v : t.values()) s += static_cast<double>(v) * v;
  }
  return std::sqrt(s);
}

}  // namespace

std::string to_string(StopMetric m) {
  switch (m) {
    case StopMetric::Auprc: return "auprc";
    case StopMetric::Auroc: return "auroc";
    case StopMetric::Either: return "either";
  }
  return "unknown";
}

StopMetric parse_stop_metric(const std::string& s) {
  if (s == "auprc") return StopMetric::Auprc;
  if (s == "auroc") return StopMetric::Auroc;
  if (s == "either") return StopMetric::Either;
  throw ConfigError("unknown stop metric '" + s + "' (expected auprc|auroc|either)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (eval_every == 0) throw ConfigError("train: eval_every must be positive");
  if (patience == 0 || patience % eval_every != 0) {
    throw ConfigError("train: patience must be a positive multiple of eval_every");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
}

std::vector<double> predict_prepared(const Checkpoint& ck, const std::vector<SummaryMatrix>& inputs,
                                     std::size_t threads) {
  const Architecture arch = ck.architecture();
  std::vector<double> out(inputs.size());
  parallel_for(inputs.size(), threads,
               [&](std::size_t i) { out[i] = static_cast<double>(predict(ck.params, arch, inputs[i])); });
  return out;
}

std::vector<double> predict_all(const Checkpoint& ck, const Dataset& ds, std::size_t threads) {
  return predict_prepared(ck, ck.prepare(ds), threads);
}

MetricsReport evaluate(const Checkpoint& ck, const Dataset& ds, const BootstrapOptions& opts, std::size_t threads) {
  const auto scores = predict_all(ck, ds, threads);
  const auto labels = ds.labels();
  std::vector<double> times;
  bool all_times = !ds.samples.empty();
  for (const auto& s : ds.samples) all_times = all_times && s.event_time.has_value();
  if (all_times) {
    for (const auto& s : ds.samples) times.push_back(*s.event_time);
  }
  return compute_report(scores, labels, times, opts);
}

TrainResult train(const PipelineConfig& pipeline, const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate();
  pipeline.model.validate();
  pipeline.loss.validate();
  const auto labels = ds.labels();
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == labels.size()) throw DataError("single-class training partition");

  TrainResult result;
  result.split = stratified_indices(labels, cfg.validation_fraction, derive_seed(cfg.seed, "validation-split"));
  const Dataset train_ds = ds.subset(result.split.train);
  const Dataset val_ds = ds.subset(result.split.test);

  Checkpoint& ck = result.checkpoint;
  ck.model = pipeline.model;
  ck.loss = pipeline.loss;
  ck.summarization = pipeline.summarization;
  ck.variant = pipeline.variant;
  ck.impute = pipeline.impute;
  ck.schema = ds.schema;
  ck.observation_window = ds.observation_window;
  ck.windows = window_count(ds.observation_window, pipeline.summarization.window);
  ck.seed = cfg.seed;

  auto train_raw = summarize_all(train_ds, ck.summarization);
  ck.normalizer = fit_normalizer(train_raw, ds.schema);
  std::vector<SummaryMatrix> train_in;
  train_in.reserve(train_raw.size());
  for (const auto& sm : train_raw) train_in.push_back(apply_normalizer(sm, ck.normalizer, ck.impute));
  train_raw.clear();
  const auto val_in = ck.prepare(val_ds);
  const auto train_labels = train_ds.labels();
  const auto val_labels = val_ds.labels();

  const Architecture arch = ck.architecture();
  ck.params = init_params<float>(arch, derive_seed(cfg.seed, "init"));
  ParamSet<float> best = ck.params;

  Adam adam{ck.params.zeros_like(), ck.params.zeros_like(), 0};
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(train_in.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory& h = result.history;
  double best_auprc = -std::numeric_limits<double>::infinity();
  double best_auroc = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const std::size_t max_stale = cfg.patience / cfg.eval_every;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
    double loss_sum = 0.0, norm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t count = end - start;
      const std::size_t chunks = (count + kChunk - 1) / kChunk;
      std::vector<ParamSet<float>> chunk_grads(chunks);
      std::vector<double> chunk_loss(chunks, 0.0);
      const float scale = 1.0f / static_cast<float>(count);
      parallel_for(chunks, cfg.threads, [&](std::size_t c) {
        ParamSet<float> g = ck.params.zeros_like();
        double l = 0.0;
        for (std::size_t k = start + c * kChunk; k < std::min(end, start + (c + 1) * kChunk); ++k) {
          const std::size_t s = order[k];
          l += static_cast<double>(sample_loss(ck.params, arch, train_in[s], train_labels[s], ck.loss, &g, scale));
        }
        chunk_grads[c] = std::move(g);
        chunk_loss[c] = l;
      });
      ParamSet<float>& total = chunk_grads[0];
      for (std::size_t c = 1; c < chunks; ++c) {
        for (auto& [path, t] : total) {
          auto dst = t.values();
          auto src = chunk_grads[c].at(path).values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      for (double l : chunk_loss) loss_sum += l;
      const double gn = grad_norm(total);
      if (!std::isfinite(gn)) throw NumericError("non-finite gradient at epoch " + std::to_string(epoch));
      norm_sum += gn;
      ++batches;
      adam_update(ck.params, total, adam, cfg);
    }
    const double epoch_loss = loss_sum / static_cast<double>(order.size());
    h.epoch_losses.push_back(epoch_loss);

    if (epoch % cfg.eval_every != 0) continue;
    const auto scores = predict_prepared(ck, val_in, cfg.threads);
    EvalRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss;
    rec.val_auprc = auprc(scores, val_labels);
    rec.val_auroc = auroc(scores, val_labels);
    rec.grad_norm = norm_sum / static_cast<double>(std::max<std::size_t>(1, batches));
    h.records.push_back(rec);

    const bool better_pr = rec.val_auprc > best_auprc;
    const bool better_roc = rec.val_auroc > best_auroc;
    if (better_pr) {
      best_auprc = rec.val_auprc;
      best = ck.params;
      h.best_epoch = epoch;
      h.best_auprc = rec.val_auprc;
    }
    if (better_roc) best_auroc = rec.val_auroc;
    const bool reset = cfg.stop_metric == StopMetric::Auprc   ? better_pr
                       : cfg.stop_metric == StopMetric::Auroc ? better_roc
                                                              : (better_pr || better_roc);
    stale = reset ? 0 : stale + 1;
    if (stale >= max_stale) {
      h.stop_reason = "patience";
      break;
    }
  }
  // Without any evaluation there is nothing to select by; keep the last state.
  if (!h.records.empty()) ck.params = std::move(best);
  return result;
}

void write_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,train_loss,val_auprc,val_auroc,grad_norm\n";
  char buf[160];
  for (const auto& r : h.records) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.train_loss, r.val_auprc, r.val_auroc,
                  r.grad_norm);
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path);
}

// ---- sweep ------------------------------------------------------------------

void SweepGrid::validate() const {
  if (d_model.empty() || num_head.empty() || ff_dim.empty() || num_layer.empty() || classifier_down_factor.empty() ||
      learning_rate.empty()) {
    throw ConfigError("sweep: every grid list must be non-empty");
  }
}

std::size_t SweepGrid::size() const {
  return d_model.size() * num_head.size() * ff_dim.size() * num_layer.size() * classifier_down_factor.size() *
         learning_rate.size();
}

nlohmann::json SweepResult::to_json() const {
  auto entry = [](const SweepEntry& e) {
    nlohmann::json j = model_config_to_json(e.model);
    j["learning_rate"] = e.learning_rate;
    j["grid_index"] = e.grid_index;
    if (e.val_auprc) {
      j["param_count"] = e.param_count;
      j["val_auprc"] = *e.val_auprc;
      j["best_epoch"] = e.best_epoch;
    } else {
      j["reason"] = e.skip_reason;
    }
    return j;
  };
  nlohmann::json j;
  j["grid_size"] = grid_size;
  j["ranked"] = nlohmann::json::array();
  for (const auto& e : ranked) j["ranked"].push_back(entry(e));
  j["skipped"] = nlohmann::json::array();
  for (const auto& e : skipped) j["skipped"].push_back(entry(e));
  return j;
}

SweepResult sweep(const SweepGrid& grid, const PipelineConfig& base, const TrainConfig& cfg, const Dataset& ds) {
  grid.validate();
  SweepResult out;
  out.grid_size = grid.size();
  std::size_t index = 0;
  for (auto d : grid.d_model)
    for (auto h : grid.num_head)
      for (auto f : grid.ff_dim)
        for (auto n : grid.num_layer)
          for (auto down : grid.classifier_down_factor)
            for (auto lr : grid.learning_rate) {
              SweepEntry e;
              e.model = ModelConfig{d, h, f, n, down};
              e.learning_rate = lr;
              e.grid_index = index++;
              PipelineConfig p = base;
              p.model = e.model;
              TrainConfig c = cfg;
              c.learning_rate = lr;
              try {
                auto r = train(p, c, ds);
                e.param_count = r.checkpoint.params.scalar_count();
                e.best_epoch = r.history.best_epoch;
                e.val_auprc = r.history.records.empty() ? 0.0 : r.history.best_auprc;
                out.ranked.push_back(e);
              } catch (const Error& err) {
                e.skip_reason = err.what();
                out.skipped.push_back(e);
              }
            }
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (*a.val_auprc != *b.val_auprc) return *a.val_auprc > *b.val_auprc;
    return a.param_count < b.param_count;
  });
  return out;
}

}  // namespace summit
