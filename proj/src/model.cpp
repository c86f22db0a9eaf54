#include "summit/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

void ModelConfig::validate() const {
  if (d_model == 0 || num_head == 0 || ff_dim == 0 || num_layer == 0 || classifier_down_factor == 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (d_model % num_head != 0) throw ConfigError("model: d_model must be divisible by num_head");
  if (d_model % 2 != 0) throw ConfigError("model: d_model must be even for the positional encoding");
}

std::size_t ModelConfig::hidden() const { return std::max<std::size_t>(1, d_model / classifier_down_factor); }

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("loss: alpha must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("loss: gamma must be >= 0");
}

Tensor<double> positional_encoding(std::size_t length, std::size_t d) {
  if (length == 0 || d == 0) throw ConfigError("positional encoding needs positive length and dimension");
  if (d % 2 != 0) throw ConfigError("positional encoding needs an even dimension");
  auto pe = Tensor<double>::matrix(length, d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / freq;
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Architecture make_architecture(const ModelConfig& cfg, const FeatureSchema& schema, std::size_t windows,
                               EvatVariant variant) {
  cfg.validate();
  if (windows == 0) throw ConfigError("model: at least one summarisation window is required");
  Architecture arch;
  arch.model = cfg;
  arch.layout = ColumnLayout::from_schema(schema);
  arch.variant = variant;
  arch.windows = windows;
  arch.pe = positional_encoding(arch.length(), cfg.d_model);
  arch.pe_f = arch.pe.cast<float>();
  return arch;
}

namespace {

std::string layer_path(std::size_t layer, const char* name) {
  return "encoder." + std::to_string(layer) + "." + name;
}

template <typename T>
Tensor<T> xavier(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor<T> t({fan_in, fan_out});
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
typename Tape<T>::Var linear(Tape<T>& tape, const ParamSet<T>& params, typename Tape<T>::Var x, const std::string& w,
                             const std::string& b) {
  return tape.add_row(tape.matmul(x, tape.param(w, params.at(w))), tape.param(b, params.at(b)));
}

}  // namespace

template <typename T>
ParamSet<T> init_params(const Architecture& arch, std::uint64_t seed) {
  const auto& cfg = arch.model;
  const std::size_t d = cfg.d_model;
  ParamSet<T> p;
  init_embedding_params(p, arch.layout, arch.variant, d, seed);
  auto add_linear = [&](const std::string& w, const std::string& b, std::size_t in, std::size_t out) {
    p.add(w, xavier<T>(in, out, derive_seed(seed, w)));
    if (!b.empty()) p.add(b, Tensor<T>({out}));
  };
  for (std::size_t l = 0; l < cfg.num_layer; ++l) {
    add_linear(layer_path(l, "w_q"), "", d, d);
    add_linear(layer_path(l, "w_k"), "", d, d);
    add_linear(layer_path(l, "w_v"), "", d, d);
    add_linear(layer_path(l, "w_o"), layer_path(l, "b_o"), d, d);
    add_linear(layer_path(l, "ff.w1"), layer_path(l, "ff.b1"), d, cfg.ff_dim);
    add_linear(layer_path(l, "ff.w2"), layer_path(l, "ff.b2"), cfg.ff_dim, d);
    p.add(layer_path(l, "ln1.gain"), Tensor<T>({d}, T{1}));
    p.add(layer_path(l, "ln1.bias"), Tensor<T>({d}));
    p.add(layer_path(l, "ln2.gain"), Tensor<T>({d}, T{1}));
    p.add(layer_path(l, "ln2.bias"), Tensor<T>({d}));
  }
  add_linear("head.w1", "head.b1", d, cfg.hidden());
  add_linear("head.w2", "head.b2", cfg.hidden(), 1);
  return p;
}

template <typename T>
typename Tape<T>::Var masked_attention(Tape<T>& tape, const ParamSet<T>& params, const ModelConfig& cfg,
                                       std::size_t layer, typename Tape<T>::Var z,
                                       std::span<const std::uint8_t> key_mask, AttentionTrace* trace) {
  using Var = typename Tape<T>::Var;
  const std::size_t dh = cfg.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  auto wq = layer_path(layer, "w_q"), wk = layer_path(layer, "w_k"), wv = layer_path(layer, "w_v");
  Var q = tape.matmul(z, tape.param(wq, params.at(wq)));
  Var k = tape.matmul(z, tape.param(wk, params.at(wk)));
  Var v = tape.matmul(z, tape.param(wv, params.at(wv)));
  const std::size_t L = tape.value(z).rows();

  Tensor<double> averaged;
  if (trace) averaged = Tensor<double>::matrix(L, L);
  std::size_t guarded = 0;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < cfg.num_head; ++h) {
    Var qh = cfg.num_head == 1 ? q : tape.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = cfg.num_head == 1 ? k : tape.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = cfg.num_head == 1 ? v : tape.slice_cols(v, h * dh, (h + 1) * dh);
    Var w = tape.attention_weights(tape.matmul_nt(qh, kh), key_mask, scale, &guarded);
    if (trace) {
      const auto& wv_ = tape.value(w);
      for (std::size_t i = 0; i < wv_.size(); ++i) averaged[i] += static_cast<double>(wv_[i]);
    }
    heads.push_back(tape.matmul(w, vh));
  }
  if (trace) {
    for (auto& x : averaged.values()) x /= static_cast<double>(cfg.num_head);
    trace->weights.push_back(std::move(averaged));
    trace->guarded_rows += guarded / cfg.num_head;
  }
  Var merged = cfg.num_head == 1 ? heads[0] : tape.concat_cols(heads);
  return linear(tape, params, merged, layer_path(layer, "w_o"), layer_path(layer, "b_o"));
}

template <typename T>
typename Tape<T>::Var encoder_forward(Tape<T>& tape, const ParamSet<T>& params, const Architecture& arch,
                                      typename Tape<T>::Var tokens, std::span<const std::uint8_t> mask,
                                      AttentionTrace* trace) {
  const auto& cfg = arch.model;
  if (tape.value(tokens).rows() != arch.length() || tape.value(tokens).cols() != cfg.d_model) {
    throw ShapeError("encoder_forward: token matrix does not match the architecture");
  }
  if (!mask.empty() && mask.size() != arch.length()) throw ShapeError("encoder_forward: mask length mismatch");
  auto z = tape.add_const(tokens, arch.positional<T>());
  for (std::size_t l = 0; l < cfg.num_layer; ++l) {
    auto key_mask = l == 0 ? mask : std::span<const std::uint8_t>{};
    auto att = masked_attention(tape, params, cfg, l, z, key_mask, trace);
    auto g1 = layer_path(l, "ln1.gain"), b1 = layer_path(l, "ln1.bias");
    z = tape.layer_norm(tape.add(z, att), tape.param(g1, params.at(g1)), tape.param(b1, params.at(b1)));
    auto ff = tape.gelu(linear(tape, params, z, layer_path(l, "ff.w1"), layer_path(l, "ff.b1")));
    ff = linear(tape, params, ff, layer_path(l, "ff.w2"), layer_path(l, "ff.b2"));
    auto g2 = layer_path(l, "ln2.gain"), b2 = layer_path(l, "ln2.bias");
    z = tape.layer_norm(tape.add(z, ff), tape.param(g2, params.at(g2)), tape.param(b2, params.at(b2)));
  }
  return tape.mean_rows(z);
}

template <typename T>
typename Tape<T>::Var classify(Tape<T>& tape, const ParamSet<T>& params, typename Tape<T>::Var pooled) {
  auto h = tape.gelu(linear(tape, params, pooled, "head.w1", "head.b1"));
  return tape.sigmoid(linear(tape, params, h, "head.w2", "head.b2"));
}

template <typename T>
ForwardVars<T> forward(Tape<T>& tape, const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm,
                       AttentionTrace* trace) {
  if (sm.windows != arch.windows || sm.columns != arch.layout.columns) {
    throw ShapeError("forward: summary matrix does not match the architecture");
  }
  ForwardVars<T> out;
  out.tokens = embed_tokens(tape, params, arch.layout, arch.variant, sm);
  out.pooled = encoder_forward(tape, params, arch, out.tokens, sm.mask, trace);
  out.prob = classify(tape, params, out.pooled);
  return out;
}

template <typename T>
T predict(const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm, AttentionTrace* trace) {
  Tape<T> tape;
  auto f = forward(tape, params, arch, sm, trace);
  return tape.value(f.prob)[0];
}

template <typename T>
T sample_loss(const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm, int label,
              const LossConfig& loss, ParamSet<T>* grads, T grad_scale) {
  Tape<T> tape;
  auto f = forward(tape, params, arch, sm, nullptr);
  auto l = tape.focal_loss(f.prob, label, loss.alpha, loss.gamma);
  const T value = tape.value(l)[0];
  if (grads) {
    tape.backward(l, grad_scale);
    tape.accumulate_param_grads(*grads);
  }
  return value;
}

double focal_loss(double p, int label, const LossConfig& cfg) {
  const double pc = std::clamp(p, 1e-7, 1.0 - 1e-7);
  const double pt = label == 1 ? pc : 1.0 - pc;
  const double at = label == 1 ? cfg.alpha : 1.0 - cfg.alpha;
  const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(1.0 - pt, cfg.gamma);
  return -at * mod * std::log(pt);
}

#define SUMMIT_INSTANTIATE(T)                                                                                        \
  template ParamSet<T> init_params<T>(const Architecture&, std::uint64_t);                                           \
  template typename Tape<T>::Var masked_attention<T>(Tape<T>&, const ParamSet<T>&, const ModelConfig&, std::size_t, \
                                                     typename Tape<T>::Var, std::span<const std::uint8_t>,           \
                                                     AttentionTrace*);                                               \
  template typename Tape<T>::Var encoder_forward<T>(Tape<T>&, const ParamSet<T>&, const Architecture&,              \
                                                    typename Tape<T>::Var, std::span<const std::uint8_t>,            \
                                                    AttentionTrace*);                                                \
  template typename Tape<T>::Var classify<T>(Tape<T>&, const ParamSet<T>&, typename Tape<T>::Var);                  \
  template ForwardVars<T> forward<T>(Tape<T>&, const ParamSet<T>&, const Architecture&, const SummaryMatrix&,       \
                                     AttentionTrace*);                                                               \
  template T predict<T>(const ParamSet<T>&, const Architecture&, const SummaryMatrix&, AttentionTrace*);            \
  template T sample_loss<T>(const ParamSet<T>&, const Architecture&, const SummaryMatrix&, int, const LossConfig&,  \
                            ParamSet<T>*, T);

SUMMIT_INSTANTIATE(float)
SUMMIT_INSTANTIATE(double)
#undef SUMMIT_INSTANTIATE

}  // namespace summit
