#pragma once

#include <cstdint>
#include <vector>

#include "summit/embedding.hpp"
#include "summit/summarize.hpp"
#include "summit/tape.hpp"
#include "summit/tensor.hpp"

namespace summit {

struct ModelConfig {
  std::size_t d_model = 16;
  std::size_t num_head = 2;
  std::size_t ff_dim = 32;
  std::size_t num_layer = 1;
  std::size_t classifier_down_factor = 2;

  void validate() const;
  std::size_t head_dim() const { return d_model / num_head; }
  /// Classifier hidden width: d_model / down_factor, at least 1.
  std::size_t hidden() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LossConfig {
  double alpha = 0.25;
  double gamma = 2.0;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(...), over the
/// flattened token index. Requires even d.
Tensor<double> positional_encoding(std::size_t length, std::size_t d);

/// Everything about the network shape that is not a trainable value.
struct Architecture {
  ModelConfig model;
  ColumnLayout layout;
  EvatVariant variant = EvatVariant::Scane;
  std::size_t windows = 0;
  Tensor<double> pe;
  Tensor<float> pe_f;

  std::size_t length() const { return windows * layout.columns; }
  template <typename T>
  const Tensor<T>& positional() const {
    if constexpr (std::is_same_v<T, float>) {
      return pe_f;
    } else {
      return pe;
    }
  }
};

Architecture make_architecture(const ModelConfig& cfg, const FeatureSchema& schema, std::size_t windows,
                               EvatVariant variant);

/// Head-averaged attention weights per encoder stack (L x L each).
struct AttentionTrace {
  std::vector<Tensor<double>> weights;
  std::size_t guarded_rows = 0;  // all-masked query rows returned as zeros
};

/// Fresh parameters: embeddings U(-1/sqrt(d), 1/sqrt(d)); linear weights
/// U(+-sqrt(6/(fan_in+fan_out))); biases 0; layer-norm gains 1.
template <typename T>
ParamSet<T> init_params(const Architecture& arch, std::uint64_t seed);

/// Multi-head self-attention of one stack plus the output projection.
/// key_mask empty means no masking.
template <typename T>
typename Tape<T>::Var masked_attention(Tape<T>& tape, const ParamSet<T>& params, const ModelConfig& cfg,
                                       std::size_t layer, typename Tape<T>::Var z,
                                       std::span<const std::uint8_t> key_mask, AttentionTrace* trace);

/// Adds PE, runs the stacks (masking only in the first) and mean-pools the
/// token outputs to a 1 x d row.
template <typename T>
typename Tape<T>::Var encoder_forward(Tape<T>& tape, const ParamSet<T>& params, const Architecture& arch,
                                      typename Tape<T>::Var tokens, std::span<const std::uint8_t> mask,
                                      AttentionTrace* trace);

/// Dense (linear + GELU) then linear to a logit, squashed to a probability.
template <typename T>
typename Tape<T>::Var classify(Tape<T>& tape, const ParamSet<T>& params, typename Tape<T>::Var pooled);

template <typename T>
struct ForwardVars {
  typename Tape<T>::Var tokens;
  typename Tape<T>::Var pooled;
  typename Tape<T>::Var prob;
};

template <typename T>
ForwardVars<T> forward(Tape<T>& tape, const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm,
                       AttentionTrace* trace = nullptr);

template <typename T>
T predict(const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm,
          AttentionTrace* trace = nullptr);

/// Focal loss of one sample. When grads is non-null, adds grad_scale * dL/dθ.
template <typename T>
T sample_loss(const ParamSet<T>& params, const Architecture& arch, const SummaryMatrix& sm, int label,
              const LossConfig& loss, ParamSet<T>* grads = nullptr, T grad_scale = T{1});

/// Scalar focal loss, -alpha_t (1 - p_t)^gamma log p_t with p clamped to
/// [1e-7, 1 - 1e-7].
double focal_loss(double p, int label, const LossConfig& cfg);

}  // namespace summit
