#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "summit/dataset.hpp"
#include "summit/embedding.hpp"
#include "summit/model.hpp"
#include "summit/summarize.hpp"
#include "summit/tensor.hpp"

namespace summit {

/// Binary container: 8-byte magic, little-endian u64 header length, a JSON
/// header, then the tensor payload. The header carries caller metadata under
/// "meta" and a manifest of {name, dtype, shape, offset, bytes} per tensor;
/// offsets are relative to the start of the payload.
inline constexpr std::uint32_t kContainerVersion = 1;

template <typename T>
void write_container(const std::string& path, const nlohmann::json& meta, const ParamSet<T>& tensors);

template <typename T>
ParamSet<T> read_container(const std::string& path, nlohmann::json* meta = nullptr);

/// Reads only the JSON header.
nlohmann::json read_container_header(const std::string& path);

/// A trained (or freshly initialised) model together with everything needed
/// to score new raw data the same way.
struct Checkpoint {
  ModelConfig model;
  LossConfig loss;
  SummarizationConfig summarization;
  EvatVariant variant = EvatVariant::Scane;
  bool impute = false;
  FeatureSchema schema;
  double observation_window = 0.0;
  std::size_t windows = 0;
  Normalizer normalizer;
  std::uint64_t seed = 0;
  ParamSet<float> params;

  Architecture architecture() const;
  /// Throws ConfigError when the dataset's schema or window differ.
  void check_compatible(const Dataset& ds) const;
  /// Summarised and normalised model inputs, one per sample.
  std::vector<SummaryMatrix> prepare(const Dataset& ds) const;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& cfg);

/// Attention traces use the same container with f64 payloads.
void save_trace(const AttentionTrace& trace, const std::vector<std::uint8_t>& mask, const std::string& path);
AttentionTrace load_trace(const std::string& path, std::vector<std::uint8_t>* mask = nullptr);

}  // namespace summit
