#include "summit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "summit/error.hpp"

namespace summit {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'U', 'M', 'M', 'I', 'T', 'C', 'K'};

template <typename T>
const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct Parsed {
  json header;
  std::size_t payload_start = 0;
};

Parsed parse_header(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError(path + ": not a checkpoint container");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) throw DataError(path + ": truncated header");
  Parsed p;
  try {
    p.header = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed header: " + e.what());
  }
  const auto version = p.header.value("version", 0u);
  if (version != kContainerVersion) {
    throw DataError(path + ": unsupported container version " + std::to_string(version));
  }
  p.payload_start = 16 + len;
  return p;
}

}  // namespace

template <typename T>
void write_container(const std::string& path, const json& meta, const ParamSet<T>& tensors) {
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t bytes = t.size() * sizeof(T);
    manifest.push_back({{"name", name}, {"dtype", dtype_name<T>()}, {"shape", t.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  json header = {{"version", kContainerVersion}, {"meta", meta}, {"tensors", std::move(manifest)}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  const std::uint64_t len = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.storage().data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  }
  if (!out) throw DataError("write failed: " + path);
}

template <typename T>
ParamSet<T> read_container(const std::string& path, json* meta) {
  const std::string bytes = read_file(path);
  const Parsed p = parse_header(bytes, path);
  ParamSet<T> out;
  const std::size_t payload = bytes.size() - p.payload_start;
  for (const auto& e : p.header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    if (e.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw DataError(path + ": tensor " + name + " has dtype " + e.at("dtype").get<std::string>());
    }
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto len = e.at("bytes").get<std::uint64_t>();
    if (offset > payload || len > payload - offset) throw DataError(path + ": tensor " + name + " exceeds the payload");
    Tensor<T> t(shape);
    if (t.size() * sizeof(T) != len) throw DataError(path + ": tensor " + name + " byte count disagrees with its shape");
    std::memcpy(t.storage().data(), bytes.data() + p.payload_start + offset, len);
    out.add(name, std::move(t));
  }
  if (meta) *meta = p.header.at("meta");
  return out;
}

json read_container_header(const std::string& path) { return parse_header(read_file(path), path).header; }

template void write_container<float>(const std::string&, const json&, const ParamSet<float>&);
template void write_container<double>(const std::string&, const json&, const ParamSet<double>&);
template ParamSet<float> read_container<float>(const std::string&, json*);
template ParamSet<double> read_container<double>(const std::string&, json*);

// ---- checkpoint -------------------------------------------------------------

json schema_to_json(const FeatureSchema& schema) {
  json a = json::array();
  for (const auto& f : schema.features) {
    json d = {{"name", f.name}, {"kind", f.kind == FeatureKind::Numerical ? "numerical" : "categorical"}};
    if (f.kind == FeatureKind::Categorical) d["categories"] = f.categories;
    a.push_back(std::move(d));
  }
  return a;
}

FeatureSchema schema_from_json(const json& j) {
  FeatureSchema s;
  for (const auto& d : j) {
    FeatureDescriptor f;
    f.name = d.at("name").get<std::string>();
    f.kind = d.at("kind").get<std::string>() == "categorical" ? FeatureKind::Categorical : FeatureKind::Numerical;
    if (d.contains("categories")) f.categories = d.at("categories").get<std::vector<std::string>>();
    s.features.push_back(std::move(f));
  }
  s.validate();
  return s;
}

json model_config_to_json(const ModelConfig& cfg) {
  return {{"d_model", cfg.d_model},
          {"num_head", cfg.num_head},
          {"ff_dim", cfg.ff_dim},
          {"num_layer", cfg.num_layer},
          {"classifier_down_factor", cfg.classifier_down_factor}};
}

Architecture Checkpoint::architecture() const { return make_architecture(model, schema, windows, variant); }

void Checkpoint::check_compatible(const Dataset& ds) const {
  if (!(ds.schema == schema)) throw ConfigError("incompatible checkpoint: dataset schema differs from the trained schema");
  if (ds.observation_window != observation_window) {
    throw ConfigError("incompatible checkpoint: observation window " + std::to_string(ds.observation_window) +
                      " differs from the trained " + std::to_string(observation_window));
  }
}

std::vector<SummaryMatrix> Checkpoint::prepare(const Dataset& ds) const {
  check_compatible(ds);
  auto raw = summarize_all(ds, summarization);
  for (auto& sm : raw) sm = apply_normalizer(sm, normalizer, impute);
  return raw;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json meta;
  meta["kind"] = "summit_checkpoint";
  meta["model"] = model_config_to_json(ck.model);
  meta["loss"] = {{"alpha", ck.loss.alpha}, {"gamma", ck.loss.gamma}};
  meta["summarization"] = {{"window", ck.summarization.window},
                           {"categorical", ck.summarization.categorical == CategoricalAggregator::Mode ? "mode" : "last"}};
  meta["variant"] = to_string(ck.variant);
  meta["impute"] = ck.impute;
  meta["schema"] = schema_to_json(ck.schema);
  meta["observation_window"] = ck.observation_window;
  meta["windows"] = ck.windows;
  meta["normalizer"] = {{"mean", ck.normalizer.mean},
                        {"stddev", ck.normalizer.stddev},
                        {"mode", ck.normalizer.mode},
                        {"categorical", ck.normalizer.categorical}};
  meta["seed"] = ck.seed;
  write_container(path, meta, ck.params);
}

Checkpoint load_checkpoint(const std::string& path) {
  json meta;
  Checkpoint ck;
  ck.params = read_container<float>(path, &meta);
  try {
    if (meta.value("kind", "") != "summit_checkpoint") throw DataError(path + ": not a model checkpoint");
    const auto& m = meta.at("model");
    ck.model.d_model = m.at("d_model");
    ck.model.num_head = m.at("num_head");
    ck.model.ff_dim = m.at("ff_dim");
    ck.model.num_layer = m.at("num_layer");
    ck.model.classifier_down_factor = m.at("classifier_down_factor");
    ck.loss.alpha = meta.at("loss").at("alpha");
    ck.loss.gamma = meta.at("loss").at("gamma");
    ck.summarization.window = meta.at("summarization").at("window");
    ck.summarization.categorical = meta.at("summarization").at("categorical").get<std::string>() == "last"
                                       ? CategoricalAggregator::Last
                                       : CategoricalAggregator::Mode;
    ck.variant = parse_variant(meta.at("variant").get<std::string>());
    ck.impute = meta.at("impute");
    ck.schema = schema_from_json(meta.at("schema"));
    ck.observation_window = meta.at("observation_window");
    ck.windows = meta.at("windows");
    const auto& n = meta.at("normalizer");
    ck.normalizer.mean = n.at("mean").get<std::vector<double>>();
    ck.normalizer.stddev = n.at("stddev").get<std::vector<double>>();
    ck.normalizer.mode = n.at("mode").get<std::vector<double>>();
    ck.normalizer.categorical = n.at("categorical").get<std::vector<std::uint8_t>>();
    ck.seed = meta.at("seed");
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  }
  ck.model.validate();
  // Every parameter the architecture expects must be present with its shape.
  const auto expected = init_params<float>(ck.architecture(), 0);
  for (const auto& [name, t] : expected) {
    if (!ck.params.contains(name) || ck.params.at(name).shape() != t.shape()) {
      throw DataError(path + ": parameter " + name + " missing or misshapen");
    }
  }
  if (expected.size() != ck.params.size()) throw DataError(path + ": unexpected extra parameters");
  return ck;
}

void save_trace(const AttentionTrace& trace, const std::vector<std::uint8_t>& mask, const std::string& path) {
  ParamSet<double> t;
  for (std::size_t i = 0; i < trace.weights.size(); ++i) t.add("stack." + std::to_string(i), trace.weights[i]);
  json meta = {{"kind", "attention_trace"},
               {"stacks", trace.weights.size()},
               {"guarded_rows", trace.guarded_rows},
               {"mask", mask}};
  write_container(path, meta, t);
}

AttentionTrace load_trace(const std::string& path, std::vector<std::uint8_t>* mask) {
  json meta;
  auto t = read_container<double>(path, &meta);
  if (meta.value("kind", "") != "attention_trace") throw DataError(path + ": not an attention trace");
  AttentionTrace trace;
  const auto stacks = meta.at("stacks").get<std::size_t>();
  for (std::size_t i = 0; i < stacks; ++i) trace.weights.push_back(t.at("stack." + std::to_string(i)));
  trace.guarded_rows = meta.at("guarded_rows");
  if (mask) *mask = meta.at("mask").get<std::vector<std::uint8_t>>();
  return trace;
}

}  // namespace summit
