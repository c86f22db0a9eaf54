#include "summit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "summit/error.hpp"
#include "summit/rng.hpp"

namespace summit {

using nlohmann::json;

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void FeatureSchema::validate() const {
  if (features.empty()) throw DataError("schema has no features");
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw DataError("schema feature with empty name");
    if (!seen.insert(f.name).second) throw DataError("duplicate feature name: " + f.name);
    if (f.kind == FeatureKind::Categorical && f.categories.empty()) {
      throw DataError("categorical feature '" + f.name + "' has an empty vocabulary");
    }
  }
}

void Dataset::validate() const {
  schema.validate();
  if (!(observation_window > 0.0)) throw DataError("observation window must be positive");
  const std::size_t n = schema.size();
  for (const auto& s : samples) {
    if (s.cells.size() != s.timestamps.size() * n) {
      throw DataError("sample " + s.id + ": cell grid does not match row count");
    }
    if (s.label != 0 && s.label != 1) throw DataError("sample " + s.id + ": label must be 0 or 1");
    if (s.event_time && !(*s.event_time > 0.0)) throw DataError("sample " + s.id + ": event_time must be positive");
    for (std::size_t i = 0; i < s.timestamps.size(); ++i) {
      if (!std::isfinite(s.timestamps[i])) throw DataError("sample " + s.id + ": non-finite timestamp");
      if (i > 0 && s.timestamps[i] < s.timestamps[i - 1]) {
        throw DataError("sample " + s.id + ": timestamps are not non-decreasing");
      }
      if (s.timestamps[i] - s.timestamps[0] > observation_window) {
        throw DataError("sample " + s.id + ": timestamp outside the observation window");
      }
      for (std::size_t j = 0; j < n; ++j) {
        const auto& c = s.cells[i * n + j];
        if (!c) continue;
        if (!std::isfinite(*c)) throw DataError("sample " + s.id + ": non-finite value");
        const auto& f = schema.features[j];
        if (f.kind == FeatureKind::Categorical) {
          const double v = *c;
          if (v != std::floor(v) || v < 0 || v >= static_cast<double>(f.categories.size())) {
            throw DataError("sample " + s.id + ": category index out of vocabulary for '" + f.name + "'");
          }
        }
      }
    }
  }
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

int Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.schema = schema;
  out.observation_window = observation_window;
  out.provenance = provenance;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(samples.at(i));
  return out;
}

// ---- serialization ---------------------------------------------------------

namespace {

json header_json(const Dataset& ds) {
  json schema = json::array();
  for (const auto& f : ds.schema.features) {
    json d;
    d["name"] = f.name;
    d["kind"] = f.kind == FeatureKind::Numerical ? "numerical" : "categorical";
    if (f.kind == FeatureKind::Categorical) d["categories"] = f.categories;
    schema.push_back(std::move(d));
  }
  json h;
  h["schema"] = std::move(schema);
  h["observation_window"] = ds.observation_window;
  if (!ds.provenance.empty()) h["provenance"] = ds.provenance;
  return h;
}

json sample_json(const RawSeries& s, const FeatureSchema& schema) {
  const std::size_t n = schema.size();
  json events = json::array();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c = s.cell(i, j, n);
      if (!c) continue;
      any = true;
      json e;
      e["t"] = s.timestamps[i];
      e["feature"] = schema.features[j].name;
      if (schema.features[j].kind == FeatureKind::Categorical) {
        e["value"] = static_cast<std::int64_t>(*c);
      } else {
        e["value"] = *c;
      }
      events.push_back(std::move(e));
    }
    if (!any) {
      // A row with no observed cell still counts as an entry.
      json e;
      e["t"] = s.timestamps[i];
      e["feature"] = schema.features[0].name;
      e["value"] = nullptr;
      events.push_back(std::move(e));
    }
  }
  json out;
  out["id"] = s.id;
  out["label"] = s.label;
  if (s.event_time) out["event_time"] = *s.event_time;
  out["events"] = std::move(events);
  return out;
}

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ": " + what);
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, std::size_t line) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) line_error(line, "unknown key '" + it.key() + "'");
  }
}

FeatureSchema parse_schema(const json& h, std::size_t line) {
  if (!h.contains("schema") || !h["schema"].is_array()) line_error(line, "header lacks a schema array");
  FeatureSchema schema;
  for (const auto& d : h["schema"]) {
    if (!d.is_object() || !d.contains("name") || !d.contains("kind")) line_error(line, "malformed schema entry");
    reject_unknown_keys(d, {"name", "kind", "categories"}, line);
    FeatureDescriptor f;
    f.name = d["name"].get<std::string>();
    const auto kind = d["kind"].get<std::string>();
    if (kind == "numerical") {
      f.kind = FeatureKind::Numerical;
    } else if (kind == "categorical") {
      f.kind = FeatureKind::Categorical;
      if (!d.contains("categories")) line_error(line, "categorical feature '" + f.name + "' lacks categories");
      f.categories = d["categories"].get<std::vector<std::string>>();
    } else {
      line_error(line, "unknown feature kind '" + kind + "'");
    }
    schema.features.push_back(std::move(f));
  }
  try {
    schema.validate();
  } catch (const DataError& e) {
    line_error(line, e.what());
  }
  return schema;
}

RawSeries parse_sample(const json& j, const FeatureSchema& schema, std::size_t line) {
  if (!j.is_object()) line_error(line, "sample is not an object");
  reject_unknown_keys(j, {"id", "label", "event_time", "events"}, line);
  if (!j.contains("id") || !j.contains("label") || !j.contains("events")) {
    line_error(line, "sample requires id, label and events");
  }
  RawSeries s;
  if (j["id"].is_string()) {
    s.id = j["id"].get<std::string>();
  } else if (j["id"].is_number_integer()) {
    s.id = std::to_string(j["id"].get<std::int64_t>());
  } else {
    line_error(line, "sample id must be a string or integer");
  }
  if (!j["label"].is_number_integer()) line_error(line, "sample " + s.id + ": label must be 0 or 1");
  s.label = j["label"].get<int>();
  if (s.label != 0 && s.label != 1) line_error(line, "sample " + s.id + ": label must be 0 or 1");
  if (j.contains("event_time") && !j["event_time"].is_null()) {
    if (!j["event_time"].is_number()) line_error(line, "sample " + s.id + ": event_time must be a number");
    s.event_time = j["event_time"].get<double>();
  }
  const std::size_t n = schema.size();
  const auto& events = j["events"];
  if (!events.is_array()) line_error(line, "sample " + s.id + ": events must be an array");

  // Consecutive events sharing a timestamp form one row until a feature repeats.
  std::vector<bool> row_has(n, false);
  for (const auto& e : events) {
    if (!e.is_object() || !e.contains("t") || !e.contains("feature")) {
      line_error(line, "sample " + s.id + ": malformed event");
    }
    reject_unknown_keys(e, {"t", "feature", "value"}, line);
    if (!e["t"].is_number()) line_error(line, "sample " + s.id + ": event time must be a number");
    const double t = e["t"].get<double>();
    if (!s.timestamps.empty() && t < s.timestamps.back()) {
      line_error(line, "sample " + s.id + ": timestamps are not non-decreasing");
    }
    const auto fname = e["feature"].get<std::string>();
    const int fj = schema.index_of(fname);
    if (fj < 0) line_error(line, "sample " + s.id + ": unknown feature '" + fname + "'");
    const auto col = static_cast<std::size_t>(fj);
    if (s.timestamps.empty() || t != s.timestamps.back() || row_has[col]) {
      s.timestamps.push_back(t);
      s.cells.resize(s.cells.size() + n);
      std::fill(row_has.begin(), row_has.end(), false);
    }
    row_has[col] = true;
    if (!e.contains("value") || e["value"].is_null()) continue;
    if (!e["value"].is_number()) line_error(line, "sample " + s.id + ": value must be a number or null");
    const double v = e["value"].get<double>();
    const auto& f = schema.features[col];
    if (f.kind == FeatureKind::Categorical &&
        (v != std::floor(v) || v < 0 || v >= static_cast<double>(f.categories.size()))) {
      line_error(line, "sample " + s.id + ": category index out of vocabulary for '" + f.name + "'");
    }
    s.cells[(s.timestamps.size() - 1) * n + col] = v;
  }
  return s;
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::string out = header_json(ds).dump();
  out += '\n';
  for (const auto& s : ds.samples) {
    out += sample_json(s, ds.schema).dump();
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      line_error(lineno, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object()) line_error(lineno, "header is not an object");
        reject_unknown_keys(j, {"schema", "observation_window", "provenance"}, lineno);
        ds.schema = parse_schema(j, lineno);
        if (!j.contains("observation_window") || !j["observation_window"].is_number()) {
          line_error(lineno, "header lacks a numeric observation_window");
        }
        ds.observation_window = j["observation_window"].get<double>();
        if (!(ds.observation_window > 0)) line_error(lineno, "observation_window must be positive");
        if (j.contains("provenance")) ds.provenance = j["provenance"].get<std::string>();
        have_header = true;
        continue;
      }
      ds.samples.push_back(parse_sample(j, ds.schema, lineno));
      const auto& s = ds.samples.back();
      if (!s.timestamps.empty() && s.timestamps.back() - s.timestamps.front() > ds.observation_window) {
        line_error(lineno, "sample " + s.id + ": timestamp outside the observation window");
      }
    } catch (const json::exception& e) {
      line_error(lineno, std::string("malformed field: ") + e.what());
    }
  }
  if (!have_header) throw DataError("dataset has no header line");
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dataset(buf.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset: " + path);
  out << serialize_dataset(ds);
  if (!out) throw DataError("write failed: " + path);
}

// ---- splitting -------------------------------------------------------------

SplitIndices stratified_indices(const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  Rng rng(seed);
  SplitIndices out;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (members.size() < 2) {
      throw DataError("class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                      " samples; a stratified split needs at least 2");
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    out.test.insert(out.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Dataset, Dataset> split_stratified(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  const auto idx = stratified_indices(ds.labels(), test_fraction, seed);
  return {ds.subset(idx.train), ds.subset(idx.test)};
}

}  // namespace summit
