#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "summit/error.hpp"
#include "summit/explain.hpp"
#include "summit/kernels.hpp"

using namespace summit;

namespace {

Tensor<double> mat2(double a, double b, double c, double d) {
  return Tensor<double>({2, 2}, std::vector<double>{a, b, c, d});
}

Tensor<double> identity(std::size_t L) {
  auto m = Tensor<double>::matrix(L, L);
  for (std::size_t i = 0; i < L; ++i) m(i, i) = 1.0;
  return m;
}

// Straightforward product oracle: A_N ... A_2 F.
Tensor<double> product_oracle(const AttentionTrace& t, const Tensor<double>& first) {
  Tensor<double> r = first;
  const std::size_t L = first.rows();
  for (std::size_t s = 1; s < t.weights.size(); ++s) {
    auto next = Tensor<double>::matrix(L, L);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < L; ++k) acc += (0.5 * t.weights[s](i, k) + (i == k ? 0.5 : 0.0)) * r(k, j);
        next(i, j) = acc;
      }
    }
    r = next;
  }
  return r;
}

// Minimal well-formedness check: balanced tags, quoted attributes, no stray
// ampersands.
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  if (text.rfind("<?xml", 0) == 0) i = text.find("?>") + 2;
  while (i < text.size()) {
    if (text[i] == '&') {
      const auto semi = text.find(';', i);
      if (semi == std::string::npos) return false;
      const auto ent = text.substr(i, semi - i + 1);
      if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      i = semi + 1;
      continue;
    }
    if (text[i] != '<') {
      ++i;
      continue;
    }
    const auto end = text.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = text.substr(i + 1, end - i - 1);
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
    if (tag.find('<') != std::string::npos) return false;
    if (!tag.empty() && tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (!tag.empty() && tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find_first_of(" \n\t")));
    }
    i = end + 1;
  }
  return stack.empty();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("revised first factor: the two-token examples") {
  const auto a = revised_first_factor(mat2(0.2, 0.8, 0.6, 0.4), std::vector<std::uint8_t>{1, 1});
  CHECK(std::abs(a(0, 0) - 0.6) <= 1e-12);
  CHECK(std::abs(a(0, 1) - 0.4) <= 1e-12);
  CHECK(std::abs(a(1, 0) - 0.3) <= 1e-12);
  CHECK(std::abs(a(1, 1) - 0.7) <= 1e-12);

  const auto b = revised_first_factor(mat2(1, 0, 1, 0), std::vector<std::uint8_t>{1, 0});
  CHECK(b(0, 0) == 1.0);
  CHECK(b(0, 1) == 0.0);
  CHECK(b(1, 0) == 1.0);
  CHECK(b(1, 1) == 0.0);

  std::vector<std::uint8_t> guarded;
  const auto c = revised_first_factor(mat2(0, 0, 1, 0), std::vector<std::uint8_t>{0, 1}, &guarded);
  CHECK(guarded == std::vector<std::uint8_t>{1, 0});
  CHECK(c(0, 0) == 0.0);
  CHECK(c(0, 1) == 0.0);
}

TEST_CASE("original rollout basics") {
  AttentionTrace one;
  one.weights = {mat2(0.2, 0.8, 0.6, 0.4)};
  const auto r = rollout(one);
  CHECK(r.matrix == mat2(0.6, 0.4, 0.3, 0.7));
  CHECK(r.kind == RolloutKind::Original);

  AttentionTrace ids;
  ids.weights = {identity(5), identity(5), identity(5)};
  CHECK(rollout(ids).matrix == identity(5));

  CHECK_THROWS_AS(rollout(AttentionTrace{}), ConfigError);
  AttentionTrace bad;
  bad.weights = {identity(3), identity(4)};
  CHECK_THROWS_AS(rollout(bad), ShapeError);
  CHECK_THROWS_AS(revised_rollout(one, std::vector<std::uint8_t>{1}), ShapeError);
}

TEST_CASE("rollouts are row-stochastic products in the stated order") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AttentionTrace t;
    Rng rng(seed);
    for (int s = 0; s < 2; ++s) t.weights.push_back(softmax_rows(testing::random_matrix(9, 9, seed * 10 + s, 2.0)));
    const auto r = rollout(t);
    auto first = t.weights[0];
    for (auto& v : first.values()) v *= 0.5;
    for (std::size_t i = 0; i < 9; ++i) first(i, i) += 0.5;
    const auto oracle = product_oracle(t, first);
    for (std::size_t i = 0; i < 9; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 9; ++j) {
        sum += r.matrix(i, j);
        CHECK(r.matrix(i, j) == doctest::Approx(oracle(i, j)).epsilon(1e-13));
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("with nothing masked the revised rollout is the original rollout") {
  for (std::size_t stacks : {1, 2, 4}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      AttentionTrace t;
      for (std::size_t s = 0; s < stacks; ++s) t.weights.push_back(testing::dyadic_stochastic(12, {}, seed * 7 + s));
      const std::vector<std::uint8_t> all(12, 1);
      CHECK(revised_rollout(t, all).matrix == rollout(t).matrix);
    }
  }
}

TEST_CASE("masked tokens have all-zero columns in the revised rollout") {
  for (std::size_t stacks : {1, 2, 4}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const std::size_t L = 15;
      Rng rng(seed + 100);
      std::bernoulli_distribution miss(0.4);
      std::vector<std::uint8_t> mask(L);
      for (auto& m : mask) m = miss(rng) ? 0 : 1;
      mask[0] = 1;
      AttentionTrace t;
      t.weights.push_back(testing::dyadic_stochastic(L, mask, seed));
      for (std::size_t s = 1; s < stacks; ++s) t.weights.push_back(testing::dyadic_stochastic(L, {}, seed * 31 + s));
      const auto r = revised_rollout(t, mask);
      const auto oracle = product_oracle(t, revised_first_factor(t.weights[0], mask));
      for (std::size_t i = 0; i < L; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          sum += r.matrix(i, j);
          if (!mask[j]) CHECK(r.matrix(i, j) == 0.0);
          CHECK(r.matrix(i, j) == doctest::Approx(oracle(i, j)).epsilon(1e-13));
        }
        CHECK(std::abs(sum - 1.0) <= 1e-5);
      }
      const auto map = importance_map(r, 3, 5);
      const std::size_t observed = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
      for (std::size_t p = 0; p < L; ++p) {
        if (mask[p]) continue;
        CHECK(map.importance[p] == 0.0);
        CHECK(map.rank[p] > observed);
      }
    }
  }
}

TEST_CASE("model traces: revised and original are bit-identical on fully observed inputs") {
  const auto schema = testing::numeric_schema(3);
  const auto arch = make_architecture(ModelConfig{8, 2, 16, 2, 2}, schema, 3, EvatVariant::Scane);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto params = init_params<double>(arch, seed);
    const auto sm = testing::random_summary(schema, 3, 0.0, seed + 40);
    AttentionTrace t;
    predict(params, arch, sm, &t);
    const auto a = rollout(t).matrix, b = revised_rollout(t, sm.mask).matrix;
    CHECK(a == b);
  }
}

TEST_CASE("importance map reshape and ranks") {
  const std::size_t L = 6;
  auto uniform = Tensor<double>::matrix(L, L, 1.0 / L);
  RolloutResult r{uniform, RolloutKind::Original, {}};
  const auto m = importance_map(r, 2, 3);
  for (std::size_t p = 0; p < L; ++p) {
    CHECK(m.importance[p] == doctest::Approx(1.0 / L).epsilon(1e-15));
    CHECK(m.rank[p] == p + 1);
  }
  CHECK_THROWS_AS(importance_map(r, 4, 2), ShapeError);

  auto skew = Tensor<double>::matrix(L, L);
  const double col[] = {0.1, 0.3, 0.05, 0.3, 0.2, 0.05};
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) skew(i, j) = col[j];
  }
  const auto s = importance_map(RolloutResult{skew, RolloutKind::Revised, {}}, 2, 3);
  CHECK(s.rank == std::vector<std::size_t>{4, 1, 5, 2, 3, 6});
  CHECK(s.at(1, 0) == doctest::Approx(0.3));
  CHECK(s.rank_at(1, 2) == 6);
  auto sorted = s.rank;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < L; ++k) CHECK(sorted[k] == k + 1);
  // Mean ranks by column: (4+2)/2, (1+3)/2, (5+6)/2.
  CHECK(s.column_order() == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("importance export") {
  auto a = Tensor<double>::matrix(4, 4, 0.25);
  a(0, 3) = 0.5;
  a(0, 0) = 0.0;
  const auto map = importance_map(RolloutResult{a, RolloutKind::Original, {}}, 2, 2);
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "summit_imp.csv").string(), svg = (dir / "summit_imp.svg").string();
  const std::vector<std::string> names = {"a<b & \"c\"", "segment_entry_count"};
  export_importance(map, names, csv, svg);
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "window,feature,importance,rank");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  const auto first = slurp(svg);
  CHECK(well_formed_xml(first));
  CHECK(first.find("a&lt;b &amp; &quot;c&quot;") != std::string::npos);
  export_importance(map, names, csv, svg);
  CHECK(slurp(svg) == first);
  CHECK_FALSE(well_formed_xml("<svg><g></svg>"));
  CHECK_THROWS_AS(export_importance(map, {"only"}, csv, svg), ShapeError);
  std::filesystem::remove(csv);
  std::filesystem::remove(svg);
}

TEST_CASE("rollout variant names") {
  CHECK(parse_rollout_kind("original") == RolloutKind::Original);
  CHECK(to_string(parse_rollout_kind("revised")) == "revised");
  CHECK_THROWS_AS(parse_rollout_kind("other"), ConfigError);
}
