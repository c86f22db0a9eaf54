#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "summit/error.hpp"
#include "summit/gradcheck.hpp"
#include "summit/kernels.hpp"
#include "summit/rng.hpp"
#include "summit/tape.hpp"

using namespace summit;
using testing::random_matrix;

namespace {

using Builder = std::function<Tape<double>::Var(Tape<double>&, const ParamSet<double>&)>;

// Reduces the op output to a scalar with fixed random weights and checks
// the tape's gradient against central differences.
GradReport check_op(ParamSet<double> params, const Builder& build, std::uint64_t seed = 99) {
  LossFn fn = [&](const ParamSet<double>& p, ParamSet<double>* grads) {
    Tape<double> tape;
    auto out = build(tape, p);
    const auto w = random_matrix(tape.value(out).rows(), tape.value(out).cols(), seed);
    auto loss = tape.weighted_sum(out, w);
    if (grads) {
      tape.backward(loss);
      tape.accumulate_param_grads(*grads);
    }
    return tape.value(loss)[0];
  };
  return grad_check(fn, std::move(params));
}

ParamSet<double> one(const std::string& name, Tensor<double> t) {
  ParamSet<double> p;
  p.add(name, std::move(t));
  return p;
}

}  // namespace

TEST_CASE("tensor shapes are validated") {
  CHECK_THROWS_AS(Tensor<double>({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>(std::vector<std::size_t>{}), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor<double> v({4});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 4);
  auto m = Tensor<double>::matrix(2, 3, 1.5);
  CHECK(m(1, 2) == 1.5);
  CHECK(m.cast<float>().cast<double>() == m);
}

TEST_CASE("param set rejects duplicate paths and unknown lookups") {
  ParamSet<double> p;
  p.add("a", Tensor<double>({2}));
  CHECK_THROWS_AS(p.add("a", Tensor<double>({2})), ConfigError);
  CHECK_THROWS_AS(p.at("b"), ConfigError);
  CHECK(p.scalar_count() == 2);
  CHECK(p.zeros_like().at("a").values()[0] == 0.0);
}

TEST_CASE("matmul matches a naive triple loop") {
  const auto a = random_matrix(5, 7, 1), b = random_matrix(7, 3, 2);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows are stochastic, shift invariant and reject bad input") {
  auto x = random_matrix(4, 6, 3, 5.0);
  const auto s = softmax_rows(x);
  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += s(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto shifted = x;
  for (auto& v : shifted.values()) v += 100.0;
  const auto s2 = softmax_rows(shifted);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_rows(Tensor<double>({2, 2, 2})), ShapeError);
  x(0, 0) = std::nan("");
  CHECK_THROWS_AS(softmax_rows(x), NumericError);
}

TEST_CASE("gelu uses the exact erf form") {
  CHECK(kernels::gelu(0.0) == 0.0);
  CHECK(kernels::gelu(1.0) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-15));
  CHECK(kernels::gelu(-3.0) == doctest::Approx(-3.0 * 0.5 * std::erfc(3.0 / std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("every tape op passes a finite-difference check") {
  SUBCASE("matmul and matmul_nt") {
    ParamSet<double> p;
    p.add("a", random_matrix(3, 4, 10));
    p.add("b", random_matrix(4, 2, 11));
    p.add("c", random_matrix(5, 4, 12));
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            return t.matmul(t.param("a", q.at("a")), t.param("b", q.at("b")));
          }).pass);
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            return t.matmul_nt(t.param("c", q.at("c")), t.param("a", q.at("a")));
          }).pass);
  }
  SUBCASE("add, add_row, add_const, scale, mul_rows") {
    ParamSet<double> p;
    p.add("a", random_matrix(3, 4, 13));
    p.add("b", random_matrix(3, 4, 14));
    p.add("r", Tensor<double>({4}, std::vector<double>{0.1, -0.2, 0.3, 0.4}));
    const auto k = random_matrix(3, 4, 15);
    CHECK(check_op(p, [&](Tape<double>& t, const ParamSet<double>& q) {
            auto s = t.add(t.param("a", q.at("a")), t.param("b", q.at("b")));
            s = t.add_row(s, t.param("r", q.at("r")));
            s = t.add_const(s, k);
            s = t.scale(s, -1.7);
            return t.mul_rows(s, {0.5, 0.0, -2.0});
          }).pass);
  }
  SUBCASE("gather_rows with missing rows") {
    auto p = one("table", random_matrix(4, 3, 16));
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            return t.gather_rows(t.param("table", q.at("table")), {2, -1, 0, 2, 3}, {1.5, 1.0, -0.3, 2.0, 0.7});
          }).pass);
  }
  SUBCASE("softmax and masked attention weights") {
    auto p = one("s", random_matrix(4, 4, 17));
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            return t.softmax_rows(t.param("s", q.at("s")));
          }).pass);
    const std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    CHECK(check_op(p, [&](Tape<double>& t, const ParamSet<double>& q) {
            return t.attention_weights(t.param("s", q.at("s")), mask, 0.7);
          }).pass);
  }
  SUBCASE("gelu, sigmoid, layer_norm, mean_rows") {
    ParamSet<double> p;
    p.add("x", random_matrix(3, 6, 18));
    p.add("g", random_matrix(1, 6, 19));
    p.add("b", random_matrix(1, 6, 20));
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            auto x = t.gelu(t.param("x", q.at("x")));
            x = t.layer_norm(x, t.param("g", q.at("g")), t.param("b", q.at("b")));
            return t.sigmoid(t.mean_rows(x));
          }).pass);
  }
  SUBCASE("slice and concat") {
    auto p = one("x", random_matrix(3, 6, 21));
    CHECK(check_op(p, [](Tape<double>& t, const ParamSet<double>& q) {
            auto x = t.param("x", q.at("x"));
            return t.concat_cols({t.slice_cols(x, 4, 6), t.slice_cols(x, 0, 2), t.slice_cols(x, 1, 5)});
          }).pass);
  }
  SUBCASE("focal loss for both labels") {
    for (int label : {0, 1}) {
      auto p = one("z", Tensor<double>({1, 1}, std::vector<double>{0.3}));
      CHECK(check_op(p, [label](Tape<double>& t, const ParamSet<double>& q) {
              return t.focal_loss(t.sigmoid(t.param("z", q.at("z"))), label, 0.25, 2.0);
            }).pass);
    }
  }
}

TEST_CASE("attention weights: all-masked keys give a zero row and are counted") {
  Tape<double> t;
  auto s = t.constant(random_matrix(3, 3, 22));
  std::size_t guarded = 0;
  const std::vector<std::uint8_t> none = {0, 0, 0};
  auto w = t.attention_weights(s, none, 1.0, &guarded);
  CHECK(guarded == 3);
  for (double v : t.value(w).values()) CHECK(v == 0.0);
}

TEST_CASE("attention weights: uniform scores spread over unmasked keys only") {
  Tape<double> t;
  auto s = t.constant(Tensor<double>::matrix(3, 3));
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  auto w = t.value(t.attention_weights(s, mask, 0.5));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(w(i, 0) == 0.5);
    CHECK(w(i, 1) == 0.0);
    CHECK(w(i, 2) == 0.5);
  }
}

TEST_CASE("grad_check flags a wrong gradient and names non-finite losses") {
  auto p = one("w", random_matrix(2, 2, 23));
  LossFn wrong = [](const ParamSet<double>& q, ParamSet<double>* g) {
    double s = 0.0;
    for (double v : q.at("w").values()) s += v * v;
    if (g) {
      auto gv = g->at("w").values();
      auto qv = q.at("w").values();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += 3.0 * qv[i];  // should be 2x
    }
    return s;
  };
  const auto rep = grad_check(wrong, p);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst_path == "w");
  LossFn bad = [](const ParamSet<double>&, ParamSet<double>*) { return std::nan(""); };
  CHECK_THROWS_AS(grad_check(bad, p), NumericError);
}

TEST_CASE("derived seeds are stable and label-sensitive") {
  CHECK(derive_seed(7, "init") == derive_seed(7, "init"));
  CHECK(derive_seed(7, "init") != derive_seed(7, "shuffle"));
  CHECK(derive_seed(7, "init") != derive_seed(8, "init"));
  CHECK(derive_seed(7, std::uint64_t{1}) != derive_seed(7, std::uint64_t{2}));
  // Pinned value: a change here silently changes every seeded artifact.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}
