#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "summit/error.hpp"
#include "summit/gradcheck.hpp"
#include "summit/model.hpp"

using namespace summit;

namespace {

ModelConfig small_model(std::size_t layers = 2) { return ModelConfig{8, 2, 16, layers, 2}; }

double row_sum(const Tensor<double>& w, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j);
  return s;
}

}  // namespace

TEST_CASE("positional encoding") {
  const auto pe = positional_encoding(12, 8);
  for (std::size_t k = 0; k < 8; ++k) CHECK(pe(0, k) == (k % 2 == 0 ? 0.0 : 1.0));
  for (double v : pe.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(pe == positional_encoding(12, 8));
  CHECK(pe(3, 0) == std::sin(3.0));
  CHECK(pe(3, 1) == std::cos(3.0));
  CHECK(pe(5, 2) == doctest::Approx(std::sin(5.0 / std::pow(10000.0, 0.25))).epsilon(1e-15));
  CHECK_THROWS_AS(positional_encoding(4, 7), ConfigError);
}

TEST_CASE("model configuration is validated") {
  CHECK_NOTHROW(small_model().validate());
  CHECK_THROWS_AS((ModelConfig{8, 3, 16, 1, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((ModelConfig{8, 2, 16, 0, 2}.validate()), ConfigError);
  CHECK(ModelConfig{8, 2, 16, 1, 32}.hidden() == 1);
  CHECK_THROWS_AS((LossConfig{0.0, 2.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LossConfig{0.5, -1.0}.validate()), ConfigError);
}

TEST_CASE("uniform scores attend evenly to the unmasked keys") {
  ModelConfig cfg{2, 1, 2, 1, 1};
  ParamSet<double> p;
  p.add("encoder.0.w_q", Tensor<double>::matrix(2, 2));
  p.add("encoder.0.w_k", Tensor<double>::matrix(2, 2));
  p.add("encoder.0.w_v", testing::random_matrix(2, 2, 1));
  p.add("encoder.0.w_o", testing::random_matrix(2, 2, 2));
  p.add("encoder.0.b_o", Tensor<double>({2}));
  Tape<double> tape;
  auto z = tape.constant(testing::random_matrix(3, 2, 3));
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  AttentionTrace trace;
  masked_attention(tape, p, cfg, 0, z, mask, &trace);
  REQUIRE(trace.weights.size() == 1);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(trace.weights[0](i, 0) == 0.5);
    CHECK(trace.weights[0](i, 1) == 0.0);
    CHECK(trace.weights[0](i, 2) == 0.5);
  }

  // An all-ones mask is the same as no mask at all.
  const std::vector<std::uint8_t> ones = {1, 1, 1};
  auto zr = tape.constant(testing::random_matrix(3, 2, 4));
  p.at("encoder.0.w_q") = testing::random_matrix(2, 2, 5);
  p.at("encoder.0.w_k") = testing::random_matrix(2, 2, 6);
  const auto a = tape.value(masked_attention(tape, p, cfg, 0, zr, ones, nullptr));
  const auto b = tape.value(masked_attention(tape, p, cfg, 0, zr, {}, nullptr));
  CHECK(a == b);
}

TEST_CASE("masked keys get zero weight and masked values never reach the output") {
  const auto schema = testing::mixed_schema();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto variant = kAllVariants[seed % 5];
    const auto arch = make_architecture(small_model(), schema, 3, variant);
    const auto params = init_params<double>(arch, seed);
    const auto sm = testing::random_summary(schema, 3, 0.5, 1000 + seed);
    AttentionTrace trace;
    const double p = predict(params, arch, sm, &trace);
    REQUIRE(trace.weights.size() == 2);
    const auto& w1 = trace.weights[0];
    for (std::size_t j = 0; j < sm.tokens(); ++j) {
      if (sm.mask[j]) continue;
      for (std::size_t i = 0; i < sm.tokens(); ++i) CHECK(std::abs(w1(i, j)) <= 1e-12);
    }
    for (const auto& w : trace.weights) {
      for (std::size_t i = 0; i < w.rows(); ++i) CHECK(std::abs(row_sum(w, i) - 1.0) <= 1e-5);
    }
    CHECK(trace.guarded_rows == 0);

    auto perturbed = sm;
    for (std::size_t c = 0; c < sm.tokens(); ++c) {
      if (!sm.mask[c]) perturbed.values[c] = 1e6 * static_cast<double>(c + 1) - 3.25;
    }
    CHECK(predict(params, arch, perturbed) == p);
    const auto pf = init_params<float>(arch, seed);
    CHECK(predict(pf, arch, perturbed) == predict(pf, arch, sm));
  }
}

TEST_CASE("the second stack attends to positions that were missing") {
  const auto schema = testing::numeric_schema(2);
  const auto arch = make_architecture(small_model(), schema, 4, EvatVariant::Scane);
  const auto params = init_params<double>(arch, 3);
  const auto sm = testing::random_summary(schema, 4, 0.5, 8);
  AttentionTrace trace;
  predict(params, arch, sm, &trace);
  double to_missing = 0.0;
  for (std::size_t j = 0; j < sm.tokens(); ++j) {
    if (sm.mask[j]) continue;
    for (std::size_t i = 0; i < sm.tokens(); ++i) to_missing += trace.weights[1](i, j);
  }
  CHECK(to_missing > 0.0);
}

TEST_CASE("swapping two tokens together with their positional rows leaves the pooled output unchanged") {
  const auto schema = testing::numeric_schema(2);
  const auto arch = make_architecture(small_model(), schema, 4, EvatVariant::Scane);
  const auto params = init_params<double>(arch, 4);
  const auto sm = testing::random_summary(schema, 4, 0.3, 9);
  const std::size_t a = 1, b = 7;

  Tape<double> t1;
  auto tokens = embed_tokens(t1, params, arch.layout, arch.variant, sm);
  const auto x = t1.value(tokens);
  const auto pooled = t1.value(encoder_forward(t1, params, arch, tokens, sm.mask, nullptr));

  auto swapped = x;
  auto mask = sm.mask;
  auto arch2 = arch;
  for (std::size_t k = 0; k < x.cols(); ++k) {
    std::swap(swapped(a, k), swapped(b, k));
    std::swap(arch2.pe(a, k), arch2.pe(b, k));
  }
  std::swap(mask[a], mask[b]);
  Tape<double> t2;
  const auto pooled2 = t2.value(encoder_forward(t2, params, arch2, t2.constant(swapped), mask, nullptr));
  for (std::size_t k = 0; k < pooled.size(); ++k) CHECK(pooled2[k] == doctest::Approx(pooled[k]).epsilon(1e-12));
}

TEST_CASE("an empty sample takes the guarded path and ignores the embedding") {
  const auto schema = testing::numeric_schema(2);
  const auto arch = make_architecture(small_model(1), schema, 2, EvatVariant::Scane);
  auto params = init_params<double>(arch, 5);
  SummaryMatrix sm(2, 3);
  AttentionTrace trace;
  const double p = predict(params, arch, sm, &trace);
  CHECK(trace.guarded_rows == 6);
  for (double v : trace.weights[0].values()) CHECK(v == 0.0);
  params.at("embed.numeric") = testing::random_matrix(3, 8, 6);
  CHECK(predict(params, arch, sm) == p);
  CHECK(std::isfinite(p));
}

TEST_CASE("classifier head") {
  const auto arch = make_architecture(small_model(1), testing::numeric_schema(1), 1, EvatVariant::Scane);
  auto params = init_params<double>(arch, 1);
  for (const char* name : {"head.w1", "head.b1", "head.w2", "head.b2"}) {
    for (auto& v : params.at(name).values()) v = 0.0;
  }
  Tape<double> tape;
  auto pooled = tape.constant(testing::random_matrix(1, 8, 2, 10.0));
  CHECK(tape.value(classify(tape, params, pooled))[0] == 0.5);

  params = init_params<double>(arch, 1);
  double prev = 0.0;
  for (double bias : {-30.0, -2.0, 0.0, 1.0, 30.0}) {
    params.at("head.b2")[0] = bias;
    Tape<double> t;
    const double p = t.value(classify(t, params, t.constant(testing::random_matrix(1, 8, 2))))[0];
    CHECK(p > prev);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    prev = p;
  }
}

TEST_CASE("focal loss values") {
  CHECK(focal_loss(0.9, 1, {1.0, 2.0}) == doctest::Approx(-0.01 * std::log(0.9)).epsilon(1e-15));
  CHECK(focal_loss(0.9, 1, {1.0, 2.0}) == doctest::Approx(0.0010536).epsilon(1e-4));
  for (double p : {0.1, 0.37, 0.8}) {
    CHECK(focal_loss(p, 1, {0.5, 0.0}) == 0.5 * -std::log(p));
    CHECK(focal_loss(p, 0, {0.5, 0.0}) == 0.5 * -std::log(1.0 - p));
  }
  const double r2 = focal_loss(0.9, 1, {0.25, 2.0}) / focal_loss(0.6, 1, {0.25, 2.0});
  const double r0 = focal_loss(0.9, 1, {0.25, 0.0}) / focal_loss(0.6, 1, {0.25, 0.0});
  CHECK(r2 < r0);
  CHECK(focal_loss(0.0, 1, {0.25, 2.0}) == doctest::Approx(-0.25 * std::pow(1 - 1e-7, 2) * std::log(1e-7)));
  CHECK(std::isfinite(focal_loss(1.0, 0, {0.25, 2.0})));
  CHECK(focal_loss(0.3, 0, {0.25, 2.0}) == doctest::Approx(-0.75 * 0.09 * std::log(0.7)).epsilon(1e-15));
}

TEST_CASE("with nothing missing and an unmodulated loss the sample loss is half cross-entropy") {
  const auto schema = testing::numeric_schema(2);
  const auto arch = make_architecture(small_model(), schema, 2, EvatVariant::Scane);
  const auto params = init_params<double>(arch, 9);
  const auto sm = testing::random_summary(schema, 2, 0.0, 10);
  for (auto m : sm.mask) REQUIRE(m == 1);
  const double p = predict(params, arch, sm);
  CHECK(sample_loss(params, arch, sm, 1, {0.5, 0.0}) == doctest::Approx(-0.5 * std::log(p)).epsilon(1e-14));
  CHECK(sample_loss(params, arch, sm, 0, {0.5, 0.0}) == doctest::Approx(-0.5 * std::log(1 - p)).epsilon(1e-14));
}

TEST_CASE("full model gradients match finite differences for every variant") {
  const auto schema = testing::mixed_schema();
  for (auto variant : kAllVariants) {
    for (std::uint64_t seed : {1, 2}) {
      const auto arch = make_architecture(small_model(), schema, 2, variant);
      const auto params = init_params<double>(arch, seed);
      const auto sm = testing::random_summary(schema, 2, 0.4, 50 + seed);
      const int label = static_cast<int>(seed % 2);
      LossFn fn = [&](const ParamSet<double>& q, ParamSet<double>* g) {
        return sample_loss(q, arch, sm, label, LossConfig{}, g);
      };
      const auto rep = grad_check(fn, params);
      INFO(to_string(variant), " seed ", seed, " worst ", rep.worst_path, " ", rep.global_max);
      CHECK(rep.pass);
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  const auto schema = testing::numeric_schema(2);
  const auto arch = make_architecture(small_model(), schema, 2, EvatVariant::Scane);
  const auto params = init_params<double>(arch, 1);
  CHECK_THROWS_AS(predict(params, arch, SummaryMatrix(3, 3)), ShapeError);
  CHECK_THROWS_AS(make_architecture(small_model(), schema, 0, EvatVariant::Scane), ConfigError);
}
