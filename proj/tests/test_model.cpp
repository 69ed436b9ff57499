#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "unicorn/baselines.hpp"
#include "unicorn/checkpoint.hpp"
#include "unicorn/error.hpp"
#include "unicorn/model.hpp"
#include "unicorn/ops.hpp"

using namespace unicorn;
using unicorn::testing::check_gradients;
using unicorn::testing::toy_config;
using unicorn::testing::toy_sample;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

SampleRecord shuffled_patches(const SampleRecord& s, Rng& rng) {
  SampleRecord out = s;
  for (auto& [m, bag] : out.bags) {
    const std::size_t n = bag.matrix.dim(0), d = bag.matrix.dim(1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<double> values;
    for (const auto r : order)
      for (std::size_t c = 0; c < d; ++c) values.push_back(bag.matrix.at(r, c));
    bag.matrix = Tensor::from({n, d}, values);
  }
  return out;
}

}  // namespace

TEST_CASE("single-modality forward shape contract") {
  Rng rng(1);
  const auto model = make_model(toy_config(), 3);
  const SampleRecord s = toy_sample(4, 5, 8, rng);
  const ForwardTrace t = model->forward(s, ModalityMask::single(0), nullptr, false);
  REQUIRE(t.aggregator_attention.size() == 2);
  CHECK(t.aggregator_attention[0].tokens == 2);
  CHECK(t.aggregator_modalities == std::vector<std::size_t>{0});
  CHECK(t.logits.numel() == 5);
  CHECK(t.penultimate.size() == 16);
  CHECK(t.expert_attention[0].size() == 2);
  CHECK(t.expert_attention[0][0].tokens == 6);
  CHECK(t.expert_attention[1].empty());
  double total = 0.0;
  for (const double p : t.probabilities) total += p;
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("aggregator tokens follow canonical modality order") {
  Rng rng(2);
  const auto model = make_model(toy_config(), 3);
  const SampleRecord s = toy_sample(4, 3, 8, rng);
  ModalityMask mask;
  mask.insert(3);
  mask.insert(1);
  const ForwardTrace t = model->forward(s, mask, nullptr, false);
  CHECK(t.aggregator_modalities == std::vector<std::size_t>{1, 3});
}

TEST_CASE("masking equals absence bit-exact") {
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = make_model(toy_config(), seed);
    const SampleRecord s = toy_sample(4, 2 + seed % 4, 8, rng);
    const ModalityMask mask = ModalityMask::all(4).without(seed % 4).without((seed + 1) % 4);
    const ForwardTrace masked = model->forward(s, mask, nullptr, false);
    const SampleRecord deleted = restrict_to(s, mask);
    const ForwardTrace absent = model->forward(deleted, ModalityMask::of_sample(deleted), nullptr, false);
    for (std::size_t c = 0; c < 5; ++c) CHECK(masked.logits.at(c) == absent.logits.at(c));
    CHECK(masked.penultimate == absent.penultimate);
  }
}

TEST_CASE("logits are invariant to patch order") {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = make_model(toy_config(), seed);
    const SampleRecord s = toy_sample(4, 6, 8, rng);
    const SampleRecord p = shuffled_patches(s, rng);
    const auto a = model->forward(s, ModalityMask::all(4), nullptr, false).logits;
    const auto b = model->forward(p, ModalityMask::all(4), nullptr, false).logits;
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(a.at(c) - b.at(c)) < 1e-9);
  }
}

TEST_CASE("argmax breaks ties toward the lower index") {
  CHECK(argmax({0.2, 0.2, 0.2, 0.2, 0.2}) == 0);
  CHECK(argmax({0.1, 0.4, 0.4, 0.1}) == 1);
  CHECK(argmax({0.0, 0.0, 1.0}) == 2);

  // A zero head yields equal logits, so prediction falls to class 0.
  Rng rng(5);
  const auto model = make_model(toy_config(), 1);
  for (auto& e : model->params().entries())
    if (e.name == "head.w")
      for (double& v : e.value.mutable_data()) v = 0.0;
  const Prediction p = predict(*model, toy_sample(4, 3, 8, rng), ModalityMask::all(4));
  CHECK(p.label == 0);
  for (const double q : p.probabilities) CHECK(std::abs(q - 0.2) < 1e-15);
}

TEST_CASE("cls to modality-token attention") {
  Rng rng(6);
  const auto model = make_model(toy_config(), 2);
  const SampleRecord s = toy_sample(4, 4, 8, rng);
  const ForwardTrace one = model->forward(s, ModalityMask::single(2), nullptr, false);
  const auto att = cls_to_mt_attention(one, 4);
  REQUIRE(att.size() == 4);
  CHECK_FALSE(att[0].has_value());
  CHECK_FALSE(att[1].has_value());
  CHECK_FALSE(att[3].has_value());
  REQUIRE(att[2].has_value());
  double self = 0.0;
  for (const auto& rec : one.aggregator_attention)
    for (std::size_t h = 0; h < rec.heads.size(); ++h) self += rec.at(h, 0, 0);
  self /= static_cast<double>(one.aggregator_attention.size() * one.aggregator_attention[0].heads.size());
  CHECK(std::abs(*att[2] - (1.0 - self)) < 1e-12);

  const auto all = cls_to_mt_attention(model->forward(s, ModalityMask::all(4), nullptr, false), 4);
  double total = 0.0;
  for (const auto& v : all) {
    REQUIRE(v.has_value());
    CHECK(*v >= 0.0);
    CHECK(*v <= 1.0);
    total += *v;
  }
  CHECK(total <= 1.0 + 1e-12);
}

TEST_CASE("forward input errors") {
  Rng rng(7);
  const auto model = make_model(toy_config(), 1);
  SampleRecord s = toy_sample(2, 3, 8, rng);
  CHECK(code_of([&] { model->forward(s, ModalityMask(), nullptr, false); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { model->forward(s, ModalityMask::single(3), nullptr, false); }) == ErrorCode::kInvalidArgument);
  SampleRecord wide = toy_sample(1, 3, 9, rng);
  CHECK(code_of([&] { model->forward(wide, ModalityMask::single(0), nullptr, false); }) ==
        ErrorCode::kConfigMismatch);
  s.bags.at(1).matrix = Tensor::zeros({0, 8});
  CHECK(code_of([&] { model->forward(s, ModalityMask::single(1), nullptr, false); }) == ErrorCode::kData);
}

TEST_CASE("model config validation") {
  ModelConfig c = toy_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = toy_config();
  c.blocks_aggregator = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = toy_config();
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("initial loss is near ln 5 under default init") {
  Rng rng(8);
  ModelConfig c = toy_config(16, 32);
  c.init_std = 0.02;
  const auto model = make_model(c, 11);
  double total = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const SampleRecord s = toy_sample(4, 6, 16, rng, i % 5);
    total += ops::cross_entropy(model->forward(s, ModalityMask::all(4), nullptr, false).logits, s.label).item();
  }
  CHECK(std::abs(total / 20.0 - std::log(5.0)) < 0.1);
}

TEST_CASE("end-to-end gradients match central differences") {
  Rng rng(9);
  ModelConfig c = toy_config(8, 16);
  const auto model = make_model(c, 5);
  const SampleRecord s = toy_sample(4, 2, 8, rng, 3);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (const auto& e : model->params().entries()) {
    params.push_back(e.value);
    names.push_back(e.name);
  }
  const auto r = check_gradients(
      [&] { return ops::cross_entropy(model->forward(s, ModalityMask::all(4), nullptr, false).logits, s.label); },
      params, names, 1e-6, 1e-4);
  INFO(r.worst);
  CHECK(r.checked == model->params().scalar_count());
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("baseline gradients and structure") {
  Rng rng(10);
  for (const ModelKind kind : {ModelKind::kAttentionMil, ModelKind::kSingleStreamTransformer}) {
    ModelConfig c = toy_config();
    c.kind = kind;
    const auto model = make_model(c, 4);
    const SampleRecord s = toy_sample(3, 2, 8, rng, 1);
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& e : model->params().entries()) {
      params.push_back(e.value);
      names.push_back(e.name);
    }
    const auto r = check_gradients(
        [&] { return ops::cross_entropy(model->forward(s, ModalityMask::of_sample(s), nullptr, false).logits, 1); },
        params, names, 1e-6, 1e-4);
    INFO(model_kind_name(kind), " ", r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("attention MIL pools over the union of bags") {
  Rng rng(11);
  ModelConfig c = toy_config();
  c.kind = ModelKind::kAttentionMil;
  const auto model = make_model(c, 4);
  const SampleRecord s = toy_sample(3, 4, 8, rng);
  const ForwardTrace t = model->forward(s, ModalityMask::of_sample(s), nullptr, false);
  REQUIRE(t.pooling_weights.size() == 12);
  double total = 0.0;
  for (const double w : t.pooling_weights) total += w;
  CHECK(std::abs(total - 1.0) < 1e-12);
  // Stain identity is discarded: moving a bag to another modality slot changes nothing.
  SampleRecord moved = s;
  auto node = moved.bags.extract(2);
  node.key() = 3;
  node.mapped().modality = 3;
  moved.bags.insert(std::move(node));
  const ForwardTrace u = model->forward(moved, ModalityMask::of_sample(moved), nullptr, false);
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(t.logits.at(k) - u.logits.at(k)) < 1e-12);
}

TEST_CASE("single-stream transformer is invariant to patch order across bags") {
  Rng rng(12);
  ModelConfig c = toy_config();
  c.kind = ModelKind::kSingleStreamTransformer;
  const auto model = make_model(c, 4);
  const SampleRecord s = toy_sample(2, 3, 8, rng);
  SampleRecord swapped = s;
  std::swap(swapped.bags.at(0).matrix, swapped.bags.at(1).matrix);
  const auto a = model->forward(s, ModalityMask::of_sample(s), nullptr, false).logits;
  const auto b = model->forward(swapped, ModalityMask::of_sample(s), nullptr, false).logits;
  for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(a.at(k) - b.at(k)) < 1e-9);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Rng rng(13);
  for (const ModelKind kind : {ModelKind::kUnicorn, ModelKind::kAttentionMil, ModelKind::kSingleStreamTransformer}) {
    ModelConfig c = toy_config();
    c.kind = kind;
    const auto model = make_model(c, 8);
    const std::string bytes = encode_checkpoint(*model);
    const auto back = decode_checkpoint(bytes);
    CHECK(back->config() == model->config());
    REQUIRE(back->params().size() == model->params().size());
    for (std::size_t i = 0; i < model->params().size(); ++i) {
      const auto& a = model->params().entries()[i];
      const auto& b = back->params().entries()[i];
      CHECK(a.name == b.name);
      CHECK(a.value.shape() == b.value.shape());
      CHECK(std::equal(a.value.data().begin(), a.value.data().end(), b.value.data().begin()));
    }
    CHECK(encode_checkpoint(*back) == bytes);
  }
}

TEST_CASE("checkpoint rejects damaged input") {
  const auto model = make_model(toy_config(4, 8), 1);
  const std::string bytes = encode_checkpoint(*model);
  for (std::size_t len = 0; len < bytes.size(); ++len) {
    const ErrorCode code = code_of([&] { decode_checkpoint(std::string_view(bytes).substr(0, len)); });
    if (code != ErrorCode::kTruncated) FAIL_CHECK("prefix " << len << " gave " << error_class_name(code));
  }
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(code_of([&] { decode_checkpoint(bad); }) == ErrorCode::kBadMagic);
  std::string version = bytes;
  version[8] = 2;
  CHECK(code_of([&] { decode_checkpoint(version); }) == ErrorCode::kUnsupportedVersion);
  CHECK(code_of([&] { decode_checkpoint(bytes + "x"); }) == ErrorCode::kData);
}
