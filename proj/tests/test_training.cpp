#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "unicorn/checkpoint.hpp"
#include "unicorn/error.hpp"
#include "unicorn/ops.hpp"
#include "unicorn/training.hpp"

using namespace unicorn;
using unicorn::testing::toy_config;
using unicorn::testing::toy_sample;

namespace {

std::vector<SampleRecord> toy_set(std::size_t n, Rng& rng, const std::string& tag) {
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord s = toy_sample(4, 2 + i % 3, 8, rng, i % 5);
    s.sample_id = tag + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig plain_config() {
  TrainConfig c;
  c.lr = 1e-2;
  c.weight_decay = 0.05;
  c.domain_dropout_p = 0.0;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("domain mask keeps one modality and drops the rest with p") {
  Rng rng(1);
  CHECK(sample_domain_mask(ModalityMask::single(2), rng, 0.7) == ModalityMask::single(2));
  CHECK_THROWS_AS(sample_domain_mask(ModalityMask(), rng, 0.7), Error);

  const ModalityMask present = ModalityMask::all(4);
  const std::size_t draws = 100000;
  std::vector<double> dropped(4, 0.0), eligible(4, 0.0), kept(4, 0.0);
  for (std::size_t i = 0; i < draws; ++i) {
    const DomainMaskDraw d = draw_domain_mask(present, rng, 0.7);
    CHECK_FALSE(d.mask.empty());
    CHECK(d.mask.subset_of(present));
    CHECK(d.mask.contains(d.kept));
    kept[d.kept] += 1.0;
    for (std::size_t m = 0; m < 4; ++m) {
      if (m == d.kept) continue;
      eligible[m] += 1.0;
      dropped[m] += d.mask.contains(m) ? 0.0 : 1.0;
    }
  }
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(std::abs(dropped[m] / eligible[m] - 0.7) < 0.01);
    CHECK(std::abs(kept[m] / draws - 0.25) < 0.01);
  }

  ModalityMask partial;
  partial.insert(1);
  partial.insert(3);
  for (int i = 0; i < 1000; ++i) CHECK(sample_domain_mask(partial, rng, 0.9).subset_of(partial));
}

TEST_CASE("adamw: zero gradients") {
  ParamRegistry reg;
  Tensor w = reg.add("w", Tensor::from({2}, {1.5, -2.0}, true), true);
  Tensor b = reg.add("b", Tensor::from({2}, {0.5, 3.0}, true), false);
  reg.zero_grad();
  OptimizerState state;
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(reg, state, cfg);
  CHECK(w.at(0) == 1.5);
  CHECK(b.at(1) == 3.0);

  cfg.lr = 0.1;
  cfg.weight_decay = 0.1;
  adamw_step(reg, state, cfg);
  CHECK(w.at(0) == 1.5 * 0.99);
  CHECK(w.at(1) == -2.0 * 0.99);
  CHECK(b.at(0) == 0.5);
  CHECK(b.at(1) == 3.0);
}

TEST_CASE("adamw: single step closed form") {
  ParamRegistry reg;
  Tensor p = reg.add("p", Tensor::from({1}, {1.0}, true), true);
  p.mutable_grad()[0] = 1.0;
  OptimizerState state;
  const TrainConfig cfg;
  adamw_step(reg, state, cfg);
  // m_hat = g, v_hat = g^2 after one bias-corrected step.
  const double expected = 1.0 * (1.0 - 2e-5 * 2e-5) - 2e-5 * 1.0 / (1.0 + 1e-8);
  CHECK(std::abs(p.at(0) - expected) < 1e-12);
  CHECK(state.step == 1);

  // Second step with g = -0.5, unrolled by hand.
  p.mutable_grad()[0] = -0.5;
  const double m = 0.9 * 0.1 + 0.1 * -0.5;
  const double v = 0.999 * 0.001 + 0.001 * 0.25;
  const double m_hat = m / (1.0 - 0.81), v_hat = v / (1.0 - 0.999 * 0.999);
  const double second = expected * (1.0 - 2e-5 * 2e-5) - 2e-5 * m_hat / (std::sqrt(v_hat) + 1e-8);
  adamw_step(reg, state, cfg);
  CHECK(std::abs(p.at(0) - second) < 1e-12);
}

TEST_CASE("adamw rejects a registry without gradients") {
  ParamRegistry reg;
  OptimizerState state;
  CHECK_THROWS_AS(adamw_step(reg, state, TrainConfig()), Error);
}

TEST_CASE("accumulated steps equal steps on the averaged loss") {
  Rng rng(2);
  const ModelConfig mc = toy_config();
  const auto train_set = toy_set(7, rng, "t");
  const auto val_set = toy_set(2, rng, "v");
  TrainConfig tc = plain_config();
  tc.accum_steps = 4;
  const TrainResult trained = train_model(make_model(mc, 9), train_set, val_set, tc);
  REQUIRE(trained.best_epoch == 1);

  // Replay: the epoch order comes from the same shuffle stream; windows of 4
  // then the leftover 3, each one step on the window's mean loss.
  auto ref = make_model(mc, 9);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng(tc.seed).split("shuffle").shuffle(order);
  OptimizerState state;
  for (std::size_t start = 0; start < order.size(); start += 4) {
    const std::size_t end = std::min(order.size(), start + 4);
    ref->params().zero_grad();
    std::vector<Tensor> losses;
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = train_set[order[i]];
      losses.push_back(ops::reshape(
          ops::cross_entropy(ref->forward(s, ModalityMask::all(4), nullptr, false).logits, s.label), {1, 1}));
    }
    ops::scale(ops::sum(ops::concat_rows(losses)), 1.0 / static_cast<double>(end - start)).backward();
    adamw_step(ref->params(), state, tc);
  }
  CHECK(state.step == 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < ref->params().size(); ++i) {
    const auto a = ref->params().entries()[i].value.data();
    const auto b = trained.model->params().entries()[i].value.data();
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("zero epochs returns the initialization") {
  Rng rng(3);
  const auto train_set = toy_set(3, rng, "t");
  const auto val_set = toy_set(2, rng, "v");
  TrainConfig tc = plain_config();
  tc.epochs = 0;
  const TrainResult r = train_model(make_model(toy_config(), 4), train_set, val_set, tc);
  CHECK(r.history.empty());
  CHECK(r.best_epoch == 0);
  CHECK(encode_checkpoint(*r.model) == encode_checkpoint(*make_model(toy_config(), 4)));
}

TEST_CASE("training is deterministic and keeps the best validation epoch") {
  Rng rng(4);
  const auto train_set = toy_set(10, rng, "t");
  const auto val_set = toy_set(5, rng, "v");
  TrainConfig tc = plain_config();
  tc.epochs = 4;
  tc.domain_dropout_p = 0.7;
  ModelConfig mc = toy_config();
  mc.dropout_p = 0.2;
  const TrainResult a = train_model(make_model(mc, 5), train_set, val_set, tc);
  const TrainResult b = train_model(make_model(mc, 5), train_set, val_set, tc);
  CHECK(encode_checkpoint(*a.model) == encode_checkpoint(*b.model));
  CHECK(format_history(a.history) == format_history(b.history));
  REQUIRE(a.history.size() == 4);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& h : a.history)
    if (h.val_f1 > best) best = h.val_f1, best_epoch = h.epoch;
  CHECK(a.best_epoch == best_epoch);
  CHECK(evaluate(*a.model, val_set).macro_f1 == best);

  tc.seed = 1;
  const TrainResult c = train_model(make_model(mc, 5), train_set, val_set, tc);
  CHECK(format_history(c.history) != format_history(a.history));
}

TEST_CASE("non-finite loss names the sample") {
  Rng rng(5);
  auto train_set = toy_set(3, rng, "t");
  const auto val_set = toy_set(1, rng, "v");
  for (double& v : train_set[1].bags.at(0).matrix.mutable_data()) v = 1e308;
  try {
    train_model(make_model(toy_config(), 1), train_set, val_set, plain_config());
    FAIL("expected a non-finite error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
    CHECK(std::string(e.what()).find("t1") != std::string::npos);
  }
}

TEST_CASE("train config text and validation") {
  TrainConfig c;
  c.lr = 3e-4;
  c.accum_steps = 4;
  KeyValues kv;
  c.to_kv(kv);
  const TrainConfig back = TrainConfig::from_kv(kv);
  CHECK(back.lr == 3e-4);
  CHECK(back.accum_steps == 4);
  CHECK(back.epochs == 30);
  TrainConfig bad;
  bad.accum_steps = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = TrainConfig();
  bad.domain_dropout_p = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("empty train or validation set is an error") {
  Rng rng(6);
  const auto set = toy_set(2, rng, "t");
  CHECK_THROWS_AS(train_model(make_model(toy_config(), 1), {}, set, plain_config()), Error);
  CHECK_THROWS_AS(train_model(make_model(toy_config(), 1), set, {}, plain_config()), Error);
}
