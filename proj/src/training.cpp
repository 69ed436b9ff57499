#include "unicorn/training.hpp"

#include <cmath>
#include <numeric>

#include "unicorn/error.hpp"
#include "unicorn/ops.hpp"

namespace unicorn {

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, "train config: " + what);
  };
  check(accum_steps >= 1, "accum_steps must be >= 1");
  check(domain_dropout_p >= 0.0 && domain_dropout_p < 1.0, "domain_dropout_p must lie in [0, 1)");
  check(lr >= 0.0 && std::isfinite(lr), "lr must be finite and >= 0");
  check(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be finite and >= 0");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {"epochs", "lr",    "weight_decay", "accum_steps", "domain_dropout_p",
                                             "beta1",  "beta2", "adam_eps",     "seed"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.epochs = kv.get_size("epochs", c.epochs);
  c.lr = kv.get_double("lr", c.lr);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.accum_steps = kv.get_size("accum_steps", c.accum_steps);
  c.domain_dropout_p = kv.get_double("domain_dropout_p", c.domain_dropout_p);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

void TrainConfig::to_kv(KeyValues& kv) const {
  kv.set("epochs", std::to_string(epochs));
  kv.set("lr", format_double(lr));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("accum_steps", std::to_string(accum_steps));
  kv.set("domain_dropout_p", format_double(domain_dropout_p));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("seed", std::to_string(seed));
}

DomainMaskDraw draw_domain_mask(const ModalityMask& present, Rng& rng, double p) {
  if (present.empty()) fail(ErrorCode::kInvalidArgument, "domain dropout on an empty modality set");
  const auto members = present.members();
  DomainMaskDraw draw;
  draw.kept = members[rng.uniform_index(members.size())];
  draw.mask = present;
  for (const auto m : members) {
    if (m != draw.kept && rng.bernoulli(p)) draw.mask.erase(m);
  }
  return draw;
}

ModalityMask sample_domain_mask(const ModalityMask& present, Rng& rng, double p) {
  return draw_domain_mask(present, rng, p).mask;
}

void adamw_step(ParamRegistry& params, OptimizerState& state, const TrainConfig& config) {
  auto& entries = params.entries();
  if (entries.empty()) fail(ErrorCode::kInvalidArgument, "adamw_step with no parameters");
  if (state.first_moment.empty()) {
    for (const auto& p : entries) {
      state.first_moment.emplace_back(p.value.numel(), 0.0);
      state.second_moment.emplace_back(p.value.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != entries.size()) fail(ErrorCode::kShape, "optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  const double decay_factor = 1.0 - config.lr * config.weight_decay;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& value = entries[i].value;
    const auto grad = value.grad();
    if (grad.size() != value.numel()) fail(ErrorCode::kInvalidArgument, "adamw_step: no gradient for " + entries[i].name);
    auto data = value.mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad[k];
      if (entries[i].decay) data[k] *= decay_factor;
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      data[k] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

ModalityMask full_mask(const SampleRecord& sample, std::size_t n_modalities) {
  ModalityMask mask;
  for (const auto& [m, bag] : sample.bags) {
    if (m < n_modalities) mask.insert(m);
  }
  return mask;
}

Metrics evaluate(const Model& model, const std::vector<SampleRecord>& records) {
  std::vector<std::size_t> truths, preds;
  truths.reserve(records.size());
  preds.reserve(records.size());
  for (const auto& r : records) {
    truths.push_back(r.label);
    preds.push_back(predict(model, r, full_mask(r, model.config().n_modalities)).label);
  }
  return compute_metrics(truths, preds, model.config().n_classes);
}

namespace {

void scale_grads(ParamRegistry& params, double factor) {
  for (auto& p : params.entries()) {
    for (double& g : p.value.mutable_grad()) g *= factor;
  }
}

}  // namespace

TrainResult train_model(std::unique_ptr<Model> model, const std::vector<SampleRecord>& train_set,
                        const std::vector<SampleRecord>& val_set, const TrainConfig& config,
                        const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) fail(ErrorCode::kData, "training set is empty");
  if (val_set.empty()) fail(ErrorCode::kData, "validation set is empty");
  TrainResult result;
  const Rng root(config.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng mask_rng = root.split("domain_dropout");
  Rng dropout_rng = root.split("dropout");

  ParamRegistry& params = model->params();
  params.zero_grad();
  OptimizerState state;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double best_f1 = -1.0;
  std::vector<std::vector<double>> best_weights;
  const std::size_t n_modalities = model->config().n_modalities;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t pending = 0;
    for (const std::size_t idx : order) {
      const SampleRecord& sample = train_set[idx];
      const ModalityMask mask = sample_domain_mask(full_mask(sample, n_modalities), mask_rng, config.domain_dropout_p);
      double loss_value = 0.0;
      try {
        const ForwardTrace trace = model->forward(sample, mask, &dropout_rng, true);
        const Tensor loss = ops::cross_entropy(trace.logits, sample.label);
        loss_value = loss.item();
        loss.backward();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite) throw;
        fail(ErrorCode::kNonFinite, "non-finite loss at epoch " + std::to_string(epoch) + " on sample " +
                                        sample.sample_id + ": " + e.what());
      }
      loss_sum += loss_value;
      if (++pending == config.accum_steps) {
        scale_grads(params, 1.0 / static_cast<double>(pending));
        adamw_step(params, state, config);
        params.zero_grad();
        pending = 0;
      }
    }
    if (pending > 0) {
      scale_grads(params, 1.0 / static_cast<double>(pending));
      adamw_step(params, state, config);
      params.zero_grad();
    }

    const Metrics val = evaluate(*model, val_set);
    EpochRecord record{epoch, loss_sum / static_cast<double>(train_set.size()), val.macro_f1, val.accuracy};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (val.macro_f1 > best_f1) {
      best_f1 = val.macro_f1;
      result.best_epoch = epoch;
      best_weights = params.snapshot();
    }
  }
  if (!best_weights.empty()) params.restore(best_weights);
  result.model = std::move(model);
  return result;
}

TrainResult train(const std::vector<SampleRecord>& records, const SplitPlan& split, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
  return train_model(make_model(model_config, train_config.seed), select_samples(records, split.train),
                     select_samples(records, split.val), train_config, on_epoch);
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out = "# epoch\ttrain_loss\tval_f1\tval_acc\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "\t" + format_double(h.train_loss) + "\t" + format_double(h.val_f1) + "\t" +
           format_double(h.val_accuracy) + "\n";
  }
  return out;
}

}  // namespace unicorn
