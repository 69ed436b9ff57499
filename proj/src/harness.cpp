#include "unicorn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include <json.hpp>

#include "unicorn/error.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

namespace {

json metrics_json(const Metrics& m) {
  json j;
  j["n_samples"] = m.n_samples;
  j["accuracy"] = m.accuracy;
  j["macro_f1"] = m.macro_f1;
  json per_class = json::object();
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    const std::string name = c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c);
    per_class[name] = m.class_present[c] ? json(m.per_class_f1[c]) : json(nullptr);
  }
  j["per_class_f1"] = per_class;
  j["confusion"] = m.confusion;
  return j;
}

}  // namespace

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (const double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return seed + fold; }

FoldResult run_fold(const std::vector<SampleRecord>& records, const SplitPlan& split, const ModelConfig& model_config,
                    const TrainConfig& train_config) {
  TrainConfig cfg = train_config;
  cfg.seed = fold_seed(train_config.seed, split.fold);
  FoldResult result;
  result.fold = split.fold;
  result.training = train(records, split, model_config, cfg);
  result.test = evaluate(*result.training.model, select_samples(records, split.test));
  return result;
}

CvResult run_cv(const std::vector<SampleRecord>& records, const std::vector<SplitPlan>& splits,
                const ModelConfig& model_config, const TrainConfig& train_config, std::size_t max_threads) {
  if (splits.empty()) fail(ErrorCode::kData, "run_cv without splits");
  std::vector<std::optional<FoldResult>> results(splits.size());
  std::vector<std::exception_ptr> errors(splits.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < splits.size(); i = next++) {
      try {
        results[i] = run_fold(records, splits[i], model_config, train_config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, splits.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      fail(e.code(), "fold " + std::to_string(splits[i].fold) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::kData, "fold " + std::to_string(splits[i].fold) + ": " + e.what());
    }
  }
  CvResult cv;
  std::vector<double> acc, f1;
  for (auto& r : results) {
    acc.push_back(r->test.accuracy);
    f1.push_back(r->test.macro_f1);
    cv.folds.push_back(std::move(*r));
  }
  cv.accuracy = mean_sd(acc);
  cv.macro_f1 = mean_sd(f1);
  return cv;
}

std::string CvResult::summary_json() const {
  json j;
  json folds_json = json::array();
  for (const auto& f : folds) {
    json fj;
    fj["fold"] = f.fold;
    fj["best_epoch"] = f.training.best_epoch;
    fj["test"] = metrics_json(f.test);
    folds_json.push_back(fj);
  }
  j["folds"] = folds_json;
  j["accuracy"] = {{"mean", accuracy.mean}, {"sd", accuracy.sd}};
  j["macro_f1"] = {{"mean", macro_f1.mean}, {"sd", macro_f1.sd}};
  return j.dump(2) + "\n";
}

std::string CvResult::to_text() const {
  std::string out = "# fold\tbest_epoch\taccuracy\tmacro_f1\n";
  for (const auto& f : folds) {
    out += std::to_string(f.fold) + "\t" + std::to_string(f.training.best_epoch) + "\t" + format_double(f.test.accuracy) +
           "\t" + format_double(f.test.macro_f1) + "\n";
  }
  out += "mean\t-\t" + format_double(accuracy.mean) + "\t" + format_double(macro_f1.mean) + "\n";
  out += "sd\t-\t" + format_double(accuracy.sd) + "\t" + format_double(macro_f1.sd) + "\n";
  return out;
}

FoldResult train_baseline(const BaselineSpec& spec, const std::vector<SampleRecord>& records, const SplitPlan& split,
                          const TrainConfig& train_config) {
  ModelConfig config = spec.model;
  config.kind = spec.kind;
  return run_fold(records, split, config, train_config);
}

AblationReport ablate(const Model& model, const std::vector<SampleRecord>& test) {
  if (test.empty()) fail(ErrorCode::kData, "ablation on an empty test set");
  const std::size_t n_mod = model.config().n_modalities;
  const std::size_t n_cls = model.config().n_classes;
  AblationReport report;
  report.n_modalities = n_mod;

  std::vector<std::size_t> truths, full_preds;
  std::vector<std::vector<double>> attention_sum(n_cls, std::vector<double>(n_mod, 0.0));
  std::vector<std::vector<std::size_t>> attention_count(n_cls, std::vector<std::size_t>(n_mod, 0));
  std::vector<std::vector<std::size_t>> argmax_count(n_cls, std::vector<std::size_t>(n_mod, 0));
  report.class_counts.assign(n_cls, 0);
  for (const auto& s : test) {
    ForwardTrace trace;
    {
      NoGradGuard no_grad;
      trace = model.forward(s, full_mask(s, n_mod), nullptr, false);
    }
    truths.push_back(s.label);
    full_preds.push_back(argmax(trace.probabilities));
    ++report.class_counts.at(s.label);
    const auto att = cls_to_mt_attention(trace, n_mod);
    std::optional<std::size_t> best;
    for (std::size_t m = 0; m < n_mod; ++m) {
      if (!att[m]) continue;
      attention_sum[s.label][m] += *att[m];
      ++attention_count[s.label][m];
      if (!best || *att[m] > *att[*best]) best = m;
    }
    if (best) ++argmax_count[s.label][*best];
  }
  report.full = compute_metrics(truths, full_preds, n_cls);

  report.attention_mean.assign(n_cls, std::vector<std::optional<double>>(n_mod));
  report.attention_argmax_share.assign(n_cls, std::vector<double>(n_mod, 0.0));
  for (std::size_t c = 0; c < n_cls; ++c) {
    for (std::size_t m = 0; m < n_mod; ++m) {
      if (attention_count[c][m]) {
        report.attention_mean[c][m] = attention_sum[c][m] / static_cast<double>(attention_count[c][m]);
      }
      if (report.class_counts[c]) {
        report.attention_argmax_share[c][m] =
            static_cast<double>(argmax_count[c][m]) / static_cast<double>(report.class_counts[c]);
      }
    }
  }

  for (std::size_t m = 0; m < n_mod; ++m) {
    for (const bool single : {true, false}) {
      std::vector<std::size_t> t, pred, ref;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& s = test[i];
        const ModalityMask full = full_mask(s, n_mod);
        if (!full.contains(m)) continue;
        const ModalityMask mask = single ? ModalityMask::single(m) : full.without(m);
        if (mask.empty()) continue;
        t.push_back(s.label);
        pred.push_back(predict(model, s, mask).label);
        ref.push_back(full_preds[i]);
      }
      ModalityCondition cond;
      cond.modality = m;
      if (!t.empty()) {
        cond.metrics = compute_metrics(t, pred, n_cls);
        cond.reference = compute_metrics(t, ref, n_cls);
      }
      (single ? report.single : report.leave_out).push_back(std::move(cond));
    }
  }
  return report;
}

std::string AblationReport::to_text() const {
  std::string out;
  out += "# condition\tmodality\tn\taccuracy\tmacro_f1\tdelta_f1\n";
  out += "full\tall\t" + std::to_string(full.n_samples) + "\t" + format_double(full.accuracy) + "\t" +
         format_double(full.macro_f1) + "\t0\n";
  for (const auto* list : {&single, &leave_out}) {
    const std::string name = list == &single ? "single" : "leave_out";
    for (const auto& c : *list) {
      out += name + "\t" + modality_name(c.modality) + "\t";
      if (!c.metrics) {
        out += "0\tno data\tno data\tno data\n";
        continue;
      }
      out += std::to_string(c.metrics->n_samples) + "\t" + format_double(c.metrics->accuracy) + "\t" +
             format_double(c.metrics->macro_f1) + "\t" + format_double(c.delta_f1()) + "\n";
    }
  }
  out += "# class\tmodality\tn\tmean_cls_to_mt_attention\targmax_share\n";
  for (std::size_t c = 0; c < attention_mean.size(); ++c) {
    const std::string cname = c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c);
    for (std::size_t m = 0; m < n_modalities; ++m) {
      out += "attention\t" + cname + "\t" + modality_name(m) + "\t" + std::to_string(class_counts[c]) + "\t" +
             (attention_mean[c][m] ? format_double(*attention_mean[c][m]) : "no data") + "\t" +
             format_double(attention_argmax_share[c][m]) + "\n";
    }
  }
  return out;
}

std::string AblationReport::summary_json() const {
  json j;
  j["full"] = metrics_json(full);
  for (const auto* list : {&single, &leave_out}) {
    json arr = json::object();
    for (const auto& c : *list) {
      json cj;
      if (c.metrics) {
        cj = metrics_json(*c.metrics);
        cj["delta_f1"] = c.delta_f1();
      } else {
        cj = "no data";
      }
      arr[modality_name(c.modality)] = cj;
    }
    j[list == &single ? "single" : "leave_out"] = arr;
  }
  json att = json::object();
  for (std::size_t c = 0; c < attention_mean.size(); ++c) {
    json row = json::object();
    for (std::size_t m = 0; m < n_modalities; ++m) {
      row[modality_name(m)] = attention_mean[c][m] ? json(*attention_mean[c][m]) : json(nullptr);
    }
    att[c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c)] = row;
  }
  j["cls_to_mt_attention"] = att;
  return j.dump(2) + "\n";
}

std::vector<FeatureRow> export_features(const Model& model, const std::vector<SampleRecord>& records,
                                        const std::vector<std::size_t>& single_modalities) {
  const std::size_t n_mod = model.config().n_modalities;
  std::vector<FeatureRow> rows;
  auto emit = [&](const SampleRecord& s, const ModalityMask& mask, std::string variant) {
    NoGradGuard no_grad;
    const ForwardTrace trace = model.forward(s, mask, nullptr, false);
    rows.push_back({s.sample_id, s.label, std::move(variant), mask, trace.penultimate});
  };
  for (const auto& s : records) {
    const ModalityMask full = full_mask(s, n_mod);
    emit(s, full, "full");
    for (const auto m : single_modalities) {
      if (full.contains(m)) emit(s, ModalityMask::single(m), modality_name(m));
    }
  }
  return rows;
}

std::string format_features(const std::vector<FeatureRow>& rows) {
  std::string out = "# sample_id\tlabel\tvariant\tmask\tfeatures...\n";
  for (const auto& r : rows) {
    out += r.sample_id + "\t" + std::string(kClassNames.at(r.label)) + "\t" + r.variant + "\t" + r.mask.describe();
    for (const double v : r.features) out += "\t" + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace unicorn
