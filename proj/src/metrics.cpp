#include "unicorn/metrics.hpp"

#include "unicorn/error.hpp"
#include "unicorn/kv.hpp"
#include "unicorn/sample.hpp"

namespace unicorn {

Metrics compute_metrics(const std::vector<std::size_t>& truths, const std::vector<std::size_t>& predictions,
                        std::size_t n_classes) {
  if (truths.empty()) fail(ErrorCode::kInvalidArgument, "compute_metrics on an empty set");
  if (truths.size() != predictions.size()) fail(ErrorCode::kInvalidArgument, "truths and predictions differ in length");
  Metrics m;
  m.n_samples = truths.size();
  m.n_classes = n_classes;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= n_classes || predictions[i] >= n_classes) {
      fail(ErrorCode::kInvalidArgument, "label out of range in compute_metrics");
    }
    ++m.confusion[truths[i]][predictions[i]];
    if (truths[i] == predictions[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n_samples);

  m.per_class_f1.assign(n_classes, 0.0);
  m.class_present.assign(n_classes, false);
  double f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = m.confusion[c][c], row = 0, col = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      row += m.confusion[c][k];
      col += m.confusion[k][c];
    }
    if (row == 0 && col == 0) continue;
    m.class_present[c] = true;
    ++present;
    // F1 = 2TP / (2TP + FP + FN) = 2TP / (row + col)
    m.per_class_f1[c] = 2.0 * static_cast<double>(tp) / static_cast<double>(row + col);
    f1_sum += m.per_class_f1[c];
  }
  m.macro_f1 = present ? f1_sum / static_cast<double>(present) : 0.0;

  m.confusion_normalized.assign(n_classes, std::vector<double>(n_classes, 0.0));
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t row = 0;
    for (const auto v : m.confusion[c]) row += v;
    if (row == 0) continue;
    for (std::size_t k = 0; k < n_classes; ++k) {
      m.confusion_normalized[c][k] = static_cast<double>(m.confusion[c][k]) / static_cast<double>(row);
    }
  }
  return m;
}

std::string Metrics::to_text() const {
  auto class_name = [](std::size_t c) { return c < kClassNames.size() ? std::string(kClassNames[c]) : std::to_string(c); };
  std::string out;
  out += "n_samples\t" + std::to_string(n_samples) + "\n";
  out += "accuracy\t" + format_double(accuracy) + "\n";
  out += "macro_f1\t" + format_double(macro_f1) + "\n";
  for (std::size_t c = 0; c < n_classes; ++c) {
    out += "f1\t" + class_name(c) + "\t" + (class_present[c] ? format_double(per_class_f1[c]) : "absent") + "\n";
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    out += "confusion\t" + class_name(c);
    for (const auto v : confusion[c]) out += "\t" + std::to_string(v);
    out += "\n";
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    out += "confusion_normalized\t" + class_name(c);
    for (const auto v : confusion_normalized[c]) out += "\t" + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace unicorn
