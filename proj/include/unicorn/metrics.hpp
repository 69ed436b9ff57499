#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace unicorn {

struct Metrics {
  std::size_t n_samples = 0;
  std::size_t n_classes = 0;
  double accuracy = 0.0;
  // Unweighted mean of per-class F1 over classes that occur in the truths or
  // the predictions.
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  // False for classes absent from both truths and predictions; their F1 is 0
  // and they are excluded from macro_f1.
  std::vector<bool> class_present;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::vector<double>> confusion_normalized;

  // Tab-separated report (summary lines, per-class F1, both matrices).
  std::string to_text() const;
};

Metrics compute_metrics(const std::vector<std::size_t>& truths, const std::vector<std::size_t>& predictions,
                        std::size_t n_classes = 5);

}  // namespace unicorn
