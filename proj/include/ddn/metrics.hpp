#pragma once

#include <string>
#include <vector>

#include "ddn/labels.hpp"
#include "ddn/tensor.hpp"

namespace ddn {

// Confusion matrix over non-void pixels; rows = ground truth, cols = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(long num_classes)
      : num_classes_(num_classes),
        counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  void accumulate(const LabelMap& pred, const LabelMap& truth);
  void merge(const ConfusionMatrix& other);

  long num_classes() const { return num_classes_; }
  long at(long truth, long pred) const {
    return counts_[truth * num_classes_ + pred];
  }
  long total() const;

  // IoU_c = TP / (TP + FP + FN); NaN when the class appears in neither truth
  // nor prediction (excluded from the mean).
  std::vector<double> iou_per_class() const;
  double mean_iou() const;
  double global_accuracy() const;

  std::string report_text() const;
  std::string report_json() const;

 private:
  long num_classes_;
  std::vector<long> counts_;
};

// argmax over channels, lowest index wins ties
LabelMap argmax_channels(const Tensor& logits, long batch_index);

}  // namespace ddn
