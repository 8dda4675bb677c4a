#include "ddn/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ddn {

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& truth) {
  if (pred.height != truth.height || pred.width != truth.width)
    throw std::invalid_argument("ConfusionMatrix: shape mismatch");
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const int t = truth.values[i];
    if (t == kVoidLabel) continue;
    const int p = pred.values[i];
    if (t < 0 || t >= num_classes_ || p < 0 || p >= num_classes_)
      throw std::out_of_range("ConfusionMatrix: label out of range");
    ++counts_[static_cast<std::size_t>(t) * num_classes_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_)
    throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (long v : counts_) t += v;
  return t;
}

std::vector<double> ConfusionMatrix::iou_per_class() const {
  std::vector<double> iou(num_classes_);
  for (long c = 0; c < num_classes_; ++c) {
    const long tp = at(c, c);
    long fp = 0, fn = 0;
    for (long k = 0; k < num_classes_; ++k) {
      if (k == c) continue;
      fp += at(k, c);
      fn += at(c, k);
    }
    const long denom = tp + fp + fn;
    iou[c] = denom ? static_cast<double>(tp) / denom
                   : std::numeric_limits<double>::quiet_NaN();
  }
  return iou;
}

double ConfusionMatrix::mean_iou() const {
  double sum = 0.0;
  long defined = 0;
  for (double v : iou_per_class())
    if (!std::isnan(v)) {
      sum += v;
      ++defined;
    }
  return defined ? sum / defined : std::numeric_limits<double>::quiet_NaN();
}

double ConfusionMatrix::global_accuracy() const {
  const long t = total();
  if (!t) return std::numeric_limits<double>::quiet_NaN();
  long diag = 0;
  for (long c = 0; c < num_classes_; ++c) diag += at(c, c);
  return static_cast<double>(diag) / t;
}

std::string ConfusionMatrix::report_text() const {
  std::ostringstream os;
  const auto iou = iou_per_class();
  for (long c = 0; c < num_classes_; ++c) {
    os << "class " << c << " iou ";
    if (std::isnan(iou[c]))
      os << "n/a";
    else
      os << iou[c];
    os << "\n";
  }
  os << "mean_iou " << mean_iou() << "\nglobal_accuracy " << global_accuracy()
     << "\npixels " << total() << "\n";
  return os.str();
}

std::string ConfusionMatrix::report_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (double v : iou_per_class())
    per.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  nlohmann::json j{{"per_class_iou", per},
                   {"mean_iou", mean_iou()},
                   {"global_accuracy", global_accuracy()},
                   {"pixels", total()}};
  return j.dump(2) + "\n";
}

LabelMap argmax_channels(const Tensor& logits, long batch_index) {
  const Shape4 s = logits.shape;
  LabelMap out(s.h, s.w);
  for (long i = 0; i < s.h; ++i)
    for (long j = 0; j < s.w; ++j) {
      int best = 0;
      double bv = logits.at(batch_index, 0, i, j);
      for (long c = 1; c < s.c; ++c) {
        const double v = logits.at(batch_index, c, i, j);
        if (v > bv) {
          bv = v;
          best = static_cast<int>(c);
        }
      }
      out.at(i, j) = best;
    }
  return out;
}

}  // namespace ddn
