#pragma once

#include <functional>
#include <vector>

#include "ddn/graph.hpp"
#include "ddn/labels.hpp"
#include "ddn/tape.hpp"

namespace ddn {

// Per-class nonnegative weights; the void class (if any) always carries
// weight zero and its pixels are excluded from every loss.
struct ClassWeights {
  std::vector<double> weights;
  int void_index = -1;

  static ClassWeights uniform(long num_classes, double v = 1.0,
                              int void_index = -1) {
    ClassWeights w;
    w.weights.assign(num_classes, v);
    w.void_index = void_index;
    if (void_index >= 0) w.weights[void_index] = 0.0;
    return w;
  }
};

struct PixelCounts {
  std::vector<long> counts;  // per-class pixel counts C_i
  long background = 0;       // background/void pixel count C_b
};

PixelCounts count_pixels(const LabelMap& labels, long num_classes,
                         int void_index = -1);

// DW_i = (C_b + sum_j C_j) / C_i, lower-bounded by L, then divided by L.
// Absent classes (C_i == 0) and the void class get weight 0.
ClassWeights dynamic_weights(const PixelCounts& counts, double L,
                             int void_index = -1);

// weight_c = median(freq) / freq(c) with freq(c) = class pixel total divided
// by the pixel total of images where c is present. Classes never present get
// weight 0 (counted as a warning).
struct DatasetClassCounts {
  long class_pixels = 0;     // pixels labelled c over the dataset
  long presence_pixels = 0;  // total pixels of images where c is present
};
ClassWeights median_frequency_weights(
    const std::vector<DatasetClassCounts>& counts, int void_index = -1,
    int* warnings = nullptr);

// Mean over non-void pixels of -w[y] * log softmax(logits)[y].
// Weights may be given per batch item (per-sample dynamic weighting).
Var weighted_cross_entropy(Tape& tape, Var logits,
                           const std::vector<LabelMap>& labels,
                           const std::vector<ClassWeights>& w);
Var weighted_cross_entropy(Tape& tape, Var logits,
                           const std::vector<LabelMap>& labels,
                           const ClassWeights& w);

// -alpha[y] * (1 - p_t)^gamma * log(p_t), mean over non-void pixels.
Var focal_loss(Tape& tape, Var logits, const std::vector<LabelMap>& labels,
               const ClassWeights& alpha, double gamma);

// Focal loss with per-sample bounded dynamic weights as the class factor.
Var focal_dynamic_loss(Tape& tape, Var logits,
                       const std::vector<LabelMap>& labels, double L,
                       double gamma, int void_index = -1);

// main + aux_weight * sum of auxiliary losses, one per extra head.
using PerHeadLoss = std::function<Var(Var logits)>;
Var supervised_loss(Tape& tape, const HeadOutputs& heads,
                    const PerHeadLoss& loss_fn, double aux_weight);

enum class WeightStrategy { None, MedianFrequency, Dynamic, Focal, FocalDynamic };
WeightStrategy parse_weight_strategy(const std::string& s);
std::string to_string(WeightStrategy s);

}  // namespace ddn
