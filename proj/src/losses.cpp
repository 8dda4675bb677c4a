#include "ddn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddn {

PixelCounts count_pixels(const LabelMap& labels, long num_classes,
                         int void_index) {
  PixelCounts pc;
  pc.counts.assign(num_classes, 0);
  for (int v : labels.values) {
    if (v == kVoidLabel || v == void_index) {
      ++pc.background;
    } else {
      if (v < 0 || v >= num_classes)
        throw std::out_of_range("count_pixels: label out of range");
      ++pc.counts[v];
    }
  }
  return pc;
}

ClassWeights dynamic_weights(const PixelCounts& counts, double L,
                             int void_index) {
  if (L <= 0.0) throw std::invalid_argument("dynamic_weights: L must be > 0");
  const long N = static_cast<long>(counts.counts.size());
  long total = counts.background;
  for (long c : counts.counts) total += c;
  ClassWeights w;
  w.void_index = void_index;
  w.weights.assign(N, 0.0);
  for (long i = 0; i < N; ++i) {
    if (i == void_index || counts.counts[i] == 0) continue;
    const double dw = static_cast<double>(total) / counts.counts[i];
    w.weights[i] = std::max(dw, L) / L;
  }
  return w;
}

ClassWeights median_frequency_weights(
    const std::vector<DatasetClassCounts>& counts, int void_index,
    int* warnings) {
  ClassWeights w;
  w.void_index = void_index;
  w.weights.assign(counts.size(), 0.0);
  std::vector<double> freqs;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (static_cast<int>(c) == void_index) continue;
    if (counts[c].presence_pixels > 0)
      freqs.push_back(static_cast<double>(counts[c].class_pixels) /
                      counts[c].presence_pixels);
  }
  if (freqs.empty())
    throw std::invalid_argument("median_frequency_weights: no class present");
  std::sort(freqs.begin(), freqs.end());
  const std::size_t m = freqs.size();
  const double median =
      m % 2 ? freqs[m / 2] : 0.5 * (freqs[m / 2 - 1] + freqs[m / 2]);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (static_cast<int>(c) == void_index) continue;
    if (counts[c].presence_pixels == 0) {
      if (warnings) ++*warnings;
      continue;  // class never present: weight stays 0
    }
    const double freq =
        static_cast<double>(counts[c].class_pixels) / counts[c].presence_pixels;
    w.weights[c] = median / freq;
  }
  return w;
}

namespace {

constexpr double kProbFloor = 1e-12;

// Shared pixel-wise loss: -w[y] * (1 - p_t)^gamma * log(p_t), mean over
// non-void pixels. gamma == 0 takes the exact cross-entropy path.
Var pixel_loss(Tape& tape, Var logits, const std::vector<LabelMap>& labels,
               const std::vector<ClassWeights>& w, double gamma) {
  const Shape4 s = logits->value.shape;
  if (static_cast<long>(labels.size()) != s.n)
    throw std::invalid_argument("pixel loss: labels/batch mismatch");
  if (static_cast<long>(w.size()) != s.n)
    throw std::invalid_argument("pixel loss: weights/batch mismatch");
  for (const auto& lm : labels)
    if (lm.height != s.h || lm.width != s.w)
      throw std::invalid_argument("pixel loss: label/logit shape mismatch");
  for (const auto& cw : w)
    if (static_cast<long>(cw.weights.size()) != s.c)
      throw std::invalid_argument("pixel loss: weights length != channels");
  if (gamma < 0.0 || gamma > 5.0)
    throw std::invalid_argument("pixel loss: gamma must be in [0, 5]");

  // softmax probabilities, cached for backward
  Tensor prob(s);
  double total = 0.0;
  long contributing = 0;
  for (long n = 0; n < s.n; ++n) {
    const ClassWeights& cw = w[n];
    for (long i = 0; i < s.h; ++i)
      for (long j = 0; j < s.w; ++j) {
        double mx = logits->value.at(n, 0, i, j);
        for (long c = 1; c < s.c; ++c)
          mx = std::max(mx, logits->value.at(n, c, i, j));
        double z = 0.0;
        for (long c = 0; c < s.c; ++c)
          z += std::exp(logits->value.at(n, c, i, j) - mx);
        for (long c = 0; c < s.c; ++c)
          prob.at(n, c, i, j) = std::exp(logits->value.at(n, c, i, j) - mx) / z;

        const int y = labels[n].at(i, j);
        if (y == kVoidLabel || y == cw.void_index) continue;
        if (y < 0 || y >= s.c)
          throw std::out_of_range("pixel loss: label out of range");
        ++contributing;
        const double p = std::max(prob.at(n, y, i, j), kProbFloor);
        const double mod = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
        total += cw.weights[y] * mod * -std::log(p);
      }
  }
  const double denom = contributing ? static_cast<double>(contributing) : 1.0;

  auto back = [logits, labels, w, gamma, prob = std::move(prob),
               denom](const Node& node) {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const Shape4 s2 = logits->value.shape;
    const double g0 = node.grad.data[0] / denom;
    for (long n = 0; n < s2.n; ++n) {
      const ClassWeights& cw = w[n];
      for (long i = 0; i < s2.h; ++i)
        for (long j = 0; j < s2.w; ++j) {
          const int y = labels[n].at(i, j);
          if (y == kVoidLabel || y == cw.void_index) continue;
          const double wy = cw.weights[y];
          if (gamma == 0.0) {
            for (long c = 0; c < s2.c; ++c)
              logits->grad.at(n, c, i, j) +=
                  g0 * wy * (prob.at(n, c, i, j) - (c == y ? 1.0 : 0.0));
          } else {
            const double p = std::max(prob.at(n, y, i, j), kProbFloor);
            const double u = std::max(1.0 - p, kProbFloor);
            // f(p) = (1-p)^g * (-log p); chain through dp/dlogit = p (delta - s_c)
            const double fp_times_p =
                gamma * p * std::pow(u, gamma - 1.0) * std::log(p) -
                std::pow(u, gamma);
            for (long c = 0; c < s2.c; ++c) {
              const double dpd = (c == y ? 1.0 : 0.0) - prob.at(n, c, i, j);
              logits->grad.at(n, c, i, j) += g0 * wy * fp_times_p * dpd;
            }
          }
        }
    }
  };
  return tape.record(Tensor::scalar(total / denom), {logits}, std::move(back));
}

}  // namespace

Var weighted_cross_entropy(Tape& tape, Var logits,
                           const std::vector<LabelMap>& labels,
                           const std::vector<ClassWeights>& w) {
  return pixel_loss(tape, logits, labels, w, 0.0);
}

Var weighted_cross_entropy(Tape& tape, Var logits,
                           const std::vector<LabelMap>& labels,
                           const ClassWeights& w) {
  std::vector<ClassWeights> ws(logits->value.shape.n, w);
  return pixel_loss(tape, logits, labels, ws, 0.0);
}

Var focal_loss(Tape& tape, Var logits, const std::vector<LabelMap>& labels,
               const ClassWeights& alpha, double gamma) {
  std::vector<ClassWeights> ws(logits->value.shape.n, alpha);
  return pixel_loss(tape, logits, labels, ws, gamma);
}

Var focal_dynamic_loss(Tape& tape, Var logits,
                       const std::vector<LabelMap>& labels, double L,
                       double gamma, int void_index) {
  const long C = logits->value.shape.c;
  std::vector<ClassWeights> ws;
  ws.reserve(labels.size());
  for (const auto& lm : labels)
    ws.push_back(dynamic_weights(count_pixels(lm, C, void_index), L, void_index));
  return pixel_loss(tape, logits, labels, ws, gamma);
}

Var supervised_loss(Tape& tape, const HeadOutputs& heads,
                    const PerHeadLoss& loss_fn, double aux_weight) {
  Var total = loss_fn(heads.main());
  for (std::size_t k = 0; k + 1 < heads.heads.size(); ++k)
    total = add(tape, total, scale(tape, loss_fn(heads.heads[k]), aux_weight));
  return total;
}

WeightStrategy parse_weight_strategy(const std::string& s) {
  if (s == "none") return WeightStrategy::None;
  if (s == "medfreq" || s == "median_frequency") return WeightStrategy::MedianFrequency;
  if (s == "dynamic") return WeightStrategy::Dynamic;
  if (s == "focal") return WeightStrategy::Focal;
  if (s == "focal-dynamic" || s == "focal_dynamic") return WeightStrategy::FocalDynamic;
  throw std::invalid_argument("unknown weight strategy: " + s);
}

std::string to_string(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::None: return "none";
    case WeightStrategy::MedianFrequency: return "medfreq";
    case WeightStrategy::Dynamic: return "dynamic";
    case WeightStrategy::Focal: return "focal";
    case WeightStrategy::FocalDynamic: return "focal-dynamic";
  }
  return "?";
}

}  // namespace ddn
