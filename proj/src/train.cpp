#include "ddn/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ddn/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ddn {

AdamState AdamState::make(const ParamSet& params) {
  AdamState s;
  for (const auto& e : params.entries())
    if (e.trainable) {
      s.m.emplace_back(e.value.shape);
      s.v.emplace_back(e.value.shape);
    }
  return s;
}

bool adam_step(ParamSet& params,
               const std::unordered_map<std::string, Var>& grads,
               AdamState& state, double lr, double weight_decay) {
  // gather in registry order; missing or never-touched grads count as zero
  std::vector<const Tensor*> gs;
  std::vector<Tensor*> ps;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    ps.push_back(&e.value);
    const Tensor* g = nullptr;
    if (auto it = grads.find(e.name); it != grads.end() && !it->second->grad.empty())
      g = &it->second->grad;
    gs.push_back(g);
  }
  if (ps.size() != state.m.size())
    throw std::invalid_argument("adam_step: state/param size mismatch");

  for (const Tensor* g : gs)
    if (g)
      for (double v : g->data)
        if (!std::isfinite(v)) return false;

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor& p = *ps[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = gs[k] ? gs[k]->data[i] : 0.0;
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
      if (weight_decay > 0.0) p.data[i] -= lr * weight_decay * p.data[i];
    }
  }
  return true;
}

void save_graph_checkpoint(const Graph& g, const std::string& path) {
  std::vector<CheckpointEntry> entries;
  for (const auto& e : g.params().entries())
    entries.push_back(entry_from_tensor(e.name, e.value));
  write_checkpoint(path, entries);
}

void load_graph_checkpoint(Graph& g, const std::string& path) {
  for (const auto& e : read_checkpoint(path)) {
    if (e.name.rfind("__", 0) == 0) continue;  // session-state entries
    Tensor& t = g.params().at(e.name);
    if (t.size() != e.payload.size())
      throw std::runtime_error("checkpoint: size mismatch for " + e.name);
    t.data = e.payload;
  }
}

bool is_eval_id(const std::string& id) {
  // FNV-1a, stable across platforms
  std::uint64_t h = 1469598103934665603ull;
  for (char c : id) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h % 5 == 0;  // 20% held out
}

TrainSession::TrainSession(const ArchSpec& arch, const Corpus& data,
                           const TrainConfig& cfg)
    : arch_(arch), cfg_(cfg), graph_((arch_.dropout = cfg.dropout, build(arch_, cfg.seed))),
      adam_(AdamState::make(graph_.params())),
      rng_(Rng(cfg.seed).fork(0x7261696e)) {
  for (const Sample& s : data.samples)
    (is_eval_id(s.id) ? eval_ : train_).push_back(&s);
  if (train_.empty()) throw std::invalid_argument("train: empty training split");
  if (cfg_.strategy == WeightStrategy::MedianFrequency) {
    std::vector<DatasetClassCounts> counts(arch_.num_classes);
    for (const Sample* s : train_) {
      const PixelCounts pc = count_pixels(s->label, arch_.num_classes, cfg_.void_index);
      const long total = static_cast<long>(s->label.values.size());
      for (long c = 0; c < arch_.num_classes; ++c)
        if (pc.counts[c] > 0) {
          counts[c].class_pixels += pc.counts[c];
          counts[c].presence_pixels += total;
        }
    }
    medfreq_ = median_frequency_weights(counts, cfg_.void_index);
  }
}

Var TrainSession::batch_loss(Tape& tape, const HeadOutputs& heads,
                             const std::vector<LabelMap>& labels) {
  PerHeadLoss fn = [&](Var logits) -> Var {
    switch (cfg_.strategy) {
      case WeightStrategy::None:
        return weighted_cross_entropy(
            tape, logits, labels,
            ClassWeights::uniform(arch_.num_classes, 1.0, cfg_.void_index));
      case WeightStrategy::MedianFrequency:
        return weighted_cross_entropy(tape, logits, labels, medfreq_);
      case WeightStrategy::Dynamic: {
        std::vector<ClassWeights> ws;
        for (const auto& lm : labels)
          ws.push_back(dynamic_weights(
              count_pixels(lm, arch_.num_classes, cfg_.void_index), cfg_.L,
              cfg_.void_index));
        return weighted_cross_entropy(tape, logits, labels, ws);
      }
      case WeightStrategy::Focal:
        return focal_loss(tape, logits, labels,
                          ClassWeights::uniform(arch_.num_classes, 1.0,
                                                cfg_.void_index),
                          cfg_.gamma);
      case WeightStrategy::FocalDynamic:
        return focal_dynamic_loss(tape, logits, labels, cfg_.L, cfg_.gamma,
                                  cfg_.void_index);
    }
    throw std::logic_error("unknown weight strategy");
  };
  return supervised_loss(tape, heads, fn, cfg_.aux_weight);
}

void TrainSession::run_steps(long n) {
  AugPolicy policy;
  policy.crop_height = policy.crop_width = cfg_.crop;
  for (long step = 0; step < n && !diverged_; ++step) {
    // assemble batch
    std::vector<Sample> batch;
    for (long b = 0; b < cfg_.batch; ++b) {
      const Sample* src = train_[rng_.below(train_.size())];
      batch.push_back(augment(*src, policy, rng_));
    }
    const Shape4 s0 = batch[0].image.shape;
    Tensor x(Shape4{cfg_.batch, s0.c, s0.h, s0.w});
    std::vector<LabelMap> labels;
    for (long b = 0; b < cfg_.batch; ++b) {
      std::copy(batch[b].image.data.begin(), batch[b].image.data.end(),
                x.data.begin() + b * batch[b].image.size());
      labels.push_back(batch[b].label);
    }

    Tape tape;
    ForwardResult fr = graph_forward(graph_, tape, x, Mode::Train, rng_);
    Var loss = batch_loss(tape, fr.heads, labels);
    last_train_loss_ = loss->value.item();
    if (!std::isfinite(last_train_loss_)) {
      diverged_ = true;
      break;
    }
    tape.backward(loss);
    if (!adam_step(graph_.params(), fr.param_vars, adam_,
                   cfg_.lr_at(iteration_), cfg_.weight_decay)) {
      diverged_ = true;
      break;
    }
    ++iteration_;
  }
}

void TrainSession::evaluate() {
  ConfusionMatrix cm(arch_.num_classes);
  double loss_sum = 0.0;
  long loss_count = 0;
  Rng eval_rng(0);  // Eval mode draws nothing; placeholder stream
  AugPolicy eval_policy;  // mean subtraction only: no crop, no flips
  eval_policy.flip_vertical = false;
  for (const Sample* s : eval_) {
    Rng r0(0);
    const Sample prepped = augment(*s, eval_policy, r0);
    Tape tape;
    ForwardResult fr =
        graph_forward(graph_, tape, prepped.image, Mode::Eval, eval_rng, false);
    const Var main = fr.heads.main();
    cm.accumulate(argmax_channels(main->value, 0), s->label);
    Tape ltape;
    Var logits = ltape.leaf(main->value, false);
    std::vector<LabelMap> lab{s->label};
    loss_sum += weighted_cross_entropy(
                    ltape, logits, lab,
                    ClassWeights::uniform(arch_.num_classes, 1.0, cfg_.void_index))
                    ->value.item();
    ++loss_count;
  }
  EvalRecord r;
  r.iteration = iteration_;
  r.loss = loss_count ? loss_sum / loss_count : 0.0;
  r.mean_iou = cm.mean_iou();
  r.accuracy = cm.global_accuracy();
  r.per_class_iou = cm.iou_per_class();
  records_.push_back(r);
}

namespace {
double u64_as_f64(std::uint64_t v) { return std::bit_cast<double>(v); }
std::uint64_t f64_as_u64(double v) { return std::bit_cast<std::uint64_t>(v); }
}  // namespace

void TrainSession::save_state(const std::string& path) const {
  std::vector<CheckpointEntry> entries;
  for (const auto& e : graph_.params().entries())
    entries.push_back(entry_from_tensor(e.name, e.value));
  std::size_t k = 0;
  for (const auto& e : graph_.params().entries()) {
    if (!e.trainable) continue;
    entries.push_back(entry_from_tensor("__opt.m." + e.name, adam_.m[k]));
    entries.push_back(entry_from_tensor("__opt.v." + e.name, adam_.v[k]));
    ++k;
  }
  CheckpointEntry meta;
  meta.name = "__session";
  meta.dims = {4};
  meta.payload = {static_cast<double>(adam_.step), static_cast<double>(iteration_),
                  u64_as_f64(rng_.seed()), u64_as_f64(rng_.counter())};
  entries.push_back(meta);
  write_checkpoint(path, entries);
}

void TrainSession::load_state(const std::string& path) {
  std::size_t k = 0;
  std::vector<std::string> trainable_names;
  for (const auto& e : graph_.params().entries())
    if (e.trainable) trainable_names.push_back(e.name);
  for (const auto& e : read_checkpoint(path)) {
    if (e.name == "__session") {
      adam_.step = static_cast<long>(e.payload[0]);
      iteration_ = static_cast<long>(e.payload[1]);
      rng_.restore(f64_as_u64(e.payload[2]), f64_as_u64(e.payload[3]));
    } else if (e.name.rfind("__opt.m.", 0) == 0) {
      adam_.m[k = std::distance(trainable_names.begin(),
                                std::find(trainable_names.begin(),
                                          trainable_names.end(),
                                          e.name.substr(8)))]
          .data = e.payload;
    } else if (e.name.rfind("__opt.v.", 0) == 0) {
      adam_.v[std::distance(trainable_names.begin(),
                            std::find(trainable_names.begin(),
                                      trainable_names.end(), e.name.substr(8)))]
          .data = e.payload;
    } else {
      graph_.params().at(e.name).data = e.payload;
    }
  }
}

RunReport TrainSession::finish(const std::string& out_dir) {
  fs::create_directories(out_dir);
  RunReport report;
  report.records = records_;
  report.diverged = diverged_;
  report.iterations_run = iteration_;
  report.checkpoint_path = (fs::path(out_dir) / "checkpoint.ddnp").string();
  save_graph_checkpoint(graph_, report.checkpoint_path);

  std::ofstream jl(fs::path(out_dir) / "report.jsonl");
  for (const auto& r : records_) {
    json j{{"iteration", r.iteration},
           {"loss", r.loss},
           {"mean_iou", r.mean_iou},
           {"accuracy", r.accuracy}};
    json per = json::array();
    for (double v : r.per_class_iou)
      per.push_back(std::isnan(v) ? json(nullptr) : json(v));
    j["per_class_iou"] = per;
    jl << j.dump() << "\n";
  }

  json summary{{"iterations", iteration_},
               {"diverged", diverged_},
               {"checkpoint", report.checkpoint_path},
               {"config",
                {{"lr0", cfg_.lr0},
                 {"decay_factor", cfg_.decay_factor},
                 {"decay_interval", cfg_.decay_interval},
                 {"weight_decay", cfg_.weight_decay},
                 {"dropout", cfg_.dropout},
                 {"batch", cfg_.batch},
                 {"eval_interval", cfg_.eval_interval},
                 {"seed", cfg_.seed},
                 {"strategy", to_string(cfg_.strategy)},
                 {"aux_weight", cfg_.aux_weight},
                 {"L", cfg_.L},
                 {"gamma", cfg_.gamma},
                 {"crop", cfg_.crop}}}};
  if (!records_.empty()) {
    summary["final"] = {{"iteration", records_.back().iteration},
                        {"mean_iou", records_.back().mean_iou},
                        {"accuracy", records_.back().accuracy},
                        {"loss", records_.back().loss}};
  }
  std::ofstream os(fs::path(out_dir) / "summary.json");
  os << summary.dump(2) << "\n";
  return report;
}

RunReport train(const ArchSpec& arch, const Corpus& data,
                const TrainConfig& cfg, const std::string& out_dir) {
  TrainSession session(arch, data, cfg);
  session.evaluate();  // initial evaluation at iteration 0
  while (session.iteration() < cfg.iterations && !session.diverged()) {
    const long chunk =
        std::min(cfg.eval_interval, cfg.iterations - session.iteration());
    session.run_steps(chunk);
    if (session.iteration() > session.records().back().iteration)
      session.evaluate();
  }
  return session.finish(out_dir);
}

}  // namespace ddn
