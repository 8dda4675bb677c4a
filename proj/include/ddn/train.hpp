#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddn/data.hpp"
#include "ddn/graph.hpp"
#include "ddn/losses.hpp"
#include "ddn/metrics.hpp"

namespace ddn {

struct TrainConfig {
  double lr0 = 2e-4;
  double decay_factor = 0.1;
  long decay_interval = 200000;
  double weight_decay = 1e-4;
  double dropout = 0.1;
  long batch = 2;
  long iterations = 1000;
  long eval_interval = 100;
  std::uint64_t seed = 1;
  WeightStrategy strategy = WeightStrategy::Dynamic;
  double aux_weight = 1.0;
  double L = 5.0;
  double gamma = 2.0;
  long crop = 0;       // 0 = train on full images
  int void_index = -1;

  double lr_at(long iteration) const {
    double lr = lr0;
    for (long k = 0; k < iteration / decay_interval; ++k) lr *= decay_factor;
    return lr;
  }
};

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;  // parallel to the trainable param entries

  static AdamState make(const ParamSet& params);
};

// One decoupled-weight-decay Adam update over all trainable entries.
// Returns false (and leaves params untouched) on any non-finite gradient.
bool adam_step(ParamSet& params,
               const std::unordered_map<std::string, Var>& grads,
               AdamState& state, double lr, double weight_decay);

struct EvalRecord {
  long iteration = 0;
  double loss = 0.0;  // mean cross-entropy on the held-out split
  double mean_iou = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_iou;
};

struct RunReport {
  std::vector<EvalRecord> records;
  std::string checkpoint_path;
  bool diverged = false;
  long iterations_run = 0;

  const EvalRecord& final_record() const { return records.back(); }
};

void save_graph_checkpoint(const Graph& g, const std::string& path);
void load_graph_checkpoint(Graph& g, const std::string& path);

// Stepwise training driver; the plain train() call below wraps it.
// State snapshots (params, optimizer moments, RNG, iteration) restore
// bit-exactly.
class TrainSession {
 public:
  TrainSession(const ArchSpec& arch, const Corpus& data, const TrainConfig& cfg);

  // Runs up to `n` more iterations (fewer if the loss goes non-finite).
  void run_steps(long n);
  void evaluate();  // appends an EvalRecord at the current iteration

  long iteration() const { return iteration_; }
  bool diverged() const { return diverged_; }
  Graph& graph() { return graph_; }
  const std::vector<EvalRecord>& records() const { return records_; }

  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

  // Writes report.jsonl, summary.json, checkpoint.ddnp under out_dir.
  RunReport finish(const std::string& out_dir);

 private:
  Var batch_loss(Tape& tape, const HeadOutputs& heads,
                 const std::vector<LabelMap>& labels);

  ArchSpec arch_;
  TrainConfig cfg_;
  Graph graph_;
  AdamState adam_;
  Rng rng_;
  long iteration_ = 0;
  bool diverged_ = false;
  double last_train_loss_ = 0.0;
  std::vector<EvalRecord> records_;
  std::vector<const Sample*> train_, eval_;
  ClassWeights medfreq_;  // precomputed when strategy = MedianFrequency
};

RunReport train(const ArchSpec& arch, const Corpus& data,
                const TrainConfig& cfg, const std::string& out_dir);

// deterministic 80/20 split by id hash (true = held-out eval member)
bool is_eval_id(const std::string& id);

}  // namespace ddn
