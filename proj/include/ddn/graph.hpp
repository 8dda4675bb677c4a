#pragma once

#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "ddn/archspec.hpp"
#include "ddn/ops.hpp"
#include "ddn/params.hpp"
#include "ddn/rng.hpp"
#include "ddn/tape.hpp"

namespace ddn {

enum class OpKind {
  Input,
  Conv,
  DepthwiseConv,
  ConvT,
  BatchNorm,
  Elu,
  Relu,
  MaxPool,
  Concat,
  Add,
  Dropout,
  Slice,
};

enum class SkipTag { None, Forward, Backward, StackedResidual };

std::string to_string(OpKind k);
std::string to_string(SkipTag t);

struct GNode {
  int id = -1;
  OpKind kind = OpKind::Input;
  std::string name;
  std::vector<int> inputs;          // primary dataflow input first
  std::vector<SkipTag> input_tags;  // parallel to inputs
  Shape4 out_shape;

  int stride = 1;
  Padding pad = Padding::Same;
  int window = 0;
  double alpha = 1.0;
  double drop_rate = 0.0;
  long slice_begin = 0, slice_count = 0;
  std::vector<std::string> params;  // Conv: w[,b]; BatchNorm: gamma,beta,mean,var
  int head_index = -1;              // >= 0: classifier head output
  bool junction = false;            // node inserted only to wire a skip
};

// Immutable-after-build computation graph: node list in topological order
// plus a named parameter registry. Forward passes interpret the node list
// onto a fresh Tape.
class Graph {
 public:
  explicit Graph(std::uint64_t init_seed = 0) : init_rng_(init_seed) {}

  // --- builder primitives (shape inference at build time) ---
  int input(Shape4 s);
  int conv(int x, long out_ch, int k, int stride, Padding pad,
           const std::string& name, bool bias = true);
  int depthwise_conv(int x, int k, const std::string& name);
  int conv_transpose(int x, long out_ch, int k, int stride,
                     const std::string& name);
  int batch_norm(int x, const std::string& name);
  int elu(int x);
  int relu(int x);
  int max_pool(int x, int window, int stride);
  int concat(std::vector<int> xs,
             std::vector<SkipTag> tags = {});
  int add_nodes(int x, int y, SkipTag y_tag = SkipTag::None);
  int dropout_node(int x, double rate);
  int slice(int x, long begin, long count);

  void mark_head(int node, int head_index);
  void mark_junction(int node) { nodes_[node].junction = true; }

  // --- queries ---
  const std::vector<GNode>& nodes() const { return nodes_; }
  Shape4 shape_of(int id) const { return nodes_[id].out_shape; }
  long channels_of(int id) const { return nodes_[id].out_shape.c; }
  const std::vector<int>& head_nodes() const { return heads_; }
  int input_node() const { return input_; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t param_count() const { return params_.trainable_scalar_count(); }

  Rng& init_rng() { return init_rng_; }

 private:
  int append(GNode n);
  std::vector<GNode> nodes_;
  std::vector<int> heads_;
  int input_ = -1;
  ParamSet params_;
  Rng init_rng_;
};

struct HeadOutputs {
  std::vector<Var> heads;  // one per decoder unit, main head last
  Var main() const { return heads.back(); }
  std::size_t aux_count() const { return heads.size() - 1; }
};

struct ForwardResult {
  HeadOutputs heads;
  std::unordered_map<std::string, Var> param_vars;  // trainable leaves
  std::vector<Var> node_vars;                       // by node id
};

ForwardResult graph_forward(Graph& g, Tape& tape, const Tensor& x, Mode mode,
                            Rng& rng, bool params_require_grad = true,
                            bool input_requires_grad = false);

// Builds the DD-Net of the spec: stem + 3 DPDB encoder stages, D stacked
// decoder(-encoder) units, forward/backward/stacked-residual skips, heads.
Graph build(const ArchSpec& spec, std::uint64_t init_seed = 1);

// --- export ---
std::string export_dot(const Graph& g);
std::string export_json(const Graph& g);

struct GraphStructure {
  struct NodeInfo {
    std::string name, kind;
    Shape4 shape;
  };
  std::vector<NodeInfo> nodes;
  // (src node index, dst node index, tag)
  std::vector<std::tuple<int, int, std::string>> edges;
};
GraphStructure structure_of(const Graph& g);
GraphStructure parse_graph_json(const std::string& text);
bool isomorphic(const GraphStructure& a, const GraphStructure& b);
bool is_acyclic(const GraphStructure& s);

// Edge set with skip-junction nodes (projections, sum points) contracted to
// their primary dataflow input; used for skip-ablation structure checks.
std::set<std::tuple<std::string, std::string, std::string>> logical_edge_set(
    const Graph& g);

}  // namespace ddn
