#include "ddn/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "ddn/blocks.hpp"

namespace ddn {

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Conv: return "conv";
    case OpKind::DepthwiseConv: return "dwconv";
    case OpKind::ConvT: return "tconv";
    case OpKind::BatchNorm: return "bn";
    case OpKind::Elu: return "elu";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool: return "maxpool";
    case OpKind::Concat: return "concat";
    case OpKind::Add: return "add";
    case OpKind::Dropout: return "dropout";
    case OpKind::Slice: return "slice";
  }
  return "?";
}

std::string to_string(SkipTag t) {
  switch (t) {
    case SkipTag::None: return "none";
    case SkipTag::Forward: return "forward";
    case SkipTag::Backward: return "backward";
    case SkipTag::StackedResidual: return "stacked_residual";
  }
  return "?";
}

int Graph::append(GNode n) {
  n.id = static_cast<int>(nodes_.size());
  if (n.name.empty()) n.name = to_string(n.kind) + "_" + std::to_string(n.id);
  if (n.input_tags.empty()) n.input_tags.assign(n.inputs.size(), SkipTag::None);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

int Graph::input(Shape4 s) {
  GNode n;
  n.kind = OpKind::Input;
  n.name = "input";
  n.out_shape = s;
  input_ = append(std::move(n));
  return input_;
}

namespace {
Tensor he_normal(Shape4 s, long fan_in, Rng& rng) {
  Tensor t(s);
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = std * rng.normal();
  return t;
}
}  // namespace

int Graph::conv(int x, long out_ch, int k, int stride, Padding pad,
                const std::string& name, bool bias) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::Conv;
  n.name = name;
  n.inputs = {x};
  n.stride = stride;
  n.pad = pad;
  long oh, ow;
  if (pad == Padding::Same) {
    oh = (in.h + stride - 1) / stride;
    ow = (in.w + stride - 1) / stride;
  } else {
    oh = (in.h - k) / stride + 1;
    ow = (in.w - k) / stride + 1;
  }
  n.out_shape = Shape4{in.n, out_ch, oh, ow};
  params_.add(name + ".w",
              he_normal(Shape4{out_ch, in.c, k, k}, in.c * k * k, init_rng_));
  n.params = {name + ".w"};
  if (bias) {
    params_.add(name + ".b", Tensor(Shape4{1, out_ch, 1, 1}));
    n.params.push_back(name + ".b");
  }
  return append(std::move(n));
}

int Graph::depthwise_conv(int x, int k, const std::string& name) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::DepthwiseConv;
  n.name = name;
  n.inputs = {x};
  n.out_shape = in;
  params_.add(name + ".w", he_normal(Shape4{in.c, 1, k, k}, k * k, init_rng_));
  n.params = {name + ".w"};
  return append(std::move(n));
}

int Graph::conv_transpose(int x, long out_ch, int k, int stride,
                          const std::string& name) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::ConvT;
  n.name = name;
  n.inputs = {x};
  n.stride = stride;
  n.out_shape = Shape4{in.n, out_ch, (in.h - 1) * stride + k,
                       (in.w - 1) * stride + k};
  params_.add(name + ".w",
              he_normal(Shape4{in.c, out_ch, k, k}, in.c * k * k, init_rng_));
  n.params = {name + ".w"};
  return append(std::move(n));
}

int Graph::batch_norm(int x, const std::string& name) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::BatchNorm;
  n.name = name;
  n.inputs = {x};
  n.out_shape = in;
  params_.add(name + ".gamma", Tensor(Shape4{1, in.c, 1, 1}, 1.0));
  params_.add(name + ".beta", Tensor(Shape4{1, in.c, 1, 1}, 0.0));
  params_.add(name + ".rmean", Tensor(Shape4{1, in.c, 1, 1}, 0.0), false);
  params_.add(name + ".rvar", Tensor(Shape4{1, in.c, 1, 1}, 1.0), false);
  n.params = {name + ".gamma", name + ".beta", name + ".rmean", name + ".rvar"};
  return append(std::move(n));
}

int Graph::elu(int x) {
  GNode n;
  n.kind = OpKind::Elu;
  n.inputs = {x};
  n.out_shape = shape_of(x);
  return append(std::move(n));
}

int Graph::relu(int x) {
  GNode n;
  n.kind = OpKind::Relu;
  n.inputs = {x};
  n.out_shape = shape_of(x);
  return append(std::move(n));
}

int Graph::max_pool(int x, int window, int stride) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::MaxPool;
  n.inputs = {x};
  n.window = window;
  n.stride = stride;
  n.out_shape = Shape4{in.n, in.c, (in.h - window) / stride + 1,
                       (in.w - window) / stride + 1};
  return append(std::move(n));
}

int Graph::concat(std::vector<int> xs, std::vector<SkipTag> tags) {
  GNode n;
  n.kind = OpKind::Concat;
  long c = 0;
  for (int x : xs) c += channels_of(x);
  const Shape4 s0 = shape_of(xs[0]);
  n.out_shape = Shape4{s0.n, c, s0.h, s0.w};
  n.inputs = std::move(xs);
  n.input_tags = std::move(tags);
  return append(std::move(n));
}

int Graph::add_nodes(int x, int y, SkipTag y_tag) {
  if (!(shape_of(x) == shape_of(y)))
    throw std::invalid_argument("Graph::add: shape mismatch " +
                                shape_of(x).str() + " vs " + shape_of(y).str());
  GNode n;
  n.kind = OpKind::Add;
  n.inputs = {x, y};
  n.input_tags = {SkipTag::None, y_tag};
  n.out_shape = shape_of(x);
  return append(std::move(n));
}

int Graph::dropout_node(int x, double rate) {
  GNode n;
  n.kind = OpKind::Dropout;
  n.inputs = {x};
  n.drop_rate = rate;
  n.out_shape = shape_of(x);
  return append(std::move(n));
}

int Graph::slice(int x, long begin, long count) {
  const Shape4 in = shape_of(x);
  GNode n;
  n.kind = OpKind::Slice;
  n.inputs = {x};
  n.slice_begin = begin;
  n.slice_count = count;
  n.out_shape = Shape4{in.n, count, in.h, in.w};
  return append(std::move(n));
}

void Graph::mark_head(int node, int head_index) {
  nodes_[node].head_index = head_index;
  heads_.push_back(node);
}

// ---------------------------------------------------------------------------
// DD-Net construction

namespace {

// One upsample stage: transposed conv 2x, forward-skip concat, then the
// configured feature-learning block projected to `width`.
int decoder_up_stage(Graph& g, const ArchSpec& spec, int cur, int fskip,
                     long width, const std::string& p) {
  cur = g.conv_transpose(cur, width, 2, 2, p + ".tconv");
  cur = g.concat({cur, fskip}, {SkipTag::None, SkipTag::Forward});
  switch (spec.decoder_block) {
    case ArchSpec::DecoderBlock::None:
      cur = g.conv(cur, width, 1, 1, Padding::Same, p + ".proj", false);
      break;
    case ArchSpec::DecoderBlock::Conv:
      cur = g.batch_norm(cur, p + ".bn");
      cur = g.elu(cur);
      cur = g.conv(cur, width, 3, 1, Padding::Same, p + ".conv", false);
      break;
    case ArchSpec::DecoderBlock::Dense: {
      BlockSpec d;
      d.kind = BlockSpec::Kind::Dense;
      d.layers = spec.decoder_dense_layers;
      d.growth = spec.decoder_dense_growth;
      cur = add_dense_block(g, cur, d, p + ".dense");
      cur = g.batch_norm(cur, p + ".trans.bn");
      cur = g.elu(cur);
      cur = g.conv(cur, width, 1, 1, Padding::Same, p + ".trans.conv", false);
      break;
    }
  }
  return g.dropout_node(cur, spec.dropout);
}

}  // namespace

Graph build(const ArchSpec& spec, std::uint64_t init_seed) {
  spec.validate();
  Graph g(init_seed);
  int cur = g.input(Shape4{1, spec.in_channels, spec.in_height, spec.in_width});

  // macro encoder
  cur = g.conv(cur, spec.stem_width, 3, 1, Padding::Same, "stem", false);
  std::vector<int> enc_feat;  // pre-pool feature per stage (res /1, /2, /4)
  for (std::size_t i = 0; i < spec.encoder.size(); ++i) {
    const auto& st = spec.encoder[i];
    cur = add_block(g, cur, st.block, "enc" + std::to_string(i + 1));
    cur = g.dropout_node(cur, spec.dropout);
    enc_feat.push_back(cur);
    if (st.downsample > 1) cur = g.max_pool(cur, st.downsample, st.downsample);
  }

  // shared forward-skip reductions, one per resolution level; level s feeds
  // decoder upsample stage s (stage 0 lands at /4, stage 2 at full res)
  std::vector<int> fskip(3);
  for (int s = 0; s < 3; ++s) {
    const int src = enc_feat[2 - s];
    fskip[s] = g.conv(src, spec.skip_reduce_width(s), 1, 1, Padding::Same,
                      "fskip.l" + std::to_string(s + 1) + ".reduce", false);
  }

  const int D = spec.decoder_units;
  const std::vector<long>& dw = spec.decoder_widths;
  int prev_final = -1;  // previous decoder's pre-fusion final feature
  for (int u = 1; u <= D; ++u) {
    const std::string dp = "dec" + std::to_string(u);
    std::vector<int> stage_out(3);
    for (int s = 0; s < 3; ++s) {
      cur = decoder_up_stage(g, spec, cur, fskip[s], dw[s],
                             dp + ".up" + std::to_string(s + 1));
      stage_out[s] = cur;
    }
    const int final_feat = cur;

    // stacked residual: from the second decoder on, fuse with the previous
    // decoder's pre-fusion final feature
    int fused = final_feat;
    if (spec.stacked_residual && u >= 2) {
      fused = g.add_nodes(final_feat, prev_final, SkipTag::StackedResidual);
      g.mark_junction(fused);
    }

    // aux heads read their own decoder's pre-fusion feature; the main head
    // reads the fused one
    if (spec.supervision || u == D) {
      const int head = g.conv(u == D ? fused : final_feat, spec.num_classes, 1,
                              1, Padding::Same, dp + ".head");
      g.mark_head(head, spec.supervision ? u - 1 : 0);
    }

    if (u == D) break;

    const int next_in = fused;
    prev_final = final_feat;

    // inner encoder: 3 downsampling blocks back to /8
    const long ew[3] = {dw[1], dw[0], spec.encoder.back().block.out_channels
                                          ? spec.encoder.back().block.out_channels
                                          : dw[0]};
    cur = next_in;
    for (int s = 0; s < 3; ++s) {
      const std::string ep =
          "ienc" + std::to_string(u) + ".s" + std::to_string(s + 1);
      cur = g.batch_norm(cur, ep + ".bn");
      cur = g.elu(cur);
      cur = g.conv(cur, ew[s], 3, 1, Padding::Same, ep + ".conv", false);
      if (spec.backward_skips) {
        // matching resolution: encoder stage s sits at the resolution of
        // decoder upsample stage 2-s
        int src = stage_out[2 - s];
        if (g.channels_of(src) != g.channels_of(cur)) {
          src = g.conv(src, g.channels_of(cur), 1, 1, Padding::Same,
                       ep + ".bskip.proj", false);
          g.mark_junction(src);
        }
        cur = g.add_nodes(cur, src, SkipTag::Backward);
        g.mark_junction(cur);
      }
      cur = g.max_pool(cur, 2, 2);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// forward interpreter

ForwardResult graph_forward(Graph& g, Tape& tape, const Tensor& x, Mode mode,
                            Rng& rng, bool params_require_grad,
                            bool input_requires_grad) {
  // Fully convolutional: only channels are fixed; spatial dims may differ
  // from the build-time shape but must survive the 8x downsampling path.
  const Shape4 want = g.shape_of(g.input_node());
  if (x.shape.c != want.c)
    throw std::invalid_argument("graph_forward: input channels " +
                                x.shape.str() + " do not match spec " +
                                want.str());
  long down = 1;
  for (const GNode& n : g.nodes())
    if (n.kind == OpKind::MaxPool) down = std::max(down, 8L);
  if (x.shape.h % down || x.shape.w % down)
    throw std::invalid_argument(
        "graph_forward: input spatial dims must be multiples of " +
        std::to_string(down) + ", got " + x.shape.str());
  ForwardResult r;
  auto param_var = [&](const std::string& name) -> Var {
    auto it = r.param_vars.find(name);
    if (it != r.param_vars.end()) return it->second;
    Var v = tape.leaf(g.params().at(name),
                      params_require_grad && g.params().trainable(name));
    r.param_vars.emplace(name, v);
    return v;
  };

  r.node_vars.resize(g.nodes().size());
  std::vector<std::pair<int, Var>> head_vars;
  for (const GNode& n : g.nodes()) {
    Var out;
    auto in = [&](int i) { return r.node_vars[n.inputs[i]]; };
    switch (n.kind) {
      case OpKind::Input:
        out = tape.leaf(x, input_requires_grad);
        break;
      case OpKind::Conv:
        out = conv2d(tape, in(0), param_var(n.params[0]),
                     n.params.size() > 1 ? param_var(n.params[1]) : nullptr,
                     n.stride, n.pad);
        break;
      case OpKind::DepthwiseConv:
        out = depthwise_conv2d(tape, in(0), param_var(n.params[0]), n.stride,
                               Padding::Same);
        break;
      case OpKind::ConvT:
        out = conv2d_transpose(tape, in(0), param_var(n.params[0]), n.stride);
        break;
      case OpKind::BatchNorm: {
        BatchNormState st;
        st.running_mean = g.params().at(n.params[2]);
        st.running_var = g.params().at(n.params[3]);
        out = batch_norm(tape, in(0), param_var(n.params[0]),
                         param_var(n.params[1]), mode, st);
        if (mode == Mode::Train) {
          g.params().at(n.params[2]) = st.running_mean;
          g.params().at(n.params[3]) = st.running_var;
        }
        break;
      }
      case OpKind::Elu:
        out = elu(tape, in(0), n.alpha);
        break;
      case OpKind::Relu:
        out = relu(tape, in(0));
        break;
      case OpKind::MaxPool:
        out = max_pool(tape, in(0), n.window, n.stride);
        break;
      case OpKind::Concat: {
        std::vector<Var> xs;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) xs.push_back(in(i));
        out = concat_channels(tape, xs);
        break;
      }
      case OpKind::Add:
        out = add(tape, in(0), in(1));
        break;
      case OpKind::Dropout:
        out = dropout(tape, in(0), n.drop_rate, mode, rng);
        break;
      case OpKind::Slice:
        out = slice_channels(tape, in(0), n.slice_begin, n.slice_count);
        break;
    }
    r.node_vars[n.id] = out;
    if (n.head_index >= 0) head_vars.emplace_back(n.head_index, out);
  }
  for (auto& [idx, v] : head_vars) r.heads.heads.push_back(v);
  return r;
}

}  // namespace ddn
