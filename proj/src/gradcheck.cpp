#include "ddn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "ddn/blocks.hpp"
#include "ddn/graph.hpp"
#include "ddn/losses.hpp"
#include "ddn/ops.hpp"

namespace ddn {

double fd_max_rel_err(FdCheck& check, double step, std::size_t max_coords,
                      std::uint64_t seed) {
  const std::vector<Tensor> analytic = check.grads();

  std::size_t total = 0;
  for (const Tensor* p : check.params) total += p->size();

  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (param, index)
  if (max_coords == 0 || max_coords >= total) {
    for (std::size_t k = 0; k < check.params.size(); ++k)
      for (std::size_t i = 0; i < check.params[k]->size(); ++i)
        coords.emplace_back(k, i);
  } else {
    Rng rng(seed);
    std::set<std::size_t> picked;
    while (picked.size() < max_coords) picked.insert(rng.below(total));
    for (std::size_t flat : picked) {
      std::size_t k = 0, off = flat;
      while (off >= check.params[k]->size()) off -= check.params[k++]->size();
      coords.emplace_back(k, off);
    }
  }

  double worst = 0.0;
  for (const auto& [k, i] : coords) {
    double& x = check.params[k]->data[i];
    const double saved = x;
    x = saved + step;
    const double fp = check.eval();
    x = saved - step;
    const double fm = check.eval();
    x = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel = std::abs(analytic[k].data[i] - numeric) /
                       std::max(1e-8, std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

namespace {

Tensor randn(Shape4 s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// scalar dot with fixed coefficients; keeps sum-losses sensitive to sign
Var dot_const(Tape& tape, Var x, std::shared_ptr<Tensor> coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < x->value.data.size(); ++i)
    s += x->value.data[i] * coeff->data[i];
  auto back = [x, coeff](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const double g = node.grad.data[0];
    for (std::size_t i = 0; i < x->grad.data.size(); ++i)
      x->grad.data[i] += g * coeff->data[i];
  };
  return tape.record(Tensor::scalar(s), {x}, std::move(back));
}

using LossBuilder = std::function<Var(Tape&, std::vector<Var>&)>;

GradCheckCase op_case(const std::string& name, double tol,
                      std::vector<Tensor> init, LossBuilder loss,
                      std::size_t max_coords = 0) {
  auto storage = std::make_shared<std::vector<Tensor>>(std::move(init));
  FdCheck chk;
  for (auto& t : *storage) chk.params.push_back(&t);
  chk.eval = [storage, loss]() {
    Tape tape;
    std::vector<Var> vars;
    for (auto& t : *storage) vars.push_back(tape.leaf(t, false));
    return loss(tape, vars)->value.item();
  };
  chk.grads = [storage, loss]() {
    Tape tape;
    std::vector<Var> vars;
    for (auto& t : *storage) vars.push_back(tape.leaf(t, true));
    tape.backward(loss(tape, vars));
    std::vector<Tensor> gs;
    for (auto& v : vars) {
      v->ensure_grad();
      gs.push_back(v->grad);
    }
    return gs;
  };
  GradCheckCase c{name, fd_max_rel_err(chk, 1e-5, max_coords), tol, false};
  c.pass = c.rel_err < tol;
  return c;
}

// Full graph (block or network) case: parameters are the graph's trainable
// entries plus the input tensor; the loss is a fixed-coefficient dot over
// every head (or the single output node).
GradCheckCase graph_case(const std::string& name, double tol, Graph&& graph,
                         Tensor input, std::vector<int> outputs, Rng& rng,
                         std::size_t max_coords = 0) {
  auto g = std::make_shared<Graph>(std::move(graph));
  auto x = std::make_shared<Tensor>(std::move(input));
  std::vector<std::shared_ptr<Tensor>> coeffs;
  for (int out : outputs) {
    Shape4 s = g->shape_of(out);
    s.n = x->shape.n;
    coeffs.push_back(std::make_shared<Tensor>(randn(s, rng)));
  }
  FdCheck chk;
  std::vector<std::string> names;
  for (auto& e : g->params().entries())
    if (e.trainable) {
      chk.params.push_back(&e.value);
      names.push_back(e.name);
    }
  chk.params.push_back(x.get());
  chk.eval = [g, x, outputs, coeffs]() {
    Tape tape;
    Rng dummy(0);
    ForwardResult fr =
        graph_forward(*g, tape, *x, Mode::Train, dummy, false, false);
    Var total;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      Var term = dot_const(tape, fr.node_vars[outputs[i]], coeffs[i]);
      total = total ? add(tape, total, term) : term;
    }
    return total->value.item();
  };
  chk.grads = [g, x, outputs, coeffs, names]() {
    Tape tape;
    Rng dummy(0);
    ForwardResult fr =
        graph_forward(*g, tape, *x, Mode::Train, dummy, true, true);
    Var total;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      Var term = dot_const(tape, fr.node_vars[outputs[i]], coeffs[i]);
      total = total ? add(tape, total, term) : term;
    }
    tape.backward(total);
    std::vector<Tensor> gs;
    for (const auto& nm : names) {
      Var v = fr.param_vars.at(nm);
      v->ensure_grad();
      gs.push_back(v->grad);
    }
    Var in = fr.node_vars[g->input_node()];
    in->ensure_grad();
    gs.push_back(in->grad);
    return gs;
  };
  GradCheckCase c{name, fd_max_rel_err(chk, 1e-5, max_coords), tol, false};
  c.pass = c.rel_err < tol;
  return c;
}

Graph single_block_graph(const BlockSpec& spec, Shape4 in, std::uint64_t seed,
                         int* out) {
  Graph g(seed);
  int x = g.input(in);
  *out = add_block(g, x, spec, "blk");
  return g;
}

ArchSpec gradcheck_netspec() {
  ArchSpec s = tiny_preset();
  s.in_channels = 2;
  s.in_height = 8;
  s.in_width = 8;
  s.num_classes = 2;
  s.stem_width = 6;
  for (auto& st : s.encoder) {
    st.block.layers = 1;
    st.block.growth = 4;
    st.block.residual_width = 4;
    st.block.bottleneck_width = 6;
    st.block.out_channels = 6;
  }
  s.decoder_units = 2;
  s.decoder_widths = {6, 6, 6};
  s.skip_reduce = {3, 3, 3};
  s.decoder_dense_layers = 1;
  s.decoder_dense_growth = 4;
  s.backward_skips = true;
  s.stacked_residual = true;
  s.supervision = true;
  s.dropout = 0.0;
  return s;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckCase> cases;

  {
    Tensor x = randn(Shape4{2, 3, 8, 8}, rng);
    Tensor w = randn(Shape4{4, 3, 3, 3}, rng, 0.5);
    Tensor b = randn(Shape4{1, 4, 1, 1}, rng, 0.1);
    cases.push_back(op_case(
        "conv2d", 1e-4, {x, w, b}, [](Tape& t, std::vector<Var>& v) {
          return sum_all(t, conv2d(t, v[0], v[1], v[2], 1, Padding::Same));
        }));
  }
  {
    Tensor x = randn(Shape4{1, 3, 6, 6}, rng);
    Tensor w = randn(Shape4{4, 3, 3, 3}, rng, 0.5);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 4, 3, 3}, rng));
    cases.push_back(op_case(
        "conv2d_stride2_valid", 1e-4, {x, w},
        [coeff](Tape& t, std::vector<Var>& v) {
          return dot_const(t, conv2d(t, v[0], v[1], nullptr, 2, Padding::Valid),
                           coeff);
        }));
  }
  {
    Tensor x = randn(Shape4{1, 3, 4, 4}, rng);
    Tensor w = randn(Shape4{3, 2, 2, 2}, rng, 0.5);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 2, 8, 8}, rng));
    cases.push_back(op_case(
        "conv2d_transpose", 1e-4, {x, w}, [coeff](Tape& t, std::vector<Var>& v) {
          return dot_const(t, conv2d_transpose(t, v[0], v[1], 2), coeff);
        }));
  }
  {
    Tensor x = randn(Shape4{2, 2, 4, 4}, rng);
    Tensor gamma = randn(Shape4{1, 2, 1, 1}, rng, 0.3);
    for (double& v : gamma.data) v += 1.0;
    Tensor beta = randn(Shape4{1, 2, 1, 1}, rng, 0.3);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{2, 2, 4, 4}, rng));
    auto state = std::make_shared<BatchNormState>(BatchNormState::make(2));
    cases.push_back(op_case(
        "batch_norm", 1e-3, {x, gamma, beta},
        [coeff, state](Tape& t, std::vector<Var>& v) {
          return dot_const(
              t, batch_norm(t, v[0], v[1], v[2], Mode::Train, *state), coeff);
        }));
  }
  {
    Tensor x = randn(Shape4{1, 2, 5, 5}, rng);
    for (double& v : x.data)
      if (std::abs(v) < 0.05) v += 0.1;  // keep clear of the kink
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 2, 5, 5}, rng));
    cases.push_back(op_case("elu", 1e-4, {x},
                            [coeff](Tape& t, std::vector<Var>& v) {
                              return dot_const(t, elu(t, v[0], 1.0), coeff);
                            }));
    cases.push_back(op_case("relu", 1e-4, {x},
                            [coeff](Tape& t, std::vector<Var>& v) {
                              return dot_const(t, relu(t, v[0]), coeff);
                            }));
  }
  {
    Tensor x = randn(Shape4{1, 2, 6, 6}, rng);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 2, 3, 3}, rng));
    cases.push_back(op_case("max_pool", 1e-4, {x},
                            [coeff](Tape& t, std::vector<Var>& v) {
                              return dot_const(t, max_pool(t, v[0], 2, 2), coeff);
                            }));
  }
  {
    Tensor a = randn(Shape4{1, 3, 4, 4}, rng);
    Tensor b = randn(Shape4{1, 5, 4, 4}, rng);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 5, 4, 4}, rng));
    cases.push_back(op_case(
        "concat_slice", 1e-4, {a, b}, [coeff](Tape& t, std::vector<Var>& v) {
          Var cat = concat_channels(t, {v[0], v[1]});
          return dot_const(t, slice_channels(t, cat, 2, 5), coeff);
        }));
  }
  {
    Tensor a = randn(Shape4{1, 2, 3, 3}, rng);
    Tensor b = randn(Shape4{1, 2, 3, 3}, rng);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 2, 3, 3}, rng));
    cases.push_back(op_case("add", 1e-4, {a, b},
                            [coeff](Tape& t, std::vector<Var>& v) {
                              return dot_const(t, add(t, v[0], v[1]), coeff);
                            }));
  }
  {
    Tensor x = randn(Shape4{1, 3, 4, 4}, rng);
    auto coeff = std::make_shared<Tensor>(randn(Shape4{1, 3, 4, 4}, rng));
    cases.push_back(op_case("softmax_channels", 1e-4, {x},
                            [coeff](Tape& t, std::vector<Var>& v) {
                              return dot_const(t, softmax_channels(t, v[0]), coeff);
                            }));
  }
  {
    // label map with a void pixel; shared by the loss cases
    auto labels = std::make_shared<std::vector<LabelMap>>();
    LabelMap lm(4, 4);
    Rng lr = rng.fork(11);
    for (int& v : lm.values) v = static_cast<int>(lr.below(3));
    lm.at(0, 0) = kVoidLabel;
    labels->push_back(lm);
    Tensor x = randn(Shape4{1, 3, 4, 4}, rng);
    ClassWeights w = ClassWeights::uniform(3);
    w.weights = {1.0, 2.5, 0.7};
    cases.push_back(op_case(
        "weighted_cross_entropy", 1e-4, {x},
        [labels, w](Tape& t, std::vector<Var>& v) {
          return weighted_cross_entropy(t, v[0], *labels, w);
        }));
    cases.push_back(op_case(
        "focal_loss_gamma2", 1e-4, {x},
        [labels](Tape& t, std::vector<Var>& v) {
          return focal_loss(t, v[0], *labels, ClassWeights::uniform(3), 2.0);
        }));
    cases.push_back(op_case(
        "focal_dynamic_loss", 1e-4, {x},
        [labels](Tape& t, std::vector<Var>& v) {
          return focal_dynamic_loss(t, v[0], *labels, 2.0, 1.5);
        }));
  }

  // blocks
  {
    BlockSpec spec;
    spec.kind = BlockSpec::Kind::Residual;
    spec.layers = 2;
    spec.residual_width = 4;
    int out;
    Graph g = single_block_graph(spec, Shape4{1, 4, 6, 6}, seed + 1, &out);
    cases.push_back(graph_case("residual_block", 1e-3, std::move(g),
                               randn(Shape4{1, 4, 6, 6}, rng), {out}, rng));
  }
  {
    BlockSpec spec;
    spec.kind = BlockSpec::Kind::Dense;
    spec.layers = 3;
    spec.growth = 4;
    int out;
    Graph g = single_block_graph(spec, Shape4{1, 8, 6, 6}, seed + 2, &out);
    cases.push_back(graph_case("dense_block", 1e-3, std::move(g),
                               randn(Shape4{1, 8, 6, 6}, rng), {out}, rng));
  }
  {
    BlockSpec spec;
    spec.kind = BlockSpec::Kind::DPDB;
    spec.layers = 2;
    spec.growth = 4;
    spec.residual_width = 8;
    spec.out_channels = 12;
    int out;
    Graph g = single_block_graph(spec, Shape4{1, 8, 6, 6}, seed + 3, &out);
    cases.push_back(graph_case("dpdb_block", 1e-3, std::move(g),
                               randn(Shape4{1, 8, 6, 6}, rng), {out}, rng));
  }
  {
    BlockSpec spec;
    spec.kind = BlockSpec::Kind::InvertedResidual;
    spec.layers = 1;
    spec.expansion = 2;
    spec.out_channels = 6;
    spec.residual_width = 6;
    int out;
    Graph g = single_block_graph(spec, Shape4{1, 6, 6, 6}, seed + 4, &out);
    cases.push_back(graph_case("inverted_residual_block", 1e-3, std::move(g),
                               randn(Shape4{1, 6, 6, 6}, rng), {out}, rng));
  }

  // tiny full network, D=2, all skip families
  {
    Graph g = build(gradcheck_netspec(), seed + 5);
    std::vector<int> outs(g.head_nodes().begin(), g.head_nodes().end());
    cases.push_back(graph_case("ddnet_d2_all_skips", 1e-3, std::move(g),
                               randn(Shape4{1, 2, 8, 8}, rng), outs, rng, 400));
  }
  return cases;
}

}  // namespace ddn
