#include "ddn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddn {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

struct ConvGeom {
  long oh = 0, ow = 0;
  long pad_top = 0, pad_left = 0;
};

ConvGeom conv_geometry(long ih, long iw, long kh, long kw, int stride,
                       Padding pad) {
  ConvGeom g;
  if (pad == Padding::Same) {
    g.oh = (ih + stride - 1) / stride;
    g.ow = (iw + stride - 1) / stride;
    long ph = std::max<long>(0, (g.oh - 1) * stride + kh - ih);
    long pw = std::max<long>(0, (g.ow - 1) * stride + kw - iw);
    // symmetric zero padding, floor on the leading side
    g.pad_top = ph / 2;
    g.pad_left = pw / 2;
  } else {
    g.oh = (ih - kh) / stride + 1;
    g.ow = (iw - kw) / stride + 1;
  }
  if (g.oh <= 0 || g.ow <= 0)
    throw std::invalid_argument("conv2d: zero-sized spatial output");
  return g;
}

// col: (ic*kh*kw) x (oh*ow), one batch item
void im2col(const Tensor& x, long n, long kh, long kw, int stride,
            const ConvGeom& g, RowMat& col) {
  const long ic = x.shape.c, ih = x.shape.h, iw = x.shape.w;
  col.setZero(ic * kh * kw, g.oh * g.ow);
  for (long c = 0; c < ic; ++c)
    for (long ki = 0; ki < kh; ++ki)
      for (long kj = 0; kj < kw; ++kj) {
        const long row = (c * kh + ki) * kw + kj;
        for (long oi = 0; oi < g.oh; ++oi) {
          const long si = oi * stride + ki - g.pad_top;
          if (si < 0 || si >= ih) continue;
          for (long oj = 0; oj < g.ow; ++oj) {
            const long sj = oj * stride + kj - g.pad_left;
            if (sj < 0 || sj >= iw) continue;
            col(row, oi * g.ow + oj) = x.at(n, c, si, sj);
          }
        }
      }
}

void col2im_accum(const RowMat& col, long n, long kh, long kw, int stride,
                  const ConvGeom& g, Tensor& dx) {
  const long ic = dx.shape.c, ih = dx.shape.h, iw = dx.shape.w;
  for (long c = 0; c < ic; ++c)
    for (long ki = 0; ki < kh; ++ki)
      for (long kj = 0; kj < kw; ++kj) {
        const long row = (c * kh + ki) * kw + kj;
        for (long oi = 0; oi < g.oh; ++oi) {
          const long si = oi * stride + ki - g.pad_top;
          if (si < 0 || si >= ih) continue;
          for (long oj = 0; oj < g.ow; ++oj) {
            const long sj = oj * stride + kj - g.pad_left;
            if (sj < 0 || sj >= iw) continue;
            dx.at(n, c, si, sj) += col(row, oi * g.ow + oj);
          }
        }
      }
}

}  // namespace

Var conv2d(Tape& tape, Var x, Var w, Var b, int stride, Padding pad) {
  const Shape4 xs = x->value.shape, ws = w->value.shape;
  if (ws.c != xs.c)
    throw std::invalid_argument("conv2d: channel mismatch (input " +
                                std::to_string(xs.c) + ", kernel expects " +
                                std::to_string(ws.c) + ")");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (b && b->value.shape.c != ws.n)
    throw std::invalid_argument("conv2d: bias length != out channels");

  const ConvGeom g = conv_geometry(xs.h, xs.w, ws.h, ws.w, stride, pad);
  const long oc = ws.n, kvol = ws.c * ws.h * ws.w;
  Tensor out(Shape4{xs.n, oc, g.oh, g.ow});

  MapRowC W(w->value.data.data(), oc, kvol);
  RowMat col;
  for (long n = 0; n < xs.n; ++n) {
    im2col(x->value, n, ws.h, ws.w, stride, g, col);
    MapRow O(out.data.data() + static_cast<std::size_t>(n) * oc * g.oh * g.ow,
             oc, g.oh * g.ow);
    O.noalias() = W * col;
    if (b)
      for (long c = 0; c < oc; ++c)
        O.row(c).array() += b->value.data[static_cast<std::size_t>(c)];
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  auto back = [x, w, b, stride, g, ws](const Node& node) {
    const Shape4 xs2 = x->value.shape;
    const long oc2 = ws.n, kvol2 = ws.c * ws.h * ws.w;
    const long opix = g.oh * g.ow;
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (b && b->requires_grad) b->ensure_grad();
    RowMat col, dcol;
    for (long n = 0; n < xs2.n; ++n) {
      MapRowC dO(node.grad.data.data() +
                     static_cast<std::size_t>(n) * oc2 * opix,
                 oc2, opix);
      if (w->requires_grad) {
        im2col(x->value, n, ws.h, ws.w, stride, g, col);
        MapRow dW(w->grad.data.data(), oc2, kvol2);
        dW.noalias() += dO * col.transpose();
      }
      if (x->requires_grad) {
        MapRowC W(w->value.data.data(), oc2, kvol2);
        dcol.noalias() = W.transpose() * dO;
        col2im_accum(dcol, n, ws.h, ws.w, stride, g, x->grad);
      }
      if (b && b->requires_grad)
        for (long c = 0; c < oc2; ++c)
          b->grad.data[static_cast<std::size_t>(c)] += dO.row(c).sum();
    }
  };
  return tape.record(std::move(out), std::move(parents), std::move(back));
}

Var depthwise_conv2d(Tape& tape, Var x, Var w, int stride, Padding pad) {
  const Shape4 xs = x->value.shape, ws = w->value.shape;
  if (ws.n != xs.c || ws.c != 1)
    throw std::invalid_argument("depthwise_conv2d: kernel shape mismatch");
  const ConvGeom g = conv_geometry(xs.h, xs.w, ws.h, ws.w, stride, pad);
  Tensor out(Shape4{xs.n, xs.c, g.oh, g.ow});
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c)
      for (long oi = 0; oi < g.oh; ++oi)
        for (long oj = 0; oj < g.ow; ++oj) {
          double acc = 0.0;
          for (long ki = 0; ki < ws.h; ++ki) {
            const long si = oi * stride + ki - g.pad_top;
            if (si < 0 || si >= xs.h) continue;
            for (long kj = 0; kj < ws.w; ++kj) {
              const long sj = oj * stride + kj - g.pad_left;
              if (sj < 0 || sj >= xs.w) continue;
              acc += x->value.at(n, c, si, sj) * w->value.at(c, 0, ki, kj);
            }
          }
          out.at(n, c, oi, oj) = acc;
        }

  auto back = [x, w, stride, g, ws](const Node& node) {
    const Shape4 xs2 = x->value.shape;
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    for (long n = 0; n < xs2.n; ++n)
      for (long c = 0; c < xs2.c; ++c)
        for (long oi = 0; oi < g.oh; ++oi)
          for (long oj = 0; oj < g.ow; ++oj) {
            const double go = node.grad.at(n, c, oi, oj);
            for (long ki = 0; ki < ws.h; ++ki) {
              const long si = oi * stride + ki - g.pad_top;
              if (si < 0 || si >= xs2.h) continue;
              for (long kj = 0; kj < ws.w; ++kj) {
                const long sj = oj * stride + kj - g.pad_left;
                if (sj < 0 || sj >= xs2.w) continue;
                if (x->requires_grad)
                  x->grad.at(n, c, si, sj) += go * w->value.at(c, 0, ki, kj);
                if (w->requires_grad)
                  w->grad.at(c, 0, ki, kj) += go * x->value.at(n, c, si, sj);
              }
            }
          }
  };
  return tape.record(std::move(out), {x, w}, std::move(back));
}

Var conv2d_transpose(Tape& tape, Var x, Var w, int stride) {
  const Shape4 xs = x->value.shape, ws = w->value.shape;
  if (ws.n != xs.c)
    throw std::invalid_argument("conv2d_transpose: channel mismatch (input " +
                                std::to_string(xs.c) + ", kernel expects " +
                                std::to_string(ws.n) + ")");
  if (stride < 1)
    throw std::invalid_argument("conv2d_transpose: stride must be >= 1");
  const long oc = ws.c;
  const long oh = (xs.h - 1) * stride + ws.h;
  const long ow = (xs.w - 1) * stride + ws.w;
  Tensor out(Shape4{xs.n, oc, oh, ow});
  for (long n = 0; n < xs.n; ++n)
    for (long ci = 0; ci < xs.c; ++ci)
      for (long i = 0; i < xs.h; ++i)
        for (long j = 0; j < xs.w; ++j) {
          const double v = x->value.at(n, ci, i, j);
          for (long co = 0; co < oc; ++co)
            for (long ki = 0; ki < ws.h; ++ki)
              for (long kj = 0; kj < ws.w; ++kj)
                out.at(n, co, i * stride + ki, j * stride + kj) +=
                    v * w->value.at(ci, co, ki, kj);
        }

  auto back = [x, w, stride, ws](const Node& node) {
    const Shape4 xs2 = x->value.shape;
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    for (long n = 0; n < xs2.n; ++n)
      for (long ci = 0; ci < xs2.c; ++ci)
        for (long i = 0; i < xs2.h; ++i)
          for (long j = 0; j < xs2.w; ++j)
            for (long co = 0; co < ws.c; ++co)
              for (long ki = 0; ki < ws.h; ++ki)
                for (long kj = 0; kj < ws.w; ++kj) {
                  const double go =
                      node.grad.at(n, co, i * stride + ki, j * stride + kj);
                  if (x->requires_grad)
                    x->grad.at(n, ci, i, j) += go * w->value.at(ci, co, ki, kj);
                  if (w->requires_grad)
                    w->grad.at(ci, co, ki, kj) += go * x->value.at(n, ci, i, j);
                }
  };
  return tape.record(std::move(out), {x, w}, std::move(back));
}

Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, Mode mode,
               BatchNormState& state) {
  const Shape4 xs = x->value.shape;
  if (gamma->value.shape.c != xs.c || beta->value.shape.c != xs.c)
    throw std::invalid_argument("batch_norm: gamma/beta length != channels");
  if (xs.n == 0 || xs.h * xs.w == 0)
    throw std::invalid_argument("batch_norm: empty batch");

  const long C = xs.c;
  const double m = static_cast<double>(xs.n) * xs.h * xs.w;
  const double eps = state.eps;

  Tensor mean(Shape4{1, C, 1, 1}), var(Shape4{1, C, 1, 1});
  if (mode == Mode::Train) {
    for (long c = 0; c < C; ++c) {
      double s = 0.0;
      for (long n = 0; n < xs.n; ++n)
        for (long i = 0; i < xs.h; ++i)
          for (long j = 0; j < xs.w; ++j) s += x->value.at(n, c, i, j);
      mean.data[c] = s / m;
      double v = 0.0;
      for (long n = 0; n < xs.n; ++n)
        for (long i = 0; i < xs.h; ++i)
          for (long j = 0; j < xs.w; ++j) {
            const double d = x->value.at(n, c, i, j) - mean.data[c];
            v += d * d;
          }
      var.data[c] = v / m;
      state.running_mean.data[c] = state.momentum * state.running_mean.data[c] +
                                   (1.0 - state.momentum) * mean.data[c];
      state.running_var.data[c] = state.momentum * state.running_var.data[c] +
                                  (1.0 - state.momentum) * var.data[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor invstd(Shape4{1, C, 1, 1});
  for (long c = 0; c < C; ++c) invstd.data[c] = 1.0 / std::sqrt(var.data[c] + eps);

  Tensor out(xs);
  Tensor xhat(xs);
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < C; ++c)
      for (long i = 0; i < xs.h; ++i)
        for (long j = 0; j < xs.w; ++j) {
          const double xh = (x->value.at(n, c, i, j) - mean.data[c]) * invstd.data[c];
          xhat.at(n, c, i, j) = xh;
          out.at(n, c, i, j) = gamma->value.data[c] * xh + beta->value.data[c];
        }

  auto back = [x, gamma, beta, mode, xhat = std::move(xhat),
               invstd = std::move(invstd), m](const Node& node) {
    const Shape4 xs2 = x->value.shape;
    const long C2 = xs2.c;
    if (x->requires_grad) x->ensure_grad();
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    for (long c = 0; c < C2; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (long n = 0; n < xs2.n; ++n)
        for (long i = 0; i < xs2.h; ++i)
          for (long j = 0; j < xs2.w; ++j) {
            const double dy = node.grad.at(n, c, i, j);
            sum_dy += dy;
            sum_dy_xhat += dy * xhat.at(n, c, i, j);
          }
      if (gamma->requires_grad) gamma->grad.data[c] += sum_dy_xhat;
      if (beta->requires_grad) beta->grad.data[c] += sum_dy;
      if (!x->requires_grad) continue;
      const double g = gamma->value.data[c], is = invstd.data[c];
      if (mode == Mode::Train) {
        for (long n = 0; n < xs2.n; ++n)
          for (long i = 0; i < xs2.h; ++i)
            for (long j = 0; j < xs2.w; ++j) {
              const double dy = node.grad.at(n, c, i, j);
              x->grad.at(n, c, i, j) +=
                  g * is / m *
                  (m * dy - sum_dy - xhat.at(n, c, i, j) * sum_dy_xhat);
            }
      } else {
        for (long n = 0; n < xs2.n; ++n)
          for (long i = 0; i < xs2.h; ++i)
            for (long j = 0; j < xs2.w; ++j)
              x->grad.at(n, c, i, j) += g * is * node.grad.at(n, c, i, j);
      }
    }
  };
  return tape.record(std::move(out), {x, gamma, beta}, std::move(back));
}

Var elu(Tape& tape, Var x, double alpha) {
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double v = x->value.data[i];
    out.data[i] = v > 0.0 ? v : alpha * (std::exp(v) - 1.0);
  }
  auto back = [x, alpha](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < node.grad.data.size(); ++i) {
      const double v = x->value.data[i];
      const double d = v > 0.0 ? 1.0 : alpha * std::exp(v);
      x->grad.data[i] += d * node.grad.data[i];
    }
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var relu(Tape& tape, Var x) {
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::max(0.0, x->value.data[i]);
  auto back = [x](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < node.grad.data.size(); ++i)
      if (x->value.data[i] > 0.0) x->grad.data[i] += node.grad.data[i];
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var max_pool(Tape& tape, Var x, int window, int stride) {
  const Shape4 xs = x->value.shape;
  if (window < 1) throw std::invalid_argument("max_pool: window must be >= 1");
  if (window > xs.h || window > xs.w)
    throw std::invalid_argument("max_pool: window exceeds spatial dims");
  const long oh = (xs.h - window) / stride + 1;
  const long ow = (xs.w - window) / stride + 1;
  Tensor out(Shape4{xs.n, xs.c, oh, ow});
  // argmax source index per output cell, first occurrence in row-major order
  std::vector<std::size_t> argmax(out.size());
  std::size_t k = 0;
  for (long n = 0; n < xs.n; ++n)
    for (long c = 0; c < xs.c; ++c)
      for (long oi = 0; oi < oh; ++oi)
        for (long oj = 0; oj < ow; ++oj, ++k) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (long ki = 0; ki < window; ++ki)
            for (long kj = 0; kj < window; ++kj) {
              const long si = oi * stride + ki, sj = oj * stride + kj;
              const double v = x->value.at(n, c, si, sj);
              if (v > best) {
                best = v;
                best_idx =
                    ((static_cast<std::size_t>(n) * xs.c + c) * xs.h + si) *
                        xs.w +
                    sj;
              }
            }
          out.data[k] = best;
          argmax[k] = best_idx;
        }
  auto back = [x, argmax = std::move(argmax)](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < node.grad.data.size(); ++i)
      x->grad.data[argmax[i]] += node.grad.data[i];
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var concat_channels(Tape& tape, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape4 s0 = xs[0]->value.shape;
  long total_c = 0;
  for (const auto& v : xs) {
    const Shape4 s = v->value.shape;
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw std::invalid_argument("concat_channels: spatial/batch mismatch");
    total_c += s.c;
  }
  Tensor out(Shape4{s0.n, total_c, s0.h, s0.w});
  const long plane = s0.h * s0.w;
  for (long n = 0; n < s0.n; ++n) {
    long coff = 0;
    for (const auto& v : xs) {
      const long c = v->value.shape.c;
      std::copy_n(v->value.data.begin() +
                      static_cast<std::size_t>(n) * c * plane,
                  static_cast<std::size_t>(c) * plane,
                  out.data.begin() +
                      (static_cast<std::size_t>(n) * total_c + coff) * plane);
      coff += c;
    }
  }
  auto back = [xs, total_c, plane, s0](const Node& node) {
    for (long n = 0; n < s0.n; ++n) {
      long coff = 0;
      for (const auto& v : xs) {
        const long c = v->value.shape.c;
        if (v->requires_grad) {
          v->ensure_grad();
          const std::size_t src =
              (static_cast<std::size_t>(n) * total_c + coff) * plane;
          const std::size_t dst = static_cast<std::size_t>(n) * c * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(c) * plane; ++i)
            v->grad.data[dst + i] += node.grad.data[src + i];
        }
        coff += c;
      }
    }
  };
  return tape.record(std::move(out), xs, std::move(back));
}

Var slice_channels(Tape& tape, Var x, long begin, long count) {
  const Shape4 xs = x->value.shape;
  if (begin < 0 || count < 0 || begin + count > xs.c)
    throw std::invalid_argument("slice_channels: range out of bounds");
  Tensor out(Shape4{xs.n, count, xs.h, xs.w});
  const long plane = xs.h * xs.w;
  for (long n = 0; n < xs.n; ++n)
    std::copy_n(x->value.data.begin() +
                    (static_cast<std::size_t>(n) * xs.c + begin) * plane,
                static_cast<std::size_t>(count) * plane,
                out.data.begin() + static_cast<std::size_t>(n) * count * plane);
  auto back = [x, begin, count, plane, xs](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (long n = 0; n < xs.n; ++n) {
      const std::size_t dst =
          (static_cast<std::size_t>(n) * xs.c + begin) * plane;
      const std::size_t src = static_cast<std::size_t>(n) * count * plane;
      for (std::size_t i = 0; i < static_cast<std::size_t>(count) * plane; ++i)
        x->grad.data[dst + i] += node.grad.data[src + i];
    }
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var add(Tape& tape, Var x, Var y) {
  if (!(x->value.shape == y->value.shape))
    throw std::invalid_argument("add: shape mismatch " + x->value.shape.str() +
                                " vs " + y->value.shape.str());
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = x->value.data[i] + y->value.data[i];
  auto back = [x, y](const Node& node) {
    for (const Var& p : {x, y}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < node.grad.data.size(); ++i)
        p->grad.data[i] += node.grad.data[i];
    }
  };
  return tape.record(std::move(out), {x, y}, std::move(back));
}

Var dropout(Tape& tape, Var x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) {
    Tensor out = x->value;
    auto back = [x](const Node& node) {
      if (!x->requires_grad) return;
      x->accumulate(node.grad);
    };
    return tape.record(std::move(out), {x}, std::move(back));
  }
  const double keep = 1.0 - rate;
  std::vector<char> mask(x->value.size());
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    mask[i] = rng.uniform() >= rate;
    out.data[i] = mask[i] ? x->value.data[i] / keep : 0.0;
  }
  auto back = [x, mask = std::move(mask), keep](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < node.grad.data.size(); ++i)
      if (mask[i]) x->grad.data[i] += node.grad.data[i] / keep;
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var softmax_channels(Tape& tape, Var x) {
  const Shape4 xs = x->value.shape;
  Tensor out(xs);
  const long plane = xs.h * xs.w;
  for (long n = 0; n < xs.n; ++n)
    for (long i = 0; i < xs.h; ++i)
      for (long j = 0; j < xs.w; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (long c = 0; c < xs.c; ++c) mx = std::max(mx, x->value.at(n, c, i, j));
        double z = 0.0;
        for (long c = 0; c < xs.c; ++c)
          z += std::exp(x->value.at(n, c, i, j) - mx);
        for (long c = 0; c < xs.c; ++c)
          out.at(n, c, i, j) = std::exp(x->value.at(n, c, i, j) - mx) / z;
      }
  (void)plane;
  Tensor y = out;
  auto back = [x, y = std::move(y)](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const Shape4 s = x->value.shape;
    for (long n = 0; n < s.n; ++n)
      for (long i = 0; i < s.h; ++i)
        for (long j = 0; j < s.w; ++j) {
          double dot = 0.0;
          for (long c = 0; c < s.c; ++c)
            dot += node.grad.at(n, c, i, j) * y.at(n, c, i, j);
          for (long c = 0; c < s.c; ++c)
            x->grad.at(n, c, i, j) +=
                y.at(n, c, i, j) * (node.grad.at(n, c, i, j) - dot);
        }
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

Var sum_all(Tape& tape, Var x) {
  double s = 0.0;
  for (double v : x->value.data) s += v;
  auto back = [x](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    const double g = node.grad.data[0];
    for (double& d : x->grad.data) d += g;
  };
  return tape.record(Tensor::scalar(s), {x}, std::move(back));
}

Var scale(Tape& tape, Var x, double k) {
  Tensor out(x->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = k * x->value.data[i];
  auto back = [x, k](const Node& node) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (std::size_t i = 0; i < node.grad.data.size(); ++i)
      x->grad.data[i] += k * node.grad.data[i];
  };
  return tape.record(std::move(out), {x}, std::move(back));
}

}  // namespace ddn
