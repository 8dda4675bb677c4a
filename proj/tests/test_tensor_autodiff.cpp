#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "ddn/checkpoint.hpp"
#include "ddn/gradcheck.hpp"
#include "ddn/ops.hpp"
#include "ddn/rng.hpp"
#include "ddn/tape.hpp"

using namespace ddn;

namespace {
Tensor filled(Shape4 s, double v) { return Tensor(s, v); }

Tensor randn_t(Shape4 s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.data) v = rng.normal();
  return t;
}
}  // namespace

TEST_CASE("rng: deterministic, serializable, forkable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // counter restore reproduces the stream mid-way
  Rng c(9);
  for (int i = 0; i < 10; ++i) c.next_u64();
  Rng d(0);
  d.restore(c.seed(), c.counter());
  CHECK(c.next_u64() == d.next_u64());

  // forked streams differ from the parent and from each other
  Rng p(7);
  CHECK(p.fork(1).next_u64() != p.fork(2).next_u64());

  // uniforms land in [0,1)
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("rng: normal moments at 1e5 draws") {
  Rng r(2024);
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("tape: fan-out doubles the gradient") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(3.0), true);
  Var y = add(t, x, x);  // y = 2x
  t.backward(y);
  CHECK(x->grad.data[0] == doctest::Approx(2.0));
}

TEST_CASE("tape: backward twice is an error") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(1.0), true);
  Var y = scale(t, x, 2.0);
  t.backward(y);
  CHECK_THROWS(t.backward(y));
}

TEST_CASE("tape: backward needs a scalar") {
  Tape t;
  Var x = t.leaf(Tensor(Shape4{1, 2, 1, 1}, 1.0), true);
  CHECK_THROWS(t.backward(x));
}

TEST_CASE("conv2d: 3x3 ones kernel sums the neighborhood") {
  // all-ones 5x5 input, single 3x3 ones kernel, valid padding:
  // every interior output is the 9-pixel sum
  Tape t;
  Var x = t.leaf(filled(Shape4{1, 1, 5, 5}, 1.0));
  Var w = t.leaf(filled(Shape4{1, 1, 3, 3}, 1.0));
  Var y = conv2d(t, x, w, nullptr, 1, Padding::Valid);
  CHECK(y->value.shape == Shape4{1, 1, 3, 3});
  for (double v : y->value.data) CHECK(v == doctest::Approx(9.0));
}

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Rng r(4);
  Tensor xin = randn_t(Shape4{1, 1, 6, 6}, r);
  Tensor k(Shape4{1, 1, 3, 3});
  k.data[4] = 1.0;  // center tap
  Tape t;
  Var y = conv2d(t, t.leaf(xin), t.leaf(k), nullptr, 1, Padding::Same);
  for (std::size_t i = 0; i < xin.size(); ++i)
    CHECK(y->value.data[i] == doctest::Approx(xin.data[i]));
}

TEST_CASE("conv2d: same padding puts the floor on the leading side") {
  // 4x4 input, 2x2 kernel selecting the top-left tap, stride 1 same padding:
  // output (0,0) must see input (0,0) unshifted (pad 0 before, 1 after)
  Tensor xin(Shape4{1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) xin.data[i] = i;
  Tensor k(Shape4{1, 1, 2, 2});
  k.data[0] = 1.0;
  Tape t;
  Var y = conv2d(t, t.leaf(xin), t.leaf(k), nullptr, 1, Padding::Same);
  CHECK(y->value.shape == Shape4{1, 1, 4, 4});
  CHECK(y->value.data[0] == doctest::Approx(0.0));
  CHECK(y->value.data[5] == doctest::Approx(5.0));
}

TEST_CASE("conv2d: bias adds per output channel") {
  Tape t;
  Var x = t.leaf(filled(Shape4{1, 1, 3, 3}, 0.0));
  Var w = t.leaf(filled(Shape4{2, 1, 1, 1}, 1.0));
  Tensor b(Shape4{1, 2, 1, 1});
  b.data = {1.5, -2.0};
  Var y = conv2d(t, x, w, t.leaf(b), 1, Padding::Same);
  CHECK(y->value.at(0, 0, 1, 1) == doctest::Approx(1.5));
  CHECK(y->value.at(0, 1, 2, 0) == doctest::Approx(-2.0));
}

TEST_CASE("conv2d_transpose: ones 2x2 kernel stride 2 tiles the input") {
  // 2x2 input of ones -> 4x4 output of ones (disjoint stride-2 placements)
  Tape t;
  Var x = t.leaf(filled(Shape4{1, 1, 2, 2}, 1.0));
  Var w = t.leaf(filled(Shape4{1, 1, 2, 2}, 1.0));
  Var y = conv2d_transpose(t, x, w, 2);
  CHECK(y->value.shape == Shape4{1, 1, 4, 4});
  for (double v : y->value.data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("conv2d_transpose: adjoint of valid conv2d to 1e-10") {
  // <conv(x,w), y> == <x, convT(y,w~)> for matching layouts
  Rng r(11);
  Tensor xin = randn_t(Shape4{1, 3, 6, 6}, r);
  Tensor win = randn_t(Shape4{2, 3, 2, 2}, r);  // (oc, ic, k, k)
  Tensor yin = randn_t(Shape4{1, 2, 3, 3}, r);  // conv output shape, stride 2

  Tape t1;
  Var cv = conv2d(t1, t1.leaf(xin), t1.leaf(win), nullptr, 2, Padding::Valid);
  double lhs = 0;
  for (std::size_t i = 0; i < yin.size(); ++i)
    lhs += cv->value.data[i] * yin.data[i];

  // convT weights are (in_ch, out_ch, k, k) = transposed conv weights
  Tensor wt(Shape4{2, 3, 2, 2});
  for (long o = 0; o < 2; ++o)
    for (long i = 0; i < 3; ++i)
      for (long u = 0; u < 2; ++u)
        for (long v = 0; v < 2; ++v)
          wt.at(o, i, u, v) = win.at(o, i, u, v);
  Tape t2;
  Var tv = conv2d_transpose(t2, t2.leaf(yin), t2.leaf(wt), 2);
  double rhs = 0;
  for (std::size_t i = 0; i < xin.size(); ++i)
    rhs += tv->value.data[i] * xin.data[i];
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("batch_norm: constant channel normalizes to beta") {
  Tape t;
  Var x = t.leaf(filled(Shape4{2, 1, 3, 3}, 7.0));
  Var gamma = t.leaf(filled(Shape4{1, 1, 1, 1}, 1.0));
  Var beta = t.leaf(filled(Shape4{1, 1, 1, 1}, 0.25));
  auto st = BatchNormState::make(1);
  Var y = batch_norm(t, x, gamma, beta, Mode::Train, st);
  for (double v : y->value.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("batch_norm: affine output has mean beta and std gamma") {
  Rng r(3);
  Tensor xin = randn_t(Shape4{4, 1, 8, 8}, r);
  Tape t;
  Var gamma = t.leaf(filled(Shape4{1, 1, 1, 1}, 2.0));
  Var beta = t.leaf(filled(Shape4{1, 1, 1, 1}, 3.0));
  auto st = BatchNormState::make(1);
  Var y = batch_norm(t, t.leaf(xin), gamma, beta, Mode::Train, st);
  double sum = 0, sq = 0;
  for (double v : y->value.data) sum += v;
  double mean = sum / y->value.size();
  for (double v : y->value.data) sq += (v - mean) * (v - mean);
  CHECK(mean == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::sqrt(sq / y->value.size()) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("batch_norm: eval mode uses running statistics") {
  Rng r(8);
  Tensor xin = randn_t(Shape4{2, 1, 4, 4}, r);
  auto st = BatchNormState::make(1);
  {
    Tape t;
    Var gamma = t.leaf(filled(Shape4{1, 1, 1, 1}, 1.0));
    Var beta = t.leaf(filled(Shape4{1, 1, 1, 1}, 0.0));
    batch_norm(t, t.leaf(xin), gamma, beta, Mode::Train, st);
  }
  // after one train pass: running = 0.9*init + 0.1*batch
  double bm = 0;
  for (double v : xin.data) bm += v;
  bm /= xin.size();
  CHECK(st.running_mean.data[0] == doctest::Approx(0.1 * bm));

  Tape t;
  Var gamma = t.leaf(filled(Shape4{1, 1, 1, 1}, 1.0));
  Var beta = t.leaf(filled(Shape4{1, 1, 1, 1}, 0.0));
  Var y = batch_norm(t, t.leaf(xin), gamma, beta, Mode::Eval, st);
  const double expect = (xin.data[0] - st.running_mean.data[0]) /
                        std::sqrt(st.running_var.data[0] + 1e-5);
  CHECK(y->value.data[0] == doctest::Approx(expect));
}

TEST_CASE("elu: value table") {
  Tensor xin(Shape4{1, 1, 1, 3});
  xin.data = {-1.0, 0.0, 2.0};
  Tape t;
  Var y = elu(t, t.leaf(xin), 1.0);
  CHECK(y->value.data[0] == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(y->value.data[1] == doctest::Approx(0.0));
  CHECK(y->value.data[2] == doctest::Approx(2.0));
}

TEST_CASE("relu: clamps negatives") {
  Tensor xin(Shape4{1, 1, 1, 3});
  xin.data = {-0.5, 0.0, 1.5};
  Tape t;
  Var y = relu(t, t.leaf(xin));
  CHECK(y->value.data[0] == 0.0);
  CHECK(y->value.data[1] == 0.0);
  CHECK(y->value.data[2] == 1.5);
}

TEST_CASE("max_pool: 2x2 window picks the max and routes its gradient") {
  Tensor xin(Shape4{1, 1, 2, 2});
  xin.data = {1, 2, 3, 4};
  Tape t;
  Var x = t.leaf(xin, true);
  Var y = max_pool(t, x, 2, 2);
  CHECK(y->value.size() == 1);
  CHECK(y->value.data[0] == 4.0);
  t.backward(sum_all(t, y));
  CHECK(x->grad.data == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("max_pool: window larger than input is an error") {
  Tape t;
  Var x = t.leaf(filled(Shape4{1, 1, 2, 2}, 0.0));
  CHECK_THROWS(max_pool(t, x, 3, 3));
}

TEST_CASE("concat/slice: round trip and shape checks") {
  Rng r(5);
  Tensor a = randn_t(Shape4{1, 2, 3, 3}, r);
  Tensor b = randn_t(Shape4{1, 3, 3, 3}, r);
  Tape t;
  Var cat = concat_channels(t, {t.leaf(a), t.leaf(b)});
  CHECK(cat->value.shape == Shape4{1, 5, 3, 3});
  Var back = slice_channels(t, cat, 2, 3);
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(back->value.data[i] == b.data[i]);
  CHECK_THROWS(slice_channels(t, cat, 4, 3));  // out of range
  Tensor c = randn_t(Shape4{1, 2, 4, 4}, r);   // spatial mismatch
  CHECK_THROWS(concat_channels(t, {t.leaf(a), t.leaf(c)}));
}

TEST_CASE("dropout: eval is identity; train keeps ~(1-rate) scaled") {
  Rng r(17);
  Tensor xin = filled(Shape4{1, 1, 1, 100000}, 1.0);
  Tape t;
  Var x = t.leaf(xin);
  Var ev = dropout(t, x, 0.5, Mode::Eval, r);
  for (std::size_t i = 0; i < 100; ++i) CHECK(ev->value.data[i] == 1.0);

  Var tr = dropout(t, x, 0.5, Mode::Train, r);
  long kept = 0;
  for (double v : tr->value.data) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(2.0));  // inverted scaling 1/(1-rate)
      ++kept;
    }
  }
  CHECK(std::abs(kept / 100000.0 - 0.5) < 0.01);
  CHECK_THROWS(dropout(t, x, 1.0, Mode::Train, r));
}

TEST_CASE("softmax_channels: uniform logits, shift invariance") {
  Tape t;
  Var x = t.leaf(filled(Shape4{1, 4, 2, 2}, 1.7));
  Var y = softmax_channels(t, x);
  for (double v : y->value.data) CHECK(v == doctest::Approx(0.25));

  Rng r(6);
  Tensor a = randn_t(Shape4{1, 3, 2, 2}, r);
  Tensor b = a;
  for (double& v : b.data) v += 100.0;  // constant shift across channels
  Var ya = softmax_channels(t, t.leaf(a));
  Var yb = softmax_channels(t, t.leaf(b));
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(ya->value.data[i] == doctest::Approx(yb->value.data[i]));
}

TEST_CASE("checkpoint: bit-exact round trip") {
  Rng r(31);
  std::vector<CheckpointEntry> entries;
  Tensor a = randn_t(Shape4{2, 3, 4, 5}, r);
  Tensor b = randn_t(Shape4{1, 7, 1, 1}, r);
  entries.push_back(entry_from_tensor("alpha.w", a));
  entries.push_back(entry_from_tensor("beta.b", b));
  const std::string path =
      (std::filesystem::temp_directory_path() / "ddn_ckpt_test.ddnp").string();
  write_checkpoint(path, entries);
  auto got = read_checkpoint(path);
  REQUIRE(got.size() == 2);
  CHECK(got[0].name == "alpha.w");
  CHECK(got[0].dims == std::vector<std::uint32_t>{2, 3, 4, 5});
  CHECK(got[0].payload == entries[0].payload);  // bit-exact doubles
  CHECK(got[1].payload == entries[1].payload);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint: bad magic rejected") {
  const auto path =
      (std::filesystem::temp_directory_path() / "ddn_bad.ddnp").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite("NOPE", 1, 4, f);
    std::fclose(f);
  }
  CHECK_THROWS(read_checkpoint(path));
  std::filesystem::remove(path);
}

TEST_CASE("finite differences agree with every op and block backward") {
  // shared oracle suite; the dedicated acceptance binary reruns it
  for (const auto& c : run_gradcheck_suite(42)) {
    INFO(c.name, " rel_err=", c.rel_err);
    CHECK(c.pass);
  }
}
