#pragma once

#include <vector>

#include "ddn/rng.hpp"
#include "ddn/tape.hpp"
#include "ddn/tensor.hpp"

namespace ddn {

enum class Padding { Same, Valid };
enum class Mode { Train, Eval };

// Per-layer batch-norm running statistics, updated in Train mode and used
// verbatim in Eval mode.
struct BatchNormState {
  Tensor running_mean;  // (1,C,1,1)
  Tensor running_var;   // (1,C,1,1)
  double momentum = 0.9;
  double eps = 1e-5;

  static BatchNormState make(long channels) {
    BatchNormState s;
    s.running_mean = Tensor(Shape4{1, channels, 1, 1}, 0.0);
    s.running_var = Tensor(Shape4{1, channels, 1, 1}, 1.0);
    return s;
  }
};

// w: (out_ch, in_ch, kh, kw); b: (1, out_ch, 1, 1) or nullptr for no bias.
Var conv2d(Tape& tape, Var x, Var w, Var b, int stride, Padding pad);

// Depthwise: w (channels, 1, kh, kw), each channel filtered independently.
Var depthwise_conv2d(Tape& tape, Var x, Var w, int stride, Padding pad);

// Forward equals the backward-data pass of the matching valid conv2d.
// w: (in_ch, out_ch, kh, kw) in the input tensor's orientation.
Var conv2d_transpose(Tape& tape, Var x, Var w, int stride);

Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, Mode mode,
               BatchNormState& state);

Var elu(Tape& tape, Var x, double alpha = 1.0);
Var relu(Tape& tape, Var x);
Var max_pool(Tape& tape, Var x, int window, int stride);
Var concat_channels(Tape& tape, const std::vector<Var>& xs);
Var slice_channels(Tape& tape, Var x, long begin, long count);
Var add(Tape& tape, Var x, Var y);
Var dropout(Tape& tape, Var x, double rate, Mode mode, Rng& rng);
Var softmax_channels(Tape& tape, Var x);
Var sum_all(Tape& tape, Var x);
Var scale(Tape& tape, Var x, double k);

}  // namespace ddn
