#pragma once

#include <string>

#include "ddn/archspec.hpp"
#include "ddn/graph.hpp"

namespace ddn {

// Composable building blocks appended to a Graph under construction.
// Each returns the output node id. `prefix` scopes parameter names.

// x + phi(x); phi is `layers` repetitions of BN -> ReLU -> 3x3 conv at the
// residual width. Requires x.channels == spec.residual_width.
int add_residual_block(Graph& g, int x, const BlockSpec& spec,
                       const std::string& prefix);

// Layer i consumes [x, out_1, ..., out_{i-1}] and appends `growth` channels
// (BN -> ELU -> 3x3 conv). Output channels = in + layers * growth.
int add_dense_block(Graph& g, int x, const BlockSpec& spec,
                    const std::string& prefix);

// Dual-path block: shared bottleneck per layer
// (BN -> ELU -> 1x1 -> BN -> ELU -> 3x3 -> 1x1 to R+g), split into a
// residual slice summed into the residual state and a dense slice
// concatenated onto the dense state; paths fused by concatenation and fed
// through the transform (BN -> ELU -> 1x1) to spec.out_channels.
int add_dpdb_block(Graph& g, int x, const BlockSpec& spec,
                   const std::string& prefix);

// 1x1 expand -> depthwise 3x3 -> 1x1 linear project; identity skip when
// channels match. expansion == 1 drops the expand stage.
int add_inverted_residual_block(Graph& g, int x, const BlockSpec& spec,
                                const std::string& prefix);

int add_block(Graph& g, int x, const BlockSpec& spec, const std::string& prefix);

// Declared output channels for a block applied to `in_channels` input.
long block_out_channels(const BlockSpec& spec, long in_channels);

}  // namespace ddn
