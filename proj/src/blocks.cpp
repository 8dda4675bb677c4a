#include "ddn/blocks.hpp"

#include <stdexcept>

namespace ddn {

long block_out_channels(const BlockSpec& spec, long in_channels) {
  switch (spec.kind) {
    case BlockSpec::Kind::Residual:
      return in_channels;
    case BlockSpec::Kind::Dense:
      return in_channels + spec.layers * spec.growth;
    case BlockSpec::Kind::DPDB:
      return spec.out_channels ? spec.out_channels
                               : in_channels + spec.layers * spec.growth;
    case BlockSpec::Kind::InvertedResidual:
      return spec.out_channels ? spec.out_channels : in_channels;
  }
  return in_channels;
}

int add_residual_block(Graph& g, int x, const BlockSpec& spec,
                       const std::string& prefix) {
  spec.validate();
  const long width = spec.residual_width;
  if (g.channels_of(x) != width)
    throw std::invalid_argument(prefix + ": residual block needs input width " +
                                std::to_string(width) + ", got " +
                                std::to_string(g.channels_of(x)));
  int h = x;
  for (int t = 1; t <= spec.layers; ++t) {
    const std::string p = prefix + ".sub" + std::to_string(t);
    h = g.batch_norm(h, p + ".bn");
    h = g.relu(h);
    h = g.conv(h, width, 3, 1, Padding::Same, p + ".conv", false);
  }
  return g.add_nodes(x, h);
}

int add_dense_block(Graph& g, int x, const BlockSpec& spec,
                    const std::string& prefix) {
  spec.validate();
  std::vector<int> feats{x};
  for (int t = 1; t <= spec.layers; ++t) {
    const std::string p = prefix + ".l" + std::to_string(t);
    int in = feats.size() == 1 ? feats[0] : g.concat(feats);
    int h = g.batch_norm(in, p + ".bn");
    h = g.elu(h);
    h = g.conv(h, spec.growth, 3, 1, Padding::Same, p + ".conv", false);
    feats.push_back(h);
  }
  return g.concat(feats);
}

int add_dpdb_block(Graph& g, int x, const BlockSpec& spec,
                   const std::string& prefix) {
  spec.validate();
  const long R = spec.residual_width, grow = spec.growth;
  const long in_ch = g.channels_of(x);
  if (in_ch < R)
    throw std::invalid_argument(prefix + ": input narrower than residual width (" +
                                std::to_string(in_ch) + " < " +
                                std::to_string(R) + ")");
  const long bw = spec.bottleneck_width ? spec.bottleneck_width : 4 * grow;

  int res_state = in_ch == R ? x : g.slice(x, 0, R);
  std::vector<int> dense_parts;
  if (in_ch > R) dense_parts.push_back(g.slice(x, R, in_ch - R));

  int state = x;
  for (int t = 1; t <= spec.layers; ++t) {
    const std::string p = prefix + ".l" + std::to_string(t);
    int h = g.batch_norm(state, p + ".bn1");
    h = g.elu(h);
    h = g.conv(h, bw, 1, 1, Padding::Same, p + ".conv1", false);
    h = g.batch_norm(h, p + ".bn2");
    h = g.elu(h);
    h = g.conv(h, bw, 3, 1, Padding::Same, p + ".conv2", false);
    h = g.conv(h, R + grow, 1, 1, Padding::Same, p + ".proj", false);
    res_state = g.add_nodes(res_state, g.slice(h, 0, R));
    dense_parts.push_back(g.slice(h, R, grow));
    std::vector<int> parts{res_state};
    parts.insert(parts.end(), dense_parts.begin(), dense_parts.end());
    state = g.concat(parts);
  }
  // fusion by concatenation (state already is [x_R, x_D]); transform G
  int out = g.batch_norm(state, prefix + ".g.bn");
  out = g.elu(out);
  const long out_ch = block_out_channels(spec, in_ch);
  return g.conv(out, out_ch, 1, 1, Padding::Same, prefix + ".g.conv", false);
}

int add_inverted_residual_block(Graph& g, int x, const BlockSpec& spec,
                                const std::string& prefix) {
  spec.validate();
  const long in_ch = g.channels_of(x);
  const long out_ch = block_out_channels(spec, in_ch);
  int h = x;
  if (spec.expansion > 1) {
    h = g.conv(h, in_ch * spec.expansion, 1, 1, Padding::Same,
               prefix + ".expand", false);
    h = g.batch_norm(h, prefix + ".expand.bn");
    h = g.elu(h);
  }
  h = g.depthwise_conv(h, 3, prefix + ".dw");
  h = g.batch_norm(h, prefix + ".dw.bn");
  h = g.elu(h);
  h = g.conv(h, out_ch, 1, 1, Padding::Same, prefix + ".project", false);
  if (out_ch == in_ch) h = g.add_nodes(x, h);
  return h;
}

int add_block(Graph& g, int x, const BlockSpec& spec, const std::string& prefix) {
  switch (spec.kind) {
    case BlockSpec::Kind::Residual:
      return add_residual_block(g, x, spec, prefix);
    case BlockSpec::Kind::Dense:
      return add_dense_block(g, x, spec, prefix);
    case BlockSpec::Kind::DPDB:
      return add_dpdb_block(g, x, spec, prefix);
    case BlockSpec::Kind::InvertedResidual:
      return add_inverted_residual_block(g, x, spec, prefix);
  }
  throw std::logic_error("add_block: unknown kind");
}

}  // namespace ddn
