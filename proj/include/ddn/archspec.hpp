#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ddn {

// Declarative description of one building block.
struct BlockSpec {
  enum class Kind { Residual, Dense, DPDB, InvertedResidual };
  Kind kind = Kind::DPDB;
  int layers = 2;              // internal repetitions t
  long growth = 8;             // channels added per dense layer g
  long residual_width = 16;    // residual path width R
  long bottleneck_width = 0;   // 0 -> 4 * growth
  long out_channels = 0;       // post-transform width (DPDB, inverted residual)
  int expansion = 4;           // inverted residual only

  void validate() const;
};

struct EncoderStage {
  BlockSpec block;
  int downsample = 2;  // max-pool factor applied after the block
};

// Full DD-Net description: macro encoder, stacked decoder-encoder units,
// skip families, supervision heads.
struct ArchSpec {
  long in_channels = 3, in_height = 64, in_width = 64;
  long num_classes = 2;

  long stem_width = 16;
  std::vector<EncoderStage> encoder;  // 3 stages, 8x total reduction

  enum class DecoderBlock { None, Conv, Dense };
  int decoder_units = 1;
  DecoderBlock decoder_block = DecoderBlock::Dense;
  std::vector<long> decoder_widths;  // one per upsample stage (3)
  std::vector<long> skip_reduce;     // forward-skip reduced widths; 0 -> width/2
  int decoder_dense_layers = 2;
  long decoder_dense_growth = 8;

  bool forward_skips = true;  // always on; kept for symmetry in reports
  bool backward_skips = false;
  bool stacked_residual = false;
  bool supervision = true;

  double dropout = 0.1;

  long skip_reduce_width(int level) const {
    if (level < static_cast<int>(skip_reduce.size()) && skip_reduce[level] > 0)
      return skip_reduce[level];
    return std::max<long>(1, decoder_widths[level] / 2);
  }

  void validate() const;
  std::string to_text() const;
};

struct SpecParseError : std::runtime_error {
  SpecParseError(int line, int col, const std::string& msg)
      : std::runtime_error("archspec:" + std::to_string(line) + ":" +
                           std::to_string(col) + ": " + msg),
        line(line),
        col(col) {}
  int line, col;
};

// Flat key-value format: `key = value`, `#` comments, sections
// [input], [encoder.N], [decoder], [skips], [heads].
ArchSpec parse_archspec(const std::string& text);
ArchSpec load_archspec(const std::string& path);

// desk-scale preset: 3 DPDB encoder stages (t=2, g=8, R=16), 2x pool each
ArchSpec tiny_preset();
// wider variant with the same topology
ArchSpec paperlike_preset();

std::string to_string(BlockSpec::Kind k);
std::string to_string(ArchSpec::DecoderBlock b);

}  // namespace ddn
