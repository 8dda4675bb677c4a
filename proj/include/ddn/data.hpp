#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ddn/labels.hpp"
#include "ddn/losses.hpp"
#include "ddn/rng.hpp"
#include "ddn/tensor.hpp"

namespace ddn {

struct Sample {
  Tensor image;  // (1, C, H, W), values scaled to [0, 1]
  LabelMap label;
  std::string id;
};

// Color -> class id mapping persisted as `R,G,B -> class_id` lines.
struct Palette {
  std::map<std::array<std::uint8_t, 3>, int> color_to_class;
  std::vector<std::array<std::uint8_t, 3>> class_to_color;
};
Palette default_palette(long num_classes);
void write_palette(const std::string& path, const Palette& p);
Palette read_palette(const std::string& path);

// Synthetic shape corpus emulating class imbalance: class 0 is the background
// fill, higher classes are placed shapes sized to hit the requested pixel
// frequency ratios.
struct SynthSpec {
  long height = 64, width = 64;
  long num_classes = 3;
  long count = 200;
  std::vector<double> freq_ratio;  // per-class relative pixel frequency
  double noise_std = 0.06;         // image noise, fraction of full scale
};

struct Manifest {
  long height = 0, width = 0, num_classes = 0, count = 0;
  std::vector<std::string> ids;
  std::vector<std::vector<long>> per_image_counts;
  std::vector<long> totals;           // per-class pixel totals
  std::vector<long> presence_pixels;  // pixels of images where class present
};

Manifest synth_dataset(const SynthSpec& spec, std::uint64_t seed,
                       const std::string& dir);
Manifest read_manifest(const std::string& path);
std::vector<DatasetClassCounts> manifest_class_counts(const Manifest& m);

struct Corpus {
  std::vector<Sample> samples;
  long num_classes = 0;
  long unknown_color_warnings = 0;
};
// Loads image/label PNG pairs (lexicographic id order). Unknown label colors
// map to void, one warning count per pixel.
Corpus load_corpus(const std::string& dir, const Palette& palette);

struct AugPolicy {
  long crop_height = 0, crop_width = 0;  // 0 = no crop
  bool flip_vertical = true;             // literal reading of the recipe
  bool flip_horizontal = false;          // conventional alternative, off by default
  bool mean_subtract = true;
};
Sample augment(const Sample& s, const AugPolicy& policy, Rng& rng);

struct FlowField {
  long height = 0, width = 0;
  std::vector<double> u, v;  // row-major components
};
FlowField read_flo(const std::string& path);  // Middlebury .flo layout

// RGB + flow magnitude + direction (atan2(v,u)/pi, 0 at zero flow): 5 channels.
Sample fuse_flow(const Sample& s, const FlowField& flow);

}  // namespace ddn
