#include "ddn/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ddn/pngio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ddn {

Palette default_palette(long num_classes) {
  // fixed, well-separated base colors; cycled with a shift past 8 classes
  static const std::array<std::array<std::uint8_t, 3>, 8> base = {{
      {40, 40, 48},    // background
      {200, 60, 60},   // red
      {60, 200, 80},   // green
      {70, 90, 210},   // blue
      {220, 200, 60},  // yellow
      {190, 80, 190},  // magenta
      {70, 190, 200},  // cyan
      {230, 140, 50},  // orange
  }};
  Palette p;
  for (long c = 0; c < num_classes; ++c) {
    auto col = base[c % 8];
    col[0] = static_cast<std::uint8_t>(col[0] + 16 * (c / 8));
    p.class_to_color.push_back(col);
    p.color_to_class[col] = static_cast<int>(c);
  }
  return p;
}

void write_palette(const std::string& path, const Palette& p) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_palette: cannot open " + path);
  for (std::size_t c = 0; c < p.class_to_color.size(); ++c) {
    const auto& col = p.class_to_color[c];
    os << int(col[0]) << "," << int(col[1]) << "," << int(col[2]) << " -> " << c
       << "\n";
  }
}

Palette read_palette(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_palette: cannot open " + path);
  Palette p;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    int r, g, b, cls;
    char c1, c2;
    std::istringstream ss(line);
    std::string arrow;
    if (!(ss >> r >> c1 >> g >> c2 >> b >> arrow >> cls) || arrow != "->")
      throw std::runtime_error("read_palette: bad line: " + line);
    std::array<std::uint8_t, 3> col{static_cast<std::uint8_t>(r),
                                    static_cast<std::uint8_t>(g),
                                    static_cast<std::uint8_t>(b)};
    p.color_to_class[col] = cls;
    if (static_cast<std::size_t>(cls) >= p.class_to_color.size())
      p.class_to_color.resize(cls + 1);
    p.class_to_color[cls] = col;
  }
  return p;
}

namespace {

std::string image_id(long index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "im%05ld", index);
  return buf;
}

// paints only background pixels, returns painted count
long paint_disc(LabelMap& lm, long ci, long cj, long r, int cls) {
  long painted = 0;
  for (long i = std::max(0L, ci - r); i <= std::min(lm.height - 1, ci + r); ++i)
    for (long j = std::max(0L, cj - r); j <= std::min(lm.width - 1, cj + r); ++j)
      if ((i - ci) * (i - ci) + (j - cj) * (j - cj) <= r * r &&
          lm.at(i, j) == 0) {
        lm.at(i, j) = cls;
        ++painted;
      }
  return painted;
}

long paint_square(LabelMap& lm, long ci, long cj, long half, int cls) {
  long painted = 0;
  for (long i = std::max(0L, ci - half); i <= std::min(lm.height - 1, ci + half); ++i)
    for (long j = std::max(0L, cj - half); j <= std::min(lm.width - 1, cj + half); ++j)
      if (lm.at(i, j) == 0) {
        lm.at(i, j) = cls;
        ++painted;
      }
  return painted;
}

}  // namespace

Manifest synth_dataset(const SynthSpec& spec, std::uint64_t seed,
                       const std::string& dir) {
  if (spec.num_classes < 1)
    throw std::invalid_argument("synth_dataset: num_classes >= 1");
  std::vector<double> ratio = spec.freq_ratio;
  if (ratio.empty()) ratio.assign(spec.num_classes, 1.0);
  if (static_cast<long>(ratio.size()) != spec.num_classes)
    throw std::invalid_argument("synth_dataset: freq_ratio length mismatch");
  double rsum = 0.0;
  for (double r : ratio) {
    if (r < 0) throw std::invalid_argument("synth_dataset: negative ratio");
    rsum += r;
  }
  if (rsum <= 0) throw std::invalid_argument("synth_dataset: infeasible ratios");
  const double canvas = static_cast<double>(spec.height) * spec.width;
  // shape classes must fit alongside the background fill
  double nonbg = 0.0;
  for (std::size_t c = 1; c < ratio.size(); ++c) nonbg += ratio[c];
  if (nonbg / rsum > 0.9)
    throw std::invalid_argument(
        "synth_dataset: infeasible ratios (shape classes need > 90% of canvas)");

  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "labels");
  const Palette pal = default_palette(spec.num_classes);
  write_palette((fs::path(dir) / "palette.txt").string(), pal);

  Rng rng(seed);
  Manifest m;
  m.height = spec.height;
  m.width = spec.width;
  m.num_classes = spec.num_classes;
  m.count = spec.count;
  m.totals.assign(spec.num_classes, 0);
  m.presence_pixels.assign(spec.num_classes, 0);

  for (long idx = 0; idx < spec.count; ++idx) {
    LabelMap lm(spec.height, spec.width, 0);
    for (long cls = 1; cls < spec.num_classes; ++cls) {
      const double target = canvas * ratio[cls] / rsum;
      // a few shapes per class; tiny targets become a single small shape
      const long goal = static_cast<long>(std::lround(target));
      const long per_shape = std::max<long>(9, goal / 3);
      long painted = 0;
      int tries = 0;
      while (goal - painted >= 9 && tries < 400) {
        ++tries;
        // shrink shapes toward the remaining deficit, never past the goal
        const long want = std::min(per_shape, goal - painted);
        const long r = std::max<long>(
            1, static_cast<long>(std::sqrt(double(want))) / 2 - (cls % 2 ? 0 : 1));
        const long ci = static_cast<long>(rng.below(spec.height));
        const long cj = static_cast<long>(rng.below(spec.width));
        LabelMap trial = lm;
        const long got =
            (cls % 2) ? paint_disc(trial, ci, cj, r, static_cast<int>(cls))
                      : paint_square(trial, ci, cj, r, static_cast<int>(cls));
        if (got == 0 || painted + got > goal) continue;
        lm = trial;
        painted += got;
      }
      // pixel-precision top-up so manifest counts hit the target exactly
      for (int guard = 0; painted < goal && guard < 100000; ++guard) {
        const long ci = static_cast<long>(rng.below(spec.height));
        const long cj = static_cast<long>(rng.below(spec.width));
        if (lm.at(ci, cj) != 0) continue;
        lm.at(ci, cj) = static_cast<int>(cls);
        ++painted;
      }
    }

    ImageRGB8 img, lab;
    img.height = lab.height = spec.height;
    img.width = lab.width = spec.width;
    img.pixels.resize(canvas * 3);
    lab.pixels.resize(canvas * 3);
    for (long i = 0; i < spec.height; ++i)
      for (long j = 0; j < spec.width; ++j) {
        const int cls = lm.at(i, j);
        const auto& col = pal.class_to_color[cls];
        for (int ch = 0; ch < 3; ++ch) {
          const double noisy =
              col[ch] + 255.0 * spec.noise_std * rng.normal();
          img.px(i, j)[ch] = static_cast<std::uint8_t>(
              std::clamp(noisy, 0.0, 255.0));
          lab.px(i, j)[ch] = col[ch];
        }
      }
    const std::string id = image_id(idx);
    write_png_rgb8((fs::path(dir) / "images" / (id + ".png")).string(), img);
    write_png_rgb8((fs::path(dir) / "labels" / (id + ".png")).string(), lab);

    std::vector<long> counts(spec.num_classes, 0);
    for (int v : lm.values) ++counts[v];
    m.ids.push_back(id);
    m.per_image_counts.push_back(counts);
    for (long c = 0; c < spec.num_classes; ++c) {
      m.totals[c] += counts[c];
      if (counts[c] > 0) m.presence_pixels[c] += static_cast<long>(canvas);
    }
  }

  json jimages = json::array();
  for (long i = 0; i < m.count; ++i)
    jimages.push_back(json{{"id", m.ids[i]}, {"counts", m.per_image_counts[i]}});
  json j{{"height", m.height},       {"width", m.width},
         {"classes", m.num_classes}, {"count", m.count},
         {"images", jimages},        {"totals", m.totals},
         {"presence_pixels", m.presence_pixels}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << j.dump(2) << "\n";
  return m;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path);
  json j;
  is >> j;
  Manifest m;
  m.height = j.at("height");
  m.width = j.at("width");
  m.num_classes = j.at("classes");
  m.count = j.at("count");
  m.totals = j.at("totals").get<std::vector<long>>();
  m.presence_pixels = j.at("presence_pixels").get<std::vector<long>>();
  for (const auto& ji : j.at("images")) {
    m.ids.push_back(ji.at("id"));
    m.per_image_counts.push_back(ji.at("counts").get<std::vector<long>>());
  }
  return m;
}

std::vector<DatasetClassCounts> manifest_class_counts(const Manifest& m) {
  std::vector<DatasetClassCounts> out(m.num_classes);
  for (long c = 0; c < m.num_classes; ++c) {
    out[c].class_pixels = m.totals[c];
    out[c].presence_pixels = m.presence_pixels[c];
  }
  return out;
}

Corpus load_corpus(const std::string& dir, const Palette& palette) {
  Corpus corpus;
  corpus.num_classes = static_cast<long>(palette.class_to_color.size());
  const fs::path images = fs::path(dir) / "images";
  const fs::path labels = fs::path(dir) / "labels";
  if (!fs::exists(images)) return corpus;  // empty corpus, not an error

  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(images))
    if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());

  for (const std::string& id : ids) {
    const fs::path lp = labels / (id + ".png");
    if (!fs::exists(lp))
      throw std::runtime_error("load_corpus: missing label for " + id);
    const ImageRGB8 img = read_png_rgb8((images / (id + ".png")).string());
    const ImageRGB8 lab = read_png_rgb8(lp.string());
    if (img.height != lab.height || img.width != lab.width)
      throw std::runtime_error("load_corpus: image/label size mismatch for " + id);

    Sample s;
    s.id = id;
    s.image = Tensor(Shape4{1, 3, img.height, img.width});
    s.label = LabelMap(img.height, img.width);
    for (long i = 0; i < img.height; ++i)
      for (long j = 0; j < img.width; ++j) {
        for (int ch = 0; ch < 3; ++ch)
          s.image.at(0, ch, i, j) = img.px(i, j)[ch] / 255.0;
        const auto* p = lab.px(i, j);
        const auto it = palette.color_to_class.find(
            std::array<std::uint8_t, 3>{p[0], p[1], p[2]});
        if (it == palette.color_to_class.end()) {
          s.label.at(i, j) = kVoidLabel;
          ++corpus.unknown_color_warnings;
        } else {
          s.label.at(i, j) = it->second;
        }
      }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

Sample augment(const Sample& s, const AugPolicy& policy, Rng& rng) {
  const Shape4 sh = s.image.shape;
  long ch = policy.crop_height ? policy.crop_height : sh.h;
  long cw = policy.crop_width ? policy.crop_width : sh.w;
  if (ch > sh.h || cw > sh.w)
    throw std::invalid_argument("augment: crop larger than image");
  const long oi = ch < sh.h ? static_cast<long>(rng.below(sh.h - ch + 1)) : 0;
  const long oj = cw < sh.w ? static_cast<long>(rng.below(sh.w - cw + 1)) : 0;
  const bool vflip = policy.flip_vertical && rng.uniform() < 0.5;
  const bool hflip = policy.flip_horizontal && rng.uniform() < 0.5;

  Sample out;
  out.id = s.id;
  out.image = Tensor(Shape4{1, sh.c, ch, cw});
  out.label = LabelMap(ch, cw);
  for (long i = 0; i < ch; ++i)
    for (long j = 0; j < cw; ++j) {
      const long si = oi + (vflip ? ch - 1 - i : i);
      const long sj = oj + (hflip ? cw - 1 - j : j);
      for (long c = 0; c < sh.c; ++c)
        out.image.at(0, c, i, j) = s.image.at(0, c, si, sj);
      out.label.at(i, j) = s.label.at(si, sj);
    }
  if (policy.mean_subtract) {
    for (long c = 0; c < sh.c; ++c) {
      double mean = 0.0;
      for (long i = 0; i < ch; ++i)
        for (long j = 0; j < cw; ++j) mean += out.image.at(0, c, i, j);
      mean /= static_cast<double>(ch) * cw;
      for (long i = 0; i < ch; ++i)
        for (long j = 0; j < cw; ++j) out.image.at(0, c, i, j) -= mean;
    }
  }
  return out;
}

FlowField read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_flo: cannot open " + path);
  float magic;
  std::int32_t w, h;
  is.read(reinterpret_cast<char*>(&magic), 4);
  is.read(reinterpret_cast<char*>(&w), 4);
  is.read(reinterpret_cast<char*>(&h), 4);
  if (!is || magic != 202021.25f)
    throw std::runtime_error("read_flo: bad magic in " + path);
  FlowField f;
  f.height = h;
  f.width = w;
  f.u.resize(static_cast<std::size_t>(h) * w);
  f.v.resize(f.u.size());
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    float uv[2];
    is.read(reinterpret_cast<char*>(uv), 8);
    f.u[i] = uv[0];
    f.v[i] = uv[1];
  }
  if (!is) throw std::runtime_error("read_flo: truncated " + path);
  return f;
}

Sample fuse_flow(const Sample& s, const FlowField& flow) {
  const Shape4 sh = s.image.shape;
  if (flow.height != sh.h || flow.width != sh.w)
    throw std::invalid_argument("fuse_flow: flow/image dim mismatch");
  Sample out;
  out.id = s.id;
  out.label = s.label;
  out.image = Tensor(Shape4{1, sh.c + 2, sh.h, sh.w});
  for (long c = 0; c < sh.c; ++c)
    for (long i = 0; i < sh.h; ++i)
      for (long j = 0; j < sh.w; ++j)
        out.image.at(0, c, i, j) = s.image.at(0, c, i, j);
  for (long i = 0; i < sh.h; ++i)
    for (long j = 0; j < sh.w; ++j) {
      const double u = flow.u[i * sh.w + j], v = flow.v[i * sh.w + j];
      const double mag = std::hypot(u, v);
      out.image.at(0, sh.c, i, j) = mag;
      out.image.at(0, sh.c + 1, i, j) =
          mag == 0.0 ? 0.0 : std::atan2(v, u) / 3.14159265358979323846;
    }
  return out;
}

}  // namespace ddn
