#include "ddn/archspec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ddn {

void BlockSpec::validate() const {
  if (layers < 1) throw std::invalid_argument("BlockSpec: layers must be >= 1");
  if (growth < 1) throw std::invalid_argument("BlockSpec: growth must be >= 1");
  if (residual_width < 1)
    throw std::invalid_argument("BlockSpec: residual_width must be >= 1");
  if (bottleneck_width < 0)
    throw std::invalid_argument("BlockSpec: bottleneck_width must be >= 0");
  if (kind == Kind::InvertedResidual && expansion < 1)
    throw std::invalid_argument("BlockSpec: expansion must be >= 1");
}

void ArchSpec::validate() const {
  if (num_classes < 1) throw std::invalid_argument("ArchSpec: num_classes >= 1");
  if (encoder.size() != 3)
    throw std::invalid_argument("ArchSpec: exactly 3 encoder stages required");
  if (decoder_widths.size() != 3)
    throw std::invalid_argument("ArchSpec: exactly 3 decoder widths required");
  if (decoder_units < 1)
    throw std::invalid_argument("ArchSpec: decoder_units must be >= 1");
  long down = 1;
  for (const auto& st : encoder) {
    st.block.validate();
    if (st.downsample < 1)
      throw std::invalid_argument("ArchSpec: downsample must be >= 1");
    down *= st.downsample;
  }
  // each decoder upsamples 2x per stage, 3 stages; closure requires 8x down
  if (down != 8)
    throw std::invalid_argument(
        "ArchSpec: encoder downsample product must equal the 8x decoder "
        "upsample product (resolution closure)");
  if (in_height % 8 || in_width % 8)
    throw std::invalid_argument("ArchSpec: input dims must be divisible by 8");
}

namespace {

struct Kv {
  std::string value;
  int line, col;
  bool used = false;
};
using Section = std::map<std::string, Kv>;

long to_long(const Kv& kv, const std::string& key) {
  try {
    std::size_t pos = 0;
    long v = std::stol(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw SpecParseError(kv.line, kv.col, "expected integer for '" + key +
                                              "', got '" + kv.value + "'");
  }
}
double to_double(const Kv& kv, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(kv.value, &pos);
    if (pos != kv.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw SpecParseError(kv.line, kv.col, "expected number for '" + key +
                                              "', got '" + kv.value + "'");
  }
}
bool to_bool(const Kv& kv, const std::string& key) {
  if (kv.value == "true" || kv.value == "1" || kv.value == "on") return true;
  if (kv.value == "false" || kv.value == "0" || kv.value == "off") return false;
  throw SpecParseError(kv.line, kv.col,
                       "expected boolean for '" + key + "', got '" + kv.value + "'");
}

std::vector<long> to_long_list(const Kv& kv, const std::string& key) {
  std::vector<long> out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    try {
      out.push_back(std::stol(item));
    } catch (...) {
      throw SpecParseError(kv.line, kv.col,
                           "expected integer list for '" + key + "'");
    }
  }
  return out;
}

BlockSpec::Kind parse_kind(const Kv& kv) {
  if (kv.value == "residual") return BlockSpec::Kind::Residual;
  if (kv.value == "dense") return BlockSpec::Kind::Dense;
  if (kv.value == "dpdb") return BlockSpec::Kind::DPDB;
  if (kv.value == "inverted") return BlockSpec::Kind::InvertedResidual;
  throw SpecParseError(kv.line, kv.col, "unknown block kind '" + kv.value + "'");
}

}  // namespace

ArchSpec parse_archspec(const std::string& text) {
  std::map<std::string, Section> sections;
  std::string current = "";
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string body = line.substr(first, last - first + 1);
    if (body.front() == '[') {
      if (body.back() != ']')
        throw SpecParseError(lineno, static_cast<int>(last + 1),
                             "unterminated section header");
      current = body.substr(1, body.size() - 2);
      const bool known = current == "input" || current == "decoder" ||
                         current == "skips" || current == "heads" ||
                         current.rfind("encoder.", 0) == 0;
      if (!known)
        throw SpecParseError(lineno, static_cast<int>(first + 1),
                             "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw SpecParseError(lineno, static_cast<int>(first + 1),
                           "expected 'key = value'");
    std::string key = body.substr(0, eq);
    std::string val = body.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    auto vfirst = val.find_first_not_of(" \t");
    val = vfirst == std::string::npos ? "" : val.substr(vfirst);
    if (key.empty())
      throw SpecParseError(lineno, static_cast<int>(first + 1), "empty key");
    if (sections[current].count(key))
      throw SpecParseError(lineno, static_cast<int>(first + 1),
                           "duplicate key '" + key + "'");
    sections[current][key] =
        Kv{val, lineno, static_cast<int>(first + 1), false};
  }

  ArchSpec spec = tiny_preset();
  spec.encoder.clear();

  auto get = [&](const std::string& sec, const std::string& key) -> Kv* {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  };

  if (auto* kv = get("input", "channels")) spec.in_channels = to_long(*kv, "channels");
  if (auto* kv = get("input", "height")) spec.in_height = to_long(*kv, "height");
  if (auto* kv = get("input", "width")) spec.in_width = to_long(*kv, "width");
  if (auto* kv = get("input", "stem_width")) spec.stem_width = to_long(*kv, "stem_width");

  for (int i = 1;; ++i) {
    const std::string sec = "encoder." + std::to_string(i);
    if (!sections.count(sec)) break;
    EncoderStage st;
    if (auto* kv = get(sec, "kind")) st.block.kind = parse_kind(*kv);
    if (auto* kv = get(sec, "layers")) st.block.layers = static_cast<int>(to_long(*kv, "layers"));
    if (auto* kv = get(sec, "growth")) st.block.growth = to_long(*kv, "growth");
    if (auto* kv = get(sec, "residual_width")) st.block.residual_width = to_long(*kv, "residual_width");
    if (auto* kv = get(sec, "bottleneck")) st.block.bottleneck_width = to_long(*kv, "bottleneck");
    if (auto* kv = get(sec, "out")) st.block.out_channels = to_long(*kv, "out");
    if (auto* kv = get(sec, "expansion")) st.block.expansion = static_cast<int>(to_long(*kv, "expansion"));
    if (auto* kv = get(sec, "downsample")) st.downsample = static_cast<int>(to_long(*kv, "downsample"));
    spec.encoder.push_back(st);
  }
  if (spec.encoder.empty()) spec.encoder = tiny_preset().encoder;

  if (auto* kv = get("decoder", "units")) spec.decoder_units = static_cast<int>(to_long(*kv, "units"));
  if (auto* kv = get("decoder", "block")) {
    if (kv->value == "none") spec.decoder_block = ArchSpec::DecoderBlock::None;
    else if (kv->value == "conv") spec.decoder_block = ArchSpec::DecoderBlock::Conv;
    else if (kv->value == "dense") spec.decoder_block = ArchSpec::DecoderBlock::Dense;
    else throw SpecParseError(kv->line, kv->col, "unknown decoder block '" + kv->value + "'");
  }
  if (auto* kv = get("decoder", "widths")) spec.decoder_widths = to_long_list(*kv, "widths");
  if (auto* kv = get("decoder", "skip_reduce")) spec.skip_reduce = to_long_list(*kv, "skip_reduce");
  if (auto* kv = get("decoder", "dense_layers")) spec.decoder_dense_layers = static_cast<int>(to_long(*kv, "dense_layers"));
  if (auto* kv = get("decoder", "dense_growth")) spec.decoder_dense_growth = to_long(*kv, "dense_growth");
  if (auto* kv = get("decoder", "dropout")) spec.dropout = to_double(*kv, "dropout");

  if (auto* kv = get("skips", "forward")) {
    if (!to_bool(*kv, "forward"))
      throw SpecParseError(kv->line, kv->col, "forward skips are always present");
  }
  if (auto* kv = get("skips", "backward")) spec.backward_skips = to_bool(*kv, "backward");
  if (auto* kv = get("skips", "stacked_residual")) spec.stacked_residual = to_bool(*kv, "stacked_residual");

  if (auto* kv = get("heads", "classes")) spec.num_classes = to_long(*kv, "classes");
  if (auto* kv = get("heads", "supervision")) spec.supervision = to_bool(*kv, "supervision");

  for (const auto& [sname, sec] : sections)
    for (const auto& [key, kv] : sec)
      if (!kv.used)
        throw SpecParseError(kv.line, kv.col,
                             "unknown key '" + key + "' in section [" + sname + "]");

  spec.validate();
  return spec;
}

ArchSpec load_archspec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open arch spec: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_archspec(ss.str());
}

std::string to_string(BlockSpec::Kind k) {
  switch (k) {
    case BlockSpec::Kind::Residual: return "residual";
    case BlockSpec::Kind::Dense: return "dense";
    case BlockSpec::Kind::DPDB: return "dpdb";
    case BlockSpec::Kind::InvertedResidual: return "inverted";
  }
  return "?";
}
std::string to_string(ArchSpec::DecoderBlock b) {
  switch (b) {
    case ArchSpec::DecoderBlock::None: return "none";
    case ArchSpec::DecoderBlock::Conv: return "conv";
    case ArchSpec::DecoderBlock::Dense: return "dense";
  }
  return "?";
}

std::string ArchSpec::to_text() const {
  std::ostringstream os;
  os << "[input]\n"
     << "channels = " << in_channels << "\nheight = " << in_height
     << "\nwidth = " << in_width << "\nstem_width = " << stem_width << "\n\n";
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto& st = encoder[i];
    os << "[encoder." << i + 1 << "]\n"
       << "kind = " << to_string(st.block.kind) << "\n"
       << "layers = " << st.block.layers << "\n"
       << "growth = " << st.block.growth << "\n"
       << "residual_width = " << st.block.residual_width << "\n"
       << "bottleneck = " << st.block.bottleneck_width << "\n"
       << "out = " << st.block.out_channels << "\n"
       << "downsample = " << st.downsample << "\n\n";
  }
  os << "[decoder]\nunits = " << decoder_units
     << "\nblock = " << to_string(decoder_block) << "\nwidths = ";
  for (std::size_t i = 0; i < decoder_widths.size(); ++i)
    os << (i ? "," : "") << decoder_widths[i];
  os << "\ndense_layers = " << decoder_dense_layers
     << "\ndense_growth = " << decoder_dense_growth << "\ndropout = " << dropout
     << "\n\n[skips]\nforward = true\nbackward = "
     << (backward_skips ? "true" : "false")
     << "\nstacked_residual = " << (stacked_residual ? "true" : "false")
     << "\n\n[heads]\nclasses = " << num_classes
     << "\nsupervision = " << (supervision ? "true" : "false") << "\n";
  return os.str();
}

ArchSpec tiny_preset() {
  ArchSpec s;
  s.stem_width = 16;
  s.encoder.clear();
  for (long out : {16L, 24L, 32L}) {
    EncoderStage st;
    st.block.kind = BlockSpec::Kind::DPDB;
    st.block.layers = 2;
    st.block.growth = 8;
    st.block.residual_width = 16;
    st.block.out_channels = out;
    st.downsample = 2;
    s.encoder.push_back(st);
  }
  s.decoder_units = 1;
  s.decoder_block = ArchSpec::DecoderBlock::Dense;
  s.decoder_widths = {32, 24, 16};
  s.skip_reduce = {8, 8, 8};
  s.decoder_dense_layers = 2;
  s.decoder_dense_growth = 8;
  s.num_classes = 4;
  s.supervision = true;
  return s;
}

ArchSpec paperlike_preset() {
  ArchSpec s = tiny_preset();
  s.stem_width = 48;
  long outs[3] = {48, 96, 144};
  for (int i = 0; i < 3; ++i) {
    s.encoder[i].block.layers = 4;
    s.encoder[i].block.growth = 16;
    s.encoder[i].block.residual_width = 32;
    s.encoder[i].block.out_channels = outs[i];
  }
  s.decoder_widths = {96, 64, 48};
  s.skip_reduce = {48, 32, 24};
  s.decoder_dense_layers = 4;
  s.decoder_dense_growth = 16;
  s.decoder_units = 3;
  s.backward_skips = true;
  s.stacked_residual = true;
  return s;
}

}  // namespace ddn
