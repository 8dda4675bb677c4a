#include "ddn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ddn {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<CheckpointEntry>& entries,
                      std::uint32_t version) {
  if (version != kCheckpointVersionF64 && version != kCheckpointVersionF32)
    throw std::invalid_argument("write_checkpoint: unknown version");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  os.write("DDNP", 4);
  put_u32(os, version);
  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff)
      throw std::invalid_argument("write_checkpoint: name too long");
    put_u16(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    os.put(static_cast<char>(e.dims.size()));
    for (auto d : e.dims) put_u32(os, d);
    if (e.payload.size() != e.scalar_count())
      throw std::invalid_argument("write_checkpoint: payload/dims mismatch for " +
                                  e.name);
    if (version == kCheckpointVersionF64) {
      os.write(reinterpret_cast<const char*>(e.payload.data()),
               static_cast<std::streamsize>(e.payload.size() * 8));
    } else {
      for (double v : e.payload) {
        float f = static_cast<float>(v);
        os.write(reinterpret_cast<const char*>(&f), 4);
      }
    }
  }
  if (!os) throw std::runtime_error("write_checkpoint: write failed");
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DDNP", 4) != 0)
    throw std::runtime_error("read_checkpoint: bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersionF64 && version != kCheckpointVersionF32)
    throw std::runtime_error("read_checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint32_t count = get_u32(is);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    const std::uint16_t len = get_u16(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    const int rank = is.get();
    if (rank < 0) throw std::runtime_error("read_checkpoint: truncated");
    e.dims.resize(rank);
    for (auto& d : e.dims) d = get_u32(is);
    e.payload.resize(e.scalar_count());
    if (version == kCheckpointVersionF64) {
      is.read(reinterpret_cast<char*>(e.payload.data()),
              static_cast<std::streamsize>(e.payload.size() * 8));
    } else {
      for (double& v : e.payload) {
        float f;
        is.read(reinterpret_cast<char*>(&f), 4);
        v = f;
      }
    }
    if (!is) throw std::runtime_error("read_checkpoint: truncated entry " + e.name);
  }
  return entries;
}

}  // namespace ddn
