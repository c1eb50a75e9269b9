#include "wdualmine/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "wdualmine/config.hpp"

namespace wdualmine {

namespace {

constexpr char kMagic[8] = {'W', 'D', 'L', 'M', 'C', 'K', 'P', 'T'};

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 24));
}

uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}

void put_f32(std::vector<unsigned char>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32(const unsigned char* p) {
  uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, static_cast<uint32_t>(kCheckpointVersion));
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != static_cast<int64_t>(e.data.size()))
      fail("checkpoint entry '" + e.name + "' shape/data mismatch");
    put_u32(out, static_cast<uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<uint32_t>(e.shape.size()));
    for (int64_t ext : e.shape) put_u32(out, static_cast<uint32_t>(ext));
    for (float f : e.data) put_f32(out, f);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("cannot write checkpoint '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail("short write to checkpoint '" + path + "'");
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    fail("'" + path + "' is not a checkpoint (bad magic)");
  uint32_t version = get_u32(&bytes[8]);
  if (version != static_cast<uint32_t>(kCheckpointVersion))
    fail("checkpoint '" + path + "' has format version " + std::to_string(version) +
         ", expected " + std::to_string(kCheckpointVersion));
  uint32_t count = get_u32(&bytes[12]);
  size_t pos = 16;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) fail("truncated checkpoint '" + path + "'");
  };
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    need(4);
    uint32_t name_len = get_u32(&bytes[pos]);
    pos += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(&bytes[pos]), name_len);
    pos += name_len;
    need(4);
    uint32_t rank = get_u32(&bytes[pos]);
    pos += 4;
    Shape shape(rank);
    need(4ull * rank);
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = get_u32(&bytes[pos]);
      pos += 4;
    }
    int64_t n = shape_numel(shape);
    need(4ull * static_cast<size_t>(n));
    std::vector<float> data(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) {
      data[static_cast<size_t>(k)] = get_f32(&bytes[pos]);
      pos += 4;
    }
    entries.push_back({std::move(name), std::move(shape), std::move(data)});
  }
  return entries;
}

}  // namespace wdualmine
