#include "wdualmine/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("short write to '" + path + "'");
}

uint32_t be32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
         uint32_t(p[3]);
}

void push_be32(std::vector<unsigned char>& v, uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

// ---------------- PGM (P5) ----------------

bool is_pgm(const std::vector<unsigned char>& b) {
  return b.size() >= 2 && b[0] == 'P' && b[1] == '5';
}

Image decode_pgm(const std::vector<unsigned char>& b, const std::string& path) {
  size_t pos = 2;
  auto skip_ws = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_ws();
    long v = 0;
    bool any = false;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) fail("malformed PGM header in '" + path + "'");
    return v;
  };
  long w = read_int(), h = read_int(), maxval = read_int();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    fail("unsupported PGM (need 8-bit) in '" + path + "'");
  ++pos;  // single whitespace after maxval
  if (b.size() - pos < static_cast<size_t>(w) * static_cast<size_t>(h))
    fail("truncated PGM data in '" + path + "'");
  Image img(static_cast<int>(h), static_cast<int>(w));
  // divide per element: k/255.f must reproduce the exact float the writer
  // quantized from, so round trips stay bit-exact
  for (size_t i = 0; i < img.size(); ++i)
    img.pixels[i] = static_cast<float>(b[pos + i]) / static_cast<float>(maxval);
  return img;
}

// ---------------- PNG ----------------

const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

bool is_png(const std::vector<unsigned char>& b) {
  return b.size() >= 8 && std::memcmp(b.data(), kPngSig, 8) == 0;
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

struct PngRaster {
  uint32_t width = 0, height = 0;
  int channels = 0;  // 1 or 3
  std::vector<unsigned char> bytes;  // interleaved
};

PngRaster decode_png(const std::vector<unsigned char>& b, const std::string& path) {
  PngRaster r;
  size_t pos = 8;
  int bit_depth = 0, color_type = -1, interlace = -1;
  std::vector<unsigned char> idat;
  while (pos + 8 <= b.size()) {
    uint32_t len = be32(&b[pos]);
    if (pos + 12 + len > b.size()) fail("truncated PNG chunk in '" + path + "'");
    const char* type = reinterpret_cast<const char*>(&b[pos + 4]);
    const unsigned char* data = &b[pos + 8];
    if (!std::memcmp(type, "IHDR", 4)) {
      if (len != 13) fail("bad IHDR in '" + path + "'");
      r.width = be32(data);
      r.height = be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
    } else if (!std::memcmp(type, "IDAT", 4)) {
      idat.insert(idat.end(), data, data + len);
    } else if (!std::memcmp(type, "IEND", 4)) {
      break;
    }
    pos += 12 + len;
  }
  if (r.width == 0 || r.height == 0) fail("missing IHDR in '" + path + "'");
  if (bit_depth != 8) fail("unsupported PNG bit depth in '" + path + "' (need 8)");
  if (color_type == 0)
    r.channels = 1;
  else if (color_type == 2)
    r.channels = 3;
  else
    fail("unsupported PNG color type " + std::to_string(color_type) + " in '" + path +
         "' (need 8-bit gray or RGB)");
  if (interlace != 0) fail("interlaced PNG not supported: '" + path + "'");

  size_t stride = static_cast<size_t>(r.width) * static_cast<size_t>(r.channels);
  uLongf raw_len = static_cast<uLongf>((stride + 1) * r.height);
  std::vector<unsigned char> raw(raw_len);
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != (stride + 1) * r.height)
    fail("PNG inflate failed for '" + path + "'");

  r.bytes.assign(stride * r.height, 0);
  int bpp = r.channels;
  for (uint32_t y = 0; y < r.height; ++y) {
    int filter = raw[y * (stride + 1)];
    const unsigned char* src = &raw[y * (stride + 1) + 1];
    unsigned char* cur = &r.bytes[y * stride];
    const unsigned char* up = y ? &r.bytes[(y - 1) * stride] : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      int a = x >= static_cast<size_t>(bpp) ? cur[x - bpp] : 0;
      int bb = up ? up[x] : 0;
      int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += bb; break;
        case 3: v += (a + bb) / 2; break;
        case 4: v += paeth(a, bb, c); break;
        default: fail("bad PNG filter type in '" + path + "'");
      }
      cur[x] = static_cast<unsigned char>(v & 0xff);
    }
  }
  return r;
}

void append_chunk(std::vector<unsigned char>& out, const char* type,
                  const std::vector<unsigned char>& data) {
  push_be32(out, static_cast<uint32_t>(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  push_be32(out, static_cast<uint32_t>(crc));
}

void encode_png(const std::string& path, uint32_t w, uint32_t h, int channels,
                const std::vector<unsigned char>& pixels) {
  std::vector<unsigned char> out(kPngSig, kPngSig + 8);
  std::vector<unsigned char> ihdr;
  push_be32(ihdr, w);
  push_be32(ihdr, h);
  ihdr.push_back(8);
  ihdr.push_back(channels == 1 ? 0 : 2);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);

  size_t stride = static_cast<size_t>(w) * static_cast<size_t>(channels);
  std::vector<unsigned char> raw((stride + 1) * h);
  for (uint32_t y = 0; y < h; ++y) {
    raw[y * (stride + 1)] = 0;  // filter: none
    std::memcpy(&raw[y * (stride + 1) + 1], &pixels[y * stride], stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK)
    fail("PNG deflate failed for '" + path + "'");
  z.resize(bound);
  append_chunk(out, "IDAT", z);
  append_chunk(out, "IEND", {});
  write_file(path, out);
}

}  // namespace

float rgb_to_luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

Image load_image_gray(const std::string& path, ChromaPlanes* chroma) {
  std::vector<unsigned char> bytes = read_file(path);
  if (is_pgm(bytes)) return decode_pgm(bytes, path);
  if (!is_png(bytes)) fail("'" + path + "' is neither PGM (P5) nor PNG");
  PngRaster r = decode_png(bytes, path);
  Image img(static_cast<int>(r.height), static_cast<int>(r.width));
  if (r.channels == 1) {
    for (size_t i = 0; i < img.size(); ++i)
      img.pixels[i] = static_cast<float>(r.bytes[i]) / 255.f;
    return img;
  }
  if (chroma) {
    chroma->height = img.height;
    chroma->width = img.width;
    chroma->cb.resize(img.size());
    chroma->cr.resize(img.size());
  }
  for (size_t i = 0; i < img.size(); ++i) {
    float rr = static_cast<float>(r.bytes[3 * i]) / 255.f;
    float gg = static_cast<float>(r.bytes[3 * i + 1]) / 255.f;
    float bb = static_cast<float>(r.bytes[3 * i + 2]) / 255.f;
    float y = rgb_to_luma(rr, gg, bb);
    img.pixels[i] = y;
    if (chroma) {
      chroma->cb[i] = (bb - y) / 1.772f + 0.5f;
      chroma->cr[i] = (rr - y) / 1.402f + 0.5f;
    }
  }
  return img;
}

void save_pgm(const std::string& path, const Image& img) {
  std::vector<unsigned char> out;
  std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.insert(out.end(), header.begin(), header.end());
  for (float v : img.pixels) out.push_back(static_cast<unsigned char>(quantize8(v)));
  write_file(path, out);
}

void save_png_gray(const std::string& path, const Image& img) {
  std::vector<unsigned char> px(img.size());
  for (size_t i = 0; i < img.size(); ++i)
    px[i] = static_cast<unsigned char>(quantize8(img.pixels[i]));
  encode_png(path, static_cast<uint32_t>(img.width), static_cast<uint32_t>(img.height), 1,
             px);
}

void save_png_ycbcr(const std::string& path, const Image& luma,
                    const ChromaPlanes& chroma) {
  if (!chroma.present() || chroma.height != luma.height || chroma.width != luma.width)
    fail("save_png_ycbcr: chroma planes missing or mismatched");
  std::vector<unsigned char> px(luma.size() * 3);
  for (size_t i = 0; i < luma.size(); ++i) {
    float y = luma.pixels[i];
    float cb = chroma.cb[i] - 0.5f, cr = chroma.cr[i] - 0.5f;
    float r = y + 1.402f * cr;
    float b = y + 1.772f * cb;
    float g = (y - 0.299f * r - 0.114f * b) / 0.587f;
    px[3 * i] = static_cast<unsigned char>(quantize8(r));
    px[3 * i + 1] = static_cast<unsigned char>(quantize8(g));
    px[3 * i + 2] = static_cast<unsigned char>(quantize8(b));
  }
  encode_png(path, static_cast<uint32_t>(luma.width), static_cast<uint32_t>(luma.height),
             3, px);
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) fail("resize_bilinear: bad target size");
  if (src.height == out_h && src.width == out_w) return src;
  Image dst(out_h, out_w);
  float sy = static_cast<float>(src.height) / static_cast<float>(out_h);
  float sx = static_cast<float>(src.width) / static_cast<float>(out_w);
  for (int y = 0; y < out_h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    float wy = fy - static_cast<float>(y0);
    int y0c = std::clamp(y0, 0, src.height - 1);
    int y1c = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      float wx = fx - static_cast<float>(x0);
      int x0c = std::clamp(x0, 0, src.width - 1);
      int x1c = std::clamp(x0 + 1, 0, src.width - 1);
      float top = src.at(y0c, x0c) * (1.f - wx) + src.at(y0c, x1c) * wx;
      float bot = src.at(y1c, x0c) * (1.f - wx) + src.at(y1c, x1c) * wx;
      dst.at(y, x) = top * (1.f - wy) + bot * wy;
    }
  }
  return dst;
}

ChromaPlanes resize_bilinear(const ChromaPlanes& src, int out_h, int out_w) {
  ChromaPlanes out;
  if (!src.present()) return out;
  Image cb(src.height, src.width), cr(src.height, src.width);
  cb.pixels = src.cb;
  cr.pixels = src.cr;
  Image cb2 = resize_bilinear(cb, out_h, out_w);
  Image cr2 = resize_bilinear(cr, out_h, out_w);
  out.height = out_h;
  out.width = out_w;
  out.cb = std::move(cb2.pixels);
  out.cr = std::move(cr2.pixels);
  return out;
}

Tensor image_to_tensor(const Image& img) {
  std::vector<real> data(img.size());
  for (size_t i = 0; i < img.size(); ++i) data[i] = static_cast<real>(img.pixels[i]);
  return Tensor::from_data({1, 1, img.height, img.width}, std::move(data));
}

Image tensor_to_image(const Tensor& t, int batch_index) {
  if (t.rank() != 4 || t.dim(1) != 1)
    fail("tensor_to_image expects N x 1 x H x W, got " + shape_str(t.shape()));
  int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  Image img(h, w);
  const real* src = t.data().data() + static_cast<int64_t>(batch_index) * h * w;
  for (size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(src[i]);
  return img;
}

}  // namespace wdualmine
