#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

// Single-channel image, values in [0, 1], row-major. Images stay 32-bit
// even in the 64-bit test build; they are an I/O-domain type.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.f)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return pixels.size(); }
};

// Chroma retained from a color (functional) source for reinjection at
// output time.
struct ChromaPlanes {
  int height = 0, width = 0;
  std::vector<float> cb, cr;  // [0,1], offset-0.5 representation
  bool present() const { return !cb.empty(); }
};

struct ImagePair {
  std::string id;
  Image a, b;
  std::string modality_a, modality_b;
  ChromaPlanes chroma;     // from whichever source was RGB (a wins if both)
  int chroma_source = 0;   // 0 = none, 1 = a, 2 = b
};

// --- decoding / encoding (PGM P5 and PNG, 8-bit gray or 24-bit RGB) ---

// Loads a grayscale image; RGB inputs are converted to BT.601 luma and, if
// `chroma` is given, the Cb/Cr planes are kept for later reinjection.
Image load_image_gray(const std::string& path, ChromaPlanes* chroma = nullptr);

void save_pgm(const std::string& path, const Image& img);
void save_png_gray(const std::string& path, const Image& img);
// Interleaved 8-bit RGB from luma + chroma planes (sizes must match).
void save_png_ycbcr(const std::string& path, const Image& luma, const ChromaPlanes& chroma);

// --- conversions ---

// BT.601 full-range luma from 8-bit RGB.
float rgb_to_luma(float r, float g, float b);

Image resize_bilinear(const Image& src, int out_h, int out_w);
ChromaPlanes resize_bilinear(const ChromaPlanes& src, int out_h, int out_w);

// N=1, C=1 tensor view of an image and back.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int batch_index = 0);

// 8-bit quantization used everywhere a byte image is emitted.
inline int quantize8(float v) {
  int q = static_cast<int>(v * 255.f + 0.5f);
  return q < 0 ? 0 : (q > 255 ? 255 : q);
}

}  // namespace wdualmine
