#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dicomo {

/// 8-bit RGB image, row-major, interleaved channels.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image8() = default;
  Image8(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const Image8&) const = default;
};

void write_png(const std::string& path, const Image8& img);
Image8 read_png(const std::string& path);

/// 3xHxW float tensor in [0,1] <-> Image8. Values are clamped and rounded.
torch::Tensor to_tensor(const Image8& img);
Image8 from_tensor(const torch::Tensor& chw);

/// Tiles CxHxW tensors into a grid image (row-major) with a 1-pixel gap.
Image8 tile_grid(const std::vector<std::vector<torch::Tensor>>& rows);

}  // namespace dicomo
