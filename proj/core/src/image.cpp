#include "dicomo/image.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <memory>

#include <png.h>

#include "dicomo/common.hpp"

namespace dicomo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const Image8& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw RuntimeFailure("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeFailure("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeFailure("libpng: failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or gamma chunks: files must be byte-identical across runs.
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.at(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw RuntimeFailure("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeFailure("libpng: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeFailure("libpng: failed reading '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Image8 img(w, h);
  for (int y = 0; y < h; ++y) png_read_row(png, img.at(0, y), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

torch::Tensor to_tensor(const Image8& img) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(img.pixels.data()), {img.height, img.width, 3},
                            torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

Image8 from_tensor(const torch::Tensor& chw) {
  require(chw.dim() == 3 && chw.size(0) == 3, "from_tensor expects a 3xHxW tensor");
  auto t = chw.detach().to(torch::kCPU, torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round();
  t = t.to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  Image8 img(static_cast<int>(chw.size(2)), static_cast<int>(chw.size(1)));
  std::memcpy(img.pixels.data(), t.data_ptr<std::uint8_t>(), img.pixels.size());
  return img;
}

Image8 tile_grid(const std::vector<std::vector<torch::Tensor>>& rows) {
  require(!rows.empty() && !rows.front().empty(), "tile_grid: empty grid");
  const int h = static_cast<int>(rows.front().front().size(1));
  const int w = static_cast<int>(rows.front().front().size(2));
  int cols = 0;
  for (const auto& r : rows) cols = std::max<int>(cols, static_cast<int>(r.size()));
  const int nrows = static_cast<int>(rows.size());
  Image8 grid(cols * (w + 1) + 1, nrows * (h + 1) + 1);
  std::fill(grid.pixels.begin(), grid.pixels.end(), std::uint8_t{255});
  for (int r = 0; r < nrows; ++r) {
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
      const auto tile = from_tensor(rows[r][c]);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          std::memcpy(grid.at(1 + c * (w + 1) + x, 1 + r * (h + 1) + y), tile.at(x, y), 3);
    }
  }
  return grid;
}

}  // namespace dicomo
