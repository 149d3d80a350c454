#include "glyphgen/tensor_image.hpp"

#include <string>

#include "glyphgen/error.hpp"

namespace glyphgen {

torch::Tensor to_model_input(std::span<const GrayImage* const> images) {
  if (images.empty()) throw ShapeError("to_model_input: empty image list");
  const int h = images[0]->height, w = images[0]->width;
  auto out = torch::empty({static_cast<long>(images.size()), 1, h, w});
  auto acc = out.accessor<float, 4>();
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = *images[n];
    if (img.height != h || img.width != w) throw ShapeError("to_model_input: mixed image sizes");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) acc[n][0][y][x] = img.at(y, x) * 2.0f - 1.0f;
  }
  return out;
}

torch::Tensor to_model_input(std::span<const Glyph* const> glyphs) {
  std::vector<const GrayImage*> images;
  images.reserve(glyphs.size());
  for (const auto* g : glyphs) images.push_back(&g->image);
  return to_model_input(std::span<const GrayImage* const>(images));
}

torch::Tensor to_model_input(const GrayImage& image) {
  const GrayImage* p = &image;
  return to_model_input(std::span<const GrayImage* const>(&p, 1));
}

GrayImage from_model_output(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kFloat).squeeze();
  if (t.dim() != 2) throw ShapeError("from_model_output expects a single-channel image");
  t = to_pixel_space(t).clamp(0.0, 1.0).contiguous();
  GrayImage out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  std::copy(t.data_ptr<float>(), t.data_ptr<float>() + t.numel(), out.pixels.begin());
  return out;
}

void check_image_batch(const torch::Tensor& x, int size, const char* who) {
  if (x.dim() != 4 || x.size(1) != 1 || x.size(2) != size || x.size(3) != size)
    throw ShapeError(std::string(who) + ": expected N x 1 x " + std::to_string(size) + " x " +
                     std::to_string(size) + " input, got " +
                     c10::str(x.sizes()));
}

}  // namespace glyphgen
