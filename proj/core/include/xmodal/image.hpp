#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xmodal {

enum class Modality { kFace, kSkull, kSketch };

std::string_view modality_name(Modality m);
// Throws kParse on unknown names.
Modality parse_modality(std::string_view name);

// Grayscale raster with intensities in [0, 1], stored row-major.
struct ImageRecord {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
  Modality modality = Modality::kFace;
  std::string subject_id;
  std::optional<std::string> view;

  ImageRecord() = default;
  ImageRecord(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  std::size_t pixel_count() const { return pixels.size(); }

  // Checks the size and [0, 1] range invariants; throws kArgument.
  void validate() const;
};

struct ImageSize {
  std::size_t width = 200;
  std::size_t height = 200;
};

// Decodes PNG or JPEG, converts to grayscale with Rec.601 luma weights,
// bilinearly resizes to target and scales to [0, 1].
ImageRecord load_image(const std::string& path, ImageSize target);

// Bilinear resize with pixel-centre alignment and edge clamping.
ImageRecord resize_bilinear(const ImageRecord& img, ImageSize target);

// blend * (Sobel gradient magnitude / its max) + (1 - blend) * img.
ImageRecord extract_contours(const ImageRecord& img, double blend);

// Sobel gradient magnitude with reflect-101 padding, not rescaled.
std::vector<double> sobel_magnitude(const ImageRecord& img);

// Writes an 8-bit grayscale PNG (intensities rounded to the nearest level).
void save_png(const ImageRecord& img, const std::string& path);

}  // namespace xmodal
