#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xmodal/image.hpp"

namespace xmodal {

struct SegmentStats {
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  double mean_intensity = 0.0;
  double std_intensity = 0.0;
  std::size_t area = 0;
};

struct SegmentationResult {
  std::size_t width = 0;
  std::size_t height = 0;
  // Per-pixel segment index, row-major, dense in [0, n_segments()).
  std::vector<std::uint32_t> labels;
  std::vector<SegmentStats> segments;

  std::size_t n_segments() const { return segments.size(); }
  std::uint32_t label_at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

struct SlicParams {
  std::size_t n_segments = 300;
  double compactness = 10.0;
  int iterations = 10;
};

// Intensity-only SLIC: grid seeding, low-gradient seed perturbation,
// windowed k-means in (row, col, intensity) space, connectivity enforcement
// that merges orphan components into the neighbour with the longest shared
// border, then dense relabelling and per-segment statistics.
SegmentationResult slic_segment(const ImageRecord& img, const SlicParams& params);

// Grid of seed centres: columns x rows with columns*rows <= n_segments.
struct SeedGrid {
  std::size_t cols = 1;
  std::size_t rows = 1;
};
SeedGrid slic_seed_grid(std::size_t width, std::size_t height, std::size_t n_segments);

// Recomputes dense labels and statistics for an arbitrary label map.
SegmentationResult relabel_and_measure(const ImageRecord& img, const std::vector<std::uint32_t>& labels);

}  // namespace xmodal
