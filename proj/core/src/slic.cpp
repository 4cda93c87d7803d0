#include "xmodal/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "xmodal/errors.hpp"

namespace xmodal {

namespace {

constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

struct Center {
  double row;
  double col;
  double intensity;
};

double gradient_at(const ImageRecord& img, std::size_t r, std::size_t c) {
  const std::size_t rm = r == 0 ? 0 : r - 1, rp = std::min(r + 1, img.height - 1);
  const std::size_t cm = c == 0 ? 0 : c - 1, cp = std::min(c + 1, img.width - 1);
  const double dx = img.at(r, cp) - img.at(r, cm);
  const double dy = img.at(rp, c) - img.at(rm, c);
  return dx * dx + dy * dy;
}

// 4-connected components; component ids in scan order of first pixel.
std::vector<std::uint32_t> connected_components(const std::vector<std::uint32_t>& labels,
                                                std::size_t w, std::size_t h,
                                                std::vector<std::size_t>& sizes) {
  std::vector<std::uint32_t> comp(labels.size(), kUnassigned);
  sizes.clear();
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (comp[start] != kUnassigned) continue;
    const auto id = static_cast<std::uint32_t>(sizes.size());
    std::size_t count = 0;
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const std::size_t r = p / w, c = p % w;
      const std::size_t nbrs[4] = {r > 0 ? p - w : p, r + 1 < h ? p + w : p,
                                   c > 0 ? p - 1 : p, c + 1 < w ? p + 1 : p};
      for (std::size_t q : nbrs) {
        if (q != p && comp[q] == kUnassigned && labels[q] == labels[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    sizes.push_back(count);
  }
  return comp;
}

void enforce_connectivity(std::vector<std::uint32_t>& labels, std::size_t w, std::size_t h) {
  for (;;) {
    std::vector<std::size_t> sizes;
    const auto comp = connected_components(labels, w, h, sizes);
    const std::size_t n_comp = sizes.size();
    std::vector<std::uint32_t> comp_label(n_comp);
    for (std::size_t p = 0; p < labels.size(); ++p) comp_label[comp[p]] = labels[p];

    // Main component per label: the largest, earliest in scan order on ties.
    std::map<std::uint32_t, std::uint32_t> main_of;
    for (std::uint32_t id = 0; id < n_comp; ++id) {
      auto [it, inserted] = main_of.emplace(comp_label[id], id);
      if (!inserted && sizes[id] > sizes[it->second]) it->second = id;
    }
    std::vector<bool> is_main(n_comp, false);
    for (const auto& [label, id] : main_of) is_main[id] = true;
    if (main_of.size() == n_comp) return;

    // Shared border length between each orphan and adjacent main components.
    std::vector<std::map<std::uint32_t, std::size_t>> border(n_comp);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (is_main[comp[p]]) continue;
      const std::size_t r = p / w, c = p % w;
      const std::size_t nbrs[4] = {r > 0 ? p - w : p, r + 1 < h ? p + w : p,
                                   c > 0 ? p - 1 : p, c + 1 < w ? p + 1 : p};
      for (std::size_t q : nbrs) {
        if (q != p && comp[q] != comp[p] && is_main[comp[q]]) ++border[comp[p]][labels[q]];
      }
    }
    std::vector<std::uint32_t> target(n_comp, kUnassigned);
    bool progressed = false;
    for (std::uint32_t id = 0; id < n_comp; ++id) {
      if (is_main[id] || border[id].empty()) continue;
      std::uint32_t best = kUnassigned;
      std::size_t best_len = 0;
      for (const auto& [label, len] : border[id]) {  // ascending label order
        if (len > best_len) {
          best = label;
          best_len = len;
        }
      }
      target[id] = best;
      progressed = true;
    }
    if (!progressed) return;  // unreachable for a connected pixel grid
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (target[comp[p]] != kUnassigned) labels[p] = target[comp[p]];
    }
  }
}

}  // namespace

SeedGrid slic_seed_grid(std::size_t width, std::size_t height, std::size_t n_segments) {
  const double spacing = std::sqrt(static_cast<double>(width * height) / static_cast<double>(n_segments));
  SeedGrid g;
  g.cols = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(width / spacing)), 1, width);
  g.rows = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(height / spacing)), 1, height);
  while (g.cols * g.rows > n_segments) {
    // Drop a line of seeds along the axis whose cells are currently smaller.
    const double cell_w = static_cast<double>(width) / static_cast<double>(g.cols);
    const double cell_h = static_cast<double>(height) / static_cast<double>(g.rows);
    if (cell_w < cell_h && g.cols > 1) {
      --g.cols;
    } else if (g.rows > 1) {
      --g.rows;
    } else {
      --g.cols;
    }
  }
  return g;
}

SegmentationResult relabel_and_measure(const ImageRecord& img, const std::vector<std::uint32_t>& labels) {
  if (labels.size() != img.pixel_count()) fail(ErrorCode::kArgument, "label map size mismatch");
  std::map<std::uint32_t, std::uint32_t> dense;
  for (std::uint32_t l : labels) dense.emplace(l, 0);
  std::uint32_t next = 0;
  for (auto& [label, id] : dense) id = next++;

  SegmentationResult out;
  out.width = img.width;
  out.height = img.height;
  out.labels.resize(labels.size());
  out.segments.assign(dense.size(), SegmentStats{});
  // long double sums keep constant regions at their exact value; the variance
  // is taken around the mean in a second pass so it cannot go slightly negative
  std::vector<long double> sum(dense.size(), 0.0L), dev(dense.size(), 0.0L);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::uint32_t id = dense[labels[p]];
    out.labels[p] = id;
    auto& s = out.segments[id];
    s.centroid_row += static_cast<double>(p / img.width);
    s.centroid_col += static_cast<double>(p % img.width);
    sum[id] += img.pixels[p];
    ++s.area;
  }
  std::vector<long double> mean(dense.size());
  for (std::size_t i = 0; i < out.segments.size(); ++i) mean[i] = sum[i] / static_cast<long double>(out.segments[i].area);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::uint32_t id = out.labels[p];
    const long double d = img.pixels[p] - mean[id];
    dev[id] += d * d;
  }
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    auto& s = out.segments[i];
    const double n = static_cast<double>(s.area);
    s.centroid_row /= n;
    s.centroid_col /= n;
    s.mean_intensity = static_cast<double>(mean[i]);
    s.std_intensity = std::min(1.0, static_cast<double>(std::sqrt(dev[i] / static_cast<long double>(s.area))));
  }
  return out;
}

SegmentationResult slic_segment(const ImageRecord& img, const SlicParams& params) {
  const std::size_t w = img.width, h = img.height, n_pix = img.pixel_count();
  if (n_pix == 0 || w * h != n_pix) fail(ErrorCode::kArgument, "invalid image for segmentation");
  if (params.n_segments < 1 || params.n_segments > n_pix) {
    fail(ErrorCode::kArgument, "n_segments must lie in [1, pixel count]");
  }
  if (params.iterations < 0) fail(ErrorCode::kArgument, "iterations must be nonnegative");

  const double spacing = std::sqrt(static_cast<double>(n_pix) / static_cast<double>(params.n_segments));
  const SeedGrid grid = slic_seed_grid(w, h, params.n_segments);

  std::vector<Center> centers;
  centers.reserve(grid.cols * grid.rows);
  for (std::size_t gr = 0; gr < grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.cols; ++gc) {
      std::size_t r = static_cast<std::size_t>((static_cast<double>(gr) + 0.5) * static_cast<double>(h) / static_cast<double>(grid.rows));
      std::size_t c = static_cast<std::size_t>((static_cast<double>(gc) + 0.5) * static_cast<double>(w) / static_cast<double>(grid.cols));
      r = std::min(r, h - 1);
      c = std::min(c, w - 1);
      // Move to the lowest-gradient pixel of the 3x3 neighbourhood.
      std::size_t best_r = r, best_c = c;
      double best_g = gradient_at(img, r, c);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const double g = gradient_at(img, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
          if (g < best_g) {
            best_g = g;
            best_r = static_cast<std::size_t>(rr);
            best_c = static_cast<std::size_t>(cc);
          }
        }
      }
      centers.push_back({static_cast<double>(best_r), static_cast<double>(best_c), img.at(best_r, best_c)});
    }
  }

  const double spatial_weight = (params.compactness / spacing) * (params.compactness / spacing);
  std::vector<std::uint32_t> labels(n_pix, kUnassigned);
  std::vector<double> dist(n_pix);

  auto distance_sq = [&](const Center& ctr, std::size_t r, std::size_t c) {
    const double di = img.at(r, c) - ctr.intensity;
    const double dr = static_cast<double>(r) - ctr.row;
    const double dc = static_cast<double>(c) - ctr.col;
    return di * di + spatial_weight * (dr * dr + dc * dc);
  };

  const int rounds = std::max(params.iterations, 1);
  for (int it = 0; it < rounds; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), kUnassigned);
    for (std::uint32_t k = 0; k < centers.size(); ++k) {
      const Center& ctr = centers[k];
      const long r0 = std::max(0L, static_cast<long>(std::floor(ctr.row - spacing)));
      const long r1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(ctr.row + spacing)));
      const long c0 = std::max(0L, static_cast<long>(std::floor(ctr.col - spacing)));
      const long c1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(ctr.col + spacing)));
      for (long r = r0; r <= r1; ++r) {
        for (long c = c0; c <= c1; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
          const double d = distance_sq(ctr, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = k;
          }
        }
      }
    }
    // Pixels outside every window fall back to the globally nearest centre.
    for (std::size_t p = 0; p < n_pix; ++p) {
      if (labels[p] != kUnassigned) continue;
      const std::size_t r = p / w, c = p % w;
      for (std::uint32_t k = 0; k < centers.size(); ++k) {
        const double d = distance_sq(centers[k], r, c);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = k;
        }
      }
    }
    // The centre update after the final assignment would not change labels.
    if (it + 1 == rounds) break;
    std::vector<Center> sums(centers.size(), Center{0.0, 0.0, 0.0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t p = 0; p < n_pix; ++p) {
      const auto k = labels[p];
      sums[k].row += static_cast<double>(p / w);
      sums[k].col += static_cast<double>(p % w);
      sums[k].intensity += img.pixels[p];
      ++counts[k];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (counts[k] == 0) continue;
      const double n = static_cast<double>(counts[k]);
      centers[k] = {sums[k].row / n, sums[k].col / n, sums[k].intensity / n};
    }
  }

  enforce_connectivity(labels, w, h);
  return relabel_and_measure(img, labels);
}

}  // namespace xmodal
