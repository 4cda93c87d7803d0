#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmodal/image.hpp"
#include "xmodal/matrix.hpp"
#include "xmodal/slic.hpp"

namespace xmodal {

inline constexpr std::size_t kNodeFeatureDim = 5;

struct Edge {
  std::uint32_t a = 0;  // a < b
  std::uint32_t b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct ModalGraph {
  std::string graph_id;
  std::string subject_id;
  Modality modality = Modality::kFace;
  std::optional<std::string> view;
  Matrix node_features;  // N x 5
  std::vector<Edge> edges;
  std::vector<double> edge_dist;

  std::size_t n_nodes() const { return node_features.rows(); }
  // Checks the structural invariants; throws kArgument.
  void validate() const;

  friend bool operator==(const ModalGraph&, const ModalGraph&) = default;
};

// Row i = [col/W, row/H, mean, std, area/(W*H)] of segment i.
Matrix build_node_features(const SegmentationResult& seg, const ImageRecord& img);

struct Point {
  double row = 0.0;
  double col = 0.0;
};

struct KnnEdges {
  std::vector<Edge> edges;  // sorted lexicographically
  std::vector<double> dist; // Euclidean distance / normalizer
};

// Each node links to its min(k, N-1) nearest points (ties to the lower
// index); directed picks are symmetrized and deduplicated.
KnnEdges knn_graph(std::span<const Point> points, std::size_t k, double normalizer);

struct GraphBuildConfig {
  SlicParams slic;
  std::size_t knn_k = 6;
  double contour_blend = 0.0;
};

ModalGraph graph_from_image(const ImageRecord& img, const GraphBuildConfig& cfg,
                            std::string graph_id = {});

// JSON lines, one graph per line, numbers with 17 significant digits.
void write_graph_store(std::span<const ModalGraph> graphs, const std::string& path);
std::string graph_to_json_line(const ModalGraph& g);
std::vector<ModalGraph> read_graph_store(const std::string& path);

}  // namespace xmodal
