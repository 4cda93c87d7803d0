#include "xmodal/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "xmodal/errors.hpp"

namespace xmodal {

void ModalGraph::validate() const {
  const std::size_t n = n_nodes();
  if (node_features.cols() != kNodeFeatureDim && n > 0) {
    fail(ErrorCode::kArgument, "graph " + graph_id + ": node features must have 5 columns");
  }
  if (edge_dist.size() != edges.size()) {
    fail(ErrorCode::kArgument, "graph " + graph_id + ": edge_dist length mismatch");
  }
  for (double v : node_features.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::kArgument, "graph " + graph_id + ": non-finite node feature");
  }
  std::set<Edge> seen;
  for (const Edge& e : edges) {
    if (e.a >= e.b || e.b >= n) fail(ErrorCode::kArgument, "graph " + graph_id + ": invalid edge");
    if (!seen.insert(e).second) fail(ErrorCode::kArgument, "graph " + graph_id + ": duplicate edge");
  }
}

Matrix build_node_features(const SegmentationResult& seg, const ImageRecord& img) {
  if (seg.width != img.width || seg.height != img.height || seg.labels.size() != img.pixel_count()) {
    fail(ErrorCode::kArgument, "segmentation does not match image dimensions");
  }
  const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
  Matrix x(seg.n_segments(), kNodeFeatureDim);
  for (std::size_t i = 0; i < seg.n_segments(); ++i) {
    const auto& s = seg.segments[i];
    x(i, 0) = s.centroid_col / w;
    x(i, 1) = s.centroid_row / h;
    x(i, 2) = s.mean_intensity;
    x(i, 3) = s.std_intensity;
    x(i, 4) = static_cast<double>(s.area) / (w * h);
  }
  return x;
}

KnnEdges knn_graph(std::span<const Point> points, std::size_t k, double normalizer) {
  const std::size_t n = points.size();
  KnnEdges out;
  if (n < 2 || k == 0) return out;
  const std::size_t kk = std::min(k, n - 1);
  std::set<Edge> picked;
  std::vector<std::pair<double, std::uint32_t>> cand;
  cand.reserve(n - 1);
  for (std::uint32_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dr = points[i].row - points[j].row, dc = points[i].col - points[j].col;
      cand.emplace_back(dr * dr + dc * dc, j);
    }
    // (distance, index) ordering gives the lower-index tie-break.
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(kk), cand.end());
    for (std::size_t t = 0; t < kk; ++t) {
      const std::uint32_t j = cand[t].second;
      picked.insert(Edge{std::min(i, j), std::max(i, j)});
    }
  }
  out.edges.assign(picked.begin(), picked.end());
  out.dist.reserve(out.edges.size());
  for (const Edge& e : out.edges) {
    // Fixed operand order keeps the value independent of pick direction.
    const double dr = points[e.a].row - points[e.b].row, dc = points[e.a].col - points[e.b].col;
    out.dist.push_back(std::sqrt(dr * dr + dc * dc) / normalizer);
  }
  return out;
}

ModalGraph graph_from_image(const ImageRecord& img, const GraphBuildConfig& cfg, std::string graph_id) {
  const ImageRecord prepared = cfg.contour_blend > 0.0 ? extract_contours(img, cfg.contour_blend) : img;
  const SegmentationResult seg = slic_segment(prepared, cfg.slic);
  ModalGraph g;
  g.graph_id = std::move(graph_id);
  g.subject_id = img.subject_id;
  g.modality = img.modality;
  g.view = img.view;
  g.node_features = build_node_features(seg, prepared);
  std::vector<Point> centroids;
  centroids.reserve(seg.n_segments());
  for (const auto& s : seg.segments) centroids.push_back({s.centroid_row, s.centroid_col});
  const double diagonal = std::hypot(static_cast<double>(img.width), static_cast<double>(img.height));
  KnnEdges knn = knn_graph(centroids, cfg.knn_k, diagonal);
  g.edges = std::move(knn.edges);
  g.edge_dist = std::move(knn.dist);
  return g;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_string(std::string& out, const std::string& s) {
  out += nlohmann::json(s).dump();
}

}  // namespace

std::string graph_to_json_line(const ModalGraph& g) {
  std::string out;
  out.reserve(64 + g.n_nodes() * 120 + g.edges.size() * 40);
  out += "{\"graph_id\":";
  append_string(out, g.graph_id);
  out += ",\"subject_id\":";
  append_string(out, g.subject_id);
  out += ",\"modality\":";
  append_string(out, std::string(modality_name(g.modality)));
  if (g.view) {
    out += ",\"view\":";
    append_string(out, *g.view);
  }
  out += ",\"n_nodes\":" + std::to_string(g.n_nodes());
  out += ",\"d0\":" + std::to_string(kNodeFeatureDim);
  out += ",\"node_features\":[";
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    if (i) out += ',';
    out += '[';
    for (std::size_t j = 0; j < g.node_features.cols(); ++j) {
      if (j) out += ',';
      append_number(out, g.node_features(i, j));
    }
    out += ']';
  }
  out += "],\"edges\":[";
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    if (i) out += ',';
    out += '[' + std::to_string(g.edges[i].a) + ',' + std::to_string(g.edges[i].b) + ']';
  }
  out += "],\"edge_dist\":[";
  for (std::size_t i = 0; i < g.edge_dist.size(); ++i) {
    if (i) out += ',';
    append_number(out, g.edge_dist[i]);
  }
  out += "]}";
  return out;
}

void write_graph_store(std::span<const ModalGraph> graphs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write graph store '" + path + "'");
  for (const auto& g : graphs) out << graph_to_json_line(g) << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing graph store '" + path + "'");
}

std::vector<ModalGraph> read_graph_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open graph store '" + path + "'");
  std::vector<ModalGraph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      ModalGraph g;
      g.graph_id = j.at("graph_id").get<std::string>();
      g.subject_id = j.at("subject_id").get<std::string>();
      g.modality = parse_modality(j.at("modality").get<std::string>());
      if (j.contains("view")) g.view = j.at("view").get<std::string>();
      const auto n = j.at("n_nodes").get<std::size_t>();
      const auto d0 = j.at("d0").get<std::size_t>();
      if (d0 != kNodeFeatureDim) fail(ErrorCode::kParse, "d0 must be 5");
      const auto& feats = j.at("node_features");
      if (feats.size() != n) fail(ErrorCode::kParse, "node_features row count != n_nodes");
      g.node_features = Matrix(n, d0);
      for (std::size_t i = 0; i < n; ++i) {
        if (feats[i].size() != d0) fail(ErrorCode::kParse, "node feature row width != d0");
        for (std::size_t k = 0; k < d0; ++k) g.node_features(i, k) = feats[i][k].get<double>();
      }
      for (const auto& e : j.at("edges")) {
        if (e.size() != 2) fail(ErrorCode::kParse, "edge must be a pair");
        g.edges.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>()});
      }
      g.edge_dist = j.at("edge_dist").get<std::vector<double>>();
      g.validate();
      graphs.push_back(std::move(g));
    } catch (const Error& e) {
      fail(ErrorCode::kParse, where + e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, where + e.what());
    }
  }
  return graphs;
}

}  // namespace xmodal
