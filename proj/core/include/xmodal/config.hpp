#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmodal/dataset.hpp"
#include "xmodal/graph.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/training.hpp"

namespace xmodal {

// Every tunable of every command, serialized as one flat JSON object whose
// keys mirror the command-line flags (underscores become dashes).
struct RunConfig {
  TrainConfig train;

  // graph construction
  std::size_t image_size = 200;
  SlicParams slic;
  // 0 = 6 for skull/face data, 12 when the dataset contains sketches.
  std::size_t knn_k = 0;
  std::size_t knn_k_face = 0;
  std::size_t knn_k_skull = 0;
  std::size_t knn_k_sketch = 0;
  double contour_blend = 0.0;

  // evaluation
  std::vector<std::size_t> ks{1, 5, 10};
  ScoreMode mode = ScoreMode::kPaired;
  Relevance relevance = Relevance::kSubject;
  std::string split = "test";
  std::size_t topk = 5;

  // synth / sweep-k
  std::size_t subjects = 40;
  std::string synth_modality = "skull";
  std::vector<std::size_t> k_list{4, 6, 8, 10};

  std::size_t threads = 1;

  nlohmann::json to_json() const;
  // Applies keys present in j; unknown keys or bad values throw kConfig.
  void apply(const nlohmann::json& j);
  void validate() const;

  std::size_t knn_k_for(Modality m, bool dataset_has_sketch) const;
  GraphBuildConfig graph_config(Modality m, bool dataset_has_sketch) const;
};

// Loads every manifest image at image_size x image_size and builds its graph.
// Graph ids are "<subject>_<modality>[_<view>]", suffixed on collision.
std::vector<ModalGraph> build_graphs(const DatasetManifest& manifest, const RunConfig& cfg);

std::string_view relevance_name(Relevance r);
Relevance parse_relevance(std::string_view name);

}  // namespace xmodal
