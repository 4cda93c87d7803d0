#include "xmodal/config.hpp"

#include <map>
#include <set>

#include "xmodal/errors.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

std::string_view relevance_name(Relevance r) {
  return r == Relevance::kSubject ? "subject" : "exact_pair";
}

Relevance parse_relevance(std::string_view name) {
  if (name == "subject") return Relevance::kSubject;
  if (name == "exact_pair") return Relevance::kExactPair;
  fail(ErrorCode::kConfig, "unknown relevance '" + std::string(name) + "'");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = train_config_to_json(train);
  j["image_size"] = image_size;
  j["n_segments"] = slic.n_segments;
  j["compactness"] = slic.compactness;
  j["slic_iterations"] = slic.iterations;
  j["knn_k"] = knn_k;
  j["knn_k_face"] = knn_k_face;
  j["knn_k_skull"] = knn_k_skull;
  j["knn_k_sketch"] = knn_k_sketch;
  j["contour_blend"] = contour_blend;
  j["ks"] = ks;
  j["mode"] = score_mode_name(mode);
  j["relevance"] = relevance_name(relevance);
  j["split"] = split;
  j["topk"] = topk;
  j["subjects"] = subjects;
  j["synth_modality"] = synth_modality;
  j["k_list"] = k_list;
  j["threads"] = threads;
  return j;
}

namespace {

std::size_t count_of(const nlohmann::json& v, const std::string& k) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::kConfig, "config key '" + k + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

double number_of(const nlohmann::json& v, const std::string& k) {
  if (!v.is_number()) fail(ErrorCode::kConfig, "config key '" + k + "' must be a number");
  return v.get<double>();
}

std::string string_of(const nlohmann::json& v, const std::string& k) {
  if (!v.is_string()) fail(ErrorCode::kConfig, "config key '" + k + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> counts_of(const nlohmann::json& v, const std::string& k) {
  if (!v.is_array()) fail(ErrorCode::kConfig, "config key '" + k + "' must be a list of integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(count_of(e, k));
  return out;
}

}  // namespace

void RunConfig::apply(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (set_train_config_key(train, k, v)) continue;
    if (k == "image_size") image_size = count_of(v, k);
    else if (k == "n_segments") slic.n_segments = count_of(v, k);
    else if (k == "compactness") slic.compactness = number_of(v, k);
    else if (k == "slic_iterations") slic.iterations = static_cast<int>(count_of(v, k));
    else if (k == "knn_k") knn_k = count_of(v, k);
    else if (k == "knn_k_face") knn_k_face = count_of(v, k);
    else if (k == "knn_k_skull") knn_k_skull = count_of(v, k);
    else if (k == "knn_k_sketch") knn_k_sketch = count_of(v, k);
    else if (k == "contour_blend") contour_blend = number_of(v, k);
    else if (k == "ks") ks = counts_of(v, k);
    else if (k == "mode") mode = parse_score_mode(string_of(v, k));
    else if (k == "relevance") relevance = parse_relevance(string_of(v, k));
    else if (k == "split") split = string_of(v, k);
    else if (k == "topk") topk = count_of(v, k);
    else if (k == "subjects") subjects = count_of(v, k);
    else if (k == "synth_modality") synth_modality = string_of(v, k);
    else if (k == "k_list") k_list = counts_of(v, k);
    else if (k == "threads") threads = count_of(v, k);
    else fail(ErrorCode::kConfig, "unknown config key '" + k + "'");
  }
}

void RunConfig::validate() const {
  train.validate();
  if (image_size < 8) fail(ErrorCode::kConfig, "image_size must be at least 8");
  if (slic.n_segments == 0) fail(ErrorCode::kConfig, "n_segments must be positive");
  if (!(slic.compactness > 0.0)) fail(ErrorCode::kConfig, "compactness must be positive");
  if (!(contour_blend >= 0.0 && contour_blend <= 1.0)) fail(ErrorCode::kConfig, "contour_blend must be in [0, 1]");
  if (ks.empty()) fail(ErrorCode::kConfig, "ks must not be empty");
  for (std::size_t k : ks)
    if (k == 0) fail(ErrorCode::kConfig, "ks entries must be positive");
  for (std::size_t k : k_list)
    if (k == 0) fail(ErrorCode::kConfig, "k_list entries must be positive");
  if (topk == 0) fail(ErrorCode::kConfig, "topk must be positive");
  if (threads == 0) fail(ErrorCode::kConfig, "threads must be positive");
  if (split != "train" && split != "val" && split != "test" && split != "all") {
    fail(ErrorCode::kConfig, "split must be train, val, test or all");
  }
  const Modality second = [&] {
    try {
      return parse_modality(synth_modality);
    } catch (const Error&) {
      fail(ErrorCode::kConfig, "synth_modality must be skull or sketch");
    }
  }();
  if (second == Modality::kFace) fail(ErrorCode::kConfig, "synth_modality must be skull or sketch");
}

std::size_t RunConfig::knn_k_for(Modality m, bool dataset_has_sketch) const {
  const std::size_t specific =
      m == Modality::kFace ? knn_k_face : (m == Modality::kSkull ? knn_k_skull : knn_k_sketch);
  if (specific > 0) return specific;
  if (knn_k > 0) return knn_k;
  return dataset_has_sketch ? 12 : 6;
}

GraphBuildConfig RunConfig::graph_config(Modality m, bool dataset_has_sketch) const {
  GraphBuildConfig g;
  g.slic = slic;
  g.knn_k = knn_k_for(m, dataset_has_sketch);
  g.contour_blend = contour_blend;
  return g;
}

std::vector<ModalGraph> build_graphs(const DatasetManifest& manifest, const RunConfig& cfg) {
  bool has_sketch = false;
  for (const auto& r : manifest.rows) has_sketch |= r.modality == Modality::kSketch;

  std::vector<std::string> ids;
  std::map<std::string, std::size_t> seen;
  for (const auto& r : manifest.rows) {
    std::string id = r.subject_id + "_" + std::string(modality_name(r.modality));
    if (r.view) id += "_" + *r.view;
    const std::size_t n = seen[id]++;
    if (n > 0) id += "_" + std::to_string(n);
    ids.push_back(id);
  }

  std::vector<ModalGraph> graphs(manifest.rows.size());
  parallel_for(manifest.rows.size(), cfg.threads, [&](std::size_t i) {
    const ManifestRow& r = manifest.rows[i];
    ImageRecord img = load_image(r.path.string(), {cfg.image_size, cfg.image_size});
    img.modality = r.modality;
    img.subject_id = r.subject_id;
    img.view = r.view;
    graphs[i] = graph_from_image(img, cfg.graph_config(r.modality, has_sketch), ids[i]);
  });
  return graphs;
}

}  // namespace xmodal
