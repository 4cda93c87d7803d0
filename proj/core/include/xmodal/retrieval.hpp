#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmodal/model.hpp"

namespace xmodal {

struct SinkhornSummary {
  std::size_t solves = 0;
  double mean_marginal_err = 0.0;
  double max_marginal_err = 0.0;
  double mean_transport_cost = 0.0;
  int iterations = 0;
};

struct ItemLabel {
  std::string id;
  std::string subject_id;
  std::optional<std::string> view;
};

// Q x G similarity scores, higher = more similar.
struct ScoreMatrix {
  Matrix scores;
  std::vector<ItemLabel> queries;
  std::vector<ItemLabel> gallery;
  std::optional<SinkhornSummary> sinkhorn;
};

enum class ScoreMode { kPaired, kIndependent };
std::string_view score_mode_name(ScoreMode m);
ScoreMode parse_score_mode(std::string_view name);

// Entry (q, g) = -||z_q - z_g||^2 with both embeddings taken from
// align_pair on that pair.
ScoreMatrix score_paired(std::span<const ModalGraph* const> queries,
                         std::span<const ModalGraph* const> gallery, const Model& model,
                         std::size_t threads = 1);

// Entry (q, g) = cosine similarity of pool_embed(layer_norm(encode(.)));
// cross-attention and transport are bypassed.
ScoreMatrix score_independent(std::span<const ModalGraph* const> queries,
                              std::span<const ModalGraph* const> gallery, const Model& model,
                              std::size_t threads = 1);

// Embedding used by score_independent.
Matrix independent_embedding(const Model& model, const PreparedGraph& g);

// 1-based best rank of any relevant item under descending score with ties
// broken by lower gallery index; 0 when `relevant` is empty.
std::size_t rank_relevants(std::span<const double> scores, std::span<const std::size_t> relevant);

// Gallery order: descending score, ties by lower index.
std::vector<std::size_t> ranked_order(std::span<const double> scores);

// Fraction of queries with 0 < rank <= k.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);

// sum_{i<=k} P@i * rel(i) / min(|relevant|, k); 0 when nothing is relevant.
double average_precision_at_k(std::span<const double> scores, std::span<const std::size_t> relevant,
                              std::size_t k);
double map_at_k(const Matrix& scores, const std::vector<std::vector<std::size_t>>& relevance,
                std::size_t k);

// Mann-Whitney form: (#genuine > impostor + 0.5 #ties) / (|G| |I|).
double roc_auc(std::span<const double> genuine, std::span<const double> impostor);

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};
std::vector<RocPoint> roc_curve(std::span<const double> genuine, std::span<const double> impostor);

enum class Relevance { kSubject, kExactPair };

// Relevant gallery indices per query.
std::vector<std::vector<std::size_t>> relevance_sets(const ScoreMatrix& sm, Relevance rel);

struct MetricsReport {
  std::map<std::size_t, double> recall_at;
  std::map<std::size_t, double> map_at;
  double roc_auc = 0.0;
  std::vector<std::size_t> ranks;
  std::optional<SinkhornSummary> sinkhorn;
  std::size_t n_queries = 0;
  std::size_t n_gallery = 0;
  std::vector<RocPoint> roc;
};

MetricsReport compute_metrics(const ScoreMatrix& sm, std::span<const std::size_t> ks,
                              Relevance rel = Relevance::kSubject);

// Non-face graphs of the given subjects are queries, face graphs the gallery.
struct QueryGallery {
  std::vector<const ModalGraph*> queries;
  std::vector<const ModalGraph*> gallery;
};
QueryGallery select_query_gallery(std::span<const ModalGraph> graphs,
                                  const std::vector<std::string>& subjects);

ScoreMatrix score(std::span<const ModalGraph* const> queries, std::span<const ModalGraph* const> gallery,
                  const Model& model, ScoreMode mode, std::size_t threads = 1);

MetricsReport evaluate(std::span<const ModalGraph> graphs, const std::vector<std::string>& subjects,
                       const Model& model, std::span<const std::size_t> ks, ScoreMode mode,
                       Relevance rel = Relevance::kSubject, std::size_t threads = 1);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const SinkhornSummary& s);

}  // namespace xmodal
