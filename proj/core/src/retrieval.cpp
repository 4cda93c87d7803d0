#include "xmodal/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "xmodal/errors.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

std::string_view score_mode_name(ScoreMode m) {
  return m == ScoreMode::kPaired ? "paired" : "independent";
}

ScoreMode parse_score_mode(std::string_view name) {
  if (name == "paired") return ScoreMode::kPaired;
  if (name == "independent") return ScoreMode::kIndependent;
  fail(ErrorCode::kConfig, "unknown scoring mode '" + std::string(name) + "'");
}

namespace {

std::vector<ItemLabel> labels_of(std::span<const ModalGraph* const> graphs) {
  std::vector<ItemLabel> out;
  out.reserve(graphs.size());
  for (const auto* g : graphs) out.push_back({g->graph_id, g->subject_id, g->view});
  return out;
}

void check_widths(std::span<const ModalGraph* const> graphs, const Model& model) {
  for (const auto* g : graphs) {
    if (!model.has_encoder(g->modality)) {
      fail(ErrorCode::kConfig, "checkpoint has no encoder for modality " +
                                   std::string(modality_name(g->modality)));
    }
    if (g->node_features.cols() != kNodeFeatureDim) {
      fail(ErrorCode::kConfig, "graph " + g->graph_id + " feature width does not match the checkpoint");
    }
  }
}

std::vector<PreparedGraph> prepare(std::span<const ModalGraph* const> graphs) {
  std::vector<PreparedGraph> out;
  out.reserve(graphs.size());
  for (const auto* g : graphs) out.emplace_back(*g);
  return out;
}

}  // namespace

ScoreMatrix score_paired(std::span<const ModalGraph* const> queries,
                         std::span<const ModalGraph* const> gallery, const Model& model,
                         std::size_t threads) {
  check_widths(queries, model);
  check_widths(gallery, model);
  const auto pq = prepare(queries), pg = prepare(gallery);
  // Node embeddings do not depend on the partner graph; compute them once.
  std::vector<Matrix> hq(pq.size()), hg(pg.size());
  parallel_for(pq.size(), threads, [&](std::size_t i) { hq[i] = embed_nodes(model, pq[i]); });
  parallel_for(pg.size(), threads, [&](std::size_t i) { hg[i] = embed_nodes(model, pg[i]); });

  ScoreMatrix sm;
  sm.queries = labels_of(queries);
  sm.gallery = labels_of(gallery);
  sm.scores = Matrix(pq.size(), pg.size());
  std::vector<double> merr(pq.size() * pg.size()), tcost(pq.size() * pg.size());
  parallel_for(pq.size() * pg.size(), threads, [&](std::size_t idx) {
    const std::size_t q = idx / pg.size(), g = idx % pg.size();
    const AlignResult r = align_pair(hq[q], hg[g], model.align, model.config.align);
    double d = 0.0;
    for (std::size_t c = 0; c < r.z_m.cols(); ++c) {
      const double diff = r.z_m(0, c) - r.z_n(0, c);
      d += diff * diff;
    }
    sm.scores(q, g) = -d;
    merr[idx] = r.plan.marginal_err;
    tcost[idx] = r.plan.transport_cost;
  });
  SinkhornSummary s;
  s.solves = merr.size();
  s.iterations = model.config.align.iterations;
  for (std::size_t i = 0; i < merr.size(); ++i) {
    s.mean_marginal_err += merr[i];
    s.max_marginal_err = std::max(s.max_marginal_err, merr[i]);
    s.mean_transport_cost += tcost[i];
  }
  if (s.solves > 0) {
    s.mean_marginal_err /= static_cast<double>(s.solves);
    s.mean_transport_cost /= static_cast<double>(s.solves);
  }
  sm.sinkhorn = s;
  return sm;
}

Matrix independent_embedding(const Model& model, const PreparedGraph& g) {
  const Matrix h = embed_nodes(model, g);
  return pool_embed(layer_norm_rows(h, model.align.ln_gamma.value, model.align.ln_beta.value));
}

ScoreMatrix score_independent(std::span<const ModalGraph* const> queries,
                              std::span<const ModalGraph* const> gallery, const Model& model,
                              std::size_t threads) {
  check_widths(queries, model);
  check_widths(gallery, model);
  const auto pq = prepare(queries), pg = prepare(gallery);
  std::vector<Matrix> zq(pq.size()), zg(pg.size());
  parallel_for(pq.size(), threads, [&](std::size_t i) { zq[i] = independent_embedding(model, pq[i]); });
  parallel_for(pg.size(), threads, [&](std::size_t i) { zg[i] = independent_embedding(model, pg[i]); });
  ScoreMatrix sm;
  sm.queries = labels_of(queries);
  sm.gallery = labels_of(gallery);
  sm.scores = Matrix(pq.size(), pg.size());
  for (std::size_t q = 0; q < pq.size(); ++q) {
    for (std::size_t g = 0; g < pg.size(); ++g) {
      // Embeddings are unit norm (or zero), so the dot product is the cosine.
      double dot = 0.0;
      for (std::size_t c = 0; c < zq[q].cols(); ++c) dot += zq[q](0, c) * zg[g](0, c);
      sm.scores(q, g) = dot;
    }
  }
  return sm;
}

ScoreMatrix score(std::span<const ModalGraph* const> queries, std::span<const ModalGraph* const> gallery,
                  const Model& model, ScoreMode mode, std::size_t threads) {
  return mode == ScoreMode::kPaired ? score_paired(queries, gallery, model, threads)
                                    : score_independent(queries, gallery, model, threads);
}

std::vector<std::size_t> ranked_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t rank_relevants(std::span<const double> scores, std::span<const std::size_t> relevant) {
  std::size_t best = 0;
  for (std::size_t r : relevant) {
    if (r >= scores.size()) fail(ErrorCode::kArgument, "relevant index outside the gallery");
    // Items ranked ahead of r: higher score, or equal score at a lower index.
    std::size_t ahead = 0;
    for (std::size_t g = 0; g < scores.size(); ++g) {
      if (scores[g] > scores[r] || (scores[g] == scores[r] && g < r)) ++ahead;
    }
    if (best == 0 || ahead + 1 < best) best = ahead + 1;
  }
  return best;
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) fail(ErrorCode::kUndefinedMetric, "recall over zero queries");
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += (r > 0 && r <= k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double average_precision_at_k(std::span<const double> scores, std::span<const std::size_t> relevant,
                              std::size_t k) {
  if (relevant.empty() || k == 0) return 0.0;
  const std::set<std::size_t> rel(relevant.begin(), relevant.end());
  const auto order = ranked_order(scores);
  const std::size_t depth = std::min(k, order.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    if (rel.count(order[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(rel.size(), k));
}

double map_at_k(const Matrix& scores, const std::vector<std::vector<std::size_t>>& relevance,
                std::size_t k) {
  if (scores.rows() == 0) fail(ErrorCode::kUndefinedMetric, "mAP over zero queries");
  if (relevance.size() != scores.rows()) fail(ErrorCode::kArgument, "relevance sets do not match queries");
  double total = 0.0;
  for (std::size_t q = 0; q < scores.rows(); ++q) total += average_precision_at_k(scores.row(q), relevance[q], k);
  return total / static_cast<double>(scores.rows());
}

double roc_auc(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    fail(ErrorCode::kUndefinedMetric, "ROC-AUC needs both genuine and impostor scores");
  }
  std::vector<double> imp(impostor.begin(), impostor.end());
  std::sort(imp.begin(), imp.end());
  // Counts are integers (or halves) and stay exact in double.
  double wins = 0.0;
  for (double g : genuine) {
    const auto lo = std::lower_bound(imp.begin(), imp.end(), g);
    const auto hi = std::upper_bound(lo, imp.end(), g);
    wins += static_cast<double>(lo - imp.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(genuine.size()) * static_cast<double>(impostor.size()));
}

std::vector<RocPoint> roc_curve(std::span<const double> genuine, std::span<const double> impostor) {
  std::vector<double> thresholds(genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<double> gs(genuine.begin(), genuine.end()), is(impostor.begin(), impostor.end());
  std::sort(gs.begin(), gs.end());
  std::sort(is.begin(), is.end());
  auto frac_at_least = [](const std::vector<double>& v, double t) {
    if (v.empty()) return 0.0;
    const auto it = std::lower_bound(v.begin(), v.end(), t);
    return static_cast<double>(v.end() - it) / static_cast<double>(v.size());
  };
  std::vector<RocPoint> out;
  out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : thresholds) out.push_back({t, frac_at_least(gs, t), frac_at_least(is, t)});
  return out;
}

std::vector<std::vector<std::size_t>> relevance_sets(const ScoreMatrix& sm, Relevance rel) {
  std::vector<std::vector<std::size_t>> out(sm.queries.size());
  for (std::size_t q = 0; q < sm.queries.size(); ++q) {
    for (std::size_t g = 0; g < sm.gallery.size(); ++g) {
      if (sm.queries[q].subject_id != sm.gallery[g].subject_id) continue;
      if (rel == Relevance::kExactPair && sm.queries[q].view != sm.gallery[g].view) continue;
      out[q].push_back(g);
    }
  }
  return out;
}

MetricsReport compute_metrics(const ScoreMatrix& sm, std::span<const std::size_t> ks, Relevance rel) {
  if (sm.scores.rows() == 0 || sm.scores.cols() == 0) {
    fail(ErrorCode::kUndefinedMetric, "metrics need at least one query and one gallery item");
  }
  MetricsReport report;
  report.n_queries = sm.scores.rows();
  report.n_gallery = sm.scores.cols();
  report.sinkhorn = sm.sinkhorn;
  const auto relevance = relevance_sets(sm, rel);
  std::vector<double> genuine, impostor;
  for (std::size_t q = 0; q < sm.scores.rows(); ++q) {
    report.ranks.push_back(rank_relevants(sm.scores.row(q), relevance[q]));
    std::vector<bool> is_rel(sm.scores.cols(), false);
    for (std::size_t g : relevance[q]) is_rel[g] = true;
    for (std::size_t g = 0; g < sm.scores.cols(); ++g) {
      (is_rel[g] ? genuine : impostor).push_back(sm.scores(q, g));
    }
  }
  for (std::size_t k : ks) {
    report.recall_at[k] = recall_at_k(report.ranks, k);
    report.map_at[k] = map_at_k(sm.scores, relevance, k);
  }
  if (genuine.empty()) {
    report.roc_auc = 0.0;
  } else if (impostor.empty()) {
    report.roc_auc = 1.0;  // nothing can be misordered
  } else {
    report.roc_auc = roc_auc(genuine, impostor);
  }
  report.roc = roc_curve(genuine, impostor);
  return report;
}

QueryGallery select_query_gallery(std::span<const ModalGraph> graphs,
                                  const std::vector<std::string>& subjects) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  QueryGallery qg;
  for (const auto& g : graphs) {
    if (!wanted.count(g.subject_id)) continue;
    (g.modality == Modality::kFace ? qg.gallery : qg.queries).push_back(&g);
  }
  return qg;
}

MetricsReport evaluate(std::span<const ModalGraph> graphs, const std::vector<std::string>& subjects,
                       const Model& model, std::span<const std::size_t> ks, ScoreMode mode,
                       Relevance rel, std::size_t threads) {
  const QueryGallery qg = select_query_gallery(graphs, subjects);
  if (qg.queries.empty() || qg.gallery.empty()) {
    fail(ErrorCode::kUndefinedMetric, "evaluation split has no queries or no gallery faces");
  }
  return compute_metrics(score(qg.queries, qg.gallery, model, mode, threads), ks, rel);
}

nlohmann::json to_json(const SinkhornSummary& s) {
  return {{"solves", s.solves},
          {"mean_marginal_err", s.mean_marginal_err},
          {"max_marginal_err", s.max_marginal_err},
          {"mean_transport_cost", s.mean_transport_cost},
          {"iterations", s.iterations}};
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  nlohmann::json recall = nlohmann::json::object(), map = nlohmann::json::object();
  for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
  for (const auto& [k, v] : report.map_at) map[std::to_string(k)] = v;
  j["recall_at"] = recall;
  j["map_at"] = map;
  j["roc_auc"] = report.roc_auc;
  j["ranks"] = report.ranks;
  j["n_queries"] = report.n_queries;
  j["n_gallery"] = report.n_gallery;
  j["sinkhorn"] = report.sinkhorn ? to_json(*report.sinkhorn) : nlohmann::json(nullptr);
  return j;
}

}  // namespace xmodal
