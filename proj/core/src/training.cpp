#include "xmodal/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "xmodal/errors.hpp"
#include "xmodal/retrieval.hpp"

namespace xmodal {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kArgument, "unknown split '" + std::string(name) + "'");
}

std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) fail(ErrorCode::kConfig, "split ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-6) fail(ErrorCode::kConfig, "split ratios must sum to 1");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double q = static_cast<double>(n) * ratios[i];
    // The small slack keeps 10 * 0.7 from rounding down to 6.
    const double fl = std::floor(q + 1e-9);
    counts[i] = static_cast<std::size_t>(fl);
    rem[i] = q - fl;
    assigned += counts[i];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return counts;
}

SplitAssignment split_dataset(std::vector<std::string> subject_ids, std::array<double, 3> ratios,
                              std::uint64_t seed) {
  std::sort(subject_ids.begin(), subject_ids.end());
  subject_ids.erase(std::unique(subject_ids.begin(), subject_ids.end()), subject_ids.end());
  if (subject_ids.size() < 3) {
    fail(ErrorCode::kArgument, "need at least 3 subjects to split, got " + std::to_string(subject_ids.size()));
  }
  const auto counts = split_counts(subject_ids.size(), ratios);
  Rng rng = Rng::derive(seed, 4);
  rng.shuffle(subject_ids);
  SplitAssignment out;
  std::size_t i = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) out[subject_ids[i++]] = static_cast<Split>(s);
  }
  return out;
}

std::vector<std::string> subjects_in(const SplitAssignment& split, Split which) {
  std::vector<std::string> out;
  for (const auto& [id, s] : split)
    if (s == which) out.push_back(id);
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  if (!(margin >= 0.0)) fail(ErrorCode::kConfig, "margin must be nonnegative");
  if (batch_size < 2) fail(ErrorCode::kConfig, "batch_size must be at least 2");
  if (!(learning_rate >= 0.0)) fail(ErrorCode::kConfig, "learning_rate must be nonnegative");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::kConfig, "weight_decay must be nonnegative");
  if (!(w_ot >= 0.0)) fail(ErrorCode::kConfig, "w_ot must be nonnegative");
  split_counts(3, split_ratios);
}

// ---- triplet objective --------------------------------------------------------

namespace {

double sq_dist(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) fail(ErrorCode::kShape, "embedding shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double t = a.values()[i] - b.values()[i];
    d += t * t;
  }
  return d;
}

}  // namespace

double triplet_loss(const Matrix& za, const Matrix& zp, const Matrix& zn, double margin) {
  // argument order lets a NaN distance through instead of clamping it to 0
  return std::max(sq_dist(za, zp) - sq_dist(za, zn) + margin, 0.0);
}

TripletGrads triplet_loss_backward(const Matrix& za, const Matrix& zp, const Matrix& zn, double margin) {
  TripletGrads g{Matrix(za.rows(), za.cols()), Matrix(zp.rows(), zp.cols()), Matrix(zn.rows(), zn.cols())};
  if (sq_dist(za, zp) - sq_dist(za, zn) + margin <= 0.0) return g;
  for (std::size_t i = 0; i < za.values().size(); ++i) {
    const double a = za.values()[i], p = zp.values()[i], n = zn.values()[i];
    g.da.values()[i] = 2.0 * (n - p);
    g.dp.values()[i] = -2.0 * (a - p);
    g.dn.values()[i] = 2.0 * (a - n);
  }
  return g;
}

TripletBatch mine_negatives(std::span<const Matrix> anchors, std::span<const Matrix> faces,
                            std::span<const std::string> subjects) {
  if (anchors.size() != faces.size() || anchors.size() != subjects.size()) {
    fail(ErrorCode::kArgument, "mine_negatives: anchors, faces and subjects differ in length");
  }
  TripletBatch out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::size_t best = anchors.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < faces.size(); ++j) {
      if (subjects[j] == subjects[i]) continue;
      const double d = sq_dist(anchors[i], faces[j]);
      if (best == anchors.size() || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if (best == anchors.size()) fail(ErrorCode::kMining, "batch holds a single identity; no negatives");
    out.anchors.push_back(i);
    out.positives.push_back(i);
    out.negatives.push_back(best);
  }
  return out;
}

// ---- optimisation -------------------------------------------------------------

void AdamW::step(std::span<Param* const> params, double lr, double weight_decay) {
  if (m.empty()) {
    for (const Param* p : params) {
      m.emplace_back(p->value.rows(), p->value.cols());
      v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m.size() != params.size()) fail(ErrorCode::kShape, "optimizer state does not match parameters");
  ++step_count;
  const double t = static_cast<double>(step_count);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    if (!m[k].same_shape(p.value)) fail(ErrorCode::kShape, "optimizer state shape mismatch for " + p.name);
    auto pv = p.value.values();
    auto gv = p.grad.values();
    auto mv = m[k].values();
    auto vv = v[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double g = gv[i];
      mv[i] = beta1 * mv[i] + (1.0 - beta1) * g;
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g;
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] = pv[i] - lr * mhat / (std::sqrt(vhat) + eps) - lr * weight_decay * pv[i];
    }
  }
}

BatchResult batch_loss(Model& model, std::span<const TrainPair> batch, const TrainConfig& cfg,
                       bool backward, const std::vector<FrozenPlans>* frozen, const TripletBatch* fixed) {
  const std::size_t n = batch.size();
  if (frozen && frozen->size() != n) fail(ErrorCode::kArgument, "frozen plans do not match the batch");
  std::vector<PairForward> fw(n);
  std::vector<Matrix> za(n), zf(n);
  std::vector<std::string> subjects(n);
  BatchResult out;
  double transport = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const AlignResult r =
        forward_pair(model, *batch[i].query, *batch[i].face, &fw[i], frozen ? &(*frozen)[i] : nullptr);
    za[i] = r.z_m;
    zf[i] = r.z_n;
    subjects[i] = batch[i].subject_id;
    transport += r.plan.transport_cost;
    out.plans.push_back({fw[i].align.plan_mn, fw[i].align.plan_nm});
  }
  out.triplets = fixed ? *fixed : mine_negatives(za, zf, subjects);
  const auto& t = out.triplets;
  const double inv = 1.0 / static_cast<double>(t.anchors.size());
  for (std::size_t k = 0; k < t.anchors.size(); ++k) {
    out.loss += triplet_loss(za[t.anchors[k]], zf[t.positives[k]], zf[t.negatives[k]], cfg.margin) * inv;
  }
  if (cfg.w_ot > 0.0) out.loss += cfg.w_ot * transport / static_cast<double>(n);
  if (!backward) return out;

  std::vector<Matrix> dq(n, Matrix(1, za[0].cols())), df(n, Matrix(1, zf[0].cols()));
  for (std::size_t k = 0; k < t.anchors.size(); ++k) {
    TripletGrads g = triplet_loss_backward(za[t.anchors[k]], zf[t.positives[k]], zf[t.negatives[k]], cfg.margin);
    g.da *= inv;
    g.dp *= inv;
    g.dn *= inv;
    dq[t.anchors[k]] += g.da;
    df[t.positives[k]] += g.dp;
    df[t.negatives[k]] += g.dn;
  }
  const double dcost = cfg.w_ot / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    backward_pair(model, *batch[i].query, *batch[i].face, fw[i], dq[i], df[i], dcost);
  }
  return out;
}

double train_step(Model& model, AdamW& opt, std::span<const TrainPair> batch, const TrainConfig& cfg) {
  model.zero_grad();
  const BatchResult r = batch_loss(model, batch, cfg, true);
  if (!std::isfinite(r.loss)) fail(ErrorCode::kDiverged, "non-finite training loss");
  const auto params = model.params();
  opt.step(params, cfg.learning_rate, cfg.weight_decay);
  // catch it here rather than as a bad cost matrix on the next forward pass
  for (const Param* p : params) {
    for (double v : p->value.values()) {
      if (!std::isfinite(v)) fail(ErrorCode::kDiverged, "non-finite weight in " + p->name + " after update");
    }
  }
  return r.loss;
}

std::vector<TrainPair> make_pairs(std::span<const PreparedGraph> graphs,
                                  const std::vector<std::string>& subjects) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::map<std::string, std::vector<const PreparedGraph*>> faces;
  for (const auto& g : graphs) {
    if (g.graph->modality == Modality::kFace && wanted.count(g.graph->subject_id)) {
      faces[g.graph->subject_id].push_back(&g);
    }
  }
  std::vector<TrainPair> out;
  for (const auto& g : graphs) {
    if (g.graph->modality == Modality::kFace || !wanted.count(g.graph->subject_id)) continue;
    const auto it = faces.find(g.graph->subject_id);
    if (it == faces.end()) fail(ErrorCode::kArgument, "subject " + g.graph->subject_id + " has no face graph");
    const PreparedGraph* face = it->second.front();
    for (const auto* f : it->second) {
      if (g.graph->view && f->graph->view == g.graph->view) {
        face = f;
        break;
      }
    }
    out.push_back({&g, face, g.graph->subject_id});
  }
  return out;
}

std::vector<Modality> modalities_of(std::span<const ModalGraph> graphs) {
  std::set<Modality> seen;
  for (const auto& g : graphs) seen.insert(g.modality);
  seen.insert(Modality::kFace);
  return {seen.begin(), seen.end()};
}

TrainResult train_loop(std::span<const ModalGraph> graphs, const TrainConfig& cfg,
                       std::optional<SplitAssignment> split, std::size_t threads,
                       const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (!split) {
    std::vector<std::string> ids;
    for (const auto& g : graphs) ids.push_back(g.subject_id);
    split = split_dataset(ids, cfg.split_ratios, cfg.seed);
  }
  std::vector<PreparedGraph> prepared;
  prepared.reserve(graphs.size());
  for (const auto& g : graphs) {
    g.validate();
    prepared.emplace_back(g);
  }

  const auto train_subjects = subjects_in(*split, Split::kTrain);
  const auto val_subjects = subjects_in(*split, Split::kVal);
  const std::vector<TrainPair> pairs = make_pairs(prepared, train_subjects);
  if (pairs.empty()) fail(ErrorCode::kArgument, "training split is empty");
  if (std::set<std::string>(train_subjects.begin(), train_subjects.end()).size() < 2) {
    fail(ErrorCode::kArgument, "training split needs at least two subjects for negatives");
  }
  const QueryGallery val = select_query_gallery(graphs, val_subjects);
  const bool has_val = !val.queries.empty() && !val.gallery.empty();

  TrainResult result;
  result.split = *split;
  Model model = init_model(cfg.model, modalities_of(graphs), cfg.seed);
  result.best = model;
  AdamW opt;
  Rng rng = Rng::derive(cfg.seed, 3);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::array<std::size_t, 1> k1{1};

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<TrainPair> batch;
      std::set<std::string> ids;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(pairs[order[i]]);
        ids.insert(pairs[order[i]].subject_id);
      }
      if (ids.size() < 2) continue;  // no in-batch negative exists
      double loss = 0.0;
      try {
        loss = train_step(model, opt, batch, cfg);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDiverged) throw;
        fail(ErrorCode::kDiverged, std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(steps + 1));
      }
      loss_sum += loss;
      ++steps;
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    double score = -1.0;
    if (has_val) {
      const ScoreMatrix sm = score_paired(val.queries, val.gallery, model, threads);
      entry.val_recall_at_1 = compute_metrics(sm, k1).recall_at.at(1);
      score = entry.val_recall_at_1;
    } else {
      entry.val_recall_at_1 = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (score >= result.best_val_recall_at_1) {
      result.best = model;
      result.best_epoch = epoch;
      result.best_val_recall_at_1 = score;
    }
  }
  return result;
}

std::string epoch_log_csv(std::span<const EpochLog> log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_recall_at_1\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_recall_at_1);
    os << buf;
  }
  return os.str();
}

// ---- config (de)serialization ------------------------------------------------------

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"backbone", backbone_name(c.encoder.backbone)},
          {"layers", c.encoder.layers},
          {"hidden_dim", c.encoder.hidden_dim},
          {"out_dim", c.encoder.out_dim},
          {"heads", c.encoder.heads},
          {"edge_bias", c.encoder.edge_bias},
          {"edge_bias_scale", c.encoder.edge_bias_scale},
          {"query_extra_layers", c.query_extra_layers},
          {"shared_encoder", c.shared_encoder},
          {"ca_heads", c.ca_heads},
          {"sinkhorn_epsilon", c.align.epsilon},
          {"sinkhorn_iterations", c.align.iterations},
          {"lambda_blend", c.align.lambda_blend},
          {"ca", c.align.ca_on},
          {"ot", c.align.ot_on},
          {"bidirectional", c.align.bidirectional}};
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j = model_config_to_json(c.model);
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["margin"] = c.margin;
  j["seed"] = c.seed;
  j["w_ot"] = c.w_ot;
  j["split_train"] = c.split_ratios[0];
  j["split_val"] = c.split_ratios[1];
  j["split_test"] = c.split_ratios[2];
  return j;
}

namespace {

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kConfig, "config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    fail(ErrorCode::kConfig, "config key '" + key + "' must be a nonnegative integer");
  }
  return j.get<std::size_t>();
}

bool set_model_key(ModelConfig& c, const std::string& k, const nlohmann::json& v) {
  if (k == "backbone") c.encoder.backbone = parse_backbone(get_as<std::string>(v, k));
  else if (k == "layers") c.encoder.layers = get_count(v, k);
  else if (k == "hidden_dim") c.encoder.hidden_dim = get_count(v, k);
  else if (k == "out_dim") c.encoder.out_dim = get_count(v, k);
  else if (k == "heads") c.encoder.heads = get_count(v, k);
  else if (k == "edge_bias") c.encoder.edge_bias = get_as<bool>(v, k);
  else if (k == "edge_bias_scale") c.encoder.edge_bias_scale = get_as<double>(v, k);
  else if (k == "query_extra_layers") c.query_extra_layers = get_count(v, k);
  else if (k == "shared_encoder") c.shared_encoder = get_as<bool>(v, k);
  else if (k == "ca_heads") c.ca_heads = get_count(v, k);
  else if (k == "sinkhorn_epsilon") c.align.epsilon = get_as<double>(v, k);
  else if (k == "sinkhorn_iterations") c.align.iterations = static_cast<int>(get_count(v, k));
  else if (k == "lambda_blend") c.align.lambda_blend = get_as<double>(v, k);
  else if (k == "ca") c.align.ca_on = get_as<bool>(v, k);
  else if (k == "ot") c.align.ot_on = get_as<bool>(v, k);
  else if (k == "bidirectional") c.align.bidirectional = get_as<bool>(v, k);
  else return false;
  return true;
}

}  // namespace

bool set_train_config_key(TrainConfig& c, const std::string& k, const nlohmann::json& v) {
  if (set_model_key(c.model, k, v)) return true;
  if (k == "epochs") c.epochs = get_count(v, k);
  else if (k == "learning_rate") c.learning_rate = get_as<double>(v, k);
  else if (k == "weight_decay") c.weight_decay = get_as<double>(v, k);
  else if (k == "batch_size") c.batch_size = get_count(v, k);
  else if (k == "margin") c.margin = get_as<double>(v, k);
  else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
  else if (k == "w_ot") c.w_ot = get_as<double>(v, k);
  else if (k == "split_train") c.split_ratios[0] = get_as<double>(v, k);
  else if (k == "split_val") c.split_ratios[1] = get_as<double>(v, k);
  else if (k == "split_test") c.split_ratios[2] = get_as<double>(v, k);
  else return false;
  return true;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "model config must be a JSON object");
  ModelConfig c;
  for (const auto& [k, v] : j.items()) {
    if (!set_model_key(c, k, v)) fail(ErrorCode::kConfig, "unknown model config key '" + k + "'");
  }
  return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "train config must be a JSON object");
  TrainConfig c;
  for (const auto& [k, v] : j.items()) {
    if (!set_train_config_key(c, k, v)) fail(ErrorCode::kConfig, "unknown train config key '" + k + "'");
  }
  return c;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorCode::kCorruptCheckpoint, "cannot open " + (dir / "manifest.json").string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptCheckpoint, "manifest.json: " + std::string(e.what()));
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json m;
  m["format_version"] = kCheckpointFormatVersion;
  m["model"] = model_config_to_json(ckpt.model.config);
  nlohmann::json mods = nlohmann::json::array();
  for (Modality mod : ckpt.modalities) mods.push_back(modality_name(mod));
  m["modalities"] = mods;
  nlohmann::json params = nlohmann::json::array();
  std::string blob;
  for (const Param* p : ckpt.model.params()) {
    params.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}});
    for (double v : p->value.values()) put_f64(blob, v);
  }
  m["parameters"] = params;
  m["train"] = train_config_to_json(ckpt.train);
  m["metrics"] = ckpt.metrics;
  if (ckpt.split) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [id, sp] : *ckpt.split) s[id] = split_name(sp);
    m["splits"] = s;
  }

  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  mf << m.dump(2) << "\n";
  std::ofstream wf(dir / "weights.bin", std::ios::binary);
  wf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!mf || !wf) fail(ErrorCode::kIo, "failed writing checkpoint to " + dir.string());
}

void load_weights(Model& model, const std::filesystem::path& dir) {
  const nlohmann::json m = read_manifest(dir);
  const auto params = model.params();
  try {
    const auto& listed = m.at("parameters");
    if (listed.size() != params.size()) {
      fail(ErrorCode::kCorruptCheckpoint, "checkpoint lists " + std::to_string(listed.size()) +
                                              " parameters, model has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = listed[i].at("name").get<std::string>();
      const auto shape = listed[i].at("shape").get<std::vector<std::size_t>>();
      if (name != params[i]->name || shape.size() != 2 || shape[0] != params[i]->value.rows() ||
          shape[1] != params[i]->value.cols()) {
        fail(ErrorCode::kCorruptCheckpoint, "parameter " + std::to_string(i) + " (" + name +
                                                ") does not match the model's " + params[i]->name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptCheckpoint, "manifest.json: " + std::string(e.what()));
  }

  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) fail(ErrorCode::kCorruptCheckpoint, "cannot open " + (dir / "weights.bin").string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  for (const Param* p : params) expected += p->value.values().size();
  if (blob.size() != expected * 8) {
    fail(ErrorCode::kCorruptCheckpoint, "weights.bin holds " + std::to_string(blob.size()) + " bytes, expected " +
                                            std::to_string(expected * 8));
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  std::size_t off = 0;
  for (Param* p : params) {
    for (double& v : p->value.values()) {
      v = get_f64(bytes + off);
      off += 8;
    }
    p->zero_grad();
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json m = read_manifest(dir);
  Checkpoint ckpt;
  try {
    if (m.at("format_version").get<int>() != kCheckpointFormatVersion) {
      fail(ErrorCode::kCorruptCheckpoint, "unsupported checkpoint format version");
    }
    for (const auto& name : m.at("modalities")) ckpt.modalities.push_back(parse_modality(name.get<std::string>()));
    const ModelConfig cfg = model_config_from_json(m.at("model"));
    ckpt.train = train_config_from_json(m.at("train"));
    ckpt.metrics = m.value("metrics", nlohmann::json::object());
    if (m.contains("splits")) {
      SplitAssignment s;
      for (const auto& [id, v] : m.at("splits").items()) s[id] = parse_split(v.get<std::string>());
      ckpt.split = s;
    }
    ckpt.model = init_model(cfg, ckpt.modalities, 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kCorruptCheckpoint, "manifest.json: " + std::string(e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptCheckpoint) throw;
    fail(ErrorCode::kCorruptCheckpoint, "manifest.json: " + std::string(e.what()));
  }
  load_weights(ckpt.model, dir);
  return ckpt;
}

}  // namespace xmodal
