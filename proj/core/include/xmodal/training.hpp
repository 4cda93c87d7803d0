#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmodal/model.hpp"

namespace xmodal {

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

using SplitAssignment = std::map<std::string, Split>;

// Subjects are sorted, shuffled by a seeded generator and cut into
// contiguous runs whose sizes follow largest-remainder rounding of the
// ratios (remainder ties go to the earlier split).
SplitAssignment split_dataset(std::vector<std::string> subject_ids, std::array<double, 3> ratios,
                              std::uint64_t seed);
std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios);
std::vector<std::string> subjects_in(const SplitAssignment& split, Split which);

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 1e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 16;
  double margin = 0.3;
  std::uint64_t seed = 0;
  // Weight of the auxiliary transport-cost term <T, C>; off by default.
  double w_ot = 0.0;
  std::array<double, 3> split_ratios{0.7, 0.2, 0.1};
  ModelConfig model;

  void validate() const;
};

// ---- triplet objective ------------------------------------------------------

// max(0, |a - p|^2 - |a - n|^2 + margin)
double triplet_loss(const Matrix& za, const Matrix& zp, const Matrix& zn, double margin);

struct TripletGrads {
  Matrix da, dp, dn;
};
// Subgradient; zero when the hinge is inactive or exactly at its boundary.
TripletGrads triplet_loss_backward(const Matrix& za, const Matrix& zp, const Matrix& zn, double margin);

// Per anchor: the positive is its own face embedding, the negative is the
// face embedding of a different subject closest to the anchor (ties by the
// lower batch index). Throws kMining when the batch holds one identity.
struct TripletBatch {
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};
TripletBatch mine_negatives(std::span<const Matrix> anchors, std::span<const Matrix> faces,
                            std::span<const std::string> subjects);

// ---- optimisation ------------------------------------------------------------

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  // p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * wd * p
  void step(std::span<Param* const> params, double lr, double weight_decay);
};

// One identity pair: query (skull/sketch) graph and its face.
struct TrainPair {
  const PreparedGraph* query = nullptr;
  const PreparedGraph* face = nullptr;
  std::string subject_id;
};

struct BatchResult {
  double loss = 0.0;
  TripletBatch triplets;
  std::vector<FrozenPlans> plans;
};

// Mean triplet loss over the batch (plus w_ot * mean <T, C>). Gradients are
// accumulated into the model; T is a constant in the backward pass. Passing
// `frozen` and `fixed` replays a previous evaluation with the same plans and
// negatives, which is what finite-difference checks need.
BatchResult batch_loss(Model& model, std::span<const TrainPair> batch, const TrainConfig& cfg,
                       bool backward, const std::vector<FrozenPlans>* frozen = nullptr,
                       const TripletBatch* fixed = nullptr);

// Zeroes gradients, runs batch_loss with backward and applies one update.
double train_step(Model& model, AdamW& opt, std::span<const TrainPair> batch, const TrainConfig& cfg);

// Pairs each non-face graph of the given subjects with a face of the same
// subject (same view when available, otherwise the first face).
std::vector<TrainPair> make_pairs(std::span<const PreparedGraph> graphs,
                                  const std::vector<std::string>& subjects);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_recall_at_1 = 0.0;  // NaN when the validation split is empty
};

struct TrainResult {
  Model best;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  double best_val_recall_at_1 = -1.0;
  std::vector<EpochLog> log;
  SplitAssignment split;
};

// Retains the parameters with the best validation Recall@1 (ties: later
// epoch). When `split` is absent the subjects are split by cfg.
TrainResult train_loop(std::span<const ModalGraph> graphs, const TrainConfig& cfg,
                       std::optional<SplitAssignment> split = std::nullopt, std::size_t threads = 1,
                       const std::function<void(const EpochLog&)>& on_epoch = {});

std::string epoch_log_csv(std::span<const EpochLog> log);

// ---- checkpoints -----------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
// Applies one flat key; false when the key is not a training/model key.
bool set_train_config_key(TrainConfig& cfg, const std::string& key, const nlohmann::json& value);

struct Checkpoint {
  Model model;
  TrainConfig train;
  std::vector<Modality> modalities;
  nlohmann::json metrics = nlohmann::json::object();
  std::optional<SplitAssignment> split;
};

// Writes <dir>/manifest.json and <dir>/weights.bin.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Loads weights into an existing model; names and shapes must match.
void load_weights(Model& model, const std::filesystem::path& dir);

std::vector<Modality> modalities_of(std::span<const ModalGraph> graphs);

}  // namespace xmodal
