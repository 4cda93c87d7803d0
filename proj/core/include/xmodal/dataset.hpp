#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/image.hpp"
#include "xmodal/training.hpp"

namespace xmodal {

struct ManifestRow {
  std::string subject_id;
  Modality modality = Modality::kFace;
  std::optional<std::string> view;
  // Resolved against the manifest's directory when relative.
  std::filesystem::path path;
  std::optional<Split> split;
};

// CSV with header subject_id,modality,view,path[,split].
struct DatasetManifest {
  std::vector<ManifestRow> rows;
  bool has_split = false;

  static DatasetManifest read(const std::filesystem::path& csv);
  void write(const std::filesystem::path& csv) const;

  // Every subject needs at least one face row and one non-face row.
  void validate_pairs() const;
  // Per-subject split column; rows of one subject must agree.
  SplitAssignment split_assignment() const;
};

struct SynthConfig {
  std::size_t n_subjects = 40;
  std::uint64_t seed = 0;
  std::size_t image_size = 200;
  Modality second = Modality::kSkull;
};

struct SynthPair {
  ImageRecord face;
  ImageRecord other;
};

// Face: normalized sum of 4-8 random Gaussian blobs. Second modality: the
// inverted, normalized gradient magnitude of the same field plus Gaussian
// noise (sigma 0.05), clamped to [0, 1].
SynthPair synth_subject(std::size_t index, const SynthConfig& cfg);

// Writes face/<id>.png, <modality>/<id>.png and manifest.csv under out_dir.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, const SynthConfig& cfg);

inline constexpr double kSynthNoiseSigma = 0.05;

// CSV with header subject_id,split.
void write_splits_csv(const SplitAssignment& split, const std::filesystem::path& csv);
SplitAssignment read_splits_csv(const std::filesystem::path& csv);

}  // namespace xmodal
