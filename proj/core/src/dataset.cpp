#include "xmodal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "xmodal/errors.hpp"
#include "xmodal/matrix.hpp"

namespace xmodal {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

DatasetManifest DatasetManifest::read(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) fail(ErrorCode::kIo, "cannot open manifest " + csv.string());
  const std::filesystem::path base = csv.parent_path();
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return csv.string() + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      const auto head = split_csv(line);
      std::vector<std::string> h;
      for (const auto& f : head) h.push_back(trim(f));
      const std::vector<std::string> want{"subject_id", "modality", "view", "path"};
      if (h.size() < 4 || !std::equal(want.begin(), want.end(), h.begin()) ||
          (h.size() == 5 && h[4] != "split") || h.size() > 5) {
        fail(ErrorCode::kParse, where() + "header must be subject_id,modality,view,path[,split]");
      }
      m.has_split = h.size() == 5;
      continue;
    }
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != (m.has_split ? 5u : 4u)) fail(ErrorCode::kParse, where() + "wrong number of fields");
    ManifestRow row;
    row.subject_id = trim(f[0]);
    if (row.subject_id.empty()) fail(ErrorCode::kParse, where() + "empty subject_id");
    try {
      row.modality = parse_modality(trim(f[1]));
      if (m.has_split) row.split = parse_split(trim(f[4]));
    } catch (const Error& e) {
      fail(ErrorCode::kParse, where() + e.what());
    }
    if (const auto v = trim(f[2]); !v.empty()) row.view = v;
    const std::filesystem::path p = trim(f[3]);
    if (p.empty()) fail(ErrorCode::kParse, where() + "empty path");
    row.path = p.is_absolute() ? p : base / p;
    m.rows.push_back(std::move(row));
  }
  if (lineno == 0) fail(ErrorCode::kParse, csv.string() + ": empty manifest");
  return m;
}

void DatasetManifest::write(const std::filesystem::path& csv) const {
  std::ofstream out(csv);
  if (!out) fail(ErrorCode::kIo, "cannot write manifest " + csv.string());
  const std::filesystem::path base = csv.parent_path();
  out << "subject_id,modality,view,path" << (has_split ? ",split" : "") << "\n";
  for (const auto& r : rows) {
    const auto rel = r.path.lexically_relative(base);
    out << r.subject_id << "," << modality_name(r.modality) << "," << r.view.value_or("") << ","
        << (rel.empty() ? r.path : rel).generic_string();
    if (has_split) out << "," << split_name(r.split.value_or(Split::kTrain));
    out << "\n";
  }
}

void DatasetManifest::validate_pairs() const {
  std::map<std::string, std::pair<int, int>> counts;
  for (const auto& r : rows) {
    auto& c = counts[r.subject_id];
    (r.modality == Modality::kFace ? c.first : c.second)++;
  }
  for (const auto& [id, c] : counts) {
    if (c.first == 0) fail(ErrorCode::kArgument, "subject " + id + " has no face image");
    if (c.second == 0) fail(ErrorCode::kArgument, "subject " + id + " has no skull/sketch image");
  }
}

SplitAssignment DatasetManifest::split_assignment() const {
  if (!has_split) fail(ErrorCode::kArgument, "manifest has no split column");
  SplitAssignment out;
  for (const auto& r : rows) {
    const auto [it, inserted] = out.emplace(r.subject_id, *r.split);
    if (!inserted && it->second != *r.split) {
      fail(ErrorCode::kArgument, "subject " + r.subject_id + " appears in more than one split");
    }
  }
  return out;
}

SynthPair synth_subject(std::size_t index, const SynthConfig& cfg) {
  if (cfg.image_size < 8) fail(ErrorCode::kArgument, "synthetic image size must be at least 8");
  const std::size_t n = cfg.image_size;
  const double size = static_cast<double>(n);
  Rng rng = Rng::derive(cfg.seed, 1000 + index);
  const std::size_t blobs = 4 + static_cast<std::size_t>(rng.below(5));
  struct Blob {
    double amp, r, c, sigma;
  };
  std::vector<Blob> field;
  for (std::size_t b = 0; b < blobs; ++b) {
    field.push_back({rng.uniform(0.4, 1.0), rng.uniform(0.15, 0.85) * size, rng.uniform(0.15, 0.85) * size,
                     rng.uniform(0.06, 0.16) * size});
  }

  SynthPair out{ImageRecord(n, n), ImageRecord(n, n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double v = 0.0;
      for (const auto& b : field) {
        const double dr = static_cast<double>(r) - b.r, dc = static_cast<double>(c) - b.c;
        v += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      out.face.at(r, c) = v;
    }
  }
  const double peak = *std::max_element(out.face.pixels.begin(), out.face.pixels.end());
  for (double& v : out.face.pixels) v /= peak;

  const std::vector<double> grad = sobel_magnitude(out.face);
  const double gmax = std::max(*std::max_element(grad.begin(), grad.end()), 1e-12);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    out.other.pixels[i] = std::clamp(1.0 - grad[i] / gmax + kSynthNoiseSigma * rng.normal(), 0.0, 1.0);
  }

  char id[32];
  std::snprintf(id, sizeof(id), "s%03zu", index);
  out.face.subject_id = out.other.subject_id = id;
  out.face.modality = Modality::kFace;
  out.other.modality = cfg.second;
  return out;
}

DatasetManifest synth_dataset(const std::filesystem::path& out_dir, const SynthConfig& cfg) {
  if (cfg.n_subjects < 3) fail(ErrorCode::kArgument, "synth needs at least 3 subjects");
  if (cfg.second == Modality::kFace) fail(ErrorCode::kArgument, "second modality must not be face");
  const std::string other_dir(modality_name(cfg.second));
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "face", ec);
  std::filesystem::create_directories(out_dir / other_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  DatasetManifest m;
  for (std::size_t i = 0; i < cfg.n_subjects; ++i) {
    const SynthPair p = synth_subject(i, cfg);
    const auto face_path = out_dir / "face" / (p.face.subject_id + ".png");
    const auto other_path = out_dir / other_dir / (p.other.subject_id + ".png");
    save_png(p.face, face_path.string());
    save_png(p.other, other_path.string());
    m.rows.push_back({p.face.subject_id, Modality::kFace, std::nullopt, face_path, std::nullopt});
    m.rows.push_back({p.other.subject_id, cfg.second, std::nullopt, other_path, std::nullopt});
  }
  m.write(out_dir / "manifest.csv");
  return m;
}

void write_splits_csv(const SplitAssignment& split, const std::filesystem::path& csv) {
  std::ofstream out(csv);
  if (!out) fail(ErrorCode::kIo, "cannot write " + csv.string());
  out << "subject_id,split\n";
  for (const auto& [id, s] : split) out << id << "," << split_name(s) << "\n";
}

SplitAssignment read_splits_csv(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) fail(ErrorCode::kIo, "cannot open " + csv.string());
  SplitAssignment out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = csv.string() + ":" + std::to_string(lineno) + ": ";
    if (lineno == 1) {
      if (trim(line) != "subject_id,split") fail(ErrorCode::kParse, where + "header must be subject_id,split");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) fail(ErrorCode::kParse, where + "wrong number of fields");
    try {
      out[trim(f[0])] = parse_split(trim(f[1]));
    } catch (const Error& e) {
      fail(ErrorCode::kParse, where + e.what());
    }
  }
  return out;
}

}  // namespace xmodal
