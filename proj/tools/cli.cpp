#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xmodal/config.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/errors.hpp"
#include "xmodal/graph.hpp"
#include "xmodal/retrieval.hpp"
#include "xmodal/slic.hpp"
#include "xmodal/training.hpp"

namespace xmodal::cli {
namespace fs = std::filesystem;

namespace {

// Raw flag values for every config key, converted once the command is known.
struct Flags {
  std::string config_path;
  std::map<std::string, std::string> values;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f)
    if (c == '_') c = '-';
  return "--" + f;
}

nlohmann::json convert_flag(const std::string& key, const std::string& text, const nlohmann::json& like) {
  auto bad = [&]() -> nlohmann::json {
    fail(ErrorCode::kConfig, flag_name(key) + ": invalid value '" + text + "'");
  };
  try {
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "on") return true;
      if (text == "false" || text == "0" || text == "off") return false;
      return bad();
    }
    if (like.is_number_integer()) {
      if (text.empty() || text[0] == '-') return bad();
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      return used == text.size() ? nlohmann::json(v) : bad();
    }
    if (like.is_number()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      return used == text.size() ? nlohmann::json(v) : bad();
    }
    if (like.is_array()) {
      nlohmann::json arr = nlohmann::json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        if (item.empty() || item[0] == '-') return bad();
        const unsigned long long v = std::stoull(item, &used);
        if (used != item.size()) return bad();
        arr.push_back(v);
      }
      return arr;
    }
  } catch (const std::logic_error&) {
    return bad();
  }
  return text;
}

void add_config_flags(CLI::App& cmd, Flags& flags) {
  cmd.add_option("--config", flags.config_path, "Flat JSON config file");
  const nlohmann::json defaults = RunConfig().to_json();
  for (const auto& [key, value] : defaults.items()) {
    (void)value;
    cmd.add_option(flag_name(key), flags.values[key])->description("config key " + key);
  }
}

RunConfig resolve_config(const Flags& flags, CLI::App& cmd) {
  RunConfig cfg;
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) fail(ErrorCode::kConfig, "cannot open config " + flags.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfig, flags.config_path + ": " + e.what());
    }
    cfg.apply(j);
  }
  const nlohmann::json defaults = RunConfig().to_json();
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [key, text] : flags.values) {
    if (cmd.count(flag_name(key)) == 0) continue;
    overrides[key] = convert_flag(key, text, defaults.at(key));
  }
  cfg.apply(overrides);
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  write_text(out / "run_config.json", cfg.to_json().dump(2) + "\n");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string roc_csv(const std::vector<RocPoint>& roc) {
  std::string s = "threshold,tpr,fpr\n";
  for (const auto& p : roc) s += fmt_double(p.threshold) + "," + fmt_double(p.tpr) + "," + fmt_double(p.fpr) + "\n";
  return s;
}

std::vector<std::string> all_subjects(std::span<const ModalGraph> graphs) {
  std::set<std::string> ids;
  for (const auto& g : graphs) ids.insert(g.subject_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> eval_subjects(const std::string& which, std::span<const ModalGraph> graphs,
                                       const std::optional<SplitAssignment>& split) {
  if (which == "all") return all_subjects(graphs);
  if (!split) fail(ErrorCode::kArgument, "no split assignment available; pass --splits or use --split all");
  return subjects_in(*split, parse_split(which));
}

std::string metrics_header(const std::vector<std::size_t>& ks) {
  std::string h;
  for (std::size_t k : ks) h += ",recall_at_" + std::to_string(k);
  for (std::size_t k : ks) h += ",map_at_" + std::to_string(k);
  return h + ",roc_auc";
}

std::string metrics_row(const MetricsReport& r, const std::vector<std::size_t>& ks) {
  std::string s;
  for (std::size_t k : ks) s += "," + fmt_double(r.recall_at.at(k));
  for (std::size_t k : ks) s += "," + fmt_double(r.map_at.at(k));
  return s + "," + fmt_double(r.roc_auc);
}

struct TrainedRun {
  TrainResult result;
  MetricsReport test;
};

// Train on the split, then evaluate the retained model on cfg.split.
TrainedRun train_and_eval(std::span<const ModalGraph> graphs, const RunConfig& cfg,
                          std::optional<SplitAssignment> split, const std::string& label) {
  TrainedRun run;
  run.result = train_loop(graphs, cfg.train, split, cfg.threads, [&](const EpochLog& e) {
    std::fprintf(stderr, "%sepoch %zu loss %.6f val_r1 %.4f\n", label.c_str(), e.epoch, e.train_loss,
                 e.val_recall_at_1);
  });
  const auto subjects = eval_subjects(cfg.split, graphs, run.result.split);
  run.test = evaluate(graphs, subjects, run.result.best, cfg.ks, cfg.mode, cfg.relevance, cfg.threads);
  return run;
}

// ---- commands -------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, const fs::path& out) {
  SynthConfig sc;
  sc.n_subjects = cfg.subjects;
  sc.seed = cfg.train.seed;
  sc.image_size = cfg.image_size;
  sc.second = parse_modality(cfg.synth_modality);
  const DatasetManifest m = synth_dataset(out, sc);
  echo_config(cfg, out);
  std::printf("wrote %zu images for %zu subjects to %s\n", m.rows.size(), cfg.subjects, out.string().c_str());
}

void cmd_segment(const RunConfig& cfg, const std::string& image, const fs::path& out) {
  const ImageRecord img = load_image(image, {cfg.image_size, cfg.image_size});
  const SegmentationResult seg = slic_segment(img, cfg.slic);
  ensure_dir(out);
  nlohmann::json j;
  j["width"] = seg.width;
  j["height"] = seg.height;
  j["n_segments"] = seg.n_segments();
  nlohmann::json segs = nlohmann::json::array();
  for (std::size_t i = 0; i < seg.segments.size(); ++i) {
    const auto& s = seg.segments[i];
    segs.push_back({{"label", i},
                    {"area", s.area},
                    {"centroid_row", s.centroid_row},
                    {"centroid_col", s.centroid_col},
                    {"mean_intensity", s.mean_intensity},
                    {"std_intensity", s.std_intensity}});
  }
  j["segments"] = segs;
  write_text(out / "segments.json", j.dump(2) + "\n");
  ImageRecord overlay = img;
  for (std::size_t r = 0; r < seg.height; ++r) {
    for (std::size_t c = 0; c < seg.width; ++c) {
      const auto l = seg.label_at(r, c);
      const bool edge = (c + 1 < seg.width && seg.label_at(r, c + 1) != l) ||
                        (r + 1 < seg.height && seg.label_at(r + 1, c) != l);
      if (edge) overlay.at(r, c) = 1.0;
    }
  }
  save_png(overlay, (out / "boundaries.png").string());
  echo_config(cfg, out);
  std::printf("%zu segments\n", seg.n_segments());
}

void cmd_graph(const RunConfig& cfg, const std::string& manifest_path, const fs::path& out) {
  const DatasetManifest manifest = DatasetManifest::read(manifest_path);
  manifest.validate_pairs();
  const std::vector<ModalGraph> graphs = build_graphs(manifest, cfg);
  ensure_dir(out);
  write_graph_store(graphs, (out / "graphs.jsonl").string());
  if (manifest.has_split) write_splits_csv(manifest.split_assignment(), out / "splits.csv");

  std::map<std::string, std::vector<std::size_t>> nodes;
  for (const auto& g : graphs) nodes[std::string(modality_name(g.modality))].push_back(g.n_nodes());
  nlohmann::json stats;
  stats["n_graphs"] = graphs.size();
  for (const auto& [mod, counts] : nodes) {
    double mean = 0.0;
    for (auto n : counts) mean += static_cast<double>(n);
    mean /= static_cast<double>(counts.size());
    stats["nodes"][mod] = {{"count", counts.size()},
                           {"min", *std::min_element(counts.begin(), counts.end())},
                           {"max", *std::max_element(counts.begin(), counts.end())},
                           {"mean", mean}};
  }
  write_text(out / "graph_stats.json", stats.dump(2) + "\n");
  echo_config(cfg, out);
  std::printf("%s\n", stats.dump().c_str());
}

std::optional<SplitAssignment> splits_from(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return read_splits_csv(path);
}

void cmd_train(const RunConfig& cfg, const std::string& graphs_path, const std::string& splits_path,
               const fs::path& out) {
  const auto graphs = read_graph_store(graphs_path);
  const TrainResult r = train_loop(graphs, cfg.train, splits_from(splits_path), cfg.threads,
                                   [](const EpochLog& e) {
                                     std::fprintf(stderr, "epoch %zu loss %.6f val_r1 %.4f\n", e.epoch,
                                                  e.train_loss, e.val_recall_at_1);
                                   });
  Checkpoint ckpt{r.best, cfg.train, modalities_of(graphs), nlohmann::json::object(), r.split};
  ckpt.metrics["best_epoch"] = r.best_epoch;
  ckpt.metrics["best_val_recall_at_1"] = r.best_val_recall_at_1;
  save_checkpoint(ckpt, out);
  write_text(out / "epoch_log.csv", epoch_log_csv(r.log));
  write_splits_csv(r.split, out / "splits.csv");
  echo_config(cfg, out);
  std::printf("best epoch %zu, val recall@1 %.4f\n", r.best_epoch, r.best_val_recall_at_1);
}

void cmd_eval(const RunConfig& cfg, const std::string& graphs_path, const std::string& checkpoint,
              const std::string& splits_path, const fs::path& out) {
  const auto graphs = read_graph_store(graphs_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  std::optional<SplitAssignment> split = splits_from(splits_path);
  if (!split) split = ckpt.split;
  const auto subjects = eval_subjects(cfg.split, graphs, split);
  const MetricsReport report =
      evaluate(graphs, subjects, ckpt.model, cfg.ks, cfg.mode, cfg.relevance, cfg.threads);
  ensure_dir(out);
  write_text(out / "metrics.json", to_json(report).dump(2) + "\n");
  write_text(out / "roc.csv", roc_csv(report.roc));
  echo_config(cfg, out);
  std::printf("%s\n", to_json(report).dump().c_str());
}

void cmd_query(const RunConfig& cfg, const std::string& checkpoint, const std::string& image,
               const std::string& modality, const std::string& gallery_path, const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  DatasetManifest gallery = DatasetManifest::read(gallery_path);
  std::erase_if(gallery.rows, [](const ManifestRow& r) { return r.modality != Modality::kFace; });
  if (gallery.rows.empty()) fail(ErrorCode::kArgument, "gallery manifest has no face rows");
  const Modality qm = parse_modality(modality);
  if (qm == Modality::kFace) fail(ErrorCode::kArgument, "query modality must be skull or sketch");

  const bool has_sketch = qm == Modality::kSketch;
  ImageRecord img = load_image(image, {cfg.image_size, cfg.image_size});
  img.modality = qm;
  img.subject_id = "query";
  const ModalGraph qg = graph_from_image(img, cfg.graph_config(qm, has_sketch), "query");
  RunConfig gcfg = cfg;
  if (has_sketch && cfg.knn_k == 0 && cfg.knn_k_face == 0) gcfg.knn_k_face = 12;
  const auto faces = build_graphs(gallery, gcfg);

  std::vector<const ModalGraph*> qs{&qg}, gs;
  for (const auto& g : faces) gs.push_back(&g);
  const ScoreMatrix sm = score(qs, gs, ckpt.model, cfg.mode, cfg.threads);
  const auto order = ranked_order(sm.scores.row(0));
  std::string csv = "rank,gallery_id,subject_id,score\n";
  for (std::size_t i = 0; i < std::min(cfg.topk, order.size()); ++i) {
    const auto& g = sm.gallery[order[i]];
    csv += std::to_string(i + 1) + "," + g.id + "," + g.subject_id + "," + fmt_double(sm.scores(0, order[i])) + "\n";
  }
  ensure_dir(out);
  write_text(out / "ranked.csv", csv);
  echo_config(cfg, out);
  std::fputs(csv.c_str(), stdout);
}

void cmd_sweep_k(const RunConfig& cfg, const std::string& manifest_path, const fs::path& out) {
  const DatasetManifest manifest = DatasetManifest::read(manifest_path);
  manifest.validate_pairs();
  std::optional<SplitAssignment> split;
  if (manifest.has_split) split = manifest.split_assignment();
  std::string table = "k" + metrics_header(cfg.ks) + "\n";
  for (std::size_t k : cfg.k_list) {
    RunConfig kc = cfg;
    kc.knn_k = k;
    kc.knn_k_face = kc.knn_k_skull = kc.knn_k_sketch = 0;
    const auto graphs = build_graphs(manifest, kc);
    const TrainedRun run = train_and_eval(graphs, kc, split, "k=" + std::to_string(k) + " ");
    const fs::path sub = out / ("k" + std::to_string(k));
    ensure_dir(sub);
    write_text(sub / "metrics.json", to_json(run.test).dump(2) + "\n");
    write_text(sub / "epoch_log.csv", epoch_log_csv(run.result.log));
    table += std::to_string(k) + metrics_row(run.test, cfg.ks) + "\n";
  }
  ensure_dir(out);
  write_text(out / "sweep_k.csv", table);
  echo_config(cfg, out);
  std::fputs(table.c_str(), stdout);
}

void cmd_ablate(const RunConfig& cfg, const std::string& graphs_path, const std::string& splits_path,
                const fs::path& out) {
  const auto graphs = read_graph_store(graphs_path);
  const auto split = splits_from(splits_path);
  std::string table = "ca,ot" + metrics_header(cfg.ks) + "\n";
  nlohmann::json rows = nlohmann::json::array();
  for (bool ca : {true, false}) {
    for (bool ot : {true, false}) {
      RunConfig ac = cfg;
      ac.train.model.align.ca_on = ca;
      ac.train.model.align.ot_on = ot;
      const std::string label = std::string("ca=") + (ca ? "on" : "off") + " ot=" + (ot ? "on" : "off") + " ";
      const TrainedRun run = train_and_eval(graphs, ac, split, label);
      table += std::string(ca ? "on" : "off") + "," + (ot ? "on" : "off") + metrics_row(run.test, cfg.ks) + "\n";
      nlohmann::json row = to_json(run.test);
      row["ca"] = ca;
      row["ot"] = ot;
      rows.push_back(row);
    }
  }
  ensure_dir(out);
  write_text(out / "ablation.csv", table);
  write_text(out / "ablation.json", rows.dump(2) + "\n");
  echo_config(cfg, out);
  std::fputs(table.c_str(), stdout);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Cross-modal superpixel-graph retrieval"};
  app.require_subcommand(1);
  Flags flags;
  std::string out, manifest, graphs, checkpoint, splits, image, gallery, modality = "skull";

  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired-modality dataset");
  auto* segment = app.add_subcommand("segment", "Run SLIC on one image");
  auto* graph = app.add_subcommand("graph", "Build superpixel graphs for a manifest");
  auto* train = app.add_subcommand("train", "Train on a graph store");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  auto* query = app.add_subcommand("query", "Rank a face gallery for one query image");
  auto* sweep = app.add_subcommand("sweep-k", "Train and evaluate per KNN k");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the CA/OT ablation grid");

  for (auto* cmd : {synth, segment, graph, train, eval, query, sweep, ablate}) {
    add_config_flags(*cmd, flags);
    cmd->add_option("--out", out, "Output directory")->required();
  }
  segment->add_option("--image", image, "Input image")->required();
  graph->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  sweep->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  for (auto* cmd : {train, eval, ablate}) {
    cmd->add_option("--graphs", graphs, "Graph store (JSONL)")->required();
    cmd->add_option("--splits", splits, "Split CSV (subject_id,split)");
  }
  for (auto* cmd : {eval, query}) cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  query->add_option("--image", image, "Query image")->required();
  query->add_option("--modality", modality, "Query modality (skull or sketch)");
  query->add_option("--gallery", gallery, "Gallery manifest CSV")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_code_name(ErrorCode::kArgument) << ": " << e.what() << "\n";
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig cfg = resolve_config(flags, *cmd);
    if (cmd == synth) cmd_synth(cfg, out);
    else if (cmd == segment) cmd_segment(cfg, image, out);
    else if (cmd == graph) cmd_graph(cfg, manifest, out);
    else if (cmd == train) cmd_train(cfg, graphs, splits, out);
    else if (cmd == eval) cmd_eval(cfg, graphs, checkpoint, splits, out);
    else if (cmd == query) cmd_query(cfg, checkpoint, image, modality, gallery, out);
    else if (cmd == sweep) cmd_sweep_k(cfg, manifest, out);
    else if (cmd == ablate) cmd_ablate(cfg, graphs, splits, out);
  } catch (const Error& e) {
    std::cerr << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << error_code_name(ErrorCode::kIo) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace xmodal::cli
