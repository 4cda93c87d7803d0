// Microbenchmarks for the hot paths of one training step and one
// retrieval query. Inputs come from the synthetic generator at the default
// image size, so node counts match what the CLI sees.

#include <benchmark/benchmark.h>

#include "xmodal/align.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/encoders.hpp"
#include "xmodal/graph.hpp"
#include "xmodal/kernels.hpp"
#include "xmodal/slic.hpp"

namespace {

using namespace xmodal;

const SynthPair& sample_pair() {
  static const SynthPair pair = synth_subject(0, SynthConfig{});
  return pair;
}

const ModalGraph& sample_graph(bool face) {
  static const ModalGraph f = graph_from_image(sample_pair().face, GraphBuildConfig{}, "face");
  static const ModalGraph o = graph_from_image(sample_pair().other, GraphBuildConfig{}, "other");
  return face ? f : o;
}

Matrix random_cost(std::size_t n, std::size_t m, Rng& rng) {
  Matrix c(n, m);
  for (double& v : c.values()) v = rng.uniform(0.0, 2.0);
  return c;
}

void BM_Sinkhorn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const TransportProblem p{random_cost(n, n, rng), uniform_marginal(n), uniform_marginal(n), 0.1, 80};
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(p));
}
BENCHMARK(BM_Sinkhorn)->Arg(50)->Arg(150)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_Slic(benchmark::State& state) {
  const ImageRecord& img = sample_pair().face;
  const SlicParams params{static_cast<std::size_t>(state.range(0)), 10.0, 10};
  for (auto _ : state) benchmark::DoNotOptimize(slic_segment(img, params));
}
BENCHMARK(BM_Slic)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  EncoderConfig cfg;
  cfg.backbone = static_cast<Backbone>(state.range(0));
  Rng rng(2);
  const EncoderParams p = init_encoder(cfg, "enc", rng);
  const ModalGraph& g = sample_graph(true);
  const Adjacency adj = Adjacency::from_graph(g);
  state.SetLabel(std::string(backbone_name(cfg.backbone)) + ", " + std::to_string(g.n_nodes()) + " nodes");
  for (auto _ : state) benchmark::DoNotOptimize(encode(g.node_features, adj, p, cfg));
}
BENCHMARK(BM_Encode)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_AlignPair(benchmark::State& state) {
  EncoderConfig ecfg;
  Rng rng(3);
  const EncoderParams enc = init_encoder(ecfg, "enc", rng);
  const CrossAttentionParams ca = init_cross_attention(ecfg.out_dim, 4, "align", rng);
  const Matrix hm = encode(sample_graph(false), enc, ecfg);
  const Matrix hn = encode(sample_graph(true), enc, ecfg);
  AlignConfig cfg;
  cfg.ca_on = state.range(0) != 0;
  cfg.ot_on = state.range(0) != 0;
  state.SetLabel(cfg.ca_on ? "ca+ot" : "ca/ot off");
  for (auto _ : state) benchmark::DoNotOptimize(align_pair(hm, hn, ca, cfg));
}
BENCHMARK(BM_AlignPair)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace
// the packaged benchmark_main archive is LTO bytecode from another GCC
BENCHMARK_MAIN();
