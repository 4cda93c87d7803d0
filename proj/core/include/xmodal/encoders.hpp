#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/graph.hpp"
#include "xmodal/kernels.hpp"

namespace xmodal {

enum class Backbone { kGcn, kGat, kSage, kGraphTransformer };

std::string_view backbone_name(Backbone b);
Backbone parse_backbone(std::string_view name);

struct EncoderConfig {
  Backbone backbone = Backbone::kGraphTransformer;
  std::size_t layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 64;
  std::size_t heads = 4;
  // GraphTransformer only: subtract edge_bias_scale * edge_dist from scores.
  bool edge_bias = false;
  double edge_bias_scale = 1.0;

  void validate() const;
  std::size_t in_width(std::size_t layer) const;
  std::size_t out_width(std::size_t layer) const;
};

// Neighbour lists (sorted, no self entries) with matching edge distances.
struct Adjacency {
  std::vector<std::vector<std::uint32_t>> neighbors;
  std::vector<std::vector<double>> dist;

  std::size_t size() const { return neighbors.size(); }
  static Adjacency from_graph(const ModalGraph& g);
  static Adjacency from_edges(std::size_t n, const std::vector<Edge>& edges,
                              const std::vector<double>& edge_dist = {});
};

// ---- GCN: D^-1/2 (A + I) D^-1/2 H W --------------------------------------

Matrix gcn_layer(const Matrix& h, const Adjacency& adj, const Matrix& w);

struct GcnGrads {
  Matrix dh;
  Matrix dw;
};
GcnGrads gcn_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w,
                            const Matrix& dout);

// ---- GAT ------------------------------------------------------------------

inline constexpr double kGatLeakySlope = 0.2;

// Attention over N(i) + {i}; entry t of node i's set is i itself for t = 0,
// then the sorted neighbours.
struct GatCache {
  Matrix wh;
  std::vector<std::size_t> offsets;  // size n + 1
  std::vector<double> pre;           // heads * offsets[n], scores before LeakyReLU
  std::vector<double> alpha;         // heads * offsets[n]
};

// attn is heads x (2 * head_dim): [a_src | a_dst] per head.
Matrix gat_layer(const Matrix& h, const Adjacency& adj, const Matrix& w, const Matrix& attn,
                 std::size_t heads, GatCache* cache = nullptr);

struct GatGrads {
  Matrix dh;
  Matrix dw;
  Matrix dattn;
};
GatGrads gat_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w,
                            const Matrix& attn, std::size_t heads, const GatCache& cache,
                            const Matrix& dout);

// ---- GraphSAGE (mean aggregator) ------------------------------------------

Matrix sage_layer(const Matrix& h, const Adjacency& adj, const Matrix& w_self,
                  const Matrix& w_neigh);

struct SageGrads {
  Matrix dh;
  Matrix dw_self;
  Matrix dw_neigh;
};
SageGrads sage_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w_self,
                              const Matrix& w_neigh, const Matrix& dout);

// ---- GraphTransformer -----------------------------------------------------

struct TransformerWeights {
  const Matrix& wq;
  const Matrix& wk;
  const Matrix& wv;
  const Matrix& wo;
};

struct TransformerCache {
  Matrix q, k, v, o;
  std::vector<std::size_t> offsets;
  std::vector<double> alpha;  // heads * offsets[n]
};

// edge_bias_scale = 0 disables the distance bias.
Matrix graph_transformer_layer(const Matrix& h, const Adjacency& adj, const TransformerWeights& wts,
                               std::size_t heads, double edge_bias_scale = 0.0,
                               TransformerCache* cache = nullptr);

struct TransformerGrads {
  Matrix dh, dwq, dwk, dwv, dwo;
};
TransformerGrads graph_transformer_layer_backward(const Matrix& h, const Adjacency& adj,
                                                  const TransformerWeights& wts,
                                                  std::size_t heads, const TransformerCache& cache,
                                                  const Matrix& dout);

// ---- stacked encoder ------------------------------------------------------

struct EncoderLayerParams {
  // gcn: {W}; gat: {W, attn}; sage: {W_self, W_neigh};
  // graph_transformer: {W_q, W_k, W_v, W_o}
  std::vector<Param> tensors;
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  void zero_grad();
};

// Glorot-uniform weights drawn from rng in layer order.
EncoderParams init_encoder(const EncoderConfig& cfg, const std::string& prefix, Rng& rng);

struct EncodeCache {
  std::vector<Matrix> inputs;  // layer inputs (post-activation)
  std::vector<Matrix> outputs; // layer outputs (pre-activation)
  std::vector<GatCache> gat;
  std::vector<TransformerCache> transformer;
};

// Stacked layers, ReLU between layers, none after the last.
Matrix encode(const ModalGraph& graph, const EncoderParams& params, const EncoderConfig& cfg,
              EncodeCache* cache = nullptr);
Matrix encode(const Matrix& features, const Adjacency& adj, const EncoderParams& params,
              const EncoderConfig& cfg, EncodeCache* cache = nullptr);

// Accumulates parameter gradients; returns the gradient w.r.t. the features.
Matrix encode_backward(const Adjacency& adj, EncoderParams& params, const EncoderConfig& cfg,
                       const EncodeCache& cache, const Matrix& dout);

}  // namespace xmodal
