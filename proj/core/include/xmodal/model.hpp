#pragma once

#include <map>
#include <vector>

#include "xmodal/align.hpp"
#include "xmodal/encoders.hpp"
#include "xmodal/graph.hpp"

namespace xmodal {

struct ModelConfig {
  EncoderConfig encoder;
  // Additional hidden layers on every non-face encoder.
  std::size_t query_extra_layers = 0;
  // One encoder instance for all modalities.
  bool shared_encoder = false;
  std::size_t ca_heads = 4;
  AlignConfig align;

  void validate() const;
  EncoderConfig encoder_for(Modality m) const;
};

// Per-modality encoders plus the cross-attention/normalization parameters
// shared by both directions of a pair and across modalities.
struct Model {
  ModelConfig config;
  std::map<Modality, EncoderParams> encoders;
  CrossAttentionParams align;

  EncoderParams& encoder(Modality m);
  const EncoderParams& encoder(Modality m) const;
  bool has_encoder(Modality m) const;

  // Encoders in modality order, then alignment parameters.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void zero_grad();
};

// All modality encoders start from the same draw (same seed stream), then
// train independently. Alignment parameters use a separate stream.
Model init_model(const ModelConfig& cfg, const std::vector<Modality>& modalities, std::uint64_t seed);

// A graph with its adjacency built once.
struct PreparedGraph {
  const ModalGraph* graph = nullptr;
  Adjacency adjacency;

  explicit PreparedGraph(const ModalGraph& g) : graph(&g), adjacency(Adjacency::from_graph(g)) {}
};

Matrix embed_nodes(const Model& model, const PreparedGraph& g, EncodeCache* cache = nullptr);

// Cached forward pass of one (query, face) pair.
struct PairForward {
  EncodeCache enc_query;
  EncodeCache enc_face;
  AlignCache align;
  AlignResult result;
};

AlignResult forward_pair(const Model& model, const PreparedGraph& query, const PreparedGraph& face,
                         PairForward* cache = nullptr, const FrozenPlans* frozen = nullptr);

// Accumulates gradients of all parameters touched by the pair.
void backward_pair(Model& model, const PreparedGraph& query, const PreparedGraph& face,
                   const PairForward& cache, const Matrix& dz_query, const Matrix& dz_face,
                   double d_transport_cost = 0.0);

}  // namespace xmodal
