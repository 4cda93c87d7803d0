#include "xmodal/model.hpp"

#include "xmodal/errors.hpp"

namespace xmodal {

void ModelConfig::validate() const {
  encoder.validate();
  if (ca_heads == 0 || encoder.out_dim % ca_heads != 0) {
    fail(ErrorCode::kConfig, "cross-attention heads must divide out_dim");
  }
  if (!(align.epsilon > 0.0)) fail(ErrorCode::kConfig, "sinkhorn epsilon must be positive");
  if (align.iterations < 0) fail(ErrorCode::kConfig, "sinkhorn iterations must be nonnegative");
  if (shared_encoder && query_extra_layers > 0) {
    fail(ErrorCode::kConfig, "query_extra_layers requires separate encoders");
  }
}

EncoderConfig ModelConfig::encoder_for(Modality m) const {
  EncoderConfig c = encoder;
  if (m != Modality::kFace) c.layers += query_extra_layers;
  return c;
}

EncoderParams& Model::encoder(Modality m) {
  auto it = encoders.find(config.shared_encoder ? Modality::kFace : m);
  if (it == encoders.end()) {
    fail(ErrorCode::kConfig, "model has no encoder for modality " + std::string(modality_name(m)));
  }
  return it->second;
}

const EncoderParams& Model::encoder(Modality m) const {
  return const_cast<Model*>(this)->encoder(m);
}

bool Model::has_encoder(Modality m) const {
  return encoders.count(config.shared_encoder ? Modality::kFace : m) > 0;
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& [m, enc] : encoders)
    for (auto* p : enc.all()) out.push_back(p);
  for (auto* p : align.all()) out.push_back(p);
  return out;
}

std::vector<const Param*> Model::params() const {
  std::vector<const Param*> out;
  for (const auto& [m, enc] : encoders)
    for (const auto* p : enc.all()) out.push_back(p);
  for (const auto* p : align.all()) out.push_back(p);
  return out;
}

void Model::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

Model init_model(const ModelConfig& cfg, const std::vector<Modality>& modalities, std::uint64_t seed) {
  cfg.validate();
  Model model;
  model.config = cfg;
  if (cfg.shared_encoder) {
    Rng rng = Rng::derive(seed, 1);
    model.encoders.emplace(Modality::kFace, init_encoder(cfg.encoder, "enc.shared", rng));
  } else {
    for (Modality m : modalities) {
      if (model.encoders.count(m)) continue;
      Rng rng = Rng::derive(seed, 1);
      model.encoders.emplace(
          m, init_encoder(cfg.encoder_for(m), "enc." + std::string(modality_name(m)), rng));
    }
  }
  Rng rng = Rng::derive(seed, 2);
  model.align = init_cross_attention(cfg.encoder.out_dim, cfg.ca_heads, "align", rng);
  return model;
}

Matrix embed_nodes(const Model& model, const PreparedGraph& g, EncodeCache* cache) {
  const Modality m = g.graph->modality;
  return encode(g.graph->node_features, g.adjacency, model.encoder(m), model.config.encoder_for(m), cache);
}

AlignResult forward_pair(const Model& model, const PreparedGraph& query, const PreparedGraph& face,
                         PairForward* cache, const FrozenPlans* frozen) {
  const Matrix hq = embed_nodes(model, query, cache ? &cache->enc_query : nullptr);
  const Matrix hf = embed_nodes(model, face, cache ? &cache->enc_face : nullptr);
  AlignResult r = align_pair(hq, hf, model.align, model.config.align, cache ? &cache->align : nullptr, frozen);
  if (cache) cache->result = r;
  return r;
}

void backward_pair(Model& model, const PreparedGraph& query, const PreparedGraph& face,
                   const PairForward& cache, const Matrix& dz_query, const Matrix& dz_face,
                   double d_transport_cost) {
  const AlignGrads g = align_pair_backward(model.align, model.config.align, cache.align, dz_query,
                                           dz_face, d_transport_cost);
  const Modality mq = query.graph->modality, mf = face.graph->modality;
  encode_backward(query.adjacency, model.encoder(mq), model.config.encoder_for(mq), cache.enc_query, g.dhm);
  encode_backward(face.adjacency, model.encoder(mf), model.config.encoder_for(mf), cache.enc_face, g.dhn);
}

}  // namespace xmodal
