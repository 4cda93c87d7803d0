#include "xmodal/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "xmodal/errors.hpp"

namespace xmodal {

std::string_view backbone_name(Backbone b) {
  switch (b) {
    case Backbone::kGcn:
      return "gcn";
    case Backbone::kGat:
      return "gat";
    case Backbone::kSage:
      return "sage";
    case Backbone::kGraphTransformer:
      return "graph_transformer";
  }
  return "gcn";
}

Backbone parse_backbone(std::string_view name) {
  if (name == "gcn") return Backbone::kGcn;
  if (name == "gat") return Backbone::kGat;
  if (name == "sage") return Backbone::kSage;
  if (name == "graph_transformer") return Backbone::kGraphTransformer;
  fail(ErrorCode::kConfig, "unknown backbone '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (layers < 1) fail(ErrorCode::kConfig, "encoder needs at least one layer");
  if (hidden_dim == 0 || out_dim == 0) fail(ErrorCode::kConfig, "encoder widths must be positive");
  const bool attention = backbone == Backbone::kGat || backbone == Backbone::kGraphTransformer;
  if (attention) {
    if (heads == 0) fail(ErrorCode::kConfig, "heads must be positive");
    if (hidden_dim % heads != 0 || out_dim % heads != 0) {
      fail(ErrorCode::kConfig, "hidden_dim and out_dim must be divisible by heads");
    }
  }
}

std::size_t EncoderConfig::in_width(std::size_t layer) const {
  return layer == 0 ? kNodeFeatureDim : hidden_dim;
}

std::size_t EncoderConfig::out_width(std::size_t layer) const {
  return layer + 1 == layers ? out_dim : hidden_dim;
}

Adjacency Adjacency::from_edges(std::size_t n, const std::vector<Edge>& edges,
                                const std::vector<double>& edge_dist) {
  Adjacency adj;
  adj.neighbors.assign(n, {});
  adj.dist.assign(n, {});
  std::vector<std::vector<std::pair<std::uint32_t, double>>> tmp(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double d = e < edge_dist.size() ? edge_dist[e] : 0.0;
    if (edges[e].a >= n || edges[e].b >= n) fail(ErrorCode::kShape, "edge index out of range");
    tmp[edges[e].a].emplace_back(edges[e].b, d);
    tmp[edges[e].b].emplace_back(edges[e].a, d);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(tmp[i].begin(), tmp[i].end());
    for (const auto& [j, d] : tmp[i]) {
      adj.neighbors[i].push_back(j);
      adj.dist[i].push_back(d);
    }
  }
  return adj;
}

Adjacency Adjacency::from_graph(const ModalGraph& g) {
  return from_edges(g.n_nodes(), g.edges, g.edge_dist);
}

namespace {

void check_rows(const Matrix& h, const Adjacency& adj) {
  if (h.rows() != adj.size()) fail(ErrorCode::kShape, "feature rows do not match node count");
}

// P * m with P = D^-1/2 (A + I) D^-1/2 (symmetric).
Matrix gcn_propagate(const Adjacency& adj, const Matrix& m) {
  const std::size_t n = adj.size(), d = m.cols();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(adj.neighbors[i].size() + 1));
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto o = out.row(i);
    auto self = m.row(i);
    const double ws = inv_sqrt[i] * inv_sqrt[i];
    for (std::size_t c = 0; c < d; ++c) o[c] = ws * self[c];
    for (std::uint32_t j : adj.neighbors[i]) {
      const double wj = inv_sqrt[i] * inv_sqrt[j];
      auto src = m.row(j);
      for (std::size_t c = 0; c < d; ++c) o[c] += wj * src[c];
    }
  }
  return out;
}

std::vector<std::size_t> neighborhood_offsets(const Adjacency& adj) {
  std::vector<std::size_t> off(adj.size() + 1, 0);
  for (std::size_t i = 0; i < adj.size(); ++i) off[i + 1] = off[i] + adj.neighbors[i].size() + 1;
  return off;
}

// Member t of node i's attention set: itself first, then neighbours.
inline std::uint32_t member(const Adjacency& adj, std::size_t i, std::size_t t) {
  return t == 0 ? static_cast<std::uint32_t>(i) : adj.neighbors[i][t - 1];
}

inline double member_dist(const Adjacency& adj, std::size_t i, std::size_t t) {
  return t == 0 ? 0.0 : adj.dist[i][t - 1];
}

// In-place softmax over a contiguous score span.
void softmax_span(double* s, std::size_t n) {
  double mx = s[0];
  for (std::size_t t = 1; t < n; ++t) mx = std::max(mx, s[t]);
  double sum = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    s[t] = std::exp(s[t] - mx);
    sum += s[t];
  }
  for (std::size_t t = 0; t < n; ++t) s[t] /= sum;
}

}  // namespace

Matrix gcn_layer(const Matrix& h, const Adjacency& adj, const Matrix& w) {
  check_rows(h, adj);
  return gcn_propagate(adj, matmul(h, w));
}

GcnGrads gcn_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w,
                            const Matrix& dout) {
  const Matrix dhw = gcn_propagate(adj, dout);
  auto g = matmul_backward(h, w, dhw);
  return {std::move(g.da), std::move(g.db)};
}

Matrix gat_layer(const Matrix& h, const Adjacency& adj, const Matrix& w, const Matrix& attn,
                 std::size_t heads, GatCache* cache) {
  check_rows(h, adj);
  const std::size_t n = adj.size(), d_out = w.cols();
  if (heads == 0 || d_out % heads != 0) fail(ErrorCode::kShape, "GAT width not divisible by heads");
  const std::size_t dh = d_out / heads;
  if (attn.rows() != heads || attn.cols() != 2 * dh) fail(ErrorCode::kShape, "GAT attention shape");
  Matrix wh = matmul(h, w);
  const auto off = neighborhood_offsets(adj);
  const std::size_t total = off[n];
  std::vector<double> pre(heads * total), alpha(heads * total);
  std::vector<double> src(n), dst(n);
  Matrix out(n, d_out);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const double* a_src = attn.data() + hd * 2 * dh;
    const double* a_dst = a_src + dh;
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = wh.data() + i * d_out + hd * dh;
      double s = 0.0, t = 0.0;
      for (std::size_t c = 0; c < dh; ++c) {
        s += a_src[c] * x[c];
        t += a_dst[c] * x[c];
      }
      src[i] = s;
      dst[i] = t;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = off[i + 1] - off[i];
      double* p = pre.data() + hd * total + off[i];
      double* a = alpha.data() + hd * total + off[i];
      for (std::size_t t = 0; t < m; ++t) {
        p[t] = src[i] + dst[member(adj, i, t)];
        a[t] = p[t] > 0.0 ? p[t] : kGatLeakySlope * p[t];
      }
      softmax_span(a, m);
      double* o = out.data() + i * d_out + hd * dh;
      for (std::size_t t = 0; t < m; ++t) {
        const double* x = wh.data() + member(adj, i, t) * d_out + hd * dh;
        for (std::size_t c = 0; c < dh; ++c) o[c] += a[t] * x[c];
      }
    }
  }
  if (cache) {
    cache->wh = std::move(wh);
    cache->offsets = off;
    cache->pre = std::move(pre);
    cache->alpha = std::move(alpha);
  }
  return out;
}

GatGrads gat_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w,
                            const Matrix& attn, std::size_t heads, const GatCache& cache,
                            const Matrix& dout) {
  const std::size_t n = adj.size(), d_out = w.cols(), dh = d_out / heads;
  const auto& off = cache.offsets;
  const std::size_t total = off[n];
  const Matrix& wh = cache.wh;
  Matrix dwh(n, d_out);
  Matrix dattn(attn.rows(), attn.cols());
  std::vector<double> dsrc(n), ddst(n), dalpha;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const double* a_src = attn.data() + hd * 2 * dh;
    const double* a_dst = a_src + dh;
    std::fill(dsrc.begin(), dsrc.end(), 0.0);
    std::fill(ddst.begin(), ddst.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = off[i + 1] - off[i];
      const double* a = cache.alpha.data() + hd * total + off[i];
      const double* p = cache.pre.data() + hd * total + off[i];
      const double* g = dout.data() + i * d_out + hd * dh;
      dalpha.assign(m, 0.0);
      double weighted = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        const std::uint32_t j = member(adj, i, t);
        const double* x = wh.data() + j * d_out + hd * dh;
        double* dx = dwh.data() + j * d_out + hd * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          dot += g[c] * x[c];
          dx[c] += a[t] * g[c];
        }
        dalpha[t] = dot;
        weighted += a[t] * dot;
      }
      for (std::size_t t = 0; t < m; ++t) {
        const double de = a[t] * (dalpha[t] - weighted);
        const double dp = p[t] > 0.0 ? de : kGatLeakySlope * de;
        dsrc[i] += dp;
        ddst[member(adj, i, t)] += dp;
      }
    }
    double* da_src = dattn.data() + hd * 2 * dh;
    double* da_dst = da_src + dh;
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = wh.data() + i * d_out + hd * dh;
      double* dx = dwh.data() + i * d_out + hd * dh;
      for (std::size_t c = 0; c < dh; ++c) {
        dx[c] += a_src[c] * dsrc[i] + a_dst[c] * ddst[i];
        da_src[c] += dsrc[i] * x[c];
        da_dst[c] += ddst[i] * x[c];
      }
    }
  }
  auto g = matmul_backward(h, w, dwh);
  return {std::move(g.da), std::move(g.db), std::move(dattn)};
}

namespace {

Matrix neighbor_mean(const Adjacency& adj, const Matrix& h) {
  Matrix m(h.rows(), h.cols());
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) continue;
    auto o = m.row(i);
    for (std::uint32_t j : nb) {
      auto src = h.row(j);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (double& v : o) v *= inv;
  }
  return m;
}

}  // namespace

Matrix sage_layer(const Matrix& h, const Adjacency& adj, const Matrix& w_self,
                  const Matrix& w_neigh) {
  check_rows(h, adj);
  Matrix out = matmul(h, w_self);
  out += matmul(neighbor_mean(adj, h), w_neigh);
  return out;
}

SageGrads sage_layer_backward(const Matrix& h, const Adjacency& adj, const Matrix& w_self,
                              const Matrix& w_neigh, const Matrix& dout) {
  const Matrix mean = neighbor_mean(adj, h);
  auto gs = matmul_backward(h, w_self, dout);
  auto gn = matmul_backward(mean, w_neigh, dout);
  Matrix dh = std::move(gs.da);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    auto g = gn.da.row(i);
    for (std::uint32_t j : nb) {
      auto o = dh.row(j);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += inv * g[c];
    }
  }
  return {std::move(dh), std::move(gs.db), std::move(gn.db)};
}

Matrix graph_transformer_layer(const Matrix& h, const Adjacency& adj, const TransformerWeights& wts,
                               std::size_t heads, double edge_bias_scale,
                               TransformerCache* cache) {
  check_rows(h, adj);
  const std::size_t n = adj.size(), d = wts.wq.cols();
  if (heads == 0 || d % heads != 0) fail(ErrorCode::kShape, "transformer width not divisible by heads");
  if (wts.wk.cols() != d || wts.wv.cols() != d || wts.wo.rows() != d) {
    fail(ErrorCode::kShape, "transformer projection shapes disagree");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = matmul(h, wts.wq), k = matmul(h, wts.wk), v = matmul(h, wts.wv);
  const auto off = neighborhood_offsets(adj);
  const std::size_t total = off[n];
  std::vector<double> alpha(heads * total);
  Matrix o(n, d);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = off[i + 1] - off[i];
      double* a = alpha.data() + hd * total + off[i];
      const double* qi = q.data() + i * d + hd * dh;
      for (std::size_t t = 0; t < m; ++t) {
        const double* kj = k.data() + member(adj, i, t) * d + hd * dh;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        a[t] = s * scale - edge_bias_scale * member_dist(adj, i, t);
      }
      softmax_span(a, m);
      double* oi = o.data() + i * d + hd * dh;
      for (std::size_t t = 0; t < m; ++t) {
        const double* vj = v.data() + member(adj, i, t) * d + hd * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += a[t] * vj[c];
      }
    }
  }
  Matrix out = matmul(o, wts.wo);
  if (out.cols() == h.cols()) out += h;
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->offsets = off;
    cache->alpha = std::move(alpha);
  }
  return out;
}

TransformerGrads graph_transformer_layer_backward(const Matrix& h, const Adjacency& adj,
                                                  const TransformerWeights& wts,
                                                  std::size_t heads, const TransformerCache& cache,
                                                  const Matrix& dout) {
  const std::size_t n = adj.size(), d = wts.wq.cols(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& off = cache.offsets;
  const std::size_t total = off[n];
  auto go = matmul_backward(cache.o, wts.wo, dout);
  const Matrix& d_o = go.da;
  Matrix dq(n, d), dk(n, d), dv(n, d);
  std::vector<double> dalpha;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = off[i + 1] - off[i];
      const double* a = cache.alpha.data() + hd * total + off[i];
      const double* g = d_o.data() + i * d + hd * dh;
      dalpha.assign(m, 0.0);
      double weighted = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        const std::uint32_t j = member(adj, i, t);
        const double* vj = cache.v.data() + j * d + hd * dh;
        double* dvj = dv.data() + j * d + hd * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          dot += g[c] * vj[c];
          dvj[c] += a[t] * g[c];
        }
        dalpha[t] = dot;
        weighted += a[t] * dot;
      }
      const double* qi = cache.q.data() + i * d + hd * dh;
      double* dqi = dq.data() + i * d + hd * dh;
      for (std::size_t t = 0; t < m; ++t) {
        const double ds = a[t] * (dalpha[t] - weighted) * scale;
        const std::uint32_t j = member(adj, i, t);
        const double* kj = cache.k.data() + j * d + hd * dh;
        double* dkj = dk.data() + j * d + hd * dh;
        for (std::size_t c = 0; c < dh; ++c) {
          dqi[c] += ds * kj[c];
          dkj[c] += ds * qi[c];
        }
      }
    }
  }
  auto gq = matmul_backward(h, wts.wq, dq);
  auto gk = matmul_backward(h, wts.wk, dk);
  auto gv = matmul_backward(h, wts.wv, dv);
  Matrix dh_total = std::move(gq.da);
  dh_total += gk.da;
  dh_total += gv.da;
  if (dout.cols() == h.cols()) dh_total += dout;
  return {std::move(dh_total), std::move(gq.db), std::move(gk.db), std::move(gv.db),
          std::move(go.db)};
}

std::vector<Param*> EncoderParams::all() {
  std::vector<Param*> out;
  for (auto& l : layers)
    for (auto& p : l.tensors) out.push_back(&p);
  return out;
}

std::vector<const Param*> EncoderParams::all() const {
  std::vector<const Param*> out;
  for (const auto& l : layers)
    for (const auto& p : l.tensors) out.push_back(&p);
  return out;
}

void EncoderParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

EncoderParams init_encoder(const EncoderConfig& cfg, const std::string& prefix, Rng& rng) {
  cfg.validate();
  EncoderParams params;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t in = cfg.in_width(l), out = cfg.out_width(l);
    const std::string base = prefix + ".layer" + std::to_string(l) + ".";
    EncoderLayerParams layer;
    switch (cfg.backbone) {
      case Backbone::kGcn:
        layer.tensors.emplace_back(base + "w", glorot_uniform(in, out, rng));
        break;
      case Backbone::kGat: {
        layer.tensors.emplace_back(base + "w", glorot_uniform(in, out, rng));
        const std::size_t dh = out / cfg.heads;
        Matrix a = glorot_uniform(2 * dh, 1, rng);
        layer.tensors.emplace_back(base + "attn", Matrix(cfg.heads, 2 * dh));
        Matrix& attn = layer.tensors.back().value;
        for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
          if (hd > 0) a = glorot_uniform(2 * dh, 1, rng);
          for (std::size_t c = 0; c < 2 * dh; ++c) attn(hd, c) = a(c, 0);
        }
        break;
      }
      case Backbone::kSage:
        layer.tensors.emplace_back(base + "w_self", glorot_uniform(in, out, rng));
        layer.tensors.emplace_back(base + "w_neigh", glorot_uniform(in, out, rng));
        break;
      case Backbone::kGraphTransformer:
        layer.tensors.emplace_back(base + "w_q", glorot_uniform(in, out, rng));
        layer.tensors.emplace_back(base + "w_k", glorot_uniform(in, out, rng));
        layer.tensors.emplace_back(base + "w_v", glorot_uniform(in, out, rng));
        layer.tensors.emplace_back(base + "w_o", glorot_uniform(out, out, rng));
        break;
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix encode(const ModalGraph& graph, const EncoderParams& params, const EncoderConfig& cfg,
              EncodeCache* cache) {
  return encode(graph.node_features, Adjacency::from_graph(graph), params, cfg, cache);
}

Matrix encode(const Matrix& features, const Adjacency& adj, const EncoderParams& params,
              const EncoderConfig& cfg, EncodeCache* cache) {
  if (params.layers.size() != cfg.layers) fail(ErrorCode::kShape, "encoder depth mismatch");
  if (features.cols() != params.layers[0].tensors[0].value.rows()) {
    fail(ErrorCode::kShape, "node feature width does not match the first encoder layer");
  }
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
    cache->gat.assign(cfg.layers, {});
    cache->transformer.assign(cfg.layers, {});
  }
  const double bias = cfg.edge_bias ? cfg.edge_bias_scale : 0.0;
  Matrix x = features;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& t = params.layers[l].tensors;
    Matrix y;
    switch (cfg.backbone) {
      case Backbone::kGcn:
        y = gcn_layer(x, adj, t[0].value);
        break;
      case Backbone::kGat:
        y = gat_layer(x, adj, t[0].value, t[1].value, cfg.heads, cache ? &cache->gat[l] : nullptr);
        break;
      case Backbone::kSage:
        y = sage_layer(x, adj, t[0].value, t[1].value);
        break;
      case Backbone::kGraphTransformer:
        y = graph_transformer_layer(x, adj, {t[0].value, t[1].value, t[2].value, t[3].value},
                                    cfg.heads, bias, cache ? &cache->transformer[l] : nullptr);
        break;
    }
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->outputs.push_back(y);
    }
    x = l + 1 < cfg.layers ? relu(y) : std::move(y);
  }
  return x;
}

Matrix encode_backward(const Adjacency& adj, EncoderParams& params, const EncoderConfig& cfg,
                       const EncodeCache& cache, const Matrix& dout) {
  Matrix g = dout;
  for (std::size_t l = cfg.layers; l-- > 0;) {
    if (l + 1 < cfg.layers) g = relu_backward(cache.outputs[l], g);
    auto& t = params.layers[l].tensors;
    const Matrix& x = cache.inputs[l];
    switch (cfg.backbone) {
      case Backbone::kGcn: {
        auto gr = gcn_layer_backward(x, adj, t[0].value, g);
        t[0].grad += gr.dw;
        g = std::move(gr.dh);
        break;
      }
      case Backbone::kGat: {
        auto gr = gat_layer_backward(x, adj, t[0].value, t[1].value, cfg.heads, cache.gat[l], g);
        t[0].grad += gr.dw;
        t[1].grad += gr.dattn;
        g = std::move(gr.dh);
        break;
      }
      case Backbone::kSage: {
        auto gr = sage_layer_backward(x, adj, t[0].value, t[1].value, g);
        t[0].grad += gr.dw_self;
        t[1].grad += gr.dw_neigh;
        g = std::move(gr.dh);
        break;
      }
      case Backbone::kGraphTransformer: {
        auto gr = graph_transformer_layer_backward(
            x, adj, {t[0].value, t[1].value, t[2].value, t[3].value}, cfg.heads,
            cache.transformer[l], g);
        t[0].grad += gr.dwq;
        t[1].grad += gr.dwk;
        t[2].grad += gr.dwv;
        t[3].grad += gr.dwo;
        g = std::move(gr.dh);
        break;
      }
    }
  }
  return g;
}

}  // namespace xmodal
