#include "cmg/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cmg/errors.hpp"

namespace cmg {

double iou(const Box& a, const Box& b) {
  for (const Box* x : {&a, &b})
    if (!(x->x1 < x->x2) || !(x->y1 < x->y2)) throw ValidationError("degenerate box");
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

int SceneVocab::object_class(const std::string& name) const {
  auto it = std::find(objects.begin(), objects.end(), name);
  if (it == objects.end()) throw ValidationError("unknown object class: " + name);
  return static_cast<int>(it - objects.begin());
}

int SceneVocab::predicate_class(const std::string& name) const {
  auto it = std::find(predicates.begin(), predicates.end(), name);
  if (it == predicates.end()) throw ValidationError("unknown predicate: " + name);
  return static_cast<int>(objects.size() + static_cast<std::size_t>(it - predicates.begin()));
}

namespace {
Matrix symmetric_adjacency(int n, const std::vector<std::pair<int, int>>& a, const std::vector<std::pair<int, int>>& b) {
  Matrix adj = Matrix::Zero(n, n);
  for (const auto* list : {&a, &b})
    for (auto [u, w] : *list) {
      if (u == w) continue;
      adj(u, w) = 1.0;
      adj(w, u) = 1.0;
    }
  return adj;
}
}  // namespace

Matrix FrameGraph::adjacency() const { return symmetric_adjacency(num_nodes(), edges, {}); }

FrameGraph build_frame_graph(const FrameScene& scene, const SceneVocab& vocab, bool include_predicates) {
  FrameGraph g;
  std::map<int, int> node_of;
  for (const auto& o : scene.objects) {
    if (!node_of.emplace(o.id, g.num_objects).second)
      throw ValidationError("duplicate object id " + std::to_string(o.id) + " in frame " + std::to_string(scene.frame));
    g.node_class.push_back(vocab.object_class(o.cls));
    g.object_ids.push_back(o.id);
    ++g.num_objects;
  }
  for (const auto& t : scene.triplets) {
    auto s = node_of.find(t.subj), o = node_of.find(t.obj);
    if (s == node_of.end() || o == node_of.end())
      throw ValidationError("triplet references undeclared object in frame " + std::to_string(scene.frame));
    if (t.subj == t.obj) throw ValidationError("triplet subject and object must differ");
    const int pred_class = vocab.predicate_class(t.pred);
    if (!include_predicates) continue;
    const int p = g.num_nodes();
    g.node_class.push_back(pred_class);
    ++g.num_predicates;
    g.edges.emplace_back(s->second, p);
    g.edges.emplace_back(p, o->second);
  }
  return g;
}

Matrix VideoGraph::adjacency() const { return symmetric_adjacency(num_nodes(), frame_edges, links); }

Matrix object_features(const FrameScene& scene, const Matrix& frame, int grid_side) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(scene.objects.size()), frame.cols());
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto cells = cells_in_box(scene.objects[i].box, grid_side);
    for (int c : cells) out.row(static_cast<Eigen::Index>(i)) += frame.row(c);
    if (!cells.empty()) out.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(cells.size());
  }
  return out;
}

VideoGraph build_video_graph(std::span<const FrameGraph> graphs, std::span<const FrameScene> scenes,
                             std::span<const Matrix> features, double tau_cos, double tau_iou) {
  if (graphs.size() != scenes.size() || graphs.size() != features.size())
    throw ValidationError("video graph needs one scene and feature matrix per frame graph");
  VideoGraph vg;
  std::vector<int> offset;
  for (std::size_t t = 0; t < graphs.size(); ++t) {
    const auto& g = graphs[t];
    if (static_cast<std::size_t>(g.num_objects) != scenes[t].objects.size() ||
        features[t].rows() != g.num_objects)
      throw ValidationError("frame graph, scene and object features disagree on object count");
    offset.push_back(vg.num_nodes());
    for (int c : g.node_class) {
      vg.node_class.push_back(c);
      vg.node_frame.push_back(static_cast<int>(t));
    }
    for (auto [u, w] : g.edges) vg.frame_edges.emplace_back(offset.back() + u, offset.back() + w);
  }
  for (std::size_t t = 0; t + 1 < graphs.size(); ++t)
    for (int u = 0; u < graphs[t].num_objects; ++u)
      for (int w = 0; w < graphs[t + 1].num_objects; ++w) {
        const double cs = cosine_similarity(features[t].row(u), features[t + 1].row(w));
        const double ov = iou(scenes[t].objects[static_cast<std::size_t>(u)].box,
                              scenes[t + 1].objects[static_cast<std::size_t>(w)].box);
        if (cs >= tau_cos && ov >= tau_iou) vg.links.emplace_back(offset[t] + u, offset[t + 1] + w);
      }
  return vg;
}

GatLayer GatLayer::create(ParameterSet& params, const std::string& name, int in, int per_head, int heads, bool concat,
                          Activation activation, Rng& rng) {
  GatLayer l;
  l.heads = heads;
  l.per_head = per_head;
  l.concat = concat;
  l.activation = activation;
  l.weight = params.add(name + ".weight", glorot(in, heads * per_head, rng));
  l.attn_src = params.add(name + ".attn_src", glorot(heads, per_head, rng));
  l.attn_dst = params.add(name + ".attn_dst", glorot(heads, per_head, rng));
  l.bias = params.add(name + ".bias", Matrix::Zero(1, l.out_dim()));
  return l;
}

namespace {
ad::Var activate(const ad::Var& x, Activation a) {
  switch (a) {
    case Activation::kElu:
      return ad::elu(x);
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kNone:
      break;
  }
  return x;
}
}  // namespace

GatLayer::Output GatLayer::forward(ad::Tape& tape, const ParameterSet& params, const ad::Var& x,
                                   const Matrix& adjacency) const {
  const Eigen::Index n = x.rows();
  if (adjacency.rows() != n || adjacency.cols() != n) throw ValidationError("GAT adjacency must be n x n");
  Matrix mask = adjacency;
  mask.diagonal().setOnes();
  ad::Var h = ad::matmul(x, tape.param(params[weight]));
  ad::Var src = tape.param(params[attn_src]);
  ad::Var dst = tape.param(params[attn_dst]);
  Output out;
  std::vector<ad::Var> heads_out;
  for (int k = 0; k < heads; ++k) {
    ad::Var hk = ad::slice_cols(h, k * per_head, per_head);
    ad::Var s = ad::matmul(hk, ad::transpose(ad::row(src, k)));
    ad::Var d = ad::matmul(hk, ad::transpose(ad::row(dst, k)));
    ad::Var att = ad::masked_softmax_rows(ad::leaky_relu(ad::outer_add(s, d), negative_slope), mask);
    out.attention.push_back(att.value());
    heads_out.push_back(ad::matmul(att, hk));
  }
  ad::Var merged;
  if (concat) {
    merged = ad::hcat(heads_out);
  } else {
    merged = heads_out[0];
    for (std::size_t k = 1; k < heads_out.size(); ++k) merged = ad::add(merged, heads_out[k]);
    merged = ad::scale(merged, 1.0 / heads);
  }
  out.out = activate(ad::add_row(merged, tape.param(params[bias])), activation);
  return out;
}

TransformerLayer TransformerLayer::create(ParameterSet& params, const std::string& name, int dim, int heads,
                                          int ff_dim, Rng& rng) {
  if (heads < 1 || dim % heads != 0) throw ValidationError("transformer dim must be divisible by its head count");
  TransformerLayer l;
  l.heads = heads;
  l.dim = dim;
  l.q = Linear::create(params, name + ".q", dim, dim, rng);
  l.k = Linear::create(params, name + ".k", dim, dim, rng);
  l.v = Linear::create(params, name + ".v", dim, dim, rng);
  l.o = Linear::create(params, name + ".o", dim, dim, rng);
  l.ln1_gain = params.add(name + ".ln1.gain", Matrix::Ones(1, dim));
  l.ln1_bias = params.add(name + ".ln1.bias", Matrix::Zero(1, dim));
  l.ff1 = Linear::create(params, name + ".ff1", dim, ff_dim, rng);
  l.ff2 = Linear::create(params, name + ".ff2", ff_dim, dim, rng);
  l.ln2_gain = params.add(name + ".ln2.gain", Matrix::Ones(1, dim));
  l.ln2_bias = params.add(name + ".ln2.bias", Matrix::Zero(1, dim));
  return l;
}

TransformerLayer::Output TransformerLayer::forward(ad::Tape& tape, const ParameterSet& params, const ad::Var& x) const {
  if (x.cols() != dim) throw ValidationError("transformer input width mismatch");
  const int dh = dim / heads;
  ad::Var qx = q(tape, params, x), kx = k(tape, params, x), vx = v(tape, params, x);
  Output out;
  std::vector<ad::Var> heads_out;
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(qx, h * dh, dh), kh = ad::slice_cols(kx, h * dh, dh),
            vh = ad::slice_cols(vx, h * dh, dh);
    ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(double(dh))));
    out.attention.push_back(att.value());
    heads_out.push_back(ad::matmul(att, vh));
  }
  ad::Var attended = o(tape, params, ad::hcat(heads_out));
  ad::Var x1 = ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(x, attended)), tape.param(params[ln1_gain])),
                           tape.param(params[ln1_bias]));
  ad::Var ff = ff2(tape, params, ad::relu(ff1(tape, params, x1)));
  out.out = ad::add_row(ad::mul_row(ad::layer_norm_rows(ad::add(x1, ff)), tape.param(params[ln2_gain])),
                        tape.param(params[ln2_bias]));
  return out;
}

Matrix sinusoidal_positions(int n, int d) {
  Matrix pe(n, d);
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < d; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * (i / 2) / d);
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

GatStack GatStack::create(ParameterSet& params, const std::string& name, int classes, const SceneEncoderConfig& cfg,
                          Rng& rng) {
  GatStack s;
  s.embed = Linear::create(params, name + ".embed", classes, cfg.embed_dim, rng);
  s.hidden = GatLayer::create(params, name + ".gat1", cfg.embed_dim, cfg.gat_hidden, cfg.gat_heads, true,
                              Activation::kElu, rng);
  s.output = GatLayer::create(params, name + ".gat2", s.hidden.out_dim(), cfg.out_dim, cfg.gat_heads, false,
                              Activation::kNone, rng);
  return s;
}

ad::Var GatStack::nodes(ad::Tape& tape, const ParameterSet& params, std::span<const int> node_class,
                        const Matrix& adjacency) const {
  // one-hot x W is a row gather of W.
  ad::Var x = ad::add_row(ad::gather_rows(tape.param(params[embed.weight]), node_class), tape.param(params[embed.bias]));
  ad::Var h = hidden.forward(tape, params, x, adjacency).out;
  return output.forward(tape, params, h, adjacency).out;
}

ad::Var GatStack::readout(ad::Tape& tape, const ParameterSet& params, std::span<const int> node_class,
                          const Matrix& adjacency) const {
  if (node_class.empty()) return tape.constant(Matrix::Zero(1, output.out_dim()));
  return ad::mean_rows(nodes(tape, params, node_class, adjacency));
}

FrameGraphEncoder FrameGraphEncoder::create(ParameterSet& params, int classes, const SceneEncoderConfig& cfg, Rng& rng) {
  FrameGraphEncoder e;
  e.gat = GatStack::create(params, "fg", classes, cfg, rng);
  e.temporal = TransformerLayer::create(params, "fg.temporal", cfg.out_dim, cfg.transformer_heads, cfg.transformer_ff, rng);
  e.positional_encoding = cfg.positional_encoding;
  return e;
}

ad::Var FrameGraphEncoder::encode(ad::Tape& tape, const ParameterSet& params, std::span<const FrameGraph> graphs) const {
  if (graphs.empty()) throw ValidationError("frame-graph encoder needs at least one frame");
  std::vector<ad::Var> seq;
  for (const auto& g : graphs) seq.push_back(gat.readout(tape, params, g.node_class, g.adjacency()));
  ad::Var x = ad::vcat(seq);
  if (positional_encoding)
    x = ad::add(x, tape.constant(sinusoidal_positions(static_cast<int>(graphs.size()), static_cast<int>(x.cols()))));
  return ad::mean_rows(temporal.forward(tape, params, x).out);
}

VideoGraphEncoder VideoGraphEncoder::create(ParameterSet& params, int classes, const SceneEncoderConfig& cfg, Rng& rng) {
  return {GatStack::create(params, "vg", classes, cfg, rng)};
}

ad::Var VideoGraphEncoder::encode(ad::Tape& tape, const ParameterSet& params, const VideoGraph& graph) const {
  return gat.readout(tape, params, graph.node_class, graph.adjacency());
}

}  // namespace cmg
