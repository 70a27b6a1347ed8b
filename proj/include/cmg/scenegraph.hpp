#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmg/datagen.hpp"
#include "cmg/nn.hpp"

namespace cmg {

/// Intersection area over union area; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cwiseProduct(b).sum() / (na * nb);
}

/// Joint node-class space: object classes first, then predicates.
struct SceneVocab {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;

  int size() const { return static_cast<int>(objects.size() + predicates.size()); }
  int object_class(const std::string& name) const;
  int predicate_class(const std::string& name) const;
};

/// Object-instance nodes first (in declaration order), then one node per triplet predicate.
struct FrameGraph {
  std::vector<int> node_class;
  /// Scene object id of each object node.
  std::vector<int> object_ids;
  int num_objects = 0;
  int num_predicates = 0;
  /// subj -> pred and pred -> obj, in triplet order.
  std::vector<std::pair<int, int>> edges;

  int num_nodes() const { return static_cast<int>(node_class.size()); }
  /// Symmetric 0/1 adjacency without self-loops.
  Matrix adjacency() const;
};

FrameGraph build_frame_graph(const FrameScene& scene, const SceneVocab& vocab, bool include_predicates = true);

struct VideoGraph {
  std::vector<int> node_class;
  /// Position (0-based) in the frame sequence of each node.
  std::vector<int> node_frame;
  /// Frame-graph edges re-indexed into the union.
  std::vector<std::pair<int, int>> frame_edges;
  /// Object-object links between frames t and t+1.
  std::vector<std::pair<int, int>> links;

  int num_nodes() const { return static_cast<int>(node_class.size()); }
  Matrix adjacency() const;
};

/// Mean cell feature under each object's box (cells whose centre is inside), one row per object.
Matrix object_features(const FrameScene& scene, const Matrix& frame, int grid_side);

/// Unions the frame graphs and links object nodes u (frame t) and w (frame t+1) when
/// cos(feature_u, feature_w) >= tau_cos and iou(box_u, box_w) >= tau_iou.
VideoGraph build_video_graph(std::span<const FrameGraph> graphs, std::span<const FrameScene> scenes,
                             std::span<const Matrix> features, double tau_cos, double tau_iou);

enum class Activation { kNone, kElu, kRelu };

/// Multi-head masked graph attention (self-loops added internally).
struct GatLayer {
  std::size_t weight = 0, attn_src = 0, attn_dst = 0, bias = 0;
  int heads = 1;
  int per_head = 1;
  bool concat = true;
  Activation activation = Activation::kElu;
  double negative_slope = 0.2;

  static GatLayer create(ParameterSet& params, const std::string& name, int in, int per_head, int heads, bool concat,
                         Activation activation, Rng& rng);
  int out_dim() const { return concat ? heads * per_head : per_head; }

  struct Output {
    ad::Var out;
    /// One n x n row-stochastic matrix per head.
    std::vector<Matrix> attention;
  };
  Output forward(ad::Tape& tape, const ParameterSet& params, const ad::Var& x, const Matrix& adjacency) const;
};

/// Post-norm transformer encoder layer with multi-head self-attention, no causal mask.
struct TransformerLayer {
  Linear q, k, v, o, ff1, ff2;
  std::size_t ln1_gain = 0, ln1_bias = 0, ln2_gain = 0, ln2_bias = 0;
  int heads = 1;
  int dim = 0;

  static TransformerLayer create(ParameterSet& params, const std::string& name, int dim, int heads, int ff_dim,
                                 Rng& rng);
  struct Output {
    ad::Var out;
    std::vector<Matrix> attention;
  };
  Output forward(ad::Tape& tape, const ParameterSet& params, const ad::Var& x) const;
};

/// Standard sine/cosine position table, n x d.
Matrix sinusoidal_positions(int n, int d);

struct SceneEncoderConfig {
  int embed_dim = 64;
  int gat_hidden = 8;
  int gat_heads = 8;
  int out_dim = 256;
  int transformer_heads = 4;
  int transformer_ff = 512;
  bool positional_encoding = true;
};

/// One-hot node classes through a linear layer, then a 2-layer GAT.
struct GatStack {
  Linear embed;
  GatLayer hidden, output;

  static GatStack create(ParameterSet& params, const std::string& name, int classes, const SceneEncoderConfig& cfg,
                         Rng& rng);
  ad::Var nodes(ad::Tape& tape, const ParameterSet& params, std::span<const int> node_class,
                const Matrix& adjacency) const;
  /// Node-mean readout; zero row for an empty graph.
  ad::Var readout(ad::Tape& tape, const ParameterSet& params, std::span<const int> node_class,
                  const Matrix& adjacency) const;
};

/// R_Gf: per-frame GAT readouts -> positional encoding -> transformer -> sequence mean.
struct FrameGraphEncoder {
  GatStack gat;
  TransformerLayer temporal;
  bool positional_encoding = true;

  static FrameGraphEncoder create(ParameterSet& params, int classes, const SceneEncoderConfig& cfg, Rng& rng);
  ad::Var encode(ad::Tape& tape, const ParameterSet& params, std::span<const FrameGraph> graphs) const;
};

/// R_Gv: GAT over the whole video graph, node-mean readout.
struct VideoGraphEncoder {
  GatStack gat;

  static VideoGraphEncoder create(ParameterSet& params, int classes, const SceneEncoderConfig& cfg, Rng& rng);
  ad::Var encode(ad::Tape& tape, const ParameterSet& params, const VideoGraph& graph) const;
};

}  // namespace cmg
