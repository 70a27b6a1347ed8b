#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmg/corpus.hpp"
#include "cmg/localizer.hpp"
#include "cmg/nn.hpp"
#include "cmg/scenegraph.hpp"

namespace cmg {

enum class MetaFeatures { kVisual, kSemantic, kBoth };

/// Which parts of R_dec are built. Disabled parts are left out of the
/// concatenation (never zero-filled), and their parameters are never created.
struct Ablation {
  bool use_context = true;
  bool use_meta = true;
  bool use_fg = true;
  bool use_vg = true;
  /// Keep predicate nodes in the video-level graph.
  bool vg_predicates = true;
  MetaFeatures meta_features = MetaFeatures::kBoth;
};

struct CaptionModelConfig {
  int proj_dim = 512;
  int meta_dim = 256;
  int word_dim = 512;
  int hidden_dim = 512;
  int knn_j = 3;
  bool normalize_adjacency = false;
  SceneEncoderConfig scene;
  Ablation ablation;
};

/// Input sizes fixed by the data.
struct ModelDims {
  /// (stream name, width) in the order streams appear in VideoInput::context.
  std::vector<std::pair<std::string, int>> context_streams;
  int feature_dim = 0;
  int num_classes = 0;
  int scene_classes = 0;
  int vocab_size = 0;
};

/// Everything the captioner consumes for one video, precomputed from frozen stages.
struct VideoInput {
  std::string id;
  /// Per-stream context vectors mean-pooled over key frames.
  std::vector<RowVector> context;
  /// Localized concepts; only class_id and v are read (s comes from the model).
  std::vector<MetaConcept> concepts;
  std::vector<FrameGraph> frame_graphs;
  VideoGraph video_graph;
};

/// One-layer LSTM caption decoder over R_dec = [R_con, R_meta, R_obj].
class CaptionModel {
 public:
  CaptionModel(const ModelDims& dims, const CaptionModelConfig& config, std::uint64_t seed);

  struct DecoderInput {
    ad::Var r_dec;
    /// (part name, width) in concatenation order.
    std::vector<std::pair<std::string, int>> layout;
  };

  DecoderInput decoder_input(ad::Tape& tape, const VideoInput& video) const;
  /// Node matrix of the concept graph (L x D_c) under the configured meta-feature mode.
  ad::Var concept_nodes(ad::Tape& tape, const VideoInput& video) const;
  ad::Var meta_representation(ad::Tape& tape, const VideoInput& video) const;

  /// One decoder step: feeds prev_token, returns 1 x V logits and updates state.
  ad::Var step(ad::Tape& tape, const ad::Var& r_dec, int prev_token, LstmState& state) const;
  LstmState initial_state(ad::Tape& tape) const { return lstm_.zero_state(tape); }

  /// Mean negative log-likelihood per non-pad target of [bos, ..., eos].
  ad::Var xe_loss(ad::Tape& tape, const VideoInput& video, std::span<const int> encoded) const;
  /// Teacher-forced argmax accuracy counts: (correct, total).
  std::pair<int, int> token_accuracy(const VideoInput& video, std::span<const int> encoded) const;

  int input_dim() const { return input_dim_; }
  const std::vector<std::pair<std::string, int>>& layout() const { return layout_; }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const CaptionModelConfig& config() const { return config_; }
  const ModelDims& dims() const { return dims_; }

  /// Semantic class embedding table (K x D_c), the s of each concept.
  std::size_t semantic = 0;
  std::size_t w_a = 0;

 private:
  ModelDims dims_;
  CaptionModelConfig config_;
  ParameterSet params_;
  std::vector<Linear> context_proj_;
  FrameGraphEncoder fg_;
  VideoGraphEncoder vg_;
  std::size_t embed_ = 0;
  LstmCell lstm_;
  Linear out_;
  int input_dim_ = 0;
  std::vector<std::pair<std::string, int>> layout_;
};

/// Step interface over a fixed R_dec for search and sampling without gradients.
class CaptionDecoder {
 public:
  struct State {
    Matrix h;
    Matrix c;
  };

  CaptionDecoder(const CaptionModel& model, const VideoInput& video);
  State start() const;
  /// Feeds `token`; returns the next state and the log-distribution over the next token.
  std::pair<State, RowVector> advance(const State& state, int token) const;
  int vocab_size() const;

 private:
  const CaptionModel* model_;
  Matrix r_dec_;
};

struct BeamConfig {
  int beam = 5;
  int max_len = 12;
  /// Rank by log-prob / emitted length instead of raw log-prob.
  bool length_normalize = true;
};

/// Tokens never emitted by decoding.
inline bool decodable(int token) {
  return token != Vocabulary::kPad && token != Vocabulary::kBos && token != Vocabulary::kUnk;
}

struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;

  double score(bool normalize) const {
    return normalize && !tokens.empty() ? log_prob / static_cast<double>(tokens.size()) : log_prob;
  }
};

/// Higher score first; equal scores fall back to the lexicographically smaller token sequence.
inline bool better(const Hypothesis& a, const Hypothesis& b, bool normalize) {
  const double sa = a.score(normalize), sb = b.score(normalize);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

/// Beam search from bos. Each step expands every live hypothesis by every decodable
/// token, keeps the best `beam` expansions, and retires those ending in eos or at
/// max_len. Returns the best retired hypothesis (tokens include eos if emitted).
template <typename Decoder>
Hypothesis beam_search(const Decoder& decoder, const BeamConfig& cfg) {
  struct Live {
    Hypothesis hyp;
    RowVector next;
    typename Decoder::State state;
  };
  auto [s0, lp0] = decoder.advance(decoder.start(), Vocabulary::kBos);
  std::vector<Live> live{{Hypothesis{}, lp0, s0}};
  std::vector<Hypothesis> finished;
  const std::size_t width = static_cast<std::size_t>(std::max(1, cfg.beam));
  for (int t = 1; t <= cfg.max_len && !live.empty(); ++t) {
    struct Cand {
      Hypothesis hyp;
      std::size_t parent;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < live.size(); ++i)
      for (Eigen::Index w = 0; w < live[i].next.size(); ++w) {
        if (!decodable(static_cast<int>(w))) continue;
        Cand c{live[i].hyp, i};
        c.hyp.tokens.push_back(static_cast<int>(w));
        c.hyp.log_prob += live[i].next(w);
        cands.push_back(std::move(c));
      }
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](const Cand& a, const Cand& b) { return better(a.hyp, b.hyp, cfg.length_normalize); });
    std::vector<Live> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      auto& c = cands[i];
      if (c.hyp.tokens.back() == Vocabulary::kEos || t == cfg.max_len) {
        finished.push_back(std::move(c.hyp));
        continue;
      }
      auto [s, lp] = decoder.advance(live[c.parent].state, c.hyp.tokens.back());
      next_live.push_back({std::move(c.hyp), std::move(lp), std::move(s)});
    }
    live = std::move(next_live);
  }
  if (finished.empty()) return {};
  return *std::min_element(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return better(a, b, cfg.length_normalize);
  });
}

/// Argmax decoding (ties to the smaller token id) until eos or max_len.
template <typename Decoder>
Hypothesis greedy_decode(const Decoder& decoder, int max_len) {
  Hypothesis h;
  auto [state, lp] = decoder.advance(decoder.start(), Vocabulary::kBos);
  for (int t = 0; t < max_len; ++t) {
    int best = -1;
    for (Eigen::Index w = 0; w < lp.size(); ++w)
      if (decodable(static_cast<int>(w)) && (best < 0 || lp(w) > lp(best))) best = static_cast<int>(w);
    if (best < 0) break;
    h.tokens.push_back(best);
    h.log_prob += lp(best);
    if (best == Vocabulary::kEos) break;
    std::tie(state, lp) = decoder.advance(state, best);
  }
  return h;
}

/// Caption words of a decoded hypothesis (stops at eos).
Caption to_caption(const Hypothesis& h, const Vocabulary& vocab);

}  // namespace cmg
