#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmg/corpus.hpp"
#include "cmg/nn.hpp"

namespace cmg {

struct MetaLearnerConfig {
  int attention_dim = 64;
  int hidden_dim = 128;
  int embed_dim = 64;
  int align_dim = 64;
  double margin = 0.3;
  double lambda = 0.5;
  /// Use only the hardest negative per anchor instead of summing over all M-1.
  bool hardest_negative = false;
  int batch_size = 60;
  double learning_rate = 4e-4;
  int steps = 400;
  int sampled_frames = 4;
  int key_frames = 10;
  /// Pseudo-mask cells are those with alpha >= mask_threshold * max(alpha).
  double mask_threshold = 0.5;
};

/// Attention-equipped LSTM word decoder over a concatenated key-frame feature grid,
/// plus the projections used for video/sentence alignment.
class MetaLearner {
 public:
  MetaLearner(int feature_dim, int vocab_size, const MetaLearnerConfig& config, std::uint64_t seed);

  struct Attention {
    ad::Var alpha;    // 1 x cells, a probability vector
    ad::Var context;  // 1 x D_c, alpha-weighted sum of cell features
  };
  struct Step {
    LstmState state;
    Attention attention;
    ad::Var logits;  // 1 x V
  };
  struct CaptionPass {
    ad::Var word_loss;
    ad::Var sentence;  // final LSTM output
    std::vector<RowVector> alphas;  // alphas[i] was used to predict encoded[i + 1]
  };

  /// grid * W_v, shared by every decoding step of one caption.
  ad::Var project_grid(ad::Tape& tape, const ad::Var& grid) const;
  Attention attend(ad::Tape& tape, const ad::Var& grid, const ad::Var& projected, const ad::Var& h_prev) const;
  Step step(ad::Tape& tape, int prev_token, const ad::Var& grid, const ad::Var& projected,
            const LstmState& prev) const;
  LstmState initial_state(ad::Tape& tape) const { return lstm_.zero_state(tape); }

  /// Teacher-forced pass over [bos, ..., eos].
  CaptionPass run_caption(ad::Tape& tape, const ad::Var& grid, std::span<const int> encoded) const;

  ad::Var video_embedding(ad::Tape& tape, const ad::Var& grid) const;
  ad::Var sentence_embedding(ad::Tape& tape, const ad::Var& sentence) const;

  /// (sum of word losses + lambda * alignment loss) / M over one mini-batch.
  ad::Var batch_loss(ad::Tape& tape, std::span<const Matrix> grids, std::span<const std::vector<int>> captions) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const MetaLearnerConfig& config() const { return config_; }
  int feature_dim() const { return feature_dim_; }
  int vocab_size() const { return vocab_size_; }

  // Parameter handles, exposed for tests that hand-set weights.
  std::size_t w_v = 0, w_h = 0, w_f = 0, w_e = 0, w_p = 0;
  LstmCell lstm_;
  Linear proj_video, proj_sentence;

 private:
  MetaLearnerConfig config_;
  int feature_dim_ = 0;
  int vocab_size_ = 0;
  ParameterSet params_;
};

/// Sum over rows of -log softmax(logits)[target]; pad targets are skipped.
ad::Var sequence_nll(const ad::Var& logits, std::span<const int> targets);

/// Bidirectional triplet hinge over M matched rows of `video` and `sentence`
/// with Euclidean distance; row i of each side is the positive for row i of the other.
ad::Var alignment_loss(const ad::Var& video, const ad::Var& sentence, double margin, bool hardest_negative = false);

double meta_objective(double word_loss, double cross_loss, double lambda);

/// Key frames for one video and the 4 (or fewer) highest-difference ones among them.
std::vector<int> mask_frames(const VideoRecord& video, int key_frames, int count);
/// Stacks the frames' grids vertically.
Matrix concat_grids(const VideoRecord& video, std::span<const int> frames);

struct MetaTrainResult {
  std::vector<double> losses;
};

using StepLogger = std::function<void(int step, double loss)>;

MetaTrainResult train_meta_learner(MetaLearner& learner, const std::vector<const VideoRecord*>& videos,
                                   const Vocabulary& vocab, std::uint64_t seed, const StepLogger& log = {});

struct PseudoMask {
  std::string video;
  std::string cls;
  int class_id = 0;
  int frame = 0;
  /// 0/1 per grid cell.
  std::vector<std::uint8_t> cells;
};

struct MaskExport {
  std::vector<PseudoMask> masks;
  /// Caption tokens that are object nouns but not in the class table.
  int skipped_tokens = 0;
};

/// Cells with alpha >= ratio * max_alpha.
std::vector<std::uint8_t> binarize_attention(const RowVector& alpha, double max_alpha, double ratio);

MaskExport export_pseudo_masks(const MetaLearner& learner, const std::vector<const VideoRecord*>& videos,
                               const Vocabulary& vocab, const ConceptClassTable& classes,
                               const std::set<std::string>& lexicon);

/// masks/<video>/<class>/<frame>.cmgf plus masks/index.json.
void write_masks(const MaskExport& masks, int grid_side, const std::filesystem::path& dir);
MaskExport read_masks(const std::filesystem::path& dir, const ConceptClassTable& classes);

}  // namespace cmg
