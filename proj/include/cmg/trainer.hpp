#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmg/captioner.hpp"
#include "cmg/metrics.hpp"

namespace cmg {

/// One target caption for one prepared video.
struct CaptionExample {
  const VideoInput* video = nullptr;
  std::vector<int> encoded;
};

/// Pairs videos[i] with inputs[i]; every caption when `all_captions`, else only the first.
std::vector<CaptionExample> caption_examples(std::span<const VideoInput> inputs,
                                             const std::vector<const VideoRecord*>& videos, const Vocabulary& vocab,
                                             bool all_captions = true);

struct TrainEvent {
  std::string stage;
  int step = 0;
  double loss = 0.0;
  std::optional<double> reward;
};
using TrainLogger = std::function<void(const TrainEvent&)>;

struct XeConfig {
  int epochs = 20;
  /// Stop after this many optimizer steps; 0 means no cap.
  int max_steps = 0;
  int batch_size = 32;
  double learning_rate = 8e-5;
  std::uint64_t seed = 1;
  /// When set, parameters are saved to <dir>/last after every epoch.
  std::filesystem::path checkpoint_dir;
};

struct XeResult {
  std::vector<double> losses;
  int steps = 0;
};

/// Mini-batch XE with a seeded shuffle per epoch; batch loss is the mean of per-caption losses.
XeResult train_xe(CaptionModel& model, std::span<const CaptionExample> examples, const XeConfig& config,
                  const TrainLogger& log = {});

double mean_xe(const CaptionModel& model, std::span<const CaptionExample> examples);
/// Teacher-forced argmax accuracy pooled over all target tokens.
double token_accuracy(const CaptionModel& model, std::span<const CaptionExample> examples);

struct ScstConfig {
  int steps = 200;
  int batch_size = 8;
  double learning_rate = 8e-5;
  double temperature = 1.0;
  int max_len = 12;
  std::uint64_t seed = 3;
};

/// -advantage * sum_t log p(w_t).
ad::Var scst_objective(const ad::Var& sample_log_prob, double advantage);

struct SampledCaption {
  std::vector<int> tokens;
  /// Sum of log-probabilities of the sampled tokens (1 x 1, on the tape).
  ad::Var log_prob;
};

/// Multinomial sampling until eos or max_len.
SampledCaption sample_caption(ad::Tape& tape, const CaptionModel& model, const ad::Var& r_dec, Rng& rng, int max_len,
                              double temperature);

struct ScstTerm {
  ad::Var loss;
  double sample_reward = 0.0;
  double baseline_reward = 0.0;
  std::vector<int> sample;
  std::vector<int> baseline;
};

/// Self-critical loss for one video: sampled caption against the greedy baseline,
/// both rewarded by CIDEr against `references`.
ScstTerm scst_loss(ad::Tape& tape, const CaptionModel& model, const VideoInput& video, const References& references,
                   const CiderScorer& scorer, const Vocabulary& vocab, Rng& rng, const ScstConfig& config);

struct ScstExample {
  const VideoInput* video = nullptr;
  References references;
};

struct ScstResult {
  std::vector<double> losses;
  std::vector<double> sample_rewards;
};

ScstResult train_scst(CaptionModel& model, std::span<const ScstExample> examples, const CiderScorer& scorer,
                      const Vocabulary& vocab, const ScstConfig& config, const TrainLogger& log = {});

/// Beam-search captions for each input (beam 1 is greedy decoding).
std::vector<Caption> generate_captions(const CaptionModel& model, std::span<const VideoInput> inputs,
                                       const Vocabulary& vocab, const BeamConfig& beam);

}  // namespace cmg
