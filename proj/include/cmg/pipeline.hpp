#pragma once

#include <vector>

#include "cmg/captioner.hpp"
#include "cmg/corpus.hpp"
#include "cmg/datagen.hpp"
#include "cmg/localizer.hpp"
#include "cmg/scenegraph.hpp"

namespace cmg {

struct PrepConfig {
  int key_frames = 10;
  double tau_cos = 0.9;
  double tau_iou = 0.5;
  /// Predicate nodes in the video-level graph.
  bool vg_predicates = true;
};

SceneVocab scene_vocab(const Corpus& corpus);

/// Context streams in name order with their widths.
std::vector<std::pair<std::string, int>> context_streams(const VideoRecord& video);

ModelDims model_dims(const Corpus& corpus, const Vocabulary& vocab, int num_classes);

/// Key frames, pooled context, localized concepts (skipped when `localizer` is null),
/// per-key-frame scene graphs and the linked video graph.
VideoInput prepare_video(const VideoRecord& video, const SceneVocab& vocab, const Localizer* localizer,
                         const PrepConfig& config);

std::vector<VideoInput> prepare_videos(const std::vector<const VideoRecord*>& videos, const SceneVocab& vocab,
                                       const Localizer* localizer, const PrepConfig& config);

std::vector<const VideoRecord*> video_pointers(const Corpus& corpus);

/// Leading videos for training and the trailing `held_out_fraction` for evaluation
/// (at least one video on each side when the corpus has two or more).
std::pair<std::vector<const VideoRecord*>, std::vector<const VideoRecord*>> split_videos(const Corpus& corpus,
                                                                                         double held_out_fraction);

}  // namespace cmg
