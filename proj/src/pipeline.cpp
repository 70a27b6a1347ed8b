#include "cmg/pipeline.hpp"

#include <cmath>

#include "cmg/errors.hpp"

namespace cmg {

SceneVocab scene_vocab(const Corpus& corpus) { return {corpus.object_classes, corpus.predicates}; }

std::vector<std::pair<std::string, int>> context_streams(const VideoRecord& video) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& [name, m] : video.context) out.emplace_back(name, static_cast<int>(m.cols()));
  return out;
}

ModelDims model_dims(const Corpus& corpus, const Vocabulary& vocab, int num_classes) {
  if (corpus.videos.empty()) throw ValidationError("corpus has no videos");
  ModelDims d;
  d.context_streams = context_streams(corpus.videos.front());
  d.feature_dim = corpus.feature_channels;
  d.num_classes = num_classes;
  d.scene_classes = scene_vocab(corpus).size();
  d.vocab_size = vocab.size();
  return d;
}

VideoInput prepare_video(const VideoRecord& video, const SceneVocab& vocab, const Localizer* localizer,
                         const PrepConfig& config) {
  if (video.frames.empty()) throw ValidationError("video " + video.id + " has no frames");
  VideoInput in;
  in.id = video.id;
  const auto keys = select_keyframes(video.frames, config.key_frames);
  for (const auto& [name, m] : video.context) {
    RowVector pooled = RowVector::Zero(m.cols());
    for (int f : keys) {
      if (f >= m.rows()) throw ValidationError("context stream " + name + " shorter than the video");
      pooled += m.row(f);
    }
    in.context.push_back(pooled / static_cast<double>(keys.size()));
  }
  if (localizer) {
    const Matrix none = Matrix::Zero(localizer->num_classes(), video.frames.front().cols());
    in.concepts = predict_meta_concepts(video, keys, *localizer, none);
  }
  std::map<int, const FrameScene*> by_frame;
  for (const auto& s : video.scene_graphs) by_frame[s.frame] = &s;
  std::vector<FrameScene> scenes;
  std::vector<FrameGraph> vg_graphs;
  std::vector<Matrix> features;
  for (int f : keys) {
    auto it = by_frame.find(f);
    FrameScene scene = it == by_frame.end() ? FrameScene{f, {}, {}} : *it->second;
    in.frame_graphs.push_back(build_frame_graph(scene, vocab, true));
    vg_graphs.push_back(config.vg_predicates ? in.frame_graphs.back() : build_frame_graph(scene, vocab, false));
    features.push_back(object_features(scene, video.frames[static_cast<std::size_t>(f)], video.grid_side));
    scenes.push_back(std::move(scene));
  }
  in.video_graph = build_video_graph(vg_graphs, scenes, features, config.tau_cos, config.tau_iou);
  return in;
}

std::vector<VideoInput> prepare_videos(const std::vector<const VideoRecord*>& videos, const SceneVocab& vocab,
                                       const Localizer* localizer, const PrepConfig& config) {
  std::vector<VideoInput> out;
  out.reserve(videos.size());
  for (const auto* v : videos) out.push_back(prepare_video(*v, vocab, localizer, config));
  return out;
}

std::vector<const VideoRecord*> video_pointers(const Corpus& corpus) {
  std::vector<const VideoRecord*> out;
  for (const auto& v : corpus.videos) out.push_back(&v);
  return out;
}

std::pair<std::vector<const VideoRecord*>, std::vector<const VideoRecord*>> split_videos(const Corpus& corpus,
                                                                                         double held_out_fraction) {
  if (held_out_fraction < 0.0 || held_out_fraction >= 1.0) throw ValidationError("held-out fraction must be in [0, 1)");
  const auto all = video_pointers(corpus);
  auto held = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(all.size())));
  if (held_out_fraction > 0.0 && all.size() >= 2) held = std::clamp<std::size_t>(held, 1, all.size() - 1);
  const auto cut = all.begin() + static_cast<std::ptrdiff_t>(all.size() - held);
  return {{all.begin(), cut}, {cut, all.end()}};
}

}  // namespace cmg
