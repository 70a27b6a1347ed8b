#pragma once

#include <cstdint>
#include <vector>

#include "cmg/config.hpp"
#include "cmg/pipeline.hpp"
#include "cmg/trainer.hpp"
#include "support/fixtures.hpp"

namespace cmg::testing {

/// Small enough that a whole recipe finishes in about a second.
inline AppConfig tiny_app_config(int videos = 8, std::uint64_t seed = 7) {
  AppConfig c;
  c.data = small_spec(videos, seed);
  c.meta.steps = 10;
  c.meta.batch_size = 4;
  c.localizer.steps = 10;
  c.localizer.hidden = 8;
  c.captioner = tiny_caption_config();
  c.xe.epochs = 2;
  c.xe.batch_size = 4;
  c.xe.learning_rate = 0.01;
  c.scst.steps = 2;
  c.scst.batch_size = 2;
  c.scst.max_len = 8;
  c.decode.max_len = 8;
  c.prep.key_frames = 4;
  return c;
}

/// A generated corpus prepared for the captioner without a localizer.
struct PreparedSet {
  Corpus corpus;
  Vocabulary vocab;
  std::vector<const VideoRecord*> videos;
  std::vector<VideoInput> inputs;
  std::vector<CaptionExample> examples;
  ModelDims dims;

  explicit PreparedSet(const GeneratorSpec& spec, int key_frames = 4) : corpus(generate_corpus(spec)) {
    std::vector<Caption> caps;
    for (const auto& v : corpus.videos) caps.insert(caps.end(), v.captions.begin(), v.captions.end());
    vocab = build_vocab(caps, 1);
    videos = video_pointers(corpus);
    PrepConfig prep;
    prep.key_frames = key_frames;
    inputs = prepare_videos(videos, scene_vocab(corpus), nullptr, prep);
    examples = caption_examples(inputs, videos, vocab);
    dims = model_dims(corpus, vocab, 4);
  }
};

}  // namespace cmg::testing
