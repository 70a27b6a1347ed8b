#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cmg/captioner.hpp"
#include "cmg/datagen.hpp"

namespace cmg::testing {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cmg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline GeneratorSpec small_spec(int videos = 4, std::uint64_t seed = 7) {
  GeneratorSpec s;
  s.num_videos = videos;
  s.frames_per_video = 6;
  s.captions_per_video = 2;
  s.seed = seed;
  return s;
}

inline CaptionModelConfig tiny_caption_config() {
  CaptionModelConfig c;
  c.proj_dim = 4;
  c.meta_dim = 3;
  c.word_dim = 4;
  c.hidden_dim = 5;
  c.scene.embed_dim = 4;
  c.scene.gat_hidden = 2;
  c.scene.gat_heads = 2;
  c.scene.out_dim = 4;
  c.scene.transformer_heads = 2;
  c.scene.transformer_ff = 6;
  return c;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// A random tabular language model: each prefix gets its own fixed random distribution.
struct ToyDecoder {
  using State = std::vector<int>;
  int vocab = 6;
  std::uint64_t seed = 1;
  double spread = 2.0;
  mutable std::map<State, RowVector> table;

  State start() const { return {}; }
  std::pair<State, RowVector> advance(const State& s, int token) const {
    State next = s;
    next.push_back(token);
    auto it = table.find(next);
    if (it == table.end()) {
      std::uint64_t h = seed;
      for (int t : next) h = h * 1000003u + static_cast<std::uint64_t>(t) + 1;
      std::mt19937_64 rng(h);
      std::uniform_real_distribution<double> u(-spread, spread);
      RowVector logits(vocab);
      for (int i = 0; i < vocab; ++i) logits(i) = u(rng);
      const double mx = logits.maxCoeff();
      const double lse = mx + std::log((logits.array() - mx).exp().sum());
      it = table.emplace(next, (logits.array() - lse).matrix()).first;
    }
    return {next, it->second};
  }
};

}  // namespace cmg::testing
