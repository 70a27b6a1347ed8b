#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmg/autodiff.hpp"

namespace cmg {

/// Axis-aligned box [x1, y1, x2, y2] in grid-cell units.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const Box&) const = default;
};

struct SceneObject {
  int id = 0;
  std::string cls;
  Box box;
};

struct SceneTriplet {
  int subj = 0;
  std::string pred;
  int obj = 0;
};

/// Detected scene graph of one frame.
struct FrameScene {
  int frame = 0;
  std::vector<SceneObject> objects;
  std::vector<SceneTriplet> triplets;
};

/// class name -> sorted cell indices.
using RegionMap = std::map<std::string, std::vector<int>>;

using Caption = std::vector<std::string>;

struct VideoRecord {
  std::string id;
  int grid_side = 0;
  /// One G x D_c feature grid per frame, cells row-major.
  std::vector<Matrix> frames;
  /// stream name -> F x D_s per-frame context features.
  std::map<std::string, Matrix> context;
  std::vector<Caption> captions;
  std::vector<FrameScene> scene_graphs;
  std::optional<std::vector<RegionMap>> gt_regions;
};

struct MotionTemplate {
  std::string name;
  double dx = 0.0;
  double dy = 0.0;
  /// Caption words describing the motion, e.g. {"moves", "left"}.
  std::vector<std::string> phrase;
};

struct GeneratorSpec {
  int num_videos = 64;
  int frames_per_video = 16;
  int grid_side = 6;
  std::vector<std::string> shape_classes = {"square", "circle", "triangle", "star", "cross"};
  std::vector<std::string> color_classes = {"red", "green", "blue", "yellow"};
  std::vector<MotionTemplate> motion_templates = default_motions();
  /// member -> canonical shape name, used for caption paraphrases.
  std::map<std::string, std::string> synonyms = {{"box", "square"}, {"ring", "circle"}};
  int captions_per_video = 3;
  int max_objects = 2;
  int noise_channels = 3;
  double noise_stddev = 0.05;
  double object_size = 2.0;
  std::uint64_t seed = 7;

  static std::vector<MotionTemplate> default_motions();
  /// Channels per grid cell: one-hot shape, one-hot colour, then noise channels.
  int feature_channels() const;
  void validate() const;
};

/// In-memory corpus plus the metadata the rest of the pipeline needs.
struct Corpus {
  int grid_side = 0;
  int feature_channels = 0;
  std::vector<std::string> object_classes;
  std::vector<std::string> predicates;
  /// Object nouns recognised in captions (canonical names and synonyms).
  std::vector<std::string> lexicon;
  std::map<std::string, std::string> synonyms;
  std::vector<VideoRecord> videos;
};

inline const std::vector<std::string> kPredicates = {"left-of", "right-of", "above", "below"};

/// Pure in-memory generation; a function of the spec alone.
Corpus generate_corpus(const GeneratorSpec& spec);

/// Writes manifest.json, lexicon.txt, synonyms.tsv and per-video payloads under `dir`.
/// Returns the manifest path.
std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& manifest);

/// Indices of the min(n, F) frames with largest L1 difference to their predecessor
/// (first frame scores 0), ties to the smaller index, returned in temporal order.
std::vector<int> select_keyframes(std::span<const Matrix> frames, int n);
/// Same selection from precomputed differences.
std::vector<int> select_top_differences(std::span<const double> diffs, int n);
std::vector<double> frame_differences(std::span<const Matrix> frames);

/// Fraction of cell (row, col) of unit size covered by the box.
double cell_coverage(const Box& box, int row, int col);
/// Cells whose centre lies inside the box.
std::vector<int> cells_in_box(const Box& box, int grid_side);

std::string scene_to_json_line(const FrameScene& scene);
FrameScene scene_from_json_line(const std::string& line);

}  // namespace cmg
