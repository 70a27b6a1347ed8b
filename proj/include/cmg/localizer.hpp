#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cmg/metalearner.hpp"
#include "cmg/nn.hpp"

namespace cmg {

struct LocalizerConfig {
  int hidden = 32;
  /// A class is present on a frame when its best cell scores at least this.
  double presence_threshold = 0.5;
  /// Region = cells scoring >= region_ratio * best cell score.
  double region_ratio = 0.5;
  int batch_size = 8;
  double learning_rate = 0.05;
  int steps = 300;
};

/// 3x3 neighbourhoods (zero padded) of a side x side grid: G x 9*D, neighbours in
/// row-major order (dy, dx) from (-1, -1) to (1, 1).
template <typename Derived>
Matrix im2col3x3(const Eigen::MatrixBase<Derived>& grid, int side) {
  const Eigen::Index d = grid.cols();
  Matrix out = Matrix::Zero(grid.rows(), 9 * d);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++k) {
          const int rr = r + dy, cc = c + dx;
          if (rr < 0 || cc < 0 || rr >= side || cc >= side) continue;
          out.block(r * side + c, k * d, 1, d) = grid.row(rr * side + cc);
        }
    }
  return out;
}

/// Two-layer convolutional multi-label segmenter over frame feature grids:
/// 3x3 conv -> ReLU -> 1x1 conv to one score map per concept class.
class Localizer {
 public:
  Localizer(int feature_dim, int num_classes, int grid_side, const LocalizerConfig& config, std::uint64_t seed);

  /// G x K logits for one G x D frame.
  ad::Var logits(ad::Tape& tape, const Matrix& frame) const;
  /// G x K sigmoid scores.
  Matrix scores(const Matrix& frame) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const LocalizerConfig& config() const { return config_; }
  int num_classes() const { return num_classes_; }
  int grid_side() const { return grid_side_; }

  Linear conv1, conv2;

 private:
  LocalizerConfig config_;
  int num_classes_ = 0;
  int grid_side_ = 0;
  ParameterSet params_;
};

/// One training frame: its features and a G x K 0/1 target map.
struct LocalizerSample {
  const Matrix* frame = nullptr;
  Matrix targets;
};

/// Groups masks by (video, frame); classes without a mask on that frame are all-negative.
std::vector<LocalizerSample> localizer_samples(const MaskExport& masks, const std::vector<const VideoRecord*>& videos,
                                               int num_classes);

std::vector<double> train_localizer(Localizer& localizer, std::span<const LocalizerSample> samples, std::uint64_t seed,
                                    const StepLogger& log = {});

/// A localized cross-modal concept. rep = v + s.
struct MetaConcept {
  int class_id = 0;
  int frame_index = 0;
  std::vector<int> region;
  RowVector v;
  RowVector s;
  RowVector rep;
};

/// For each key frame and class whose best score reaches the presence threshold,
/// one concept over cells >= region_ratio * best; v = mean masked features,
/// s = semantic_table row of the class.
std::vector<MetaConcept> predict_meta_concepts(const VideoRecord& video, std::span<const int> key_frames,
                                               const Localizer& localizer, const Matrix& semantic_table);

/// Same decision rule on precomputed G x K scores.
std::vector<std::vector<int>> concept_regions(const Matrix& scores, double presence_threshold, double region_ratio);

double region_iou(std::span<const int> a, std::span<const int> b);
/// E[IoU] between a fixed region of `gt_area` cells and a uniformly random region
/// of `area` cells out of `cells` (hypergeometric overlap).
double expected_random_iou(int cells, int area, int gt_area);

struct LocalizationReport {
  double mean_iou = 0.0;
  double mean_random_iou = 0.0;
  int concepts = 0;
};

/// IoU of every predicted concept against the ground-truth region of its class on
/// its frame (empty ground truth scores 0), against the area-matched random baseline.
LocalizationReport evaluate_localization(const std::vector<const VideoRecord*>& videos, const Localizer& localizer,
                                         const ConceptClassTable& classes, int key_frames);

}  // namespace cmg
