#include "cmg/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cmg/errors.hpp"

namespace cmg {

Localizer::Localizer(int feature_dim, int num_classes, int grid_side, const LocalizerConfig& config,
                     std::uint64_t seed)
    : config_(config), num_classes_(num_classes), grid_side_(grid_side) {
  if (feature_dim < 1 || num_classes < 1 || grid_side < 1) throw ValidationError("localizer dims must be >= 1");
  Rng rng(seed);
  conv1 = Linear::create(params_, "loc.conv1", 9 * feature_dim, config.hidden, rng);
  conv2 = Linear::create(params_, "loc.conv2", config.hidden, num_classes, rng);
}

ad::Var Localizer::logits(ad::Tape& tape, const Matrix& frame) const {
  if (frame.rows() != static_cast<Eigen::Index>(grid_side_) * grid_side_)
    throw ValidationError("frame grid does not match the localizer grid");
  ad::Var patches = tape.constant(im2col3x3(frame, grid_side_));
  return conv2(tape, params_, ad::relu(conv1(tape, params_, patches)));
}

Matrix Localizer::scores(const Matrix& frame) const {
  ad::Tape tape;
  return ad::sigmoid(logits(tape, frame)).value();
}

std::vector<LocalizerSample> localizer_samples(const MaskExport& masks, const std::vector<const VideoRecord*>& videos,
                                               int num_classes) {
  std::map<std::string, const VideoRecord*> by_id;
  for (const auto* v : videos) by_id[v->id] = v;
  std::map<std::pair<std::string, int>, std::size_t> slot;
  std::vector<LocalizerSample> out;
  for (const auto& m : masks.masks) {
    auto vit = by_id.find(m.video);
    if (vit == by_id.end()) continue;
    const Matrix& frame = vit->second->frames.at(static_cast<std::size_t>(m.frame));
    if (m.cells.size() != static_cast<std::size_t>(frame.rows())) throw ValidationError("mask size mismatch");
    if (m.class_id < 0 || m.class_id >= num_classes) throw ValidationError("mask class id out of range");
    auto [it, fresh] = slot.emplace(std::make_pair(m.video, m.frame), out.size());
    if (fresh) out.push_back({&frame, Matrix::Zero(frame.rows(), num_classes)});
    Matrix& t = out[it->second].targets;
    for (std::size_t c = 0; c < m.cells.size(); ++c)
      if (m.cells[c]) t(static_cast<Eigen::Index>(c), m.class_id) = 1.0;
  }
  return out;
}

std::vector<double> train_localizer(Localizer& localizer, std::span<const LocalizerSample> samples,
                                    std::uint64_t seed, const StepLogger& log) {
  if (samples.empty()) throw ValidationError("localizer training needs at least one pseudo mask");
  const auto& cfg = localizer.config();
  Rng rng(seed);
  Adam adam({.learning_rate = cfg.learning_rate});
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.batch_size)), samples.size());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> losses;
  for (int s = 0; s < cfg.steps; ++s) {
    for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
    ad::Tape tape;
    std::vector<ad::Var> terms;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& smp = samples[order[i]];
      terms.push_back(ad::bce_with_logits_mean(localizer.logits(tape, *smp.frame), smp.targets));
    }
    ad::Var loss = ad::scale(ad::sum(ad::vcat(terms)), 1.0 / static_cast<double>(batch));
    if (!std::isfinite(loss.scalar())) throw NumericError("non-finite localizer loss at step " + std::to_string(s));
    tape.backward(loss);
    tape.accumulate_into(localizer.parameters());
    adam.step(localizer.parameters());
    losses.push_back(loss.scalar());
    if (log) log(s, loss.scalar());
  }
  return losses;
}

std::vector<std::vector<int>> concept_regions(const Matrix& scores, double presence_threshold, double region_ratio) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    const double best = scores.col(k).maxCoeff();
    if (best < presence_threshold) continue;
    for (Eigen::Index g = 0; g < scores.rows(); ++g)
      if (scores(g, k) >= region_ratio * best) out[static_cast<std::size_t>(k)].push_back(static_cast<int>(g));
  }
  return out;
}

std::vector<MetaConcept> predict_meta_concepts(const VideoRecord& video, std::span<const int> key_frames,
                                               const Localizer& localizer, const Matrix& semantic_table) {
  if (semantic_table.rows() != localizer.num_classes()) throw ValidationError("semantic table needs one row per class");
  const auto& cfg = localizer.config();
  std::vector<MetaConcept> out;
  for (int f : key_frames) {
    const Matrix& frame = video.frames.at(static_cast<std::size_t>(f));
    const auto regions = concept_regions(localizer.scores(frame), cfg.presence_threshold, cfg.region_ratio);
    for (std::size_t k = 0; k < regions.size(); ++k) {
      if (regions[k].empty()) continue;
      MetaConcept c;
      c.class_id = static_cast<int>(k);
      c.frame_index = f;
      c.region = regions[k];
      c.v = RowVector::Zero(frame.cols());
      for (int g : c.region) c.v += frame.row(g);
      c.v /= static_cast<double>(c.region.size());
      c.s = semantic_table.row(static_cast<Eigen::Index>(k));
      c.rep = c.v + c.s;
      out.push_back(std::move(c));
    }
  }
  return out;
}

double region_iou(std::span<const int> a, std::span<const int> b) {
  std::vector<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<int> inter;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
  const double uni = static_cast<double>(sa.size() + sb.size() - inter.size());
  return uni == 0.0 ? 0.0 : static_cast<double>(inter.size()) / uni;
}

double expected_random_iou(int cells, int area, int gt_area) {
  if (area <= 0 || gt_area <= 0) return 0.0;
  // log C(n, k) via lgamma keeps this stable for any grid size.
  auto lchoose = [](int n, int k) { return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0); };
  const double total = lchoose(cells, area);
  double e = 0.0;
  for (int k = std::max(0, area + gt_area - cells); k <= std::min(area, gt_area); ++k) {
    const double p = std::exp(lchoose(gt_area, k) + lchoose(cells - gt_area, area - k) - total);
    e += p * k / static_cast<double>(area + gt_area - k);
  }
  return e;
}

LocalizationReport evaluate_localization(const std::vector<const VideoRecord*>& videos, const Localizer& localizer,
                                         const ConceptClassTable& classes, int key_frames) {
  LocalizationReport rep;
  const Matrix no_semantics = Matrix::Zero(localizer.num_classes(), videos.empty() ? 1 : videos.front()->frames.front().cols());
  double iou_sum = 0.0, rnd_sum = 0.0;
  for (const auto* v : videos) {
    if (!v->gt_regions) continue;
    const auto keys = select_keyframes(v->frames, key_frames);
    for (const auto& c : predict_meta_concepts(*v, keys, localizer, no_semantics)) {
      const auto& gt_map = (*v->gt_regions)[static_cast<std::size_t>(c.frame_index)];
      auto it = gt_map.find(classes.at(c.class_id).canonical);
      const std::vector<int> empty;
      const auto& gt = it == gt_map.end() ? empty : it->second;
      iou_sum += region_iou(c.region, gt);
      rnd_sum += expected_random_iou(static_cast<int>(v->frames.front().rows()), static_cast<int>(c.region.size()),
                                     static_cast<int>(gt.size()));
      ++rep.concepts;
    }
  }
  if (rep.concepts > 0) {
    rep.mean_iou = iou_sum / rep.concepts;
    rep.mean_random_iou = rnd_sum / rep.concepts;
  }
  return rep;
}

}  // namespace cmg
