#include "cmg/metalearner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "cmg/errors.hpp"
#include "cmg/feature_file.hpp"
#include "json.hpp"

namespace cmg {
namespace fs = std::filesystem;

MetaLearner::MetaLearner(int feature_dim, int vocab_size, const MetaLearnerConfig& config, std::uint64_t seed)
    : config_(config), feature_dim_(feature_dim), vocab_size_(vocab_size) {
  if (feature_dim < 1 || vocab_size < 1) throw ValidationError("meta-learner dims must be >= 1");
  if (config.lambda < 0.0) throw ValidationError("lambda must be >= 0");
  if (config.margin < 0.0) throw ValidationError("margin must be >= 0");
  Rng rng(seed);
  const int da = config.attention_dim, dh = config.hidden_dim, de = config.embed_dim;
  w_v = params_.add("meta.w_v", glorot(feature_dim, da, rng));
  w_h = params_.add("meta.w_h", glorot(dh, da, rng));
  w_f = params_.add("meta.w_f", glorot(da, 1, rng));
  w_e = params_.add("meta.w_e", gaussian(vocab_size, de, 0.1, rng));
  lstm_ = LstmCell::create(params_, "meta.lstm", de + feature_dim, dh, rng);
  w_p = params_.add("meta.w_p", glorot(dh, vocab_size, rng));
  proj_video = Linear::create(params_, "meta.proj_video", feature_dim, config.align_dim, rng);
  proj_sentence = Linear::create(params_, "meta.proj_sentence", dh, config.align_dim, rng);
}

ad::Var MetaLearner::project_grid(ad::Tape& tape, const ad::Var& grid) const {
  if (grid.cols() != feature_dim_) throw ValidationError("feature grid has wrong channel count");
  require_finite(grid.value(), "feature grid");
  return ad::matmul(grid, tape.param(params_[w_v]));
}

MetaLearner::Attention MetaLearner::attend(ad::Tape& tape, const ad::Var& grid, const ad::Var& projected,
                                           const ad::Var& h_prev) const {
  require_finite(grid.value(), "feature grid");
  require_finite(h_prev.value(), "hidden state");
  ad::Var hidden = ad::relu(ad::add_row(projected, ad::matmul(h_prev, tape.param(params_[w_h]))));
  ad::Var logits = ad::transpose(ad::matmul(hidden, tape.param(params_[w_f])));
  ad::Var alpha = ad::softmax_rows(logits);
  return {alpha, ad::matmul(alpha, grid)};
}

MetaLearner::Step MetaLearner::step(ad::Tape& tape, int prev_token, const ad::Var& grid, const ad::Var& projected,
                                    const LstmState& prev) const {
  if (prev_token < 0 || prev_token >= vocab_size_)
    throw ValidationError("token id out of range: " + std::to_string(prev_token));
  Attention att = attend(tape, grid, projected, prev.h);
  const int tok[1] = {prev_token};
  ad::Var emb = ad::gather_rows(tape.param(params_[w_e]), tok);
  const ad::Var parts[2] = {emb, att.context};
  LstmState next = lstm_.step(tape, params_, ad::hcat(parts), prev);
  ad::Var logits = ad::matmul(next.h, tape.param(params_[w_p]));
  return {next, att, logits};
}

MetaLearner::CaptionPass MetaLearner::run_caption(ad::Tape& tape, const ad::Var& grid,
                                                  std::span<const int> encoded) const {
  if (encoded.size() < 2) throw ValidationError("caption must hold at least bos and one target");
  ad::Var projected = project_grid(tape, grid);
  LstmState state = initial_state(tape);
  CaptionPass pass;
  std::vector<ad::Var> logits;
  for (std::size_t i = 0; i + 1 < encoded.size(); ++i) {
    Step s = step(tape, encoded[i], grid, projected, state);
    state = s.state;
    logits.push_back(s.logits);
    pass.alphas.push_back(s.attention.alpha.value().row(0));
  }
  pass.word_loss = sequence_nll(ad::vcat(logits), encoded.subspan(1));
  pass.sentence = state.h;
  return pass;
}

ad::Var MetaLearner::video_embedding(ad::Tape& tape, const ad::Var& grid) const {
  return proj_video(tape, params_, ad::mean_rows(grid));
}

ad::Var MetaLearner::sentence_embedding(ad::Tape& tape, const ad::Var& sentence) const {
  return proj_sentence(tape, params_, sentence);
}

ad::Var MetaLearner::batch_loss(ad::Tape& tape, std::span<const Matrix> grids,
                                std::span<const std::vector<int>> captions) const {
  if (grids.empty() || grids.size() != captions.size()) throw ValidationError("meta batch shape mismatch");
  std::vector<ad::Var> word, videos, sentences;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    ad::Var grid = tape.constant(grids[i]);
    CaptionPass pass = run_caption(tape, grid, captions[i]);
    word.push_back(pass.word_loss);
    videos.push_back(video_embedding(tape, grid));
    sentences.push_back(sentence_embedding(tape, pass.sentence));
  }
  ad::Var total = ad::sum(ad::vcat(word));
  if (grids.size() >= 2 && config_.lambda > 0.0) {
    ad::Var cross = alignment_loss(ad::vcat(videos), ad::vcat(sentences), config_.margin, config_.hardest_negative);
    total = ad::add(total, ad::scale(cross, config_.lambda));
  }
  return ad::scale(total, 1.0 / static_cast<double>(grids.size()));
}

ad::Var sequence_nll(const ad::Var& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw ValidationError("sequence_nll: one logits row per target required");
  ad::Var lp = ad::log_softmax_rows(logits);
  std::vector<ad::Var> terms;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == Vocabulary::kPad) continue;
    if (targets[i] < 0 || targets[i] >= logits.cols()) throw ValidationError("target token out of range");
    terms.push_back(ad::pick(lp, static_cast<Eigen::Index>(i), targets[i]));
  }
  if (terms.empty()) throw ValidationError("caption has no non-pad targets");
  return ad::scale(ad::sum(ad::vcat(terms)), -1.0);
}

namespace {

// Hinge terms anchored at rows of `anchor` against rows of `other`.
ad::Var directional_hinges(const ad::Var& anchor, const ad::Var& other, double margin, bool hardest) {
  const Eigen::Index m = anchor.rows();
  std::vector<ad::Var> dist;  // row-major m x m distances
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) dist.push_back(ad::norm(ad::sub(ad::row(anchor, a), ad::row(other, b))));
  std::vector<ad::Var> terms;
  for (Eigen::Index a = 0; a < m; ++a) {
    const ad::Var& pos = dist[static_cast<std::size_t>(a * m + a)];
    if (hardest) {
      Eigen::Index best = -1;
      for (Eigen::Index n = 0; n < m; ++n)
        if (n != a && (best < 0 || dist[static_cast<std::size_t>(a * m + n)].scalar() <
                                       dist[static_cast<std::size_t>(a * m + best)].scalar()))
          best = n;
      terms.push_back(ad::relu(ad::add_scalar(ad::sub(pos, dist[static_cast<std::size_t>(a * m + best)]), margin)));
    } else {
      for (Eigen::Index n = 0; n < m; ++n)
        if (n != a)
          terms.push_back(ad::relu(ad::add_scalar(ad::sub(pos, dist[static_cast<std::size_t>(a * m + n)]), margin)));
    }
  }
  return ad::sum(ad::vcat(terms));
}

}  // namespace

ad::Var alignment_loss(const ad::Var& video, const ad::Var& sentence, double margin, bool hardest_negative) {
  if (video.rows() != sentence.rows() || video.cols() != sentence.cols())
    throw ValidationError("alignment_loss: video and sentence embeddings must have matching shapes");
  if (video.rows() < 2) throw ValidationError("alignment_loss needs M >= 2 pairs");
  return ad::add(directional_hinges(video, sentence, margin, hardest_negative),
                 directional_hinges(sentence, video, margin, hardest_negative));
}

double meta_objective(double word_loss, double cross_loss, double lambda) {
  if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
  return word_loss + lambda * cross_loss;
}

std::vector<int> mask_frames(const VideoRecord& video, int key_frames, int count) {
  const auto keys = select_keyframes(video.frames, key_frames);
  const auto diffs = frame_differences(video.frames);
  std::vector<double> key_diffs;
  for (int k : keys) key_diffs.push_back(diffs[static_cast<std::size_t>(k)]);
  std::vector<int> out;
  for (int i : select_top_differences(key_diffs, count)) out.push_back(keys[static_cast<std::size_t>(i)]);
  return out;
}

Matrix concat_grids(const VideoRecord& video, std::span<const int> frames) {
  const Eigen::Index g = video.frames.front().rows();
  Matrix out(g * static_cast<Eigen::Index>(frames.size()), video.frames.front().cols());
  for (std::size_t i = 0; i < frames.size(); ++i)
    out.middleRows(g * static_cast<Eigen::Index>(i), g) = video.frames.at(static_cast<std::size_t>(frames[i]));
  return out;
}

MetaTrainResult train_meta_learner(MetaLearner& learner, const std::vector<const VideoRecord*>& videos,
                                   const Vocabulary& vocab, std::uint64_t seed, const StepLogger& log) {
  if (videos.empty()) throw ValidationError("meta-learner training needs at least one video");
  const auto& cfg = learner.config();
  Rng rng(seed);
  Adam adam({.learning_rate = cfg.learning_rate});
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.batch_size)), videos.size());

  std::vector<std::vector<int>> keys;
  for (const auto* v : videos) keys.push_back(select_keyframes(v->frames, cfg.key_frames));

  MetaTrainResult result;
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  for (int s = 0; s < cfg.steps; ++s) {
    // Partial Fisher-Yates: a batch of distinct videos.
    for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
    std::vector<Matrix> grids;
    std::vector<std::vector<int>> caps;
    for (std::size_t i = 0; i < batch; ++i) {
      const VideoRecord& v = *videos[order[i]];
      std::vector<int> pool = keys[order[i]];
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.sampled_frames), pool.size());
      for (std::size_t k = 0; k < take; ++k) std::swap(pool[k], pool[k + uniform_index(rng, pool.size() - k)]);
      pool.resize(take);
      std::sort(pool.begin(), pool.end());
      grids.push_back(concat_grids(v, pool));
      caps.push_back(vocab.encode(v.captions[uniform_index(rng, v.captions.size())]));
    }
    ad::Tape tape;
    ad::Var loss = learner.batch_loss(tape, grids, caps);
    if (!std::isfinite(loss.scalar())) {
      std::string ids;
      for (std::size_t i = 0; i < batch; ++i) ids += " " + videos[order[i]]->id;
      throw NumericError("non-finite meta-learner loss at step " + std::to_string(s) + "; batch:" + ids);
    }
    tape.backward(loss);
    tape.accumulate_into(learner.parameters());
    adam.step(learner.parameters());
    result.losses.push_back(loss.scalar());
    if (log) log(s, loss.scalar());
  }
  return result;
}

std::vector<std::uint8_t> binarize_attention(const RowVector& alpha, double max_alpha, double ratio) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(alpha.size()));
  const double thr = ratio * max_alpha;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) mask[static_cast<std::size_t>(i)] = alpha(i) >= thr ? 1 : 0;
  return mask;
}

MaskExport export_pseudo_masks(const MetaLearner& learner, const std::vector<const VideoRecord*>& videos,
                               const Vocabulary& vocab, const ConceptClassTable& classes,
                               const std::set<std::string>& lexicon) {
  const auto& cfg = learner.config();
  MaskExport out;
  for (const auto* v : videos) {
    const auto frames = mask_frames(*v, cfg.key_frames, cfg.sampled_frames);
    const Matrix grid = concat_grids(*v, frames);
    const Eigen::Index g = v->frames.front().rows();
    std::map<std::pair<int, int>, std::vector<std::uint8_t>> merged;  // (class, frame slot) -> mask
    for (const auto& caption : v->captions) {
      ad::Tape tape;
      const auto encoded = vocab.encode(caption);
      const auto pass = learner.run_caption(tape, tape.constant(grid), encoded);
      for (std::size_t i = 0; i < caption.size(); ++i) {
        const int cls = classes.class_of(caption[i]);
        if (cls < 0) {
          if (lexicon.contains(caption[i])) ++out.skipped_tokens;
          continue;
        }
        const RowVector& alpha = pass.alphas[i];
        const double mx = alpha.maxCoeff();
        for (std::size_t f = 0; f < frames.size(); ++f) {
          const RowVector part = alpha.segment(static_cast<Eigen::Index>(f) * g, g);
          auto bits = binarize_attention(part, mx, cfg.mask_threshold);
          auto& acc = merged[{cls, static_cast<int>(f)}];
          if (acc.empty()) acc.assign(bits.size(), 0);
          for (std::size_t c = 0; c < bits.size(); ++c) acc[c] |= bits[c];
        }
      }
    }
    for (auto& [key, cells] : merged) {
      if (std::none_of(cells.begin(), cells.end(), [](std::uint8_t b) { return b != 0; })) continue;
      out.masks.push_back({v->id, classes.at(key.first).canonical, key.first,
                           frames[static_cast<std::size_t>(key.second)], std::move(cells)});
    }
  }
  return out;
}

void write_masks(const MaskExport& masks, int grid_side, const fs::path& dir) {
  nlohmann::json index;
  index["skipped_tokens"] = masks.skipped_tokens;
  index["masks"] = nlohmann::json::array();
  for (const auto& m : masks.masks) {
    const fs::path rel = fs::path(m.video) / m.cls / (std::to_string(m.frame) + ".cmgf");
    std::error_code ec;
    fs::create_directories(dir / rel.parent_path(), ec);
    if (ec) throw IoError("cannot create " + (dir / rel.parent_path()).string() + ": " + ec.message());
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(grid_side), static_cast<std::uint32_t>(grid_side)};
    for (auto b : m.cells) t.data.push_back(b ? 1.0f : 0.0f);
    write_feature_file(dir / rel, t);
    index["masks"].push_back({{"video", m.video}, {"class", m.cls}, {"frame", m.frame}, {"path", rel.generic_string()}});
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write mask index in " + dir.string());
  out << index.dump(1) << '\n';
}

MaskExport read_masks(const fs::path& dir, const ConceptClassTable& classes) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("cannot open mask index in " + dir.string());
  MaskExport out;
  try {
    const auto index = nlohmann::json::parse(in);
    out.skipped_tokens = index.at("skipped_tokens").get<int>();
    for (const auto& e : index.at("masks")) {
      PseudoMask m;
      m.video = e.at("video").get<std::string>();
      m.cls = e.at("class").get<std::string>();
      m.class_id = classes.class_by_name(m.cls);
      if (m.class_id < 0) throw ValidationError("mask class not in concept table: " + m.cls);
      m.frame = e.at("frame").get<int>();
      const Tensor t = read_feature_file(dir / e.at("path").get<std::string>());
      for (float f : t.data) m.cells.push_back(f != 0.0f ? 1 : 0);
      out.masks.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed mask index: " + std::string(e.what()));
  }
  return out;
}

}  // namespace cmg
