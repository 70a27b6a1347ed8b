#include "cmg/captioner.hpp"

#include "cmg/errors.hpp"
#include "cmg/metagraph.hpp"
#include "cmg/metalearner.hpp"

namespace cmg {

CaptionModel::CaptionModel(const ModelDims& dims, const CaptionModelConfig& config, std::uint64_t seed)
    : dims_(dims), config_(config) {
  const Ablation& ab = config.ablation;
  if (dims.vocab_size <= Vocabulary::kUnk) throw ValidationError("vocabulary must contain the special tokens");
  if (config.proj_dim < 1 || config.meta_dim < 1 || config.word_dim < 1 || config.hidden_dim < 1)
    throw ValidationError("captioner dims must be >= 1");
  if (ab.use_meta && config.knn_j < 1) throw ValidationError("knn_j must be >= 1");
  Rng rng(seed);
  if (ab.use_context)
    for (const auto& [name, width] : dims.context_streams) {
      context_proj_.push_back(Linear::create(params_, "ctx." + name, width, config.proj_dim, rng));
      layout_.emplace_back("con:" + name, config.proj_dim);
    }
  if (ab.use_meta) {
    if (dims.num_classes < 1 || dims.feature_dim < 1) throw ValidationError("meta concepts need classes and features");
    semantic = params_.add("meta.semantic", gaussian(dims.num_classes, dims.feature_dim, 0.1, rng));
    w_a = params_.add("meta.w_a", glorot(2 * dims.feature_dim, config.meta_dim, rng));
    layout_.emplace_back("meta", config.meta_dim);
  }
  if (ab.use_fg) {
    fg_ = FrameGraphEncoder::create(params_, dims.scene_classes, config.scene, rng);
    layout_.emplace_back("fg", config.scene.out_dim);
  }
  if (ab.use_vg) {
    vg_ = VideoGraphEncoder::create(params_, dims.scene_classes, config.scene, rng);
    layout_.emplace_back("vg", config.scene.out_dim);
  }
  if (layout_.empty()) throw ValidationError("every decoder input part is disabled");
  for (const auto& [_, w] : layout_) input_dim_ += w;
  embed_ = params_.add("dec.embed", gaussian(dims.vocab_size, config.word_dim, 0.1, rng));
  lstm_ = LstmCell::create(params_, "dec.lstm", config.word_dim + input_dim_, config.hidden_dim, rng);
  out_ = Linear::create(params_, "dec.out", config.hidden_dim, dims.vocab_size, rng);
}

ad::Var CaptionModel::concept_nodes(ad::Tape& tape, const VideoInput& video) const {
  const auto n = static_cast<Eigen::Index>(video.concepts.size());
  Matrix visual(n, dims_.feature_dim);
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = video.concepts[static_cast<std::size_t>(i)];
    if (c.v.size() != dims_.feature_dim) throw ValidationError("concept feature width mismatch");
    if (c.class_id < 0 || c.class_id >= dims_.num_classes) throw ValidationError("concept class out of range");
    visual.row(i) = c.v;
    ids.push_back(c.class_id);
  }
  ad::Var v = tape.constant(std::move(visual));
  if (config_.ablation.meta_features == MetaFeatures::kVisual) return v;
  ad::Var s = ad::gather_rows(tape.param(params_[semantic]), ids);
  if (config_.ablation.meta_features == MetaFeatures::kSemantic) return s;
  return ad::add(v, s);
}

ad::Var CaptionModel::meta_representation(ad::Tape& tape, const VideoInput& video) const {
  ad::Var w = tape.param(params_[w_a]);
  if (video.concepts.empty()) return empty_meta_graph(tape, config_.meta_dim);
  ad::Var nodes = concept_nodes(tape, video);
  KnnGraph g = build_knn_edges(nodes.value(), config_.knn_j);
  const Matrix adj = config_.normalize_adjacency ? row_normalize(g.adjacency) : g.adjacency;
  return encode_meta_graph(tape, nodes, adj, w);
}

CaptionModel::DecoderInput CaptionModel::decoder_input(ad::Tape& tape, const VideoInput& video) const {
  const Ablation& ab = config_.ablation;
  std::vector<ad::Var> parts;
  if (ab.use_context) {
    if (video.context.size() != context_proj_.size()) throw ValidationError("context stream count mismatch");
    for (std::size_t i = 0; i < context_proj_.size(); ++i)
      parts.push_back(context_proj_[i](tape, params_, tape.constant(video.context[i])));
  }
  if (ab.use_meta) parts.push_back(meta_representation(tape, video));
  if (ab.use_fg) parts.push_back(fg_.encode(tape, params_, video.frame_graphs));
  if (ab.use_vg) parts.push_back(vg_.encode(tape, params_, video.video_graph));
  return {ad::hcat(parts), layout_};
}

ad::Var CaptionModel::step(ad::Tape& tape, const ad::Var& r_dec, int prev_token, LstmState& state) const {
  if (prev_token < 0 || prev_token >= dims_.vocab_size) throw ValidationError("token id out of range");
  const int tok[] = {prev_token};
  ad::Var emb = ad::gather_rows(tape.param(params_[embed_]), tok);
  const ad::Var in[] = {emb, r_dec};
  state = lstm_.step(tape, params_, ad::hcat(in), state);
  return out_(tape, params_, state.h);
}

ad::Var CaptionModel::xe_loss(ad::Tape& tape, const VideoInput& video, std::span<const int> encoded) const {
  if (encoded.size() < 2) throw ValidationError("encoded caption needs bos and eos");
  ad::Var r = decoder_input(tape, video).r_dec;
  LstmState st = initial_state(tape);
  std::vector<ad::Var> logits;
  std::size_t count = 0;
  for (std::size_t t = 0; t + 1 < encoded.size(); ++t) {
    logits.push_back(step(tape, r, encoded[t], st));
    if (encoded[t + 1] != Vocabulary::kPad) ++count;
  }
  ad::Var nll = sequence_nll(ad::vcat(logits), encoded.subspan(1));
  return ad::scale(nll, 1.0 / static_cast<double>(count));
}

std::pair<int, int> CaptionModel::token_accuracy(const VideoInput& video, std::span<const int> encoded) const {
  CaptionDecoder dec(*this, video);
  auto state = dec.start();
  int correct = 0, total = 0;
  for (std::size_t t = 0; t + 1 < encoded.size(); ++t) {
    auto [next, lp] = dec.advance(state, encoded[t]);
    if (encoded[t + 1] != Vocabulary::kPad) {
      Eigen::Index best = 0;
      lp.maxCoeff(&best);
      correct += best == encoded[t + 1];
      ++total;
    }
    state = std::move(next);
  }
  return {correct, total};
}

CaptionDecoder::CaptionDecoder(const CaptionModel& model, const VideoInput& video) : model_(&model) {
  ad::Tape tape;
  r_dec_ = model.decoder_input(tape, video).r_dec.value();
}

CaptionDecoder::State CaptionDecoder::start() const {
  const auto h = model_->config().hidden_dim;
  return {Matrix::Zero(1, h), Matrix::Zero(1, h)};
}

std::pair<CaptionDecoder::State, RowVector> CaptionDecoder::advance(const State& state, int token) const {
  ad::Tape tape;
  LstmState st{tape.constant(state.h), tape.constant(state.c)};
  ad::Var logits = model_->step(tape, tape.constant(r_dec_), token, st);
  RowVector lp = ad::log_softmax_rows(logits).value();
  return {State{st.h.value(), st.c.value()}, std::move(lp)};
}

int CaptionDecoder::vocab_size() const { return model_->dims().vocab_size; }

Caption to_caption(const Hypothesis& h, const Vocabulary& vocab) { return vocab.decode(h.tokens); }

}  // namespace cmg
