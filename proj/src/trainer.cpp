#include "cmg/trainer.hpp"

#include <cmath>
#include <numeric>

#include "cmg/errors.hpp"

namespace cmg {

std::vector<CaptionExample> caption_examples(std::span<const VideoInput> inputs,
                                             const std::vector<const VideoRecord*>& videos, const Vocabulary& vocab,
                                             bool all_captions) {
  if (inputs.size() != videos.size()) throw ValidationError("one prepared input per video required");
  std::vector<CaptionExample> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i]->captions.empty()) throw ValidationError("video " + videos[i]->id + " has no captions");
    const std::size_t n = all_captions ? videos[i]->captions.size() : 1;
    for (std::size_t c = 0; c < n; ++c) out.push_back({&inputs[i], vocab.encode(videos[i]->captions[c])});
  }
  return out;
}

XeResult train_xe(CaptionModel& model, std::span<const CaptionExample> examples, const XeConfig& config,
                  const TrainLogger& log) {
  XeResult res;
  if (config.epochs <= 0) return res;
  if (examples.empty()) throw ValidationError("no training captions");
  if (config.batch_size < 1) throw ValidationError("batch size must be >= 1");
  Rng rng(config.seed);
  Adam adam({.learning_rate = config.learning_rate});
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && res.steps >= config.max_steps) break;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      ad::Tape tape;
      std::vector<ad::Var> terms;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        terms.push_back(model.xe_loss(tape, *ex.video, ex.encoded));
      }
      ad::Var loss = ad::scale(ad::sum(ad::vcat(terms)), 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(loss.scalar())) {
        std::string ids;
        for (std::size_t i = start; i < end; ++i) ids += (ids.empty() ? "" : ",") + examples[order[i]].video->id;
        throw NumericError("non-finite XE loss at step " + std::to_string(res.steps) + " on batch [" + ids + "]");
      }
      tape.backward(loss);
      tape.accumulate_into(model.parameters());
      adam.step(model.parameters());
      res.losses.push_back(loss.scalar());
      if (log) log({"xe", res.steps, loss.scalar(), std::nullopt});
      ++res.steps;
    }
    if (!config.checkpoint_dir.empty()) save_parameters(model.parameters(), config.checkpoint_dir / "last");
    if (config.max_steps > 0 && res.steps >= config.max_steps) break;
  }
  return res;
}

double mean_xe(const CaptionModel& model, std::span<const CaptionExample> examples) {
  if (examples.empty()) throw ValidationError("no captions to evaluate");
  double total = 0.0;
  for (const auto& ex : examples) {
    ad::Tape tape;
    total += model.xe_loss(tape, *ex.video, ex.encoded).scalar();
  }
  return total / static_cast<double>(examples.size());
}

double token_accuracy(const CaptionModel& model, std::span<const CaptionExample> examples) {
  int correct = 0, total = 0;
  for (const auto& ex : examples) {
    auto [c, t] = model.token_accuracy(*ex.video, ex.encoded);
    correct += c;
    total += t;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

ad::Var scst_objective(const ad::Var& sample_log_prob, double advantage) { return ad::scale(sample_log_prob, -advantage); }

SampledCaption sample_caption(ad::Tape& tape, const CaptionModel& model, const ad::Var& r_dec, Rng& rng, int max_len,
                              double temperature) {
  if (temperature <= 0.0) throw ValidationError("sampling temperature must be > 0");
  SampledCaption out;
  LstmState st = model.initial_state(tape);
  int prev = Vocabulary::kBos;
  std::vector<ad::Var> picks;
  for (int t = 0; t < max_len; ++t) {
    ad::Var lp = ad::log_softmax_rows(ad::scale(model.step(tape, r_dec, prev, st), 1.0 / temperature));
    const double u = uniform01(rng);
    double cum = 0.0;
    Eigen::Index tok = lp.cols() - 1;
    for (Eigen::Index w = 0; w < lp.cols(); ++w) {
      cum += std::exp(lp.value()(0, w));
      if (u < cum) {
        tok = w;
        break;
      }
    }
    picks.push_back(ad::pick(lp, 0, tok));
    out.tokens.push_back(static_cast<int>(tok));
    prev = static_cast<int>(tok);
    if (prev == Vocabulary::kEos) break;
  }
  out.log_prob = ad::sum(ad::vcat(picks));
  return out;
}

ScstTerm scst_loss(ad::Tape& tape, const CaptionModel& model, const VideoInput& video, const References& references,
                   const CiderScorer& scorer, const Vocabulary& vocab, Rng& rng, const ScstConfig& config) {
  if (references.empty()) throw ValidationError("SCST needs at least one reference caption");
  ScstTerm term;
  ad::Var r_dec = model.decoder_input(tape, video).r_dec;
  SampledCaption s = sample_caption(tape, model, r_dec, rng, config.max_len, config.temperature);
  const Hypothesis greedy = greedy_decode(CaptionDecoder(model, video), config.max_len);
  term.sample = s.tokens;
  term.baseline = greedy.tokens;
  term.sample_reward = scorer.score(vocab.decode(s.tokens), references);
  term.baseline_reward = scorer.score(vocab.decode(greedy.tokens), references);
  term.loss = scst_objective(s.log_prob, term.sample_reward - term.baseline_reward);
  return term;
}

ScstResult train_scst(CaptionModel& model, std::span<const ScstExample> examples, const CiderScorer& scorer,
                      const Vocabulary& vocab, const ScstConfig& config, const TrainLogger& log) {
  ScstResult res;
  if (config.steps <= 0) return res;
  if (examples.empty()) throw ValidationError("no SCST videos");
  Rng rng(config.seed);
  Adam adam({.learning_rate = config.learning_rate});
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, config.batch_size)), examples.size());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int s = 0; s < config.steps; ++s) {
    for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
    ad::Tape tape;
    std::vector<ad::Var> terms;
    double reward = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& ex = examples[order[i]];
      ScstTerm t = scst_loss(tape, model, *ex.video, ex.references, scorer, vocab, rng, config);
      terms.push_back(t.loss);
      reward += t.sample_reward;
    }
    ad::Var loss = ad::scale(ad::sum(ad::vcat(terms)), 1.0 / static_cast<double>(batch));
    if (!std::isfinite(loss.scalar())) throw NumericError("non-finite SCST loss at step " + std::to_string(s));
    tape.backward(loss);
    tape.accumulate_into(model.parameters());
    adam.step(model.parameters());
    reward /= static_cast<double>(batch);
    res.losses.push_back(loss.scalar());
    res.sample_rewards.push_back(reward);
    if (log) log({"scst", s, loss.scalar(), reward});
  }
  return res;
}

std::vector<Caption> generate_captions(const CaptionModel& model, std::span<const VideoInput> inputs,
                                       const Vocabulary& vocab, const BeamConfig& beam) {
  if (beam.beam < 1) throw ValidationError("beam size must be >= 1");
  std::vector<Caption> out;
  for (const auto& in : inputs) {
    CaptionDecoder dec(model, in);
    out.push_back(to_caption(beam_search(dec, beam), vocab));
  }
  return out;
}

}  // namespace cmg
