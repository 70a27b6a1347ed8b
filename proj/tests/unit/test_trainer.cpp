#include <cmath>
#include <filesystem>
#include <limits>

#include "cmg/errors.hpp"
#include "cmg/trainer.hpp"
#include "doctest.h"
#include "support/small_run.hpp"

using namespace cmg;

namespace {

Matrix snapshot(const ParameterSet& ps) {
  std::vector<double> all;
  for (const auto& p : ps) all.insert(all.end(), p.value.data(), p.value.data() + p.value.size());
  return Eigen::Map<Matrix>(all.data(), 1, static_cast<Eigen::Index>(all.size()));
}

}  // namespace

TEST_CASE("zero epochs leave the model unchanged") {
  testing::PreparedSet set(testing::small_spec(2, 3));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 1);
  const Matrix before = snapshot(m.parameters());
  XeConfig cfg;
  cfg.epochs = 0;
  const auto res = train_xe(m, set.examples, cfg);
  CHECK(res.steps == 0);
  CHECK(snapshot(m.parameters()) == before);
}

TEST_CASE("XE training is bit-for-bit reproducible") {
  testing::PreparedSet set(testing::small_spec(3, 4));
  XeConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.01;
  cfg.seed = 9;
  CaptionModel a(set.dims, testing::tiny_caption_config(), 1), b(set.dims, testing::tiny_caption_config(), 1);
  const auto ra = train_xe(a, set.examples, cfg);
  const auto rb = train_xe(b, set.examples, cfg);
  CHECK(ra.losses == rb.losses);
  CHECK(snapshot(a.parameters()) == snapshot(b.parameters()));
  cfg.seed = 10;
  CaptionModel c(set.dims, testing::tiny_caption_config(), 1);
  CHECK(train_xe(c, set.examples, cfg).losses != ra.losses);
}

TEST_CASE("XE overfits a tiny corpus and writes checkpoints") {
  testing::PreparedSet set(testing::small_spec(2, 5));
  auto mc = testing::tiny_caption_config();
  mc.hidden_dim = 24;
  mc.word_dim = 12;
  CaptionModel m(set.dims, mc, 2);
  const double initial = mean_xe(m, set.examples);
  XeConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.02;
  cfg.checkpoint_dir = testing::temp_dir("xe_ckpt");
  int logged = 0;
  train_xe(m, set.examples, cfg, [&](const TrainEvent& e) {
    CHECK(e.stage == "xe");
    CHECK(e.step == logged++);
  });
  CHECK(mean_xe(m, set.examples) < 0.1 * initial);
  CHECK(std::filesystem::exists(cfg.checkpoint_dir / "last"));
  CaptionModel reloaded(set.dims, mc, 99);
  load_parameters(reloaded.parameters(), cfg.checkpoint_dir / "last");
  // checkpoints are float32 containers
  CHECK(snapshot(reloaded.parameters()) == snapshot(m.parameters()).cast<float>().cast<double>());
}

TEST_CASE("a non-finite loss aborts with the batch ids") {
  testing::PreparedSet set(testing::small_spec(2, 6));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 3);
  m.parameters().find("dec.out.bias")->value(0, 4) = std::numeric_limits<double>::quiet_NaN();
  XeConfig cfg;
  cfg.epochs = 1;
  try {
    train_xe(m, set.examples, cfg);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find(set.videos[0]->id) != std::string::npos);
  }
}

TEST_CASE("SCST objective arithmetic") {
  ad::Tape t;
  ParameterSet ps;
  const auto ix = ps.add("x", Matrix::Constant(1, 1, -2.0));
  ad::Var lp = t.param(ps[ix]);
  CHECK(scst_objective(lp, 1.0).scalar() == 2.0);
  CHECK(scst_objective(lp, 0.0).scalar() == 0.0);
  CHECK(scst_objective(lp, 0.6).scalar() * 2.0 == scst_objective(lp, 1.2).scalar());

  ad::Tape z;
  ad::Var zero = scst_objective(ad::sum(ad::mul(z.param(ps[ix]), z.param(ps[ix]))), 0.0);
  z.backward(zero);
  const Matrix* g = z.gradient(ps[ix]);
  CHECK((g == nullptr || g->isZero(0.0)));
}

TEST_CASE("SCST with tied rewards has exactly zero gradient") {
  testing::PreparedSet set(testing::small_spec(2, 8));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 4);
  const CiderScorer scorer(std::vector<References>{set.videos[0]->captions, set.videos[1]->captions});
  ScstConfig cfg;
  cfg.max_len = 6;
  Rng rng(1);
  int ties = 0;
  for (int trial = 0; trial < 40 && ties < 3; ++trial) {
    ad::Tape tape;
    // references that neither caption can match give r = 0 on both sides
    const References unreachable{{"zzz", "qqq"}};
    ScstTerm term = scst_loss(tape, m, set.inputs[0], unreachable, scorer, set.vocab, rng, cfg);
    REQUIRE(term.sample_reward == term.baseline_reward);
    CHECK(term.loss.scalar() == 0.0);
    tape.backward(term.loss);
    for (const auto& p : m.parameters()) {
      const Matrix* g = tape.gradient(p);
      CHECK((g == nullptr || g->isZero(0.0)));
    }
    ++ties;
  }
  ad::Tape tape;
  CHECK_THROWS_AS(scst_loss(tape, m, set.inputs[0], {}, scorer, set.vocab, rng, cfg), ValidationError);
}

TEST_CASE("SCST loss equals minus advantage times sample log-prob") {
  testing::PreparedSet set(testing::small_spec(2, 8));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 5);
  const CiderScorer scorer(std::vector<References>{set.videos[0]->captions, set.videos[1]->captions});
  ScstConfig cfg;
  cfg.max_len = 6;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng a(seed), b(seed);
    ad::Tape t1, t2;
    ScstTerm term = scst_loss(t1, m, set.inputs[0], set.videos[0]->captions, scorer, set.vocab, a, cfg);
    SampledCaption s = sample_caption(t2, m, m.decoder_input(t2, set.inputs[0]).r_dec, b, cfg.max_len, 1.0);
    CHECK(s.tokens == term.sample);
    const double adv = term.sample_reward - term.baseline_reward;
    CHECK(term.loss.scalar() == doctest::Approx(-adv * s.log_prob.scalar()).epsilon(1e-12));
  }
}

TEST_CASE("sampled captions stop at eos or max_len") {
  testing::PreparedSet set(testing::small_spec(1, 8));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 6);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    ad::Tape t;
    auto s = sample_caption(t, m, m.decoder_input(t, set.inputs[0]).r_dec, rng, 5, 1.0);
    CHECK(!s.tokens.empty());
    CHECK(s.tokens.size() <= 5);
    if (s.tokens.size() < 5) CHECK(s.tokens.back() == Vocabulary::kEos);
    CHECK(s.log_prob.scalar() <= 0.0);
  }
  ad::Tape t;
  CHECK_THROWS_AS(sample_caption(t, m, m.decoder_input(t, set.inputs[0]).r_dec, rng, 5, 0.0), ValidationError);
}

TEST_CASE("generate_captions with beam 1 is greedy") {
  testing::PreparedSet set(testing::small_spec(3, 9));
  CaptionModel m(set.dims, testing::tiny_caption_config(), 7);
  const auto caps = generate_captions(m, set.inputs, set.vocab, {1, 8, true});
  for (std::size_t i = 0; i < set.inputs.size(); ++i)
    CHECK(caps[i] == to_caption(greedy_decode(CaptionDecoder(m, set.inputs[i]), 8), set.vocab));
  CHECK_THROWS_AS(generate_captions(m, set.inputs, set.vocab, {0, 8, true}), ValidationError);
}
