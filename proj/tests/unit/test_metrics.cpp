#include <algorithm>
#include <random>

#include "cmg/errors.hpp"
#include "cmg/metrics.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cmg;

namespace {

Caption words(const std::string& s) {
  Caption c;
  std::istringstream in(s);
  for (std::string w; in >> w;) c.push_back(w);
  return c;
}

Caption random_sentence(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  static const char* pool[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::uniform_int_distribution<int> len(min_len, max_len), tok(0, vocab - 1);
  Caption c;
  for (int i = len(rng); i > 0; --i) c.push_back(pool[tok(rng)]);
  return c;
}

}  // namespace

TEST_CASE("BLEU examples") {
  const std::vector<Caption> c{words("a b c")};
  const std::vector<References> r{{words("a b d")}};
  CHECK(bleu(c, r, 1) == doctest::Approx(2.0 / 3.0));
  const std::vector<Caption> same{words("a b c d e")};
  const std::vector<References> same_r{{words("a b c d e")}};
  CHECK(bleu(same, same_r, 4) == doctest::Approx(1.0));
  const std::vector<References> other{{words("x y z")}};
  CHECK(bleu(c, other, 1) == 0.0);
  CHECK_THROWS_AS(bleu({}, {}, 1), ValidationError);
  CHECK_THROWS_AS(bleu(c, r, 5), ValidationError);
}

TEST_CASE("ROUGE-L examples") {
  CHECK(lcs_length(words("a b c d"), words("a c b d")) == 3);
  // P = R = 0.75, so F = 0.75 for any beta
  CHECK(rouge_l(words("a b c d"), {words("a c b d")}) == doctest::Approx(0.75));
  CHECK(rouge_l(words("a b"), {words("a b")}) == doctest::Approx(1.0));
  CHECK(rouge_l(words("a b"), {words("c d")}) == 0.0);
  CHECK(rouge_l(words("a b"), {words("c d"), words("a b")}) == doctest::Approx(1.0));
}

TEST_CASE("CIDEr examples") {
  const std::vector<References> corpus{{words("a red ball rolls")}, {words("the blue box sits")}};
  const CiderScorer scorer(corpus);
  CHECK(scorer.score(words("a red ball rolls"), corpus[0]) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(scorer.score(words("green cup"), corpus[0]) == 0.0);
  const std::vector<Caption> cands{words("a red ball"), words("the box sits")};
  const double fwd = cider(cands, corpus);
  const std::vector<Caption> rc{cands[1], cands[0]};
  const std::vector<References> rr{corpus[1], corpus[0]};
  CHECK(cider(rc, rr) == doctest::Approx(fwd).epsilon(1e-12));
}

TEST_CASE("metrics agree with brute-force oracles on short sentences") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> nref(1, 3), nvid(2, 5);
  for (int inst = 0; inst < 300; ++inst) {
    const int videos = nvid(rng);
    std::vector<Caption> cands;
    std::vector<References> refs;
    for (int v = 0; v < videos; ++v) {
      cands.push_back(random_sentence(rng, 4, 1, 6));
      References r;
      for (int k = nref(rng); k > 0; --k) r.push_back(random_sentence(rng, 4, 1, 6));
      refs.push_back(std::move(r));
    }
    for (int n = 1; n <= 4; ++n)
      CHECK(std::abs(bleu(cands, refs, n) - oracle::bleu(cands, refs, n)) < 1e-12);
    for (int v = 0; v < videos; ++v) {
      const auto& c = cands[static_cast<std::size_t>(v)];
      for (const auto& r : refs[static_cast<std::size_t>(v)]) CHECK(lcs_length(c, r) == oracle::lcs(c, r));
      CHECK(std::abs(rouge_l(c, refs[static_cast<std::size_t>(v)]) - oracle::rouge_l(c, refs[static_cast<std::size_t>(v)])) <
            1e-12);
    }
    CHECK(std::abs(cider(cands, refs) - oracle::cider(cands, refs)) < 1e-12);
  }
}

TEST_CASE("metric ranges on random sequences") {
  std::mt19937_64 rng(77);
  std::vector<Caption> cands;
  std::vector<References> refs;
  for (int i = 0; i < 10000; ++i) {
    cands.push_back(random_sentence(rng, 8, 1, 10));
    refs.push_back({random_sentence(rng, 8, 1, 10), random_sentence(rng, 8, 1, 10)});
  }
  const CiderScorer scorer(refs);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double r = rouge_l(cands[i], refs[i]);
    CHECK((r >= 0.0 && r <= 1.0));
    const double c = scorer.score(cands[i], refs[i]);
    CHECK((c >= 0.0 && c <= 10.0 + 1e-9));
  }
  const auto rep = score_captions(cands, refs);
  for (double b : rep.bleu) CHECK((b >= 0.0 && b <= 1.0));
  CHECK(rep.bleu[0] >= rep.bleu[3]);
  CHECK(rep.cider >= 0.0);
}
