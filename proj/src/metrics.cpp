#include "cmg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cmg/errors.hpp"

namespace cmg {

NgramCounts ngram_counts(const Caption& tokens, int n) {
  NgramCounts out;
  if (n < 1) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

namespace {

void check_pairs(std::span<const Caption> candidates, std::span<const References> references) {
  if (candidates.empty()) throw ValidationError("no candidates to score");
  if (candidates.size() != references.size()) throw ValidationError("one reference set per candidate required");
  for (const auto& r : references)
    if (r.empty()) throw ValidationError("every candidate needs at least one reference");
}

}  // namespace

double bleu(std::span<const Caption> candidates, std::span<const References> references, int n) {
  if (n < 1 || n > 4) throw ValidationError("BLEU order must be in 1..4");
  check_pairs(candidates, references);
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0), total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Caption& c = candidates[i];
    cand_len += static_cast<double>(c.size());
    std::size_t closest = references[i].front().size();
    for (const auto& r : references[i]) {
      const auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) closest = r.size();
    }
    ref_len += static_cast<double>(closest);
    for (int k = 1; k <= n; ++k) {
      NgramCounts max_ref;
      for (const auto& r : references[i])
        for (const auto& [g, cnt] : ngram_counts(r, k)) max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : ngram_counts(c, k)) {
        auto it = max_ref.find(g);
        matched[static_cast<std::size_t>(k - 1)] += it == max_ref.end() ? 0 : std::min(cnt, it->second);
        total[static_cast<std::size_t>(k - 1)] += cnt;
      }
    }
  }
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[static_cast<std::size_t>(k)] == 0.0) return 0.0;
    log_sum += std::log(matched[static_cast<std::size_t>(k)] / total[static_cast<std::size_t>(k)]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(const Caption& a, const Caption& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Caption& candidate, const References& references, double beta) {
  double best = 0.0;
  for (const auto& r : references) {
    const auto l = static_cast<double>(lcs_length(candidate, r));
    if (l == 0.0) continue;
    const double p = l / static_cast<double>(candidate.size());
    const double rec = l / static_cast<double>(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

CiderScorer::CiderScorer(std::span<const References> corpus, double sigma)
    : num_videos_(corpus.size()), sigma_(sigma) {
  for (const auto& refs : corpus) {
    std::set<std::vector<std::string>> seen;
    for (const auto& r : refs)
      for (int n = 1; n <= 4; ++n)
        for (const auto& [g, _] : ngram_counts(r, n)) seen.insert(g);
    for (const auto& g : seen) ++df_[g];
  }
}

std::array<CiderScorer::Vector, 4> CiderScorer::tfidf(const Caption& tokens) const {
  std::array<Vector, 4> out;
  const double log_n = std::log(static_cast<double>(std::max<std::size_t>(1, num_videos_)));
  for (int n = 1; n <= 4; ++n)
    for (const auto& [g, cnt] : ngram_counts(tokens, n)) {
      auto it = df_.find(g);
      const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
      out[static_cast<std::size_t>(n - 1)][g] = cnt * (log_n - std::log(std::max(1.0, df)));
    }
  return out;
}

double CiderScorer::score(const Caption& candidate, const References& references) const {
  if (references.empty()) throw ValidationError("CIDEr needs at least one reference");
  const auto vc = tfidf(candidate);
  double total = 0.0;
  for (const auto& r : references) {
    const auto vr = tfidf(r);
    const double dl = static_cast<double>(candidate.size()) - static_cast<double>(r.size());
    const double penalty = std::exp(-dl * dl / (2.0 * sigma_ * sigma_));
    for (std::size_t n = 0; n < 4; ++n) {
      double dot = 0.0, nc = 0.0, nr = 0.0;
      for (const auto& [g, w] : vc[n]) {
        nc += w * w;
        auto it = vr[n].find(g);
        if (it != vr[n].end()) dot += w * it->second;
      }
      for (const auto& [g, w] : vr[n]) nr += w * w;
      if (nc == 0.0 || nr == 0.0) continue;
      total += penalty * dot / (std::sqrt(nc) * std::sqrt(nr));
    }
  }
  return 10.0 * total / (4.0 * static_cast<double>(references.size()));
}

double CiderScorer::corpus_score(std::span<const Caption> candidates, std::span<const References> references) const {
  check_pairs(candidates, references);
  double s = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) s += score(candidates[i], references[i]);
  return s / static_cast<double>(candidates.size());
}

double cider(std::span<const Caption> candidates, std::span<const References> references) {
  return CiderScorer(references).corpus_score(candidates, references);
}

ScoreReport score_captions(std::span<const Caption> candidates, std::span<const References> references) {
  check_pairs(candidates, references);
  ScoreReport rep;
  for (int n = 1; n <= 4; ++n) rep.bleu[static_cast<std::size_t>(n - 1)] = bleu(candidates, references, n);
  for (std::size_t i = 0; i < candidates.size(); ++i) rep.rouge_l += rouge_l(candidates[i], references[i]);
  rep.rouge_l /= static_cast<double>(candidates.size());
  rep.cider = cider(candidates, references);
  return rep;
}

}  // namespace cmg
