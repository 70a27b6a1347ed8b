#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cmg/datagen.hpp"

namespace cmg {

using References = std::vector<Caption>;
using NgramCounts = std::map<std::vector<std::string>, int>;

/// Counts of all n-grams of exactly order n.
NgramCounts ngram_counts(const Caption& tokens, int n);

/// Corpus BLEU@n: clipped n-gram precisions summed over the corpus, geometric mean
/// over orders 1..n, brevity penalty against the closest reference length. No smoothing.
double bleu(std::span<const Caption> candidates, std::span<const References> references, int n);

/// LCS-based F-score (beta = 1.2), best over references.
double rouge_l(const Caption& candidate, const References& references, double beta = 1.2);
std::size_t lcs_length(const Caption& a, const Caption& b);

/// CIDEr with document frequencies taken over the videos of a reference corpus.
class CiderScorer {
 public:
  explicit CiderScorer(std::span<const References> corpus, double sigma = 6.0);

  /// Score of one candidate against one video's references (>= 0, 10 for a perfect match).
  double score(const Caption& candidate, const References& references) const;
  /// Mean score over candidates paired with their references.
  double corpus_score(std::span<const Caption> candidates, std::span<const References> references) const;
  std::size_t num_videos() const { return num_videos_; }

 private:
  using Vector = std::map<std::vector<std::string>, double>;
  std::array<Vector, 4> tfidf(const Caption& tokens) const;

  std::map<std::vector<std::string>, int> df_;
  std::size_t num_videos_ = 0;
  double sigma_ = 6.0;
};

double cider(std::span<const Caption> candidates, std::span<const References> references);

struct ScoreReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
};

/// All reported metrics; ROUGE-L is averaged over candidates.
ScoreReport score_captions(std::span<const Caption> candidates, std::span<const References> references);

}  // namespace cmg
