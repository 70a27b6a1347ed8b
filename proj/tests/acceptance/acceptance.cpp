// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cmg/errors.hpp"
#include "cmg/feature_file.hpp"
#include "cmg/metagraph.hpp"
#include "cmg/metalearner.hpp"
#include "cmg/recipe.hpp"
#include "json.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/small_run.hpp"

using namespace cmg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// Desk-scale settings shared by the 64-video experiments.
AppConfig desk_config() {
  AppConfig c;
  c.data.num_videos = 64;
  c.meta.attention_dim = 32;
  c.meta.hidden_dim = 64;
  c.meta.embed_dim = 32;
  c.meta.align_dim = 32;
  c.meta.steps = 300;
  c.meta.batch_size = 16;
  c.meta.learning_rate = 0.003;
  c.localizer.steps = 300;
  c.localizer.hidden = 32;
  c.captioner.proj_dim = 32;
  c.captioner.meta_dim = 32;
  c.captioner.word_dim = 32;
  c.captioner.hidden_dim = 64;
  c.captioner.scene.out_dim = 32;
  c.captioner.scene.transformer_ff = 64;
  c.xe.epochs = 30;
  c.xe.batch_size = 16;
  c.xe.learning_rate = 0.003;
  return c;
}

// ---------------------------------------------------------------- criterion 1

MetaLearnerConfig tiny_meta() {
  MetaLearnerConfig c;
  c.attention_dim = 3;
  c.hidden_dim = 4;
  c.embed_dim = 3;
  c.align_dim = 3;
  return c;
}

/// Smallest |d(a,p) - d(a,n) + margin| over every triplet in both directions.
double hinge_gap(const Matrix& v, const Matrix& s, double margin) {
  double gap = 1e9;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
      if (i == j) continue;
      gap = std::min(gap, std::abs((v.row(i) - s.row(i)).norm() - (v.row(i) - s.row(j)).norm() + margin));
      gap = std::min(gap, std::abs((s.row(i) - v.row(i)).norm() - (s.row(i) - v.row(j)).norm() + margin));
    }
  return gap;
}

/// Smallest gap between the two largest entries of any column.
double max_gap(const Matrix& m) {
  if (m.rows() < 2) return 1e9;
  double gap = 1e9;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    std::vector<double> col(m.col(c).data(), m.col(c).data() + m.rows());
    std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
    gap = std::min(gap, col[0] - col[1]);
  }
  return gap;
}

Outcome gradient_suite() {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  std::map<std::string, int> ran;
  auto record = [&](const std::string& op, const testing::GradCheck& g) {
    worst[op] = std::max(worst[op], g.max_relative_error);
    ++ran[op];
  };

  for (int i = 0; i < kInstances; ++i) {
    const auto seed = static_cast<std::uint64_t>(100 + i);
    MetaLearner m(3, 7, tiny_meta(), seed);
    const Matrix grid = testing::random_matrix(4 + i % 3, 3, rng);
    const Matrix h0 = testing::random_matrix(1, 4, rng, 0.5);
    record("attend", testing::check_gradients(m.parameters(), [&](ad::Tape& t) {
             auto g = t.constant(grid);
             auto a = m.attend(t, g, m.project_grid(t, g), t.constant(h0));
             return ad::add(testing::probe_sum(t, a.context, 1), testing::probe_sum(t, a.alpha, 2));
           }));
    record("step", testing::check_gradients(m.parameters(), [&](ad::Tape& t) {
             auto g = t.constant(grid);
             LstmState prev{t.constant(h0), t.constant(h0)};
             auto s = m.step(t, 4 + i % 3, g, m.project_grid(t, g), prev);
             return ad::add(testing::probe_sum(t, s.state.h, 3), testing::probe_sum(t, s.logits, 4));
           }));
    const std::vector<int> caption{Vocabulary::kBos, 4, 5 + i % 2, 6, Vocabulary::kEos};
    record("word_loss", testing::check_gradients(m.parameters(), [&](ad::Tape& t) {
             return m.run_caption(t, t.constant(grid), caption).word_loss;
           }));
  }

  for (int done = 0; done < kInstances;) {
    const int rows = 2 + done % 3;
    ParameterSet ps;
    const auto iv = ps.add("v", testing::random_matrix(rows, 3, rng));
    const auto is = ps.add("s", testing::random_matrix(rows, 3, rng));
    if (hinge_gap(ps[iv].value, ps[is].value, 0.3) < 1e-3) continue;  // hinge tie point
    record("alignment_loss", testing::check_gradients(ps, [&](ad::Tape& t) {
             return alignment_loss(t.param(ps[iv]), t.param(ps[is]), 0.3, done % 2 == 1);
           }));
    ++done;
  }

  for (int i = 0; i < kInstances; ++i) {
    LocalizerConfig cfg;
    cfg.hidden = 4;
    Localizer loc(2, 3, 3, cfg, static_cast<std::uint64_t>(200 + i));
    const Matrix frame = testing::random_matrix(9, 2, rng);
    Matrix targets = Matrix::Zero(9, 3);
    for (int g = 0; g < 9; ++g) targets(g, (g * 7 + i) % 3) = 1.0;
    record("localizer_bce", testing::check_gradients(loc.parameters(), [&](ad::Tape& t) {
             return ad::bce_with_logits_mean(loc.logits(t, frame), targets);
           }));
  }

  for (int done = 0; done < kInstances;) {
    ParameterSet ps;
    const auto ix = ps.add("x", testing::random_matrix(3 + done % 5, 3, rng));
    const auto iw = ps.add("w", testing::random_matrix(6, 4, rng));
    const Matrix adj = build_knn_edges(ps[ix].value, 2).adjacency;
    Matrix cat(ps[ix].value.rows(), 6);
    cat << ps[ix].value, adj * ps[ix].value;
    if (max_gap(cat * ps[iw].value) < 1e-3) continue;  // max-pool tie point
    record("metagraph_encode", testing::check_gradients(ps, [&](ad::Tape& t) {
             return testing::probe_sum(t, encode_meta_graph(t, t.param(ps[ix]), adj, t.param(ps[iw])), 5);
           }));
    ++done;
  }

  for (int i = 0; i < kInstances; ++i) {
    Rng r(static_cast<std::uint64_t>(300 + i));
    ParameterSet ps;
    auto layer = GatLayer::create(ps, "gat", 3, 2, 2, i % 2 == 0, i % 3 == 0 ? Activation::kNone : Activation::kElu, r);
    const auto ix = ps.add("x", testing::random_matrix(4, 3, rng));
    Matrix adj = Matrix::Zero(4, 4);
    std::bernoulli_distribution b(0.5);
    for (int u = 0; u < 4; ++u)
      for (int w = u + 1; w < 4; ++w)
        if (b(rng)) adj(u, w) = adj(w, u) = 1.0;
    record("gat_layer", testing::check_gradients(ps, [&](ad::Tape& t) {
             return testing::probe_sum(t, layer.forward(t, ps, t.param(ps[ix]), adj).out, 6);
           }));
  }

  for (int i = 0; i < kInstances; ++i) {
    Rng r(static_cast<std::uint64_t>(400 + i));
    ParameterSet ps;
    auto layer = TransformerLayer::create(ps, "tr", 4, 2, 5, r);
    const auto ix = ps.add("x", testing::random_matrix(1 + i % 4, 4, rng));
    record("transformer_layer", testing::check_gradients(ps, [&](ad::Tape& t) {
             return testing::probe_sum(t, layer.forward(t, ps, t.param(ps[ix])).out, 7);
           }));
  }

  testing::PreparedSet set(testing::small_spec(4, 11));
  for (int i = 0; i < kInstances; ++i) {
    VideoInput in = set.inputs[static_cast<std::size_t>(i) % set.inputs.size()];
    for (int k = 0; k < 3; ++k) {
      MetaConcept c;
      c.class_id = (k + i) % 4;
      c.v = testing::random_matrix(1, set.dims.feature_dim, rng);
      in.concepts.push_back(c);
    }
    CaptionModel model(set.dims, testing::tiny_caption_config(), static_cast<std::uint64_t>(500 + i));
    const auto& enc = set.examples[static_cast<std::size_t>(i) % set.examples.size()].encoded;
    record("decoder_xe", testing::check_gradients(model.parameters(), [&](ad::Tape& t) {
             return model.xe_loss(t, in, enc);
           }));
  }

  Outcome o;
  double overall = 0.0;
  int total = 0;
  for (const auto& [op, err] : worst) {
    overall = std::max(overall, err);
    total += ran[op];
    if (err >= kTol || ran[op] < kInstances) o.pass = false;
  }
  o.detail = std::to_string(worst.size()) + " ops, " + std::to_string(total) + " instances, max rel err " + fmt(overall);
  if (!o.pass)
    for (const auto& [op, err] : worst)
      if (err >= kTol) o.detail += "; " + op + " " + fmt(err);
  return o;
}

// ---------------------------------------------------------------- criterion 2

Caption random_sentence(std::mt19937_64& rng) {
  static const char* words[] = {"a", "b", "c", "d"};
  std::uniform_int_distribution<int> len(1, 6), tok(0, 3);
  Caption c;
  for (int n = len(rng); n > 0; --n) c.push_back(words[tok(rng)]);
  return c;
}

Outcome oracle_suite() {
  std::mt19937_64 rng(77);
  int knn_bad = 0, beam_bad = 0, metric_bad = 0, key_bad = 0;

  std::uniform_int_distribution<int> len(1, 32), jd(1, 6), dim(1, 4);
  for (int i = 0; i < 1000; ++i) {
    const Matrix x = testing::random_matrix(len(rng), dim(rng), rng);
    const int j = jd(rng);
    knn_bad += build_knn_edges(x, j).edges != oracle::knn_edges(x, j);
  }

  for (int model = 0; model < 100; ++model) {
    testing::ToyDecoder dec;
    dec.vocab = 5 + model % 4;  // eos plus 1..4 words: at most 5 decodable tokens
    dec.seed = static_cast<std::uint64_t>(1000 + model);
    const int max_len = 1 + model % 3;
    std::vector<int> allowed;
    for (int w = 0; w < dec.vocab; ++w)
      if (decodable(w)) allowed.push_back(w);
    int width = 1;
    for (int t = 0; t < max_len; ++t) width *= static_cast<int>(allowed.size());
    for (bool norm : {true, false})
      beam_bad += beam_search(dec, {width, max_len, norm}).tokens !=
                  oracle::exhaustive_decode(dec, Vocabulary::kBos, Vocabulary::kEos, allowed, max_len, norm);
  }

  std::uniform_int_distribution<int> nvid(2, 5), nref(1, 3);
  for (int i = 0; i < 300; ++i) {
    std::vector<Caption> cands;
    std::vector<References> refs;
    for (int v = nvid(rng); v > 0; --v) {
      cands.push_back(random_sentence(rng));
      References r;
      for (int k = nref(rng); k > 0; --k) r.push_back(random_sentence(rng));
      refs.push_back(r);
    }
    for (int n = 1; n <= 4; ++n) metric_bad += std::abs(bleu(cands, refs, n) - oracle::bleu(cands, refs, n)) > 1e-12;
    for (std::size_t v = 0; v < cands.size(); ++v) {
      metric_bad += std::abs(rouge_l(cands[v], refs[v]) - oracle::rouge_l(cands[v], refs[v])) > 1e-12;
      for (const auto& r : refs[v]) metric_bad += lcs_length(cands[v], r) != oracle::lcs(cands[v], r);
    }
    metric_bad += std::abs(cider(cands, refs) - oracle::cider(cands, refs)) > 1e-12;
  }

  // Small integer-valued frames make equal differences (ties) common.
  std::uniform_int_distribution<int> nf(1, 12), val(0, 2), nk(1, 12);
  for (int i = 0; i < 500; ++i) {
    std::vector<Matrix> frames;
    for (int f = nf(rng); f > 0; --f) {
      Matrix m(2, 2);
      for (Eigen::Index e = 0; e < 4; ++e) m.data()[e] = val(rng);
      frames.push_back(m);
    }
    std::vector<double> diffs(frames.size(), 0.0);
    for (std::size_t t = 1; t < frames.size(); ++t)
      for (Eigen::Index e = 0; e < 4; ++e) diffs[t] += std::abs(frames[t].data()[e] - frames[t - 1].data()[e]);
    const int n = nk(rng);
    key_bad += select_keyframes(frames, n) != oracle::keyframes(diffs, n);
  }

  Outcome o;
  o.pass = knn_bad == 0 && beam_bad == 0 && metric_bad == 0 && key_bad == 0;
  o.detail = "mismatches: knn " + std::to_string(knn_bad) + "/1000, beam " + std::to_string(beam_bad) +
             "/200, metrics " + std::to_string(metric_bad) + ", keyframes " + std::to_string(key_bad) + "/500";
  return o;
}

// ---------------------------------------------------------------- criterion 3

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome invariant_suite() {
  std::mt19937_64 rng(5);
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // attention row-stochasticity
  double worst_row = 0.0;
  for (int i = 0; i < 50; ++i) {
    MetaLearner m(3, 7, tiny_meta(), static_cast<std::uint64_t>(i));
    ad::Tape t;
    auto g = t.constant(testing::random_matrix(2 + i % 20, 3, rng, 3.0));
    auto a = m.attend(t, g, m.project_grid(t, g), t.constant(testing::random_matrix(1, 4, rng)));
    worst_row = std::max(worst_row, std::abs(a.alpha.value().sum() - 1.0));
    expect((a.alpha.value().array() >= 0.0).all(), "alpha >= 0");

    Rng r(static_cast<std::uint64_t>(i));
    ParameterSet ps;
    auto gat = GatLayer::create(ps, "g", 3, 2, 3, true, Activation::kElu, r);
    auto tr = TransformerLayer::create(ps, "t", 4, 2, 4, r);
    const int n = 1 + i % 10;
    Matrix adj = Matrix::Zero(n, n);
    std::bernoulli_distribution b(0.3);
    for (int u = 0; u < n; ++u)
      for (int w = u + 1; w < n; ++w)
        if (b(rng)) adj(u, w) = adj(w, u) = 1.0;
    for (const auto& att : gat.forward(t, ps, t.constant(testing::random_matrix(n, 3, rng, 3.0)), adj).attention)
      for (int u = 0; u < n; ++u) {
        worst_row = std::max(worst_row, std::abs(att.row(u).sum() - 1.0));
        for (int w = 0; w < n; ++w) expect(u == w || adj(u, w) != 0.0 || att(u, w) == 0.0, "GAT mask");
      }
    for (const auto& att : tr.forward(t, ps, t.constant(testing::random_matrix(n, 4, rng))).attention)
      for (int u = 0; u < n; ++u) worst_row = std::max(worst_row, std::abs(att.row(u).sum() - 1.0));
  }
  expect(worst_row <= 1e-6, "row sums");

  // pseudo-mask rule: cells with alpha >= 0.5 * max(alpha)
  for (int i = 0; i < 200; ++i) {
    RowVector alpha = testing::random_matrix(1, 36, rng).array().exp().matrix();
    alpha /= alpha.sum();
    const double mx = alpha.maxCoeff();
    const auto cells = binarize_attention(alpha, mx, 0.5);
    for (Eigen::Index g = 0; g < alpha.size(); ++g)
      expect(cells[static_cast<std::size_t>(g)] == (alpha(g) >= 0.5 * mx ? 1 : 0), "mask rule");
  }

  // scene graph counts and video graph containment on generated scenes
  const auto corpus = generate_corpus(testing::small_spec(16, 21));
  const auto sv = scene_vocab(corpus);
  for (const auto& video : corpus.videos) {
    std::vector<FrameGraph> graphs;
    std::vector<Matrix> feats;
    for (std::size_t f = 0; f < video.scene_graphs.size(); ++f) {
      const auto& s = video.scene_graphs[f];
      graphs.push_back(build_frame_graph(s, sv));
      std::set<int> ids;
      for (const auto& o : s.objects) ids.insert(o.id);
      expect(graphs.back().num_nodes() == static_cast<int>(ids.size() + s.triplets.size()), "frame nodes");
      expect(graphs.back().edges.size() == 2 * s.triplets.size(), "frame edges");
      feats.push_back(object_features(s, video.frames[f], video.grid_side));
    }
    const auto vg = build_video_graph(graphs, video.scene_graphs, feats, 0.9, 0.5);
    std::set<std::pair<int, int>> have(vg.frame_edges.begin(), vg.frame_edges.end());
    int offset = 0;
    for (const auto& g : graphs) {
      for (auto [u, w] : g.edges) expect(have.count({u + offset, w + offset}) == 1, "video graph keeps frame edges");
      offset += g.num_nodes();
    }
    for (auto [u, w] : vg.links)
      expect(vg.node_frame[static_cast<std::size_t>(w)] == vg.node_frame[static_cast<std::size_t>(u)] + 1,
             "links join adjacent frames");
  }

  // metagraph permutation invariance
  for (int i = 0; i < 200; ++i) {
    const int n = 2 + i % 15;
    const Matrix x = testing::random_matrix(n, 4, rng);
    const Matrix w = testing::random_matrix(8, 5, rng);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix px(n, 4);
    for (int r = 0; r < n; ++r) px.row(r) = x.row(perm[static_cast<std::size_t>(r)]);
    ad::Tape t;
    const Matrix a = encode_meta_graph(t, t.constant(x), build_knn_edges(x, 3).adjacency, t.constant(w)).value();
    const Matrix b = encode_meta_graph(t, t.constant(px), build_knn_edges(px, 3).adjacency, t.constant(w)).value();
    expect((a - b).cwiseAbs().maxCoeff() < 1e-12, "permutation invariance");
  }

  // CMGF bit-exact roundtrip
  const auto dir = testing::temp_dir("acceptance_cmgf");
  std::uniform_int_distribution<std::uint32_t> bits;
  for (int i = 0; i < 100; ++i) {
    Tensor t;
    const int rank = 1 + i % 4;
    for (int r = 0; r < rank; ++r) t.dims.push_back(1 + static_cast<std::uint32_t>(rng() % 4));
    for (std::size_t e = 0; e < t.element_count(); ++e) {
      float f;
      do {
        const std::uint32_t u = bits(rng);
        std::memcpy(&f, &u, sizeof f);
      } while (!std::isfinite(f));
      t.data.push_back(f);
    }
    write_feature_file(dir / "t.cmgf", t);
    const Tensor back = read_feature_file(dir / "t.cmgf");
    expect(back.dims == t.dims && std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0,
           "CMGF roundtrip");
  }

  // seeded determinism
  const auto spec = testing::small_spec(6, 99);
  write_corpus(generate_corpus(spec), dir / "c1");
  write_corpus(generate_corpus(spec), dir / "c2");
  for (const auto& e : fs::recursive_directory_iterator(dir / "c1"))
    if (e.is_regular_file())
      expect(file_bytes(e.path()) == file_bytes(dir / "c2" / fs::relative(e.path(), dir / "c1")), "corpus determinism");
  testing::PreparedSet set(testing::small_spec(3, 4));
  XeConfig xe;
  xe.epochs = 3;
  xe.batch_size = 2;
  xe.learning_rate = 0.01;
  CaptionModel m1(set.dims, testing::tiny_caption_config(), 1), m2(set.dims, testing::tiny_caption_config(), 1);
  expect(train_xe(m1, set.examples, xe).losses == train_xe(m2, set.examples, xe).losses, "train_xe determinism");

  Outcome o;
  o.pass = failures.empty();
  o.detail = "worst row-sum error " + fmt(worst_row);
  if (!o.pass) {
    std::set<std::string> kinds(failures.begin(), failures.end());
    o.detail += "; failed:";
    for (const auto& k : kinds) o.detail += " [" + k + "]";
  }
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome overfit_experiment() {
  GeneratorSpec spec = testing::small_spec(8, 41);
  spec.frames_per_video = 16;
  spec.captions_per_video = 1;
  testing::PreparedSet set(spec, 10);
  int longest = 0;
  for (const auto& v : set.corpus.videos) longest = std::max(longest, static_cast<int>(v.captions[0].size()));

  CaptionModelConfig mc = desk_config().captioner;
  CaptionModel model(set.dims, mc, 3);
  XeConfig xe;
  xe.epochs = 2000;  // one step per epoch with a full batch
  xe.batch_size = 8;
  xe.learning_rate = 0.003;
  xe.seed = 5;
  double acc = 0.0;
  int steps = 0;
  while (steps < 2000) {
    XeConfig chunk = xe;
    chunk.epochs = 50;
    chunk.seed = xe.seed + static_cast<std::uint64_t>(steps);
    steps += train_xe(model, set.examples, chunk).steps;
    acc = token_accuracy(model, set.examples);
    if (acc >= 0.95) break;
  }
  int exact = 0;
  for (std::size_t i = 0; i < set.inputs.size(); ++i)
    exact += to_caption(greedy_decode(CaptionDecoder(model, set.inputs[i]), longest + 2), set.vocab) ==
             set.videos[i]->captions[0];
  Outcome o;
  o.pass = acc >= 0.95 && exact >= 6 && steps <= 2000 && set.vocab.size() <= 40 && longest <= 10;
  o.detail = "token accuracy " + fmt(acc) + " after " + std::to_string(steps) + " steps, greedy exact " +
             std::to_string(exact) + "/8, vocab " + std::to_string(set.vocab.size()) + ", longest caption " +
             std::to_string(longest) + " words";
  return o;
}

// ---------------------------------------------------------------- criteria 5-7

struct DeskRun {
  AppConfig config = desk_config();
  Corpus corpus;
  fs::path out;
  LocalizationReport localization;
};

DeskRun& desk_run() {
  static DeskRun run = [] {
    DeskRun r;
    r.corpus = generate_corpus(r.config.data);
    r.out = testing::temp_dir("acceptance_desk");
    train_meta_stage(r.config, r.corpus, r.out);
    export_masks_stage(r.config, r.corpus, r.out);
    r.localization = train_localizer_stage(r.config, r.corpus, r.out);
    return r;
  }();
  return run;
}

Outcome localization_experiment() {
  const auto& r = desk_run();
  Outcome o;
  const double ratio = r.localization.mean_random_iou > 0 ? r.localization.mean_iou / r.localization.mean_random_iou : 0;
  o.pass = r.localization.concepts > 0 && ratio >= 2.0;
  o.detail = "mean IoU " + fmt(r.localization.mean_iou) + " vs random " + fmt(r.localization.mean_random_iou) + " (" +
             fmt(ratio) + "x) over " + std::to_string(r.localization.concepts) + " concepts";
  return o;
}

Outcome ablation_experiment() {
  auto& r = desk_run();
  const auto rows = run_ablation(r.config, r.corpus, r.out);
  std::map<std::string, double> xe;
  for (const auto& row : rows) xe[row.name] = row.held_out_xe;
  std::ifstream in(r.out / "ablation.json");
  const auto j = nlohmann::json::parse(in);
  std::set<std::string> names;
  for (const auto& s : j.at("settings")) names.insert(s.at("name").get<std::string>());
  const std::set<std::string> grid{"BL", "+MC", "+FG", "+VG", "+FG+VG", "All"};
  Outcome o;
  o.pass = names == grid && xe.count("All") && xe.count("BL") && xe["All"] <= xe["BL"];
  o.detail = "held-out XE:";
  for (const auto& row : rows) o.detail += " " + row.name + " " + fmt(row.held_out_xe);
  return o;
}

Outcome scst_experiment() {
  auto& r = desk_run();
  const auto& cfg = r.config;
  const Vocabulary vocab = load_vocabulary(r.out);
  const auto classes = load_classes(r.out);
  const Localizer loc = load_localizer(cfg, r.corpus, r.out);
  auto [train, held] = split_videos(r.corpus, cfg.held_out_fraction);
  const auto train_in = prepare_videos(train, scene_vocab(r.corpus), &loc, cfg.prep);
  const auto held_in = prepare_videos(held, scene_vocab(r.corpus), &loc, cfg.prep);
  CaptionModel model(model_dims(r.corpus, vocab, classes.size()), cfg.captioner, cfg.seed + 31);
  train_xe(model, caption_examples(train_in, train, vocab, cfg.all_captions), cfg.xe);

  std::vector<References> train_refs, held_refs;
  for (const auto* v : train) train_refs.push_back(v->captions);
  for (const auto* v : held) held_refs.push_back(v->captions);
  const CiderScorer train_scorer(train_refs), held_scorer(held_refs);
  auto score = [&](const CaptionModel& m, const std::vector<VideoInput>& in, const CiderScorer& s,
                   const std::vector<References>& refs) {
    return s.corpus_score(generate_captions(m, in, vocab, cfg.decode), refs);
  };
  const double train_before = score(model, train_in, train_scorer, train_refs);
  const double held_before = score(model, held_in, held_scorer, held_refs);

  // zero advantage: references no caption can match tie sample and baseline at 0
  bool zero_grad = true;
  Rng tie_rng(17);
  for (std::size_t i = 0; i < 8; ++i) {
    ad::Tape tape;
    ScstTerm term = scst_loss(tape, model, train_in[i], {{"unmatched", "reference"}}, train_scorer, vocab, tie_rng,
                              cfg.scst);
    tape.backward(term.loss);
    zero_grad = zero_grad && term.sample_reward == term.baseline_reward && term.loss.scalar() == 0.0;
    for (const auto& p : model.parameters()) {
      const Matrix* g = tape.gradient(p);
      zero_grad = zero_grad && (g == nullptr || g->isZero(0.0));
    }
  }

  std::vector<ScstExample> examples;
  for (std::size_t i = 0; i < train.size(); ++i) examples.push_back({&train_in[i], train[i]->captions});
  ScstConfig sc = cfg.scst;
  sc.steps = 200;
  sc.batch_size = 8;
  sc.learning_rate = 5e-4;
  const auto res = train_scst(model, examples, train_scorer, vocab, sc);
  const double train_after = score(model, train_in, train_scorer, train_refs);
  const double held_after = score(model, held_in, held_scorer, held_refs);

  Outcome o;
  o.pass = zero_grad && static_cast<int>(res.losses.size()) == 200 && held_after >= 0.95 * held_before;
  o.detail = "held-out CIDEr " + fmt(held_before) + " -> " + fmt(held_after) + ", train CIDEr " + fmt(train_before) +
             " -> " + fmt(train_after) + ", zero-advantage gradient " + (zero_grad ? "exactly 0" : "NONZERO");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient suite", gradient_suite},
      {"2 oracle suite", oracle_suite},
      {"3 invariant suite", invariant_suite},
      {"4 overfit 8 videos", overfit_experiment},
      {"5 weak localization", localization_experiment},
      {"6 directional ablation", ablation_experiment},
      {"7 SCST direction", scst_experiment},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << " (" << fmt(secs) << " s): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
