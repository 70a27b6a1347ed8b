#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cmg/config.hpp"
#include "cmg/errors.hpp"
#include "cmg/recipe.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string data;
  bool no_meta = false, no_fg = false, no_vg = false, vg_no_pred = false;
  std::string meta_features;
  std::optional<int> knn_j;
  std::string loss = "xe";
  std::optional<int> beam;
  std::string split = "all";
  std::string captions;
};

cmg::AppConfig effective_config(const Options& o) {
  cmg::AppConfig cfg;
  const fs::path echoed = fs::path(o.out) / "config.ini";
  if (!o.config.empty())
    cmg::apply_config_file(cfg, o.config);
  else if (fs::exists(echoed))
    cmg::apply_config_file(cfg, echoed);
  if (o.seed) cmg::apply_seed(cfg, *o.seed);
  auto& ab = cfg.captioner.ablation;
  if (o.no_meta) ab.use_meta = false;
  if (o.no_fg) ab.use_fg = false;
  if (o.no_vg) ab.use_vg = false;
  if (o.vg_no_pred) ab.vg_predicates = false;
  if (!o.meta_features.empty()) ab.meta_features = cmg::parse_meta_features(o.meta_features);
  if (o.knn_j) cfg.captioner.knn_j = *o.knn_j;
  if (o.beam) cfg.decode.beam = *o.beam;
  return cfg;
}

fs::path manifest_path(const Options& o) {
  return o.data.empty() ? fs::path(o.out) / "data" / "manifest.json" : fs::path(o.data);
}

cmg::Corpus load(const Options& o) {
  const fs::path p = manifest_path(o);
  if (!fs::exists(p)) throw cmg::StageDependencyError("gen-data", p.string());
  return cmg::load_corpus(p);
}

std::string join(const cmg::Caption& c) {
  std::string s;
  for (const auto& w : c) s += (s.empty() ? "" : " ") + w;
  return s;
}

std::vector<const cmg::VideoRecord*> selected(const cmg::AppConfig& cfg, const cmg::Corpus& corpus,
                                              const std::string& split) {
  if (split == "all") return cmg::video_pointers(corpus);
  if (split == "held-out") return cmg::split_videos(corpus, cfg.held_out_fraction).second;
  if (split == "train") return cmg::split_videos(corpus, cfg.held_out_fraction).first;
  throw cmg::ValidationError("split must be all, train or held-out");
}

int run_command(const std::string& cmd, const Options& o) {
  cmg::AppConfig cfg = effective_config(o);
  const fs::path out(o.out);
  fs::create_directories(out);
  cmg::write_config(cfg, out / "config.ini");
  const auto log = cmg::jsonl_logger(out);

  if (cmd == "gen-data") {
    const auto corpus = cmg::generate_corpus(cfg.data);
    const fs::path dir = o.data.empty() ? out / "data" : fs::path(o.data).parent_path();
    std::cout << "wrote " << cmg::write_corpus(corpus, dir).string() << " (" << corpus.videos.size() << " videos)\n";
    return 0;
  }
  const cmg::Corpus corpus = load(o);
  if (cmd == "build-vocab") {
    cmg::build_vocabulary(cfg, corpus, out);
    std::cout << "vocabulary: " << cmg::load_vocabulary(out).size() << " tokens, "
              << cmg::load_classes(out).size() << " concept classes\n";
  } else if (cmd == "train-meta") {
    cmg::train_meta_stage(cfg, corpus, out, log);
  } else if (cmd == "export-masks") {
    const auto masks = cmg::export_masks_stage(cfg, corpus, out);
    std::cout << masks.masks.size() << " masks, " << masks.skipped_tokens << " skipped tokens\n";
  } else if (cmd == "train-localizer") {
    const auto rep = cmg::train_localizer_stage(cfg, corpus, out, log);
    std::cout << "mean IoU " << rep.mean_iou << " vs random " << rep.mean_random_iou << " over " << rep.concepts
              << " concepts\n";
  } else if (cmd == "train-captioner") {
    if (o.loss != "xe" && o.loss != "scst") throw cmg::ValidationError("--loss must be xe or scst");
    cmg::train_captioner_stage(cfg, corpus, out, o.loss == "scst", log);
  } else if (cmd == "recipe") {
    cmg::run_recipe(cfg, corpus, out, log);
  } else if (cmd == "generate") {
    const auto model = cmg::load_caption_model(cfg, corpus, out);
    const auto vocab = cmg::load_vocabulary(out);
    const auto loc = cmg::load_localizer(cfg, corpus, out);
    cmg::PrepConfig prep = cfg.prep;
    prep.vg_predicates = cfg.captioner.ablation.vg_predicates;
    const auto videos = selected(cfg, corpus, o.split);
    const auto inputs = cmg::prepare_videos(videos, cmg::scene_vocab(corpus), &loc, prep);
    const auto caps = cmg::generate_captions(model, inputs, vocab, cfg.decode);
    json j = json::object();
    for (std::size_t i = 0; i < videos.size(); ++i) j[videos[i]->id] = join(caps[i]);
    std::ofstream(out / "captions.json") << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
  } else if (cmd == "score") {
    const fs::path path = o.captions.empty() ? out / "captions.json" : fs::path(o.captions);
    std::ifstream in(path);
    if (!in) throw cmg::IoError("cannot read captions " + path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw cmg::IoError("malformed captions file " + path.string() + ": " + e.what());
    }
    std::vector<cmg::Caption> cands;
    std::vector<cmg::References> refs;
    for (const auto& v : corpus.videos) {
      if (!j.contains(v.id)) continue;
      cmg::Caption c;
      std::istringstream words(j[v.id].get<std::string>());
      for (std::string w; words >> w;) c.push_back(w);
      cands.push_back(std::move(c));
      refs.push_back(v.captions);
    }
    const auto rep = cmg::score_captions(cands, refs);
    json r{{"bleu1", rep.bleu[0]}, {"bleu2", rep.bleu[1]}, {"bleu3", rep.bleu[2]},
           {"bleu4", rep.bleu[3]}, {"rougeL", rep.rouge_l}, {"cider", rep.cider}};
    std::ofstream(out / "scores.json") << r.dump(2) << "\n";
    std::cout << r.dump(2) << "\n";
  } else if (cmd == "ablate") {
    if (!cmg::stage_complete(out, cmg::kStageMeta)) {
      cmg::train_meta_stage(cfg, corpus, out, log);
      cmg::export_masks_stage(cfg, corpus, out);
    }
    if (!cmg::stage_complete(out, cmg::kStageLocalizer)) cmg::train_localizer_stage(cfg, corpus, out, log);
    for (const auto& row : cmg::run_ablation(cfg, corpus, out, log))
      std::cout << row.name << ": held-out XE " << row.held_out_xe << ", CIDEr " << row.scores.cider << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Cross-modal graph video captioning pipeline"};
  app.require_subcommand(1);
  app.add_option("--config", o.config, "INI config file");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--out", o.out, "Run directory")->capture_default_str();
  app.add_option("--data", o.data, "Corpus manifest (default <out>/data/manifest.json)");
  app.add_flag("--no-meta", o.no_meta, "Drop the meta-concept graph");
  app.add_flag("--no-fg", o.no_fg, "Drop the frame-level scene graphs");
  app.add_flag("--no-vg", o.no_vg, "Drop the video-level scene graph");
  app.add_flag("--vg-no-pred", o.vg_no_pred, "Video-level graph without predicate nodes");
  app.add_option("--meta-features", o.meta_features, "visual|semantic|both")
      ->check(CLI::IsMember({"visual", "semantic", "both"}));
  app.add_option("--knn-j", o.knn_j, "Neighbours per meta-concept node");

  for (const char* name : {"gen-data", "build-vocab", "train-meta", "export-masks", "train-localizer", "recipe"})
    app.add_subcommand(name);
  app.add_subcommand("train-captioner")->add_option("--loss", o.loss, "xe|scst")->check(CLI::IsMember({"xe", "scst"}));
  auto* gen = app.add_subcommand("generate");
  gen->add_option("--beam", o.beam, "Beam size");
  gen->add_option("--split", o.split, "all|train|held-out")->check(CLI::IsMember({"all", "train", "held-out"}));
  app.add_subcommand("score")->add_option("--captions", o.captions, "Captions JSON (default <out>/captions.json)");
  app.add_subcommand("ablate");
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return run_command(app.get_subcommands().front()->get_name(), o);
  } catch (const cmg::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const cmg::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const cmg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  }
}
