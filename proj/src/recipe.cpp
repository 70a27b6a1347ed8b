#include "cmg/recipe.hpp"

#include <fstream>

#include "cmg/errors.hpp"
#include "json.hpp"

namespace cmg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void mark_complete(const fs::path& out, const std::string& stage, json info) {
  info["stage"] = stage;
  info["complete"] = true;
  write_json(out / stage / "stage.json", info);
}

std::set<std::string> lexicon_set(const Corpus& corpus) { return {corpus.lexicon.begin(), corpus.lexicon.end()}; }

MetaLearner make_meta_learner(const AppConfig& config, const Corpus& corpus, const Vocabulary& vocab) {
  return MetaLearner(corpus.feature_channels, vocab.size(), config.meta, config.seed + 11);
}

std::vector<Caption> all_captions(const Corpus& corpus) {
  std::vector<Caption> out;
  for (const auto& v : corpus.videos) out.insert(out.end(), v.captions.begin(), v.captions.end());
  return out;
}

void write_rows(const fs::path& path, const std::vector<AblationRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"name", r.name},
                   {"use_meta", r.flags.use_meta},
                   {"use_fg", r.flags.use_fg},
                   {"use_vg", r.flags.use_vg},
                   {"vg_predicates", r.flags.vg_predicates},
                   {"meta_features", to_string(r.flags.meta_features)},
                   {"final_train_xe", r.final_train_xe},
                   {"held_out_xe", r.held_out_xe},
                   {"bleu4", r.scores.bleu[3]},
                   {"rougeL", r.scores.rouge_l},
                   {"cider", r.scores.cider}});
  write_json(path, {{"settings", arr}});
}

/// One line per localized concept: {video, frame, class, cells, v}.
void write_concepts(const fs::path& path, const std::vector<const VideoRecord*>& videos, const Localizer& loc,
                    const ConceptClassTable& classes, int key_frames) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto* v : videos) {
    const auto keys = select_keyframes(v->frames, key_frames);
    const Matrix zero = Matrix::Zero(loc.num_classes(), v->frames.front().cols());
    for (const auto& c : predict_meta_concepts(*v, keys, loc, zero))
      out << json{{"video", v->id},
                  {"frame", c.frame_index},
                  {"class", classes.at(c.class_id).canonical},
                  {"cells", c.region},
                  {"v", std::vector<double>(c.v.data(), c.v.data() + c.v.size())}}
                 .dump()
          << "\n";
  }
}

}  // namespace

TrainLogger jsonl_logger(const fs::path& out) {
  fs::create_directories(out);
  auto stream = std::make_shared<std::ofstream>(out / "train_log.jsonl", std::ios::app);
  if (!*stream) throw IoError("cannot open training log under " + out.string());
  return [stream](const TrainEvent& e) {
    json j{{"step", e.step}, {"stage", e.stage}, {"loss", e.loss}};
    if (e.reward) j["reward"] = *e.reward;
    *stream << j.dump() << "\n";
  };
}

bool stage_complete(const fs::path& out, const std::string& stage) { return fs::exists(out / stage / "stage.json"); }

void require_stage(const fs::path& out, const std::string& stage) {
  if (!stage_complete(out, stage)) throw StageDependencyError(stage, (out / stage / "stage.json").string());
}

void build_vocabulary(const AppConfig& config, const Corpus& corpus, const fs::path& out) {
  const auto caps = all_captions(corpus);
  const Vocabulary vocab = build_vocab(caps, config.vocab_min_count);
  const auto classes = build_concept_classes(caps, lexicon_set(corpus), corpus.synonyms, config.num_classes);
  fs::create_directories(out / kStageMeta);
  vocab.save(out / kStageMeta / "vocab.txt");
  classes.save(out / kStageMeta / "classes.json");
}

Vocabulary load_vocabulary(const fs::path& out) {
  const fs::path p = out / kStageMeta / "vocab.txt";
  if (!fs::exists(p)) throw StageDependencyError("build-vocab", p.string());
  return Vocabulary::load(p);
}

ConceptClassTable load_classes(const fs::path& out) {
  const fs::path p = out / kStageMeta / "classes.json";
  if (!fs::exists(p)) throw StageDependencyError("build-vocab", p.string());
  return ConceptClassTable::load(p);
}

void train_meta_stage(const AppConfig& config, const Corpus& corpus, const fs::path& out, const TrainLogger& log) {
  if (!fs::exists(out / kStageMeta / "vocab.txt")) build_vocabulary(config, corpus, out);
  const Vocabulary vocab = load_vocabulary(out);
  MetaLearner learner = make_meta_learner(config, corpus, vocab);
  auto res = train_meta_learner(learner, video_pointers(corpus), vocab, config.seed + 12, [&](int s, double loss) {
    if (log) log({kStageMeta, s, loss, std::nullopt});
  });
  save_parameters(learner.parameters(), out / kStageMeta / "params");
  write_json(out / kStageMeta / "meta_losses.json",
             {{"initial", res.losses.empty() ? 0.0 : res.losses.front()},
              {"final", res.losses.empty() ? 0.0 : res.losses.back()}});
}

MaskExport export_masks_stage(const AppConfig& config, const Corpus& corpus, const fs::path& out) {
  const fs::path params = out / kStageMeta / "params";
  if (!fs::exists(params / "params.json")) throw StageDependencyError("train-meta", params.string());
  const Vocabulary vocab = load_vocabulary(out);
  const ConceptClassTable classes = load_classes(out);
  MetaLearner learner = make_meta_learner(config, corpus, vocab);
  load_parameters(learner.parameters(), params);
  MaskExport masks = export_pseudo_masks(learner, video_pointers(corpus), vocab, classes, lexicon_set(corpus));
  write_masks(masks, corpus.grid_side, out / kStageMeta / "masks");
  mark_complete(out, kStageMeta, {{"masks", masks.masks.size()}, {"skipped_tokens", masks.skipped_tokens}});
  return masks;
}

LocalizationReport train_localizer_stage(const AppConfig& config, const Corpus& corpus, const fs::path& out,
                                         const TrainLogger& log) {
  require_stage(out, kStageMeta);
  const ConceptClassTable classes = load_classes(out);
  const MaskExport masks = read_masks(out / kStageMeta / "masks", classes);
  Localizer loc(corpus.feature_channels, classes.size(), corpus.grid_side, config.localizer, config.seed + 21);
  const auto videos = video_pointers(corpus);
  const auto samples = localizer_samples(masks, videos, classes.size());
  train_localizer(loc, samples, config.seed + 22, [&](int s, double loss) {
    if (log) log({kStageLocalizer, s, loss, std::nullopt});
  });
  save_parameters(loc.parameters(), out / kStageLocalizer / "params");
  const auto rep = evaluate_localization(videos, loc, classes, config.prep.key_frames);
  write_concepts(out / kStageLocalizer / "concepts.jsonl", videos, loc, classes, config.prep.key_frames);
  mark_complete(out, kStageLocalizer,
                {{"mean_iou", rep.mean_iou}, {"mean_random_iou", rep.mean_random_iou}, {"concepts", rep.concepts}});
  return rep;
}

Localizer load_localizer(const AppConfig& config, const Corpus& corpus, const fs::path& out) {
  require_stage(out, kStageLocalizer);
  const ConceptClassTable classes = load_classes(out);
  Localizer loc(corpus.feature_channels, classes.size(), corpus.grid_side, config.localizer, config.seed + 21);
  load_parameters(loc.parameters(), out / kStageLocalizer / "params");
  return loc;
}

void train_captioner_stage(const AppConfig& config, const Corpus& corpus, const fs::path& out, bool scst,
                           const TrainLogger& log) {
  require_stage(out, kStageMeta);
  require_stage(out, kStageLocalizer);
  const Vocabulary vocab = load_vocabulary(out);
  const ConceptClassTable classes = load_classes(out);
  const Localizer loc = load_localizer(config, corpus, out);
  PrepConfig prep = config.prep;
  prep.vg_predicates = config.captioner.ablation.vg_predicates;
  const auto videos = video_pointers(corpus);
  const auto inputs = prepare_videos(videos, scene_vocab(corpus), &loc, prep);
  CaptionModel model(model_dims(corpus, vocab, classes.size()), config.captioner, config.seed + 31);
  const fs::path dir = out / kStageCaptioner;
  json info;
  if (scst && fs::exists(dir / "params" / "params.json")) {
    load_parameters(model.parameters(), dir / "params");
  } else {
    XeConfig xe = config.xe;
    xe.checkpoint_dir = dir;
    const auto examples = caption_examples(inputs, videos, vocab, config.all_captions);
    const auto res = train_xe(model, examples, xe, log);
    info["xe_steps"] = res.steps;
    info["xe_initial"] = res.losses.empty() ? 0.0 : res.losses.front();
    info["xe_final"] = res.losses.empty() ? 0.0 : res.losses.back();
  }
  info["loss"] = scst ? "scst" : "xe";
  if (scst) {
    std::vector<References> refs;
    std::vector<ScstExample> examples;
    for (const auto* v : videos) refs.push_back(v->captions);
    for (std::size_t i = 0; i < videos.size(); ++i) examples.push_back({&inputs[i], refs[i]});
    const CiderScorer scorer(refs);
    const auto res = train_scst(model, examples, scorer, vocab, config.scst, log);
    info["scst_steps"] = res.losses.size();
  }
  save_parameters(model.parameters(), dir / "params");
  mark_complete(out, kStageCaptioner, info);
}

CaptionModel load_caption_model(const AppConfig& config, const Corpus& corpus, const fs::path& out) {
  require_stage(out, kStageCaptioner);
  const Vocabulary vocab = load_vocabulary(out);
  const ConceptClassTable classes = load_classes(out);
  CaptionModel model(model_dims(corpus, vocab, classes.size()), config.captioner, config.seed + 31);
  load_parameters(model.parameters(), out / kStageCaptioner / "params");
  return model;
}

void run_recipe(const AppConfig& config, const Corpus& corpus, const fs::path& out, const TrainLogger& log) {
  if (!stage_complete(out, kStageMeta)) {
    train_meta_stage(config, corpus, out, log);
    export_masks_stage(config, corpus, out);
  }
  if (!stage_complete(out, kStageLocalizer)) train_localizer_stage(config, corpus, out, log);
  if (!stage_complete(out, kStageCaptioner)) train_captioner_stage(config, corpus, out, config.recipe_scst, log);
}

std::vector<AblationSetting> ablation_grid(const Ablation& base) {
  auto with = [&](bool meta, bool fg, bool vg) {
    Ablation a = base;
    a.use_meta = meta;
    a.use_fg = fg;
    a.use_vg = vg;
    return a;
  };
  return {{"BL", with(false, false, false)},   {"+MC", with(true, false, false)},
          {"+FG", with(false, true, false)},   {"+VG", with(false, false, true)},
          {"+FG+VG", with(false, true, true)}, {"All", with(true, true, true)}};
}

std::vector<AblationRow> run_ablation(const AppConfig& config, const Corpus& corpus, const fs::path& out,
                                      const TrainLogger& log) {
  require_stage(out, kStageMeta);
  require_stage(out, kStageLocalizer);
  const Vocabulary vocab = load_vocabulary(out);
  const ConceptClassTable classes = load_classes(out);
  const Localizer loc = load_localizer(config, corpus, out);
  auto [train, held] = split_videos(corpus, config.held_out_fraction);
  if (train.empty() || held.empty()) throw ValidationError("ablation needs both training and held-out videos");
  std::vector<AblationRow> rows;
  for (const auto& setting : ablation_grid(config.captioner.ablation)) {
    PrepConfig prep = config.prep;
    prep.vg_predicates = setting.flags.vg_predicates;
    const auto train_in = prepare_videos(train, scene_vocab(corpus), &loc, prep);
    const auto held_in = prepare_videos(held, scene_vocab(corpus), &loc, prep);
    CaptionModelConfig mc = config.captioner;
    mc.ablation = setting.flags;
    CaptionModel model(model_dims(corpus, vocab, classes.size()), mc, config.seed + 31);
    XeConfig xe = config.xe;
    xe.checkpoint_dir.clear();
    const auto train_ex = caption_examples(train_in, train, vocab, config.all_captions);
    const auto res = train_xe(model, train_ex, xe, [&](const TrainEvent& e) {
      if (log) log({"ablate:" + setting.name, e.step, e.loss, e.reward});
    });
    AblationRow row{setting.name, setting.flags, res.losses.empty() ? 0.0 : res.losses.back(), 0.0, {}};
    row.held_out_xe = mean_xe(model, caption_examples(held_in, held, vocab, true));
    std::vector<References> refs;
    for (const auto* v : held) refs.push_back(v->captions);
    const auto caps = generate_captions(model, held_in, vocab, config.decode);
    row.scores = score_captions(caps, refs);
    rows.push_back(row);
  }
  write_rows(out / "ablation.json", rows);
  return rows;
}

}  // namespace cmg
