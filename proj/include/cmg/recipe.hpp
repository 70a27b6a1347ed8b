#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmg/config.hpp"

namespace cmg {

inline const std::string kStageMeta = "stage1_meta";
inline const std::string kStageLocalizer = "stage2_localizer";
inline const std::string kStageCaptioner = "stage3_captioner";

/// Appends {step, stage, loss, reward?} lines to <out>/train_log.jsonl.
TrainLogger jsonl_logger(const std::filesystem::path& out);

bool stage_complete(const std::filesystem::path& out, const std::string& stage);
/// Throws StageDependencyError when `stage` has not completed under `out`.
void require_stage(const std::filesystem::path& out, const std::string& stage);

/// Vocabulary and concept classes under <out>/stage1_meta, built from all corpus captions.
void build_vocabulary(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out);
Vocabulary load_vocabulary(const std::filesystem::path& out);
ConceptClassTable load_classes(const std::filesystem::path& out);

/// Trains the meta-learner (builds the vocabulary first when absent).
void train_meta_stage(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out,
                      const TrainLogger& log = {});
/// Exports pseudo masks from the trained meta-learner and marks stage 1 complete.
MaskExport export_masks_stage(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out);
LocalizationReport train_localizer_stage(const AppConfig& config, const Corpus& corpus,
                                         const std::filesystem::path& out, const TrainLogger& log = {});
Localizer load_localizer(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out);

/// XE training of the captioner on every video; with `scst`, SCST follows from the XE weights.
void train_captioner_stage(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out,
                           bool scst, const TrainLogger& log = {});
CaptionModel load_caption_model(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out);

/// All three stages; completed stages are skipped, and every stage reads its inputs
/// back from disk.
void run_recipe(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out,
                const TrainLogger& log = {});

struct AblationRow {
  std::string name;
  Ablation flags;
  double final_train_xe = 0.0;
  double held_out_xe = 0.0;
  ScoreReport scores;
};

struct AblationSetting {
  std::string name;
  Ablation flags;
};

/// {BL, +MC, +FG, +VG, +FG+VG, All} on top of `base`.
std::vector<AblationSetting> ablation_grid(const Ablation& base);

/// Trains one captioner per setting on the leading videos and evaluates the held-out tail.
/// Needs stages 1 and 2 under `out`; writes <out>/ablation.json.
std::vector<AblationRow> run_ablation(const AppConfig& config, const Corpus& corpus, const std::filesystem::path& out,
                                      const TrainLogger& log = {});

}  // namespace cmg
