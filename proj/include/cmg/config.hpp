#pragma once

#include <filesystem>
#include <string>

#include "cmg/captioner.hpp"
#include "cmg/datagen.hpp"
#include "cmg/localizer.hpp"
#include "cmg/metalearner.hpp"
#include "cmg/pipeline.hpp"
#include "cmg/trainer.hpp"

namespace cmg {

/// Every tunable of the pipeline. Each field has a default; an INI file
/// (`[section] key = value`) overrides any subset.
struct AppConfig {
  GeneratorSpec data;
  int vocab_min_count = 1;
  int num_classes = 16;
  MetaLearnerConfig meta;
  LocalizerConfig localizer;
  PrepConfig prep;
  CaptionModelConfig captioner;
  XeConfig xe;
  bool all_captions = true;
  ScstConfig scst;
  /// Run SCST after XE in the staged recipe.
  bool recipe_scst = false;
  BeamConfig decode;
  double held_out_fraction = 0.25;
  std::uint64_t seed = 7;
};

/// Applies overrides from an INI file; unknown sections/keys and malformed values are validation errors.
void apply_config_file(AppConfig& config, const std::filesystem::path& path);
void apply_config_text(AppConfig& config, const std::string& ini);
/// The full effective configuration as INI text.
std::string config_to_ini(const AppConfig& config);
void write_config(const AppConfig& config, const std::filesystem::path& path);

/// Re-seeds every stage from one master seed (data, meta, localizer, XE, SCST).
void apply_seed(AppConfig& config, std::uint64_t seed);

MetaFeatures parse_meta_features(const std::string& text);
std::string to_string(MetaFeatures f);

}  // namespace cmg
