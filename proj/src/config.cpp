#include "cmg/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cmg/errors.hpp"

namespace cmg {

namespace pt = boost::property_tree;

namespace {

struct Binding {
  std::string key;
  std::function<void(const pt::ptree&)> read;
  std::function<void(pt::ptree&)> write;
};

template <typename T>
Binding bind(std::string key, T& field) {
  return {key,
          [key, &field](const pt::ptree& tree) {
            if (auto v = tree.get_optional<T>(key)) {
              field = *v;
              return;
            }
            throw ValidationError("config key " + key + " has a malformed value");
          },
          [key, &field](pt::ptree& tree) { tree.put(key, field); }};
}

Binding bind_path(std::string key, std::filesystem::path& field) {
  return {key, [key, &field](const pt::ptree& tree) { field = tree.get<std::string>(key); },
          [key, &field](pt::ptree& tree) { tree.put(key, field.string()); }};
}

Binding bind_features(std::string key, MetaFeatures& field) {
  return {key, [key, &field](const pt::ptree& tree) { field = parse_meta_features(tree.get<std::string>(key)); },
          [key, &field](pt::ptree& tree) { tree.put(key, to_string(field)); }};
}

std::vector<Binding> bindings(AppConfig& c) {
  auto& d = c.data;
  auto& m = c.meta;
  auto& l = c.localizer;
  auto& cap = c.captioner;
  auto& sc = cap.scene;
  auto& ab = cap.ablation;
  return {
      bind("run.seed", c.seed),
      bind("data.num_videos", d.num_videos),
      bind("data.frames_per_video", d.frames_per_video),
      bind("data.grid_side", d.grid_side),
      bind("data.captions_per_video", d.captions_per_video),
      bind("data.max_objects", d.max_objects),
      bind("data.noise_channels", d.noise_channels),
      bind("data.noise_stddev", d.noise_stddev),
      bind("data.object_size", d.object_size),
      bind("data.seed", d.seed),
      bind("vocab.min_count", c.vocab_min_count),
      bind("vocab.num_classes", c.num_classes),
      bind("meta.attention_dim", m.attention_dim),
      bind("meta.hidden_dim", m.hidden_dim),
      bind("meta.embed_dim", m.embed_dim),
      bind("meta.align_dim", m.align_dim),
      bind("meta.margin", m.margin),
      bind("meta.lambda", m.lambda),
      bind("meta.hardest_negative", m.hardest_negative),
      bind("meta.batch_size", m.batch_size),
      bind("meta.learning_rate", m.learning_rate),
      bind("meta.steps", m.steps),
      bind("meta.sampled_frames", m.sampled_frames),
      bind("meta.key_frames", m.key_frames),
      bind("meta.mask_threshold", m.mask_threshold),
      bind("localizer.hidden", l.hidden),
      bind("localizer.presence_threshold", l.presence_threshold),
      bind("localizer.region_ratio", l.region_ratio),
      bind("localizer.batch_size", l.batch_size),
      bind("localizer.learning_rate", l.learning_rate),
      bind("localizer.steps", l.steps),
      bind("prep.key_frames", c.prep.key_frames),
      bind("prep.tau_cos", c.prep.tau_cos),
      bind("prep.tau_iou", c.prep.tau_iou),
      bind("captioner.proj_dim", cap.proj_dim),
      bind("captioner.meta_dim", cap.meta_dim),
      bind("captioner.word_dim", cap.word_dim),
      bind("captioner.hidden_dim", cap.hidden_dim),
      bind("captioner.knn_j", cap.knn_j),
      bind("captioner.normalize_adjacency", cap.normalize_adjacency),
      bind("captioner.node_embed_dim", sc.embed_dim),
      bind("captioner.gat_hidden", sc.gat_hidden),
      bind("captioner.gat_heads", sc.gat_heads),
      bind("captioner.graph_dim", sc.out_dim),
      bind("captioner.transformer_heads", sc.transformer_heads),
      bind("captioner.transformer_ff", sc.transformer_ff),
      bind("captioner.positional_encoding", sc.positional_encoding),
      bind("captioner.use_context", ab.use_context),
      bind("captioner.use_meta", ab.use_meta),
      bind("captioner.use_fg", ab.use_fg),
      bind("captioner.use_vg", ab.use_vg),
      bind("captioner.vg_predicates", ab.vg_predicates),
      bind_features("captioner.meta_features", ab.meta_features),
      bind("train.epochs", c.xe.epochs),
      bind("train.max_steps", c.xe.max_steps),
      bind("train.batch_size", c.xe.batch_size),
      bind("train.learning_rate", c.xe.learning_rate),
      bind("train.seed", c.xe.seed),
      bind("train.all_captions", c.all_captions),
      bind_path("train.checkpoint_dir", c.xe.checkpoint_dir),
      bind("scst.steps", c.scst.steps),
      bind("scst.batch_size", c.scst.batch_size),
      bind("scst.learning_rate", c.scst.learning_rate),
      bind("scst.temperature", c.scst.temperature),
      bind("scst.max_len", c.scst.max_len),
      bind("scst.seed", c.scst.seed),
      bind("scst.in_recipe", c.recipe_scst),
      bind("decode.beam", c.decode.beam),
      bind("decode.max_len", c.decode.max_len),
      bind("decode.length_normalize", c.decode.length_normalize),
      bind("ablate.held_out_fraction", c.held_out_fraction),
  };
}

void apply_tree(AppConfig& config, const pt::ptree& tree) {
  auto table = bindings(config);
  std::set<std::string> known;
  for (const auto& b : table) known.insert(b.key);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ValidationError("config key outside a section: " + section);
    for (const auto& [key, _] : body)
      if (!known.contains(section + "." + key)) throw ValidationError("unknown config key: " + section + "." + key);
  }
  for (const auto& b : table)
    if (tree.get_child_optional(b.key)) b.read(tree);
}

}  // namespace

void apply_config_text(AppConfig& config, const std::string& ini) {
  pt::ptree tree;
  std::istringstream in(ini);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  apply_tree(config, tree);
}

void apply_config_file(AppConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

std::string config_to_ini(const AppConfig& config) {
  AppConfig copy = config;
  pt::ptree tree;
  for (const auto& b : bindings(copy)) b.write(tree);
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

void write_config(const AppConfig& config, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << config_to_ini(config);
}

void apply_seed(AppConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.data.seed = seed;
  config.xe.seed = seed + 1;
  config.scst.seed = seed + 2;
}

MetaFeatures parse_meta_features(const std::string& text) {
  if (text == "visual") return MetaFeatures::kVisual;
  if (text == "semantic") return MetaFeatures::kSemantic;
  if (text == "both") return MetaFeatures::kBoth;
  throw ValidationError("meta features must be visual, semantic or both (got " + text + ")");
}

std::string to_string(MetaFeatures f) {
  switch (f) {
    case MetaFeatures::kVisual: return "visual";
    case MetaFeatures::kSemantic: return "semantic";
    case MetaFeatures::kBoth: return "both";
  }
  return "both";
}

}  // namespace cmg
