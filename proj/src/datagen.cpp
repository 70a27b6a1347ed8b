#include "cmg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cmg/errors.hpp"
#include "cmg/feature_file.hpp"
#include "cmg/nn.hpp"
#include "json.hpp"

namespace cmg {
namespace fs = std::filesystem;
using nlohmann::json;

std::vector<MotionTemplate> GeneratorSpec::default_motions() {
  constexpr double v = 0.25;
  return {{"left", -v, 0.0, {"moves", "left"}},
          {"right", v, 0.0, {"moves", "right"}},
          {"up", 0.0, -v, {"moves", "up"}},
          {"down", 0.0, v, {"moves", "down"}},
          {"still", 0.0, 0.0, {"stays"}}};
}

int GeneratorSpec::feature_channels() const {
  return static_cast<int>(shape_classes.size() + color_classes.size()) + noise_channels;
}

void GeneratorSpec::validate() const {
  if (shape_classes.empty()) throw ValidationError("generator needs at least one shape class");
  if (color_classes.empty()) throw ValidationError("generator needs at least one color class");
  if (motion_templates.empty()) throw ValidationError("generator needs at least one motion template");
  if (num_videos < 1 || frames_per_video < 1 || grid_side < 1 || captions_per_video < 1 || max_objects < 1)
    throw ValidationError("generator counts must be >= 1");
  if (noise_channels < 0) throw ValidationError("noise_channels must be >= 0");
  if (max_objects > static_cast<int>(std::min(shape_classes.size(), color_classes.size())))
    throw ValidationError("max_objects exceeds the number of distinct shapes or colors");
  if (object_size <= 0.0 || object_size > grid_side) throw ValidationError("object_size must fit the grid");
  for (const auto& m : motion_templates) {
    if (m.phrase.empty()) throw ValidationError("motion template '" + m.name + "' has an empty phrase");
    if (std::abs(m.dx) * (frames_per_video - 1) > grid_side - object_size ||
        std::abs(m.dy) * (frames_per_video - 1) > grid_side - object_size)
      throw ValidationError("motion template '" + m.name + "' leaves the grid");
  }
}

double cell_coverage(const Box& box, int row, int col) {
  const double w = std::max(0.0, std::min(box.x2, col + 1.0) - std::max(box.x1, static_cast<double>(col)));
  const double h = std::max(0.0, std::min(box.y2, row + 1.0) - std::max(box.y1, static_cast<double>(row)));
  return w * h;
}

std::vector<int> cells_in_box(const Box& box, int grid_side) {
  std::vector<int> cells;
  for (int r = 0; r < grid_side; ++r)
    for (int c = 0; c < grid_side; ++c) {
      const double cx = c + 0.5, cy = r + 0.5;
      if (cx >= box.x1 && cx <= box.x2 && cy >= box.y1 && cy <= box.y2) cells.push_back(r * grid_side + c);
    }
  return cells;
}

namespace {

struct ObjectPlan {
  std::string shape;
  std::string color;
  const MotionTemplate* motion = nullptr;
  double x0 = 0, y0 = 0;
  int shape_index = 0;
  int color_index = 0;

  Box box_at(int t, double size) const {
    const double x = x0 + motion->dx * t, y = y0 + motion->dy * t;
    return {x, y, x + size, y + size};
  }
};

double start_in_range(Rng& rng, double velocity, int frames, double room) {
  const double travel = velocity * (frames - 1);
  const double lo = std::max(0.0, -travel);
  const double hi = std::min(room, room - travel);
  return lo + uniform01(rng) * (hi - lo);
}

std::string relation(const Box& a, const Box& b) {
  const double dx = (b.x1 + b.x2) / 2 - (a.x1 + a.x2) / 2;
  const double dy = (b.y1 + b.y2) / 2 - (a.y1 + a.y2) / 2;
  if (std::abs(dx) >= std::abs(dy)) return dx >= 0 ? "left-of" : "right-of";
  return dy >= 0 ? "above" : "below";
}

Matrix context_appearance(const std::vector<Matrix>& frames) {
  Matrix out(static_cast<Eigen::Index>(frames.size()), frames.front().cols());
  for (std::size_t t = 0; t < frames.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = frames[t].colwise().mean();
  return out;
}

// Per-channel centroid displacement between consecutive frames; weights ignore
// responses below 0.2 so background noise does not dominate.
Matrix context_motion(const std::vector<Matrix>& frames, int side) {
  const Eigen::Index d = frames.front().cols();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(frames.size()), 2 * d);
  auto centroid = [&](const Matrix& f, Eigen::Index ch, double& cx, double& cy) {
    double w = 0, sx = 0, sy = 0;
    for (Eigen::Index g = 0; g < f.rows(); ++g) {
      const double v = std::max(0.0, f(g, ch) - 0.2);
      w += v;
      sx += v * (g % side + 0.5);
      sy += v * (g / side + 0.5);
    }
    if (w < 1e-9) return false;
    cx = sx / w;
    cy = sy / w;
    return true;
  };
  for (std::size_t t = 1; t < frames.size(); ++t) {
    for (Eigen::Index ch = 0; ch < d; ++ch) {
      double ax, ay, bx, by;
      if (centroid(frames[t - 1], ch, ax, ay) && centroid(frames[t], ch, bx, by)) {
        out(static_cast<Eigen::Index>(t), 2 * ch) = bx - ax;
        out(static_cast<Eigen::Index>(t), 2 * ch + 1) = by - ay;
      }
    }
  }
  return out;
}

}  // namespace

Corpus generate_corpus(const GeneratorSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int side = spec.grid_side;
  const int cells = side * side;
  const int channels = spec.feature_channels();
  const int n_shapes = static_cast<int>(spec.shape_classes.size());
  const double room = side - spec.object_size;

  std::map<std::string, std::vector<std::string>> members;  // canonical -> synonyms
  for (const auto& [member, canonical] : spec.synonyms) members[canonical].push_back(member);

  Corpus corpus;
  corpus.grid_side = side;
  corpus.feature_channels = channels;
  corpus.object_classes = spec.shape_classes;
  corpus.predicates = kPredicates;
  corpus.synonyms = spec.synonyms;
  std::set<std::string> lexicon(spec.shape_classes.begin(), spec.shape_classes.end());
  for (const auto& [member, canonical] : spec.synonyms) lexicon.insert(member);
  corpus.lexicon.assign(lexicon.begin(), lexicon.end());

  const int width = static_cast<int>(std::to_string(spec.num_videos - 1).size());
  for (int v = 0; v < spec.num_videos; ++v) {
    VideoRecord rec;
    std::string num = std::to_string(v);
    rec.id = "video" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    rec.grid_side = side;

    const int n_obj = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.max_objects)));
    std::vector<int> shape_ids(spec.shape_classes.size()), color_ids(spec.color_classes.size());
    std::iota(shape_ids.begin(), shape_ids.end(), 0);
    std::iota(color_ids.begin(), color_ids.end(), 0);
    std::vector<ObjectPlan> objects;
    for (int o = 0; o < n_obj; ++o) {
      ObjectPlan p;
      std::swap(shape_ids[o], shape_ids[o + uniform_index(rng, shape_ids.size() - o)]);
      std::swap(color_ids[o], color_ids[o + uniform_index(rng, color_ids.size() - o)]);
      p.shape_index = shape_ids[o];
      p.color_index = color_ids[o];
      p.shape = spec.shape_classes[p.shape_index];
      p.color = spec.color_classes[p.color_index];
      p.motion = &spec.motion_templates[uniform_index(rng, spec.motion_templates.size())];
      p.x0 = start_in_range(rng, p.motion->dx, spec.frames_per_video, room);
      p.y0 = start_in_range(rng, p.motion->dy, spec.frames_per_video, room);
      objects.push_back(p);
    }

    std::vector<RegionMap> regions;
    for (int t = 0; t < spec.frames_per_video; ++t) {
      Matrix f = gaussian(cells, channels, spec.noise_stddev, rng);
      RegionMap region;
      FrameScene scene;
      scene.frame = t;
      for (int o = 0; o < n_obj; ++o) {
        const auto& p = objects[o];
        const Box box = p.box_at(t, spec.object_size);
        for (int r = 0; r < side; ++r)
          for (int c = 0; c < side; ++c) {
            const double cov = cell_coverage(box, r, c);
            if (cov <= 0.0) continue;
            f(r * side + c, p.shape_index) += cov;
            f(r * side + c, n_shapes + p.color_index) += cov;
            if (cov >= 0.5) region[p.shape].push_back(r * side + c);
          }
        scene.objects.push_back({o, p.shape, box});
      }
      for (int a = 0; a < n_obj; ++a)
        for (int b = a + 1; b < n_obj; ++b)
          scene.triplets.push_back({a, relation(scene.objects[a].box, scene.objects[b].box), b});
      rec.frames.push_back(std::move(f));
      regions.push_back(std::move(region));
      rec.scene_graphs.push_back(std::move(scene));
    }
    rec.gt_regions = std::move(regions);
    rec.context["appearance"] = context_appearance(rec.frames);
    rec.context["motion"] = context_motion(rec.frames, side);

    for (int k = 0; k < spec.captions_per_video; ++k) {
      std::vector<int> order(n_obj);
      std::iota(order.begin(), order.end(), 0);
      if (k > 0)
        for (int i = n_obj - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
      Caption cap{"a"};
      for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = objects[order[i]];
        if (i > 0) cap.push_back("and");
        cap.push_back(p.color);
        std::string noun = p.shape;
        if (k > 0) {
          auto it = members.find(p.shape);
          if (it != members.end() && uniform01(rng) < 0.5) noun = it->second[uniform_index(rng, it->second.size())];
        }
        cap.push_back(noun);
        cap.insert(cap.end(), p.motion->phrase.begin(), p.motion->phrase.end());
      }
      rec.captions.push_back(std::move(cap));
    }
    corpus.videos.push_back(std::move(rec));
  }
  return corpus;
}

std::string scene_to_json_line(const FrameScene& scene) {
  json j;
  j["frame"] = scene.frame;
  j["objects"] = json::array();
  for (const auto& o : scene.objects)
    j["objects"].push_back({{"id", o.id}, {"class", o.cls}, {"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}});
  j["triplets"] = json::array();
  for (const auto& t : scene.triplets) j["triplets"].push_back({{"subj", t.subj}, {"pred", t.pred}, {"obj", t.obj}});
  return j.dump();
}

FrameScene scene_from_json_line(const std::string& line) {
  FrameScene s;
  try {
    const json j = json::parse(line);
    s.frame = j.at("frame").get<int>();
    for (const auto& o : j.at("objects")) {
      const auto& b = o.at("box");
      if (b.size() != 4) throw ValidationError("scene-graph box must have 4 coordinates");
      s.objects.push_back({o.at("id").get<int>(), o.at("class").get<std::string>(),
                           {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}});
    }
    for (const auto& t : j.at("triplets"))
      s.triplets.push_back({t.at("subj").get<int>(), t.at("pred").get<std::string>(), t.at("obj").get<int>()});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scene-graph line: ") + e.what());
  }
  return s;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

std::string join(const Caption& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + c[i];
  return s;
}

Caption split(const std::string& s) {
  Caption out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

fs::path write_corpus(const Corpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "videos", ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["grid_side"] = corpus.grid_side;
  manifest["feature_channels"] = corpus.feature_channels;
  manifest["object_classes"] = corpus.object_classes;
  manifest["predicates"] = corpus.predicates;
  manifest["lexicon"] = "lexicon.txt";
  manifest["synonyms"] = "synonyms.tsv";
  manifest["videos"] = json::array();

  std::string lex;
  for (const auto& w : corpus.lexicon) lex += w + "\n";
  write_text(dir / "lexicon.txt", lex);
  std::string syn;
  for (const auto& [m, c] : corpus.synonyms) syn += m + "\t" + c + "\n";
  write_text(dir / "synonyms.tsv", syn);

  for (const auto& v : corpus.videos) {
    const fs::path rel = fs::path("videos") / v.id;
    fs::create_directories(dir / rel, ec);
    if (ec) throw IoError("cannot create " + (dir / rel).string() + ": " + ec.message());

    Tensor frames;
    const auto f = static_cast<std::uint32_t>(v.frames.size());
    const auto s = static_cast<std::uint32_t>(v.grid_side);
    const auto d = static_cast<std::uint32_t>(v.frames.front().cols());
    frames.dims = {f, s, s, d};
    for (const auto& m : v.frames)
      for (Eigen::Index g = 0; g < m.rows(); ++g)
        for (Eigen::Index c = 0; c < m.cols(); ++c) frames.data.push_back(static_cast<float>(m(g, c)));
    write_feature_file(dir / rel / "frames.cmgf", frames);

    json entry;
    entry["id"] = v.id;
    json caps = json::array();
    for (const auto& c : v.captions) caps.push_back(join(c));
    entry["captions"] = caps;
    entry["frames"] = (rel / "frames.cmgf").generic_string();
    json ctx = json::object();
    for (const auto& [name, m] : v.context) {
      const fs::path p = rel / ("context_" + name + ".cmgf");
      write_feature_file(dir / p, to_tensor(m));
      ctx[name] = p.generic_string();
    }
    entry["context"] = ctx;

    std::string lines;
    for (const auto& sc : v.scene_graphs) lines += scene_to_json_line(sc) + "\n";
    write_text(dir / rel / "scene_graphs.jsonl", lines);
    entry["scene_graphs"] = (rel / "scene_graphs.jsonl").generic_string();

    if (v.gt_regions) {
      json frames_json = json::array();
      for (std::size_t t = 0; t < v.gt_regions->size(); ++t)
        frames_json.push_back({{"frame", t}, {"regions", (*v.gt_regions)[t]}});
      write_text(dir / rel / "gt_regions.json", json{{"frames", frames_json}}.dump() + "\n");
      entry["gt_regions"] = (rel / "gt_regions.json").generic_string();
    }
    manifest["videos"].push_back(entry);
  }
  write_text(dir / "manifest.json", manifest.dump(1) + "\n");
  return dir / "manifest.json";
}

Corpus load_corpus(const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path();
  const json m = parse_json_file(manifest_path);
  Corpus corpus;
  try {
    corpus.grid_side = m.at("grid_side").get<int>();
    corpus.feature_channels = m.at("feature_channels").get<int>();
    corpus.object_classes = m.at("object_classes").get<std::vector<std::string>>();
    corpus.predicates = m.at("predicates").get<std::vector<std::string>>();
    corpus.lexicon = split(read_text(dir / m.at("lexicon").get<std::string>()));
    std::istringstream syn(read_text(dir / m.at("synonyms").get<std::string>()));
    for (std::string line; std::getline(syn, line);) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ValidationError("synonym line without TAB: " + line);
      corpus.synonyms[line.substr(0, tab)] = line.substr(tab + 1);
    }

    for (const auto& e : m.at("videos")) {
      VideoRecord v;
      v.id = e.at("id").get<std::string>();
      for (const auto& c : e.at("captions")) {
        v.captions.push_back(split(c.get<std::string>()));
        if (v.captions.back().empty()) throw ValidationError("empty caption in video " + v.id);
      }
      const Tensor frames = read_feature_file(dir / e.at("frames").get<std::string>());
      if (frames.dims.size() != 4 || frames.dims[1] != frames.dims[2])
        throw ValidationError("frames tensor of " + v.id + " must be F x S x S x D");
      v.grid_side = static_cast<int>(frames.dims[1]);
      const Matrix flat = to_matrix(frames);
      const Eigen::Index g = static_cast<Eigen::Index>(frames.dims[1]) * frames.dims[2];
      for (std::uint32_t t = 0; t < frames.dims[0]; ++t) v.frames.push_back(flat.middleRows(t * g, g));
      if (v.frames.empty()) throw ValidationError("video " + v.id + " has no frames");
      for (const auto& [name, p] : e.at("context").items())
        v.context[name] = to_matrix(read_feature_file(dir / p.get<std::string>()));
      std::istringstream lines(read_text(dir / e.at("scene_graphs").get<std::string>()));
      for (std::string line; std::getline(lines, line);)
        if (!line.empty()) v.scene_graphs.push_back(scene_from_json_line(line));
      for (const auto& sc : v.scene_graphs) {
        std::set<int> ids;
        for (const auto& o : sc.objects) ids.insert(o.id);
        for (const auto& t : sc.triplets)
          if (!ids.contains(t.subj) || !ids.contains(t.obj))
            throw ValidationError("triplet references unknown object in " + v.id);
      }
      if (e.contains("gt_regions")) {
        const json r = parse_json_file(dir / e.at("gt_regions").get<std::string>());
        std::vector<RegionMap> regions(v.frames.size());
        for (const auto& fr : r.at("frames")) {
          const auto t = fr.at("frame").get<std::size_t>();
          if (t >= regions.size()) throw ValidationError("gt region frame out of range in " + v.id);
          regions[t] = fr.at("regions").get<RegionMap>();
        }
        v.gt_regions = std::move(regions);
      }
      corpus.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return corpus;
}

std::vector<double> frame_differences(std::span<const Matrix> frames) {
  std::vector<double> d(frames.size(), 0.0);
  for (std::size_t t = 1; t < frames.size(); ++t) d[t] = (frames[t] - frames[t - 1]).cwiseAbs().sum();
  return d;
}

std::vector<int> select_top_differences(std::span<const double> diffs, int n) {
  if (n < 1) throw ValidationError("key-frame count must be >= 1");
  std::vector<int> idx(diffs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return diffs[a] > diffs[b]; });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(n)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> select_keyframes(std::span<const Matrix> frames, int n) {
  if (frames.empty()) throw ValidationError("select_keyframes needs at least one frame");
  const auto d = frame_differences(frames);
  return select_top_differences(d, n);
}

}  // namespace cmg
