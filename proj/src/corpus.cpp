#include "cmg/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "cmg/errors.hpp"
#include "json.hpp"

namespace cmg {
namespace fs = std::filesystem;

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kSpecials.size() || !std::equal(kSpecials.begin(), kSpecials.end(), tokens_.begin()))
    throw ValidationError("vocabulary must start with <pad>, <bos>, <eos>, <unk>");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate vocabulary token: " + tokens_[i]);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Caption& caption) const {
  std::vector<int> out{kBos};
  for (const auto& w : caption) out.push_back(id(w));
  out.push_back(kEos);
  return out;
}

Caption Vocabulary::decode(std::span<const int> ids) const {
  Caption out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const Caption> captions, int min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  if (captions.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, int> freq;
  for (const auto& c : captions)
    for (const auto& w : c) ++freq[w];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [w, n] : freq)
    if (n >= min_count && std::find(Vocabulary::kSpecials.begin(), Vocabulary::kSpecials.end(), w) ==
                              Vocabulary::kSpecials.end())
      kept.emplace_back(w, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = Vocabulary::kSpecials;
  for (const auto& [w, n] : kept) tokens.push_back(w);
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> extract_object_tokens(const Caption& caption, const std::set<std::string>& lexicon) {
  if (lexicon.empty()) throw ValidationError("noun lexicon is empty");
  std::vector<std::string> out;
  for (const auto& w : caption)
    if (lexicon.contains(w)) out.push_back(w);
  return out;
}

std::string canonicalize(const std::string& token, const SynonymTable& synonyms) {
  auto it = synonyms.find(token);
  return it == synonyms.end() ? token : it->second;
}

SynonymTable load_synonyms(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  SynonymTable table;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ValidationError("synonym line must be member<TAB>canonical: " + line);
    table[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return table;
}

void save_synonyms(const SynonymTable& synonyms, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& [m, c] : synonyms) out << m << '\t' << c << '\n';
}

ConceptClassTable::ConceptClassTable(std::vector<ConceptClass> classes, SynonymTable synonyms)
    : classes_(std::move(classes)), synonyms_(std::move(synonyms)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) by_canonical_[classes_[i].canonical] = static_cast<int>(i);
}

int ConceptClassTable::class_of(const std::string& token) const { return class_by_name(canonicalize(token, synonyms_)); }

int ConceptClassTable::class_by_name(const std::string& canonical) const {
  auto it = by_canonical_.find(canonical);
  return it == by_canonical_.end() ? -1 : it->second;
}

void ConceptClassTable::save(const fs::path& path) const {
  nlohmann::json j;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : classes_)
    j["classes"].push_back({{"canonical", c.canonical}, {"members", c.members}, {"frequency", c.frequency}});
  j["synonyms"] = synonyms_;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(1) << '\n';
}

ConceptClassTable ConceptClassTable::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<ConceptClass> classes;
    for (const auto& c : j.at("classes"))
      classes.push_back({c.at("canonical").get<std::string>(), c.at("members").get<std::vector<std::string>>(),
                         c.at("frequency").get<int>()});
    return ConceptClassTable(std::move(classes), j.at("synonyms").get<SynonymTable>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed concept class table " + path.string() + ": " + e.what());
  }
}

ConceptClassTable build_concept_classes(std::span<const Caption> captions, const std::set<std::string>& lexicon,
                                        const SynonymTable& synonyms, int k) {
  if (k < 1) throw ValidationError("K must be >= 1");
  std::map<std::string, int> freq;
  std::map<std::string, std::set<std::string>> members;
  for (const auto& c : captions)
    for (const auto& tok : extract_object_tokens(c, lexicon)) {
      const auto canon = canonicalize(tok, synonyms);
      ++freq[canon];
      members[canon].insert(tok);
    }
  std::vector<ConceptClass> classes;
  for (const auto& [canon, n] : freq)
    classes.push_back({canon, std::vector<std::string>(members[canon].begin(), members[canon].end()), n});
  // freq iterates in lexicographic order, so a stable sort keeps that as the tie-break.
  std::stable_sort(classes.begin(), classes.end(),
                   [](const ConceptClass& a, const ConceptClass& b) { return a.frequency > b.frequency; });
  if (static_cast<int>(classes.size()) > k) classes.resize(static_cast<std::size_t>(k));
  return ConceptClassTable(std::move(classes), synonyms);
}

}  // namespace cmg
