#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmg/datagen.hpp"

namespace cmg {

/// Token <-> id mapping with pad = 0, bos = 1, eos = 2, unk = 3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static inline const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};

  Vocabulary();
  /// Tokens must start with the four specials, each unique.
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return ids_.contains(token); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// [bos, ids..., eos], unknown words mapped to unk.
  std::vector<int> encode(const Caption& caption) const;
  /// Drops specials; stops at eos.
  Caption decode(std::span<const int> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Tokens with frequency >= min_count, ordered by descending frequency then lexicographically.
Vocabulary build_vocab(std::span<const Caption> captions, int min_count);

/// Caption tokens found in the lexicon, in order, duplicates kept.
std::vector<std::string> extract_object_tokens(const Caption& caption, const std::set<std::string>& lexicon);

using SynonymTable = std::map<std::string, std::string>;

std::string canonicalize(const std::string& token, const SynonymTable& synonyms);
SynonymTable load_synonyms(const std::filesystem::path& path);
void save_synonyms(const SynonymTable& synonyms, const std::filesystem::path& path);

struct ConceptClass {
  std::string canonical;
  std::vector<std::string> members;
  int frequency = 0;
};

/// Top-K synonym groups of caption object tokens.
class ConceptClassTable {
 public:
  ConceptClassTable() = default;
  ConceptClassTable(std::vector<ConceptClass> classes, SynonymTable synonyms);

  int size() const { return static_cast<int>(classes_.size()); }
  const ConceptClass& at(int id) const { return classes_.at(static_cast<std::size_t>(id)); }
  const std::vector<ConceptClass>& classes() const { return classes_; }
  /// Class id of a token (after canonicalization), or -1.
  int class_of(const std::string& token) const;
  int class_by_name(const std::string& canonical) const;

  void save(const std::filesystem::path& path) const;
  static ConceptClassTable load(const std::filesystem::path& path);

 private:
  std::vector<ConceptClass> classes_;
  SynonymTable synonyms_;
  std::map<std::string, int> by_canonical_;
};

ConceptClassTable build_concept_classes(std::span<const Caption> captions, const std::set<std::string>& lexicon,
                                        const SynonymTable& synonyms, int k);

}  // namespace cmg
