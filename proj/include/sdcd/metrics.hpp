#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sdcd {

// ---------------------------------------------------------------------------
// POPE: binary object-existence probing, "yes" is the positive class.

enum class BinaryAnswer { kYes, kNo, kUnparseable };
enum class PopeStratum { kRandom, kPopular, kAdversarial };

std::string_view to_string(BinaryAnswer answer);
std::string_view to_string(PopeStratum stratum);
PopeStratum pope_stratum_from_string(std::string_view text);

// First alphabetic word decides when it is yes/no; otherwise the verdict
// is whichever of the two words occurs, if exactly one does.
BinaryAnswer parse_binary_answer(std::string_view text);

struct PopeItem {
  std::string id;
  std::string image;
  std::string object;
  bool ground_truth = false;
  PopeStratum stratum = PopeStratum::kRandom;
};

struct PopePrediction {
  PopeItem item;
  BinaryAnswer answer = BinaryAnswer::kUnparseable;
};

struct PopeScore {
  std::size_t total = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Unparseable answers are errors: on positives they count against recall.
  std::size_t unparseable_positive = 0, unparseable_negative = 0;

  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, unparseable_rate = 0.0;
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

PopeScore pope_score(const std::vector<PopePrediction>& predictions);

// Overall plus one entry per stratum present, keyed "all"/"random"/...
std::map<std::string, PopeScore> pope_score_stratified(const std::vector<PopePrediction>& predictions);

nlohmann::json to_json(const PopeScore& s);

// ---------------------------------------------------------------------------
// CHAIR: caption-level object hallucination.

class SynonymMap {
 public:
  // Lowercases everything; the canonical name is itself a surface form.
  // Throws Config when a surface form already maps elsewhere or has > 2 words.
  void add(const std::string& canonical, const std::vector<std::string>& surface_forms);

  std::optional<std::string> lookup(std::string_view surface) const;
  bool has_canonical(std::string_view canonical) const { return canonical_.contains(std::string(canonical)); }
  const std::set<std::string>& canonical_names() const { return canonical_; }

 private:
  std::map<std::string, std::string> surface_to_canonical_;
  std::set<std::string> canonical_;
};

// Lowercase, punctuation to spaces, then a left-to-right scan where a
// two-word match wins over, and consumes, its first word.
std::set<std::string> extract_objects(std::string_view caption, const SynonymMap& synonyms);

struct ChairAnnotation {
  std::string image;
  std::set<std::string> objects;
};

struct CaptionResult {
  std::string caption;
  ChairAnnotation annotation;
};

struct ChairScore {
  std::size_t captions = 0;
  std::size_t hallucinated_captions = 0;
  std::size_t mentions = 0;
  std::size_t hallucinated_mentions = 0;
  std::size_t covered_ground_truth = 0;
  std::size_t total_ground_truth = 0;

  double chair_s = 0.0, chair_i = 0.0;
  double object_precision = 0.0, object_recall = 0.0, object_f1 = 0.0;
  bool zero_mentions = false, zero_ground_truth = false;
};

ChairScore chair_score(const std::vector<CaptionResult>& results, const SynonymMap& synonyms);

nlohmann::json to_json(const ChairScore& s);

// ---------------------------------------------------------------------------
// Line-delimited JSON inputs. Malformed lines raise MalformedRecord with the
// line number; an input without records raises EmptyInput.

std::vector<PopeItem> load_pope_dataset(const std::filesystem::path& path);
// {"id": ..., "answer": "..."} per line.
std::map<std::string, std::string> load_answers(const std::filesystem::path& path);
// {"image": ..., "caption": "..."} per line.
std::map<std::string, std::string> load_captions(const std::filesystem::path& path);
// {"image": ..., "objects": [...]} per line.
std::vector<ChairAnnotation> load_annotations(const std::filesystem::path& path);
// {"canonical": ..., "surface_forms": [...]} per line.
SynonymMap load_synonyms(const std::filesystem::path& path);

}  // namespace sdcd
