#include "sdcd/metrics.hpp"

#include <cctype>
#include <fstream>
#include <functional>

#include "sdcd/error.hpp"

namespace sdcd {

namespace {

std::vector<std::string> normalized_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Calls handle(json, line_no) for each non-blank line.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(const nlohmann::json&, std::size_t)>& handle) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0, records = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      handle(nlohmann::json::parse(line), line_no);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kMalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kMalformedRecord) throw;
      throw Error(ErrorKind::kMalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ++records;
  }
  if (records == 0) throw Error(ErrorKind::kEmptyInput, path.string() + " has no records");
}

std::string id_string(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::string_view to_string(BinaryAnswer answer) {
  switch (answer) {
    case BinaryAnswer::kYes: return "yes";
    case BinaryAnswer::kNo: return "no";
    case BinaryAnswer::kUnparseable: return "unparseable";
  }
  return "unparseable";
}

std::string_view to_string(PopeStratum stratum) {
  switch (stratum) {
    case PopeStratum::kRandom: return "random";
    case PopeStratum::kPopular: return "popular";
    case PopeStratum::kAdversarial: return "adversarial";
  }
  return "random";
}

PopeStratum pope_stratum_from_string(std::string_view text) {
  if (text == "random") return PopeStratum::kRandom;
  if (text == "popular") return PopeStratum::kPopular;
  if (text == "adversarial") return PopeStratum::kAdversarial;
  throw Error(ErrorKind::kMalformedRecord, "unknown POPE stratum '" + std::string(text) + "'");
}

BinaryAnswer parse_binary_answer(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isalpha(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  if (words.empty()) return BinaryAnswer::kUnparseable;
  if (words.front() == "yes") return BinaryAnswer::kYes;
  if (words.front() == "no") return BinaryAnswer::kNo;
  bool has_yes = false, has_no = false;
  for (const auto& w : words) {
    has_yes = has_yes || w == "yes";
    has_no = has_no || w == "no";
  }
  if (has_yes != has_no) return has_yes ? BinaryAnswer::kYes : BinaryAnswer::kNo;
  return BinaryAnswer::kUnparseable;
}

PopeScore pope_score(const std::vector<PopePrediction>& predictions) {
  if (predictions.empty()) throw Error(ErrorKind::kEmptyInput, "no POPE predictions to score");
  PopeScore s;
  s.total = predictions.size();
  for (const auto& p : predictions) {
    const bool positive = p.item.ground_truth;
    switch (p.answer) {
      case BinaryAnswer::kYes: ++(positive ? s.tp : s.fp); break;
      case BinaryAnswer::kNo: ++(positive ? s.fn : s.tn); break;
      case BinaryAnswer::kUnparseable: ++(positive ? s.unparseable_positive : s.unparseable_negative); break;
    }
  }
  bool unused = false;
  s.accuracy = ratio(s.tp + s.tn, s.total, unused);
  s.precision = ratio(s.tp, s.tp + s.fp, s.precision_undefined);
  s.recall = ratio(s.tp, s.tp + s.fn + s.unparseable_positive, s.recall_undefined);
  s.f1_undefined = s.precision + s.recall == 0.0;
  s.f1 = s.f1_undefined ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  s.unparseable_rate = ratio(s.unparseable_positive + s.unparseable_negative, s.total, unused);
  return s;
}

std::map<std::string, PopeScore> pope_score_stratified(const std::vector<PopePrediction>& predictions) {
  std::map<std::string, PopeScore> out;
  out["all"] = pope_score(predictions);
  std::map<std::string, std::vector<PopePrediction>> groups;
  for (const auto& p : predictions) groups[std::string(to_string(p.item.stratum))].push_back(p);
  for (const auto& [name, group] : groups) out[name] = pope_score(group);
  return out;
}

nlohmann::json to_json(const PopeScore& s) {
  return {{"total", s.total},
          {"tp", s.tp},
          {"fp", s.fp},
          {"fn", s.fn},
          {"tn", s.tn},
          {"unparseable_positive", s.unparseable_positive},
          {"unparseable_negative", s.unparseable_negative},
          {"accuracy", s.accuracy},
          {"precision", s.precision},
          {"recall", s.recall},
          {"f1", s.f1},
          {"unparseable_rate", s.unparseable_rate},
          {"flags",
           {{"precision_undefined", s.precision_undefined},
            {"recall_undefined", s.recall_undefined},
            {"f1_undefined", s.f1_undefined}}}};
}

void SynonymMap::add(const std::string& canonical, const std::vector<std::string>& surface_forms) {
  const std::string canon = join_words(normalized_words(canonical));
  if (canon.empty()) throw Error(ErrorKind::kConfig, "empty canonical object name");
  canonical_.insert(canon);
  std::vector<std::string> forms = surface_forms;
  forms.push_back(canon);
  for (const auto& form : forms) {
    const auto words = normalized_words(form);
    if (words.empty() || words.size() > 2) {
      throw Error(ErrorKind::kConfig, "surface form '" + form + "' must be one or two words");
    }
    const std::string key = join_words(words);
    const auto [it, inserted] = surface_to_canonical_.emplace(key, canon);
    if (!inserted && it->second != canon) {
      throw Error(ErrorKind::kConfig, "surface form '" + key + "' maps to both '" + it->second + "' and '" + canon + "'");
    }
  }
}

std::optional<std::string> SynonymMap::lookup(std::string_view surface) const {
  const auto it = surface_to_canonical_.find(std::string(surface));
  if (it == surface_to_canonical_.end()) return std::nullopt;
  return it->second;
}

std::set<std::string> extract_objects(std::string_view caption, const SynonymMap& synonyms) {
  const auto words = normalized_words(caption);
  std::set<std::string> found;
  std::size_t i = 0;
  while (i < words.size()) {
    if (i + 1 < words.size()) {
      if (auto hit = synonyms.lookup(words[i] + ' ' + words[i + 1])) {
        found.insert(*hit);
        i += 2;
        continue;
      }
    }
    if (auto hit = synonyms.lookup(words[i])) found.insert(*hit);
    ++i;
  }
  return found;
}

ChairScore chair_score(const std::vector<CaptionResult>& results, const SynonymMap& synonyms) {
  if (results.empty()) throw Error(ErrorKind::kEmptyInput, "no captions to score");
  ChairScore s;
  s.captions = results.size();
  for (const auto& r : results) {
    for (const auto& gt : r.annotation.objects) {
      if (!synonyms.has_canonical(gt)) {
        throw Error(ErrorKind::kInvalidArgument, "annotation object '" + gt + "' for image '" + r.annotation.image +
                                                     "' is not in the object vocabulary");
      }
    }
    const auto mentioned = extract_objects(r.caption, synonyms);
    std::size_t hallucinated = 0;
    for (const auto& obj : mentioned) {
      if (r.annotation.objects.contains(obj)) {
        ++s.covered_ground_truth;
      } else {
        ++hallucinated;
      }
    }
    s.mentions += mentioned.size();
    s.hallucinated_mentions += hallucinated;
    s.total_ground_truth += r.annotation.objects.size();
    if (hallucinated > 0) ++s.hallucinated_captions;
  }
  bool unused = false;
  s.chair_s = ratio(s.hallucinated_captions, s.captions, unused);
  s.chair_i = ratio(s.hallucinated_mentions, s.mentions, s.zero_mentions);
  s.object_precision = s.zero_mentions ? 0.0 : 1.0 - s.chair_i;
  s.object_recall = ratio(s.covered_ground_truth, s.total_ground_truth, s.zero_ground_truth);
  const double denom = s.object_precision + s.object_recall;
  s.object_f1 = denom > 0.0 ? 2.0 * s.object_precision * s.object_recall / denom : 0.0;
  return s;
}

nlohmann::json to_json(const ChairScore& s) {
  return {{"captions", s.captions},
          {"hallucinated_captions", s.hallucinated_captions},
          {"mentions", s.mentions},
          {"hallucinated_mentions", s.hallucinated_mentions},
          {"covered_ground_truth", s.covered_ground_truth},
          {"total_ground_truth", s.total_ground_truth},
          {"chair_s", s.chair_s},
          {"chair_i", s.chair_i},
          {"object_precision", s.object_precision},
          {"object_recall", s.object_recall},
          {"object_f1", s.object_f1},
          {"flags", {{"zero_mentions", s.zero_mentions}, {"zero_ground_truth", s.zero_ground_truth}}}};
}

std::vector<PopeItem> load_pope_dataset(const std::filesystem::path& path) {
  std::vector<PopeItem> items;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line_no) {
    PopeItem item;
    item.id = j.contains("id") ? id_string(j.at("id")) : std::to_string(line_no);
    item.image = j.at("image").get<std::string>();
    item.object = j.at("object").get<std::string>();
    const auto gt = j.at("ground_truth");
    if (gt.is_boolean()) {
      item.ground_truth = gt.get<bool>();
    } else {
      const auto text = gt.get<std::string>();
      if (text != "yes" && text != "no") throw Error(ErrorKind::kMalformedRecord, "ground_truth must be yes or no");
      item.ground_truth = text == "yes";
    }
    item.stratum = pope_stratum_from_string(j.value("stratum", "random"));
    items.push_back(std::move(item));
  });
  return items;
}

std::map<std::string, std::string> load_answers(const std::filesystem::path& path) {
  std::map<std::string, std::string> answers;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t) {
    const auto id = id_string(j.at("id"));
    if (!answers.emplace(id, j.at("answer").get<std::string>()).second) {
      throw Error(ErrorKind::kMalformedRecord, "duplicate answer for item " + id);
    }
  });
  return answers;
}

std::map<std::string, std::string> load_captions(const std::filesystem::path& path) {
  std::map<std::string, std::string> captions;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t) {
    const auto image = id_string(j.at("image"));
    if (!captions.emplace(image, j.at("caption").get<std::string>()).second) {
      throw Error(ErrorKind::kMalformedRecord, "duplicate caption for image " + image);
    }
  });
  return captions;
}

std::vector<ChairAnnotation> load_annotations(const std::filesystem::path& path) {
  std::vector<ChairAnnotation> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t) {
    ChairAnnotation a;
    a.image = id_string(j.at("image"));
    for (const auto& o : j.at("objects")) a.objects.insert(join_words(normalized_words(o.get<std::string>())));
    out.push_back(std::move(a));
  });
  return out;
}

SynonymMap load_synonyms(const std::filesystem::path& path) {
  SynonymMap map;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t) {
    try {
      map.add(j.at("canonical").get<std::string>(), j.value("surface_forms", std::vector<std::string>{}));
    } catch (const Error& e) {
      throw Error(ErrorKind::kMalformedRecord, e.what());
    }
  });
  return map;
}

}  // namespace sdcd
