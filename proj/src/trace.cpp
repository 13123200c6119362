#include <fstream>
#include <sstream>

#include "sdcd/decoding.hpp"
#include "sdcd/error.hpp"

namespace sdcd {

namespace {

constexpr std::string_view kTraceFormat = "sdcd-trace";
constexpr int kTraceVersion = 1;

nlohmann::json float32_array(const LogitVector& values) {
  nlohmann::json arr = nlohmann::json::array();
  for (double v : values) arr.push_back(static_cast<float>(v));
  return arr;
}

LogitVector read_float32_array(const nlohmann::json& arr) {
  LogitVector out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(static_cast<double>(v.get<float>()));
  return out;
}

}  // namespace

std::string serialize_trace(const GenerationTrace& trace) {
  std::ostringstream out;
  const auto& h = trace.header;
  nlohmann::json header = {{"record", "header"},
                           {"format", kTraceFormat},
                           {"version", kTraceVersion},
                           {"mode", h.contrastive ? "sdcd" : "regular"},
                           {"config", h.config},
                           {"shuffle", h.shuffle ? nlohmann::json(*h.shuffle) : nlohmann::json(nullptr)},
                           {"prompt", h.prompt},
                           {"backend", h.backend}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& s = trace.steps[t];
    // Masked entries are implicit: only kept ids and their probabilities are stored.
    std::vector<std::size_t> kept;
    std::vector<double> probs;
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      if (s.mask[i]) {
        kept.push_back(i);
        probs.push_back(s.distribution[i]);
      }
    }
    nlohmann::json rec = {{"record", "step"},
                          {"t", t},
                          {"logits_v", float32_array(s.logits_original)},
                          {"kept", kept},
                          {"p", probs},
                          {"token", s.token}};
    if (!s.logits_negative.empty()) rec["logits_vprime"] = float32_array(s.logits_negative);
    out << rec.dump() << '\n';
  }
  nlohmann::json end = {{"record", "end"},
                        {"tokens", trace.tokens},
                        {"stop", trace.stop == StopReason::kEos ? "eos" : "max_new_tokens"}};
  out << end.dump() << '\n';
  return out.str();
}

void write_trace(const GenerationTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kTraceWriteFailure, "cannot open " + path.string());
  out << serialize_trace(trace);
  out.flush();
  if (!out) throw Error(ErrorKind::kTraceWriteFailure, "short write to " + path.string());
}

GenerationTrace parse_trace(std::string_view text) {
  GenerationTrace trace;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false, have_end = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto kind = rec.at("record").get<std::string>();
      if (kind == "header") {
        if (rec.at("format") != kTraceFormat || rec.at("version") != kTraceVersion) {
          throw Error(ErrorKind::kMalformedRecord, "unsupported trace format");
        }
        auto& h = trace.header;
        h.contrastive = rec.at("mode") == "sdcd";
        merge_config(rec.at("config"), h.config);
        if (!rec.at("shuffle").is_null()) h.shuffle = rec.at("shuffle").get<ShuffleSpec>();
        h.prompt = rec.at("prompt").get<TokenSequence>();
        h.backend = rec.at("backend").get<BackendDescriptor>();
        have_header = true;
      } else if (kind == "step") {
        if (!have_header) throw Error(ErrorKind::kMalformedRecord, "step before header");
        TraceStep s;
        s.logits_original = read_float32_array(rec.at("logits_v"));
        if (rec.contains("logits_vprime")) s.logits_negative = read_float32_array(rec.at("logits_vprime"));
        s.mask.assign(s.logits_original.size(), false);
        s.distribution.assign(s.logits_original.size(), 0.0);
        const auto kept = rec.at("kept").get<std::vector<std::size_t>>();
        const auto probs = rec.at("p").get<std::vector<double>>();
        if (kept.size() != probs.size()) throw Error(ErrorKind::kMalformedRecord, "kept/p length mismatch");
        for (std::size_t k = 0; k < kept.size(); ++k) {
          s.mask.at(kept[k]) = true;
          s.distribution.at(kept[k]) = probs[k];
        }
        s.token = rec.at("token").get<TokenId>();
        trace.steps.push_back(std::move(s));
      } else if (kind == "end") {
        trace.tokens = rec.at("tokens").get<TokenSequence>();
        trace.stop = rec.at("stop") == "eos" ? StopReason::kEos : StopReason::kMaxNewTokens;
        have_end = true;
      } else {
        throw Error(ErrorKind::kMalformedRecord, "unknown record kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kMalformedRecord, "trace line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::out_of_range& e) {
      throw Error(ErrorKind::kMalformedRecord, "trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header || !have_end) throw Error(ErrorKind::kMalformedRecord, "trace is missing its header or end record");
  return trace;
}

GenerationTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open trace " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_trace(buffer.str());
}

}  // namespace sdcd
