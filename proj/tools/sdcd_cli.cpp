#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "run_manifest.hpp"
#include "sdcd/analysis.hpp"
#include "sdcd/decoding.hpp"
#include "sdcd/error.hpp"
#include "sdcd/metrics.hpp"
#include "sdcd/remote_backend.hpp"
#include "sdcd/synthetic_backend.hpp"
#include "sdcd/version.hpp"
#include "sdcd/view_transform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdcd::cli {
namespace {

// Stable exit codes.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitPrecondition = 4;
constexpr int kExitBackend = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kEmptyInput:
      return kExitUsage;
    case ErrorKind::kIo:
    case ErrorKind::kMalformedRecord:
    case ErrorKind::kDecodeError:
    case ErrorKind::kTraceWriteFailure:
      return kExitIo;
    case ErrorKind::kBackendUnavailable:
    case ErrorKind::kProtocolViolation:
    case ErrorKind::kInvalidHandle:
    case ErrorKind::kModelError:
      return kExitBackend;
    default:
      return kExitPrecondition;
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedRecord, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

std::size_t default_workers() {
  if (const char* env = std::getenv("SDCD_WORKERS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::kConfig, std::string("SDCD_WORKERS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct BackendBundle {
  std::unique_ptr<Backend> backend;
  std::string spec;
  std::optional<fs::path> scene_path;
};

BackendBundle open_backend(std::string spec) {
  if (spec.empty()) {
    if (const char* env = std::getenv("SDCD_BACKEND_ENDPOINT")) spec = std::string("remote:") + env;
  }
  if (spec.empty()) {
    throw Error(ErrorKind::kBackendUnavailable,
                "no backend configured; pass --backend or set SDCD_BACKEND_ENDPOINT");
  }
  BackendBundle b;
  b.spec = spec;
  if (spec.rfind("synthetic:", 0) == 0) {
    b.scene_path = spec.substr(10);
    b.backend = std::make_unique<SyntheticBackend>(load_scene(*b.scene_path));
  } else if (spec.rfind("remote:", 0) == 0) {
    b.backend = std::make_unique<RemoteBackend>(spec.substr(7));
  } else if (spec.rfind("http://", 0) == 0) {
    b.backend = std::make_unique<RemoteBackend>(spec);
  } else {
    throw Error(ErrorKind::kInvalidArgument, "backend must be synthetic:<scene.json> or remote:<http://...>");
  }
  return b;
}

PreprocessPolicy parse_policy(const std::string& name) {
  if (name == "crop") return PreprocessPolicy::kCrop;
  if (name == "resize") return PreprocessPolicy::kResize;
  throw Error(ErrorKind::kInvalidArgument, "preprocess must be crop, resize or none");
}

ImageGrid load_for_grid(const fs::path& path, std::size_t patch_size, const std::string& policy) {
  ImageGrid img = read_image(path);
  if (policy == "none") return img;
  return preprocess_to_grid(img, patch_size, parse_policy(policy));
}

// ---------------------------------------------------------------------------
// Datasets referenced from spec files.

struct LoadedDataset {
  SyntheticSceneSpec scene;
  ProbeDataset items;
  json description;
};

LoadedDataset load_dataset(const json& spec, const fs::path& base, RunManifest& manifest) {
  LoadedDataset out;
  if (spec.contains("synthetic")) {
    SyntheticDatasetOptions o;
    from_json(spec.at("synthetic"), o);
    auto ds = make_synthetic_dataset(o);
    out.scene = std::move(ds.scene);
    out.items = std::move(ds.items);
    json resolved;
    to_json(resolved, o);
    out.description = {{"synthetic", resolved}};
    return out;
  }
  if (spec.contains("scene") && spec.contains("items")) {
    const fs::path scene_path = base / spec.at("scene").get<std::string>();
    const fs::path items_path = base / spec.at("items").get<std::string>();
    manifest.add_input(scene_path);
    manifest.add_input(items_path);
    out.scene = load_scene(scene_path);
    for (const auto& p : load_pope_dataset(items_path)) {
      ProbeItem item;
      item.id = p.id;
      item.object = p.object;
      item.ground_truth = p.ground_truth;
      const fs::path img = items_path.parent_path() / p.image;
      item.image = read_image(img);
      out.items.push_back(std::move(item));
    }
    out.description = {{"scene", scene_path.string()}, {"items", items_path.string()}};
    return out;
  }
  throw Error(ErrorKind::kConfig, "dataset must be {\"synthetic\": {...}} or {\"scene\": ..., \"items\": ...}");
}

// ---------------------------------------------------------------------------
// Decoding flags shared by generate and sweep.

struct ConfigFlags {
  std::string config_file;
  double alpha = 0, beta = 0, gamma = 0, temperature = 0, top_p = 0, noise_sigma = 0;
  std::size_t max_new_tokens = 0, shuffle_size = 0;
  std::uint64_t seed = 0, shuffle_seed = 0;
  std::string sampling, negative_view;
  bool no_boost_negative = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON decoding config; flags override it")->check(CLI::ExistingFile);
    opts["alpha"] = app->add_option("--alpha", alpha, "contrast weight (default 2.0)");
    opts["beta"] = app->add_option("--beta", beta, "plausibility threshold (default 0.1)");
    opts["gamma"] = app->add_option("--gamma", gamma, "image-attention boost (default 0.6)");
    opts["temperature"] = app->add_option("--temperature", temperature, "softmax temperature (default 1.0)");
    opts["top_p"] = app->add_option("--top-p", top_p, "nucleus mass (default 0.9)");
    opts["max_new_tokens"] = app->add_option("--max-new-tokens", max_new_tokens, "generation cap (default 512)");
    opts["sampling_seed"] = app->add_option("--seed", seed, "sampling seed");
    opts["shuffle_size"] = app->add_option("-S,--shuffle-size", shuffle_size, "patch side (default 14)");
    opts["shuffle_seed"] = app->add_option("--shuffle-seed", shuffle_seed, "permutation seed");
    opts["sampling"] = app->add_option("--sampling", sampling, "greedy | nucleus");
    opts["negative_view"] = app->add_option("--negative-view", negative_view, "shuffle | noise | none");
    opts["noise_sigma"] = app->add_option("--noise-sigma", noise_sigma, "noise std for the noise view");
    opts["boost_negative_view"] = app->add_flag("--no-boost-negative", no_boost_negative,
                                                "apply gamma to the original view only");
  }

  // defaults < config file < flags
  DecodingConfig resolve(RunManifest* manifest) const {
    DecodingConfig c;
    if (!config_file.empty()) {
      merge_config(read_json(config_file), c);
      if (manifest) manifest->add_input(config_file);
    }
    json overrides = json::object();
    auto given = [&](const char* key) { return opts.at(key)->count() > 0; };
    if (given("alpha")) overrides["alpha"] = alpha;
    if (given("beta")) overrides["beta"] = beta;
    if (given("gamma")) overrides["gamma"] = gamma;
    if (given("temperature")) overrides["temperature"] = temperature;
    if (given("top_p")) overrides["top_p"] = top_p;
    if (given("max_new_tokens")) overrides["max_new_tokens"] = max_new_tokens;
    if (given("sampling_seed")) overrides["sampling_seed"] = seed;
    if (given("shuffle_size")) overrides["shuffle_size"] = shuffle_size;
    if (given("shuffle_seed")) overrides["shuffle_seed"] = shuffle_seed;
    if (given("sampling")) overrides["sampling"] = sampling;
    if (given("negative_view")) overrides["negative_view"] = negative_view;
    if (given("noise_sigma")) overrides["noise_sigma"] = noise_sigma;
    if (given("boost_negative_view")) overrides["boost_negative_view"] = !no_boost_negative;
    merge_config(overrides, c);
    c.validate();
    return c;
  }
};

TokenSequence parse_ids(const std::string& text) {
  TokenSequence ids;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      ids.push_back(static_cast<TokenId>(v));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidArgument, "--prompt-ids must be comma-separated token ids");
    }
  }
  if (ids.empty()) throw Error(ErrorKind::kInvalidArgument, "--prompt-ids is empty");
  return ids;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

std::string format_pope(const std::map<std::string, PopeScore>& scores) {
  std::ostringstream os;
  os << std::left << std::setw(13) << "setting" << std::right << std::setw(6) << "n" << std::setw(5) << "TP"
     << std::setw(5) << "FP" << std::setw(5) << "FN" << std::setw(5) << "TN" << std::setw(6) << "unp" << std::setw(10)
     << "Accuracy" << std::setw(11) << "Precision" << std::setw(9) << "Recall" << std::setw(9) << "F1" << '\n';
  auto row = [&os](const std::string& name, const PopeScore& s) {
    os << std::left << std::setw(13) << name << std::right << std::setw(6) << s.total << std::setw(5) << s.tp
       << std::setw(5) << s.fp << std::setw(5) << s.fn << std::setw(5) << s.tn << std::setw(6)
       << s.unparseable_positive + s.unparseable_negative << std::setw(10) << pct(s.accuracy) << std::setw(11)
       << (s.precision_undefined ? "n/a" : pct(s.precision)) << std::setw(9) << pct(s.recall) << std::setw(9)
       << pct(s.f1) << '\n';
  };
  for (const char* name : {"random", "popular", "adversarial"}) {
    if (scores.contains(name)) row(name, scores.at(name));
  }
  row("all", scores.at("all"));
  return os.str();
}

std::string format_chair(const ChairScore& s) {
  std::ostringstream os;
  os << "captions              " << s.captions << '\n'
     << "hallucinated captions " << s.hallucinated_captions << '\n'
     << "object mentions       " << s.mentions << '\n'
     << "hallucinated mentions " << s.hallucinated_mentions << '\n'
     << "ground-truth covered  " << s.covered_ground_truth << " / " << s.total_ground_truth << '\n'
     << "CHAIR_S               " << pct(s.chair_s) << '\n'
     << "CHAIR_I               " << pct(s.chair_i) << (s.zero_mentions ? "  (no mentions)" : "") << '\n'
     << "object precision      " << pct(s.object_precision) << '\n'
     << "object recall         " << pct(s.object_recall) << '\n'
     << "object F1             " << pct(s.object_f1) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

class Cli {
 public:
  explicit Cli(std::vector<std::string> args) : args_(std::move(args)) { build(); }

  int run() {
    try {
      std::vector<std::string> reversed(args_.rbegin(), args_.rend());
      app_.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app_.exit(e);
      return code == 0 ? kExitOk : kExitUsage;
    }
    try {
      return dispatch_();
    } catch (const Error& e) {
      std::cerr << "sdcd: " << e.what() << '\n';
      return exit_code(e.kind());
    } catch (const json::exception& e) {
      std::cerr << "sdcd: ConfigError: " << e.what() << '\n';
      return kExitPrecondition;
    }
  }

 private:
  void build();
  int cmd_shuffle();
  int cmd_generate();
  int cmd_eval_pope();
  int cmd_eval_chair();
  int cmd_probe_ssd();
  int cmd_probe_bop();
  int cmd_sweep();
  int cmd_make_dataset();
  int cmd_replay();
  int cmd_rerun();

  RunManifest manifest(const std::string& command) const {
    RunManifest m;
    m.command = command;
    m.argv = args_;
    return m;
  }

  std::vector<std::string> args_;
  CLI::App app_{"Structure-disrupted contrastive decoding toolkit", "sdcd"};
  std::function<int()> dispatch_;

  // shuffle
  std::string in_, out_;
  std::size_t patch_size_ = 14;
  std::uint64_t seed_ = 0;
  std::string preprocess_ = "none";
  // generate
  std::string gen_preprocess_ = "crop";
  std::string backend_, image_, probe_, prompt_, prompt_ids_, mode_ = "sdcd", out_dir_;
  bool caption_ = false;
  ConfigFlags gen_flags_;
  // eval
  std::string dataset_, answers_, captions_, annotations_, synonyms_;
  // probe / sweep
  std::string spec_;
  std::size_t workers_ = 0;
  // make-dataset
  SyntheticDatasetOptions ds_opts_;
  // replay / rerun
  std::string trace_, manifest_path_;
};

void Cli::build() {
  app_.set_version_flag("--version", kVersion);
  app_.require_subcommand(1);

  auto* shuffle = app_.add_subcommand("shuffle", "write a patch-shuffled view and its permutation sidecar");
  shuffle->add_option("--in", in_, "input image (png/ppm/pgm)")->required();
  shuffle->add_option("--out", out_, "output image; the permutation goes to <out>.shuffle.json")->required();
  shuffle->add_option("-S,--patch-size", patch_size_, "patch side in pixels")->capture_default_str();
  shuffle->add_option("--seed", seed_, "permutation seed")->capture_default_str();
  shuffle->add_option("--preprocess", preprocess_, "none | crop | resize")->capture_default_str();
  shuffle->callback([this] { dispatch_ = [this] { return cmd_shuffle(); }; });

  auto* gen = app_.add_subcommand("generate", "decode one prompt against one image");
  gen->add_option("--backend", backend_, "synthetic:<scene.json> | remote:<http://host:port>");
  gen->add_option("--image", image_, "input image")->required();
  auto* g_probe = gen->add_option("--probe", probe_, "object name for the binary existence probe");
  auto* g_caption = gen->add_flag("--caption", caption_, "use the captioning prompt");
  auto* g_prompt = gen->add_option("--prompt", prompt_, "free prompt text (synthetic backend tokenizer)");
  auto* g_ids = gen->add_option("--prompt-ids", prompt_ids_, "comma-separated prompt token ids");
  g_probe->excludes(g_caption)->excludes(g_prompt)->excludes(g_ids);
  g_caption->excludes(g_prompt)->excludes(g_ids);
  g_prompt->excludes(g_ids);
  gen->add_option("--mode", mode_, "sdcd | regular")->capture_default_str();
  gen->add_option("--preprocess", gen_preprocess_, "crop | resize | none")->capture_default_str();
  gen->add_option("--out-dir", out_dir_, "directory for trace.jsonl and manifest.json");
  gen_flags_.attach(gen);
  gen->callback([this] { dispatch_ = [this] { return cmd_generate(); }; });

  auto* eval = app_.add_subcommand("eval", "score pre-generated answers or captions");
  eval->require_subcommand(1);
  auto* pope = eval->add_subcommand("pope", "POPE accuracy/precision/recall/F1, per sampling setting");
  pope->add_option("--dataset", dataset_, "items: {id, image, object, ground_truth, stratum}")->required();
  pope->add_option("--answers", answers_, "answers: {id, answer}")->required();
  pope->add_option("--out-dir", out_dir_, "directory for report.json, report.txt, manifest.json");
  pope->callback([this] { dispatch_ = [this] { return cmd_eval_pope(); }; });
  auto* chair = eval->add_subcommand("chair", "CHAIR_S / CHAIR_I and object F1");
  chair->add_option("--captions", captions_, "captions: {image, caption}")->required();
  chair->add_option("--annotations", annotations_, "annotations: {image, objects}")->required();
  chair->add_option("--synonyms", synonyms_, "synonyms: {canonical, surface_forms}")->required();
  chair->add_option("--out-dir", out_dir_, "directory for report.json, report.txt, manifest.json");
  chair->callback([this] { dispatch_ = [this] { return cmd_eval_chair(); }; });

  auto* probe = app_.add_subcommand("probe", "diagnostic probes");
  probe->require_subcommand(1);
  auto* ssd = probe->add_subcommand("ssd", "YES-NO margin shift under shuffling, per ground-truth class");
  ssd->add_option("--spec", spec_, "probe spec (JSON)")->required()->check(CLI::ExistingFile);
  ssd->add_option("--out-dir", out_dir_, "output directory")->required();
  ssd->add_option("--workers", workers_, "worker threads (default SDCD_WORKERS or all cores)");
  ssd->callback([this] { dispatch_ = [this] { return cmd_probe_ssd(); }; });
  auto* bop = probe->add_subcommand("bop", "embedding similarity between an image and its shuffles");
  bop->add_option("--spec", spec_, "probe spec (JSON)")->required()->check(CLI::ExistingFile);
  bop->add_option("--out-dir", out_dir_, "output directory")->required();
  bop->callback([this] { dispatch_ = [this] { return cmd_probe_bop(); }; });

  auto* sweep = app_.add_subcommand("sweep", "alpha or shuffle-size ablation");
  sweep->add_option("--spec", spec_, "sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out-dir", out_dir_, "output directory")->required();
  sweep->add_option("--workers", workers_, "worker threads (default SDCD_WORKERS or all cores)");
  sweep->callback([this] { dispatch_ = [this] { return cmd_sweep(); }; });

  auto* make = app_.add_subcommand("make-dataset", "write the synthetic probing dataset to disk");
  make->add_option("--out-dir", out_dir_, "output directory")->required();
  make->add_option("--real", ds_opts_.real_items, "structure-dominant items")->capture_default_str();
  make->add_option("--bait", ds_opts_.bait_items, "texture-bait items")->capture_default_str();
  make->add_option("--seed", ds_opts_.seed, "dataset seed")->capture_default_str();
  make->add_option("--texture-release", ds_opts_.texture_release, "bait release on incoherent views")
      ->capture_default_str();
  make->callback([this] { dispatch_ = [this] { return cmd_make_dataset(); }; });

  auto* rep = app_.add_subcommand("replay", "re-derive a trace's tokens from its stored logits");
  rep->add_option("--trace", trace_, "trace.jsonl")->required();
  rep->callback([this] { dispatch_ = [this] { return cmd_replay(); }; });

  auto* rerun = app_.add_subcommand("rerun", "repeat a run from its manifest");
  rerun->add_option("--manifest", manifest_path_, "manifest.json")->required();
  rerun->callback([this] { dispatch_ = [this] { return cmd_rerun(); }; });
}

int Cli::cmd_shuffle() {
  const ImageGrid img = load_for_grid(in_, patch_size_, preprocess_);
  const auto spec = make_shuffle_spec(img, patch_size_, seed_);
  const auto out = shuffle_patches(img, spec);
  write_image(out, out_);
  write_text(out_ + ".shuffle.json", json(spec).dump(2) + "\n");
  std::cout << "wrote " << out_ << " (" << out.height() << "x" << out.width() << ", N=" << spec.patch_count()
            << ")\n";
  return kExitOk;
}

int Cli::cmd_generate() {
  if (mode_ != "sdcd" && mode_ != "regular") throw Error(ErrorKind::kInvalidArgument, "--mode must be sdcd or regular");
  auto m = manifest("generate");
  const DecodingConfig config = gen_flags_.resolve(&m);
  auto bundle = open_backend(backend_);
  if (bundle.scene_path) m.add_input(*bundle.scene_path);
  Backend& backend = *bundle.backend;

  const ImageGrid image = load_for_grid(image_, config.shuffle_patch_size, gen_preprocess_);
  m.add_input(image_);

  TokenSequence prompt;
  if (!prompt_ids_.empty()) prompt = parse_ids(prompt_ids_);
  else if (!probe_.empty()) prompt = backend.tokenize(probe_prompt(probe_));
  else if (!prompt_.empty()) prompt = backend.tokenize(prompt_);
  else prompt = backend.tokenize(kCaptionPrompt);

  const auto result = mode_ == "sdcd" ? generate(backend, image, prompt, config)
                                      : regular_generate(backend, image, prompt, config);
  std::cout << backend.render(result.tokens) << '\n';

  if (!out_dir_.empty()) {
    const auto dir = prepare_out_dir(out_dir_);
    write_trace(result.trace, dir / "trace.jsonl");
    m.resolved = {{"mode", mode_},
                  {"backend", bundle.spec},
                  {"config", config},
                  {"preprocess", gen_preprocess_},
                  {"prompt", prompt},
                  {"backend_descriptor", backend.descriptor()}};
    m.seeds = {{"sampling_seed", config.sampling_seed}, {"shuffle_seed", config.shuffle_seed}};
    if (result.trace.header.shuffle) m.seeds["permutation"] = *result.trace.header.shuffle;
    m.outputs = {"trace.jsonl"};
    m.write(dir / "manifest.json");
  }
  return kExitOk;
}

int Cli::cmd_eval_pope() {
  auto m = manifest("eval pope");
  const auto items = load_pope_dataset(dataset_);
  const auto answers = load_answers(answers_);
  m.add_input(dataset_);
  m.add_input(answers_);
  std::vector<PopePrediction> predictions;
  for (const auto& item : items) {
    const auto it = answers.find(item.id);
    if (it == answers.end()) throw Error(ErrorKind::kMalformedRecord, "no answer for item '" + item.id + "'");
    predictions.push_back({item, parse_binary_answer(it->second)});
  }
  const auto scores = pope_score_stratified(predictions);
  json report = {{"metric", "pope"}, {"settings", json::object()}};
  for (const auto& [name, s] : scores) report["settings"][name] = to_json(s);
  const std::string table = format_pope(scores);
  std::cout << table;
  if (!out_dir_.empty()) {
    const auto dir = prepare_out_dir(out_dir_);
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(dir / "report.txt", table);
    m.outputs = {"report.json", "report.txt"};
    m.write(dir / "manifest.json");
  }
  return kExitOk;
}

int Cli::cmd_eval_chair() {
  auto m = manifest("eval chair");
  const auto captions = load_captions(captions_);
  const auto annotations = load_annotations(annotations_);
  const auto synonyms = load_synonyms(synonyms_);
  m.add_input(captions_);
  m.add_input(annotations_);
  m.add_input(synonyms_);
  std::vector<CaptionResult> results;
  for (const auto& a : annotations) {
    const auto it = captions.find(a.image);
    if (it == captions.end()) throw Error(ErrorKind::kMalformedRecord, "no caption for image '" + a.image + "'");
    results.push_back({it->second, a});
  }
  const auto score = chair_score(results, synonyms);
  json report = {{"metric", "chair"}, {"scores", to_json(score)}};
  json per_caption = json::array();
  for (const auto& r : results) {
    const auto found = extract_objects(r.caption, synonyms);
    json hallucinated = json::array();
    for (const auto& o : found) {
      if (!r.annotation.objects.contains(o)) hallucinated.push_back(o);
    }
    per_caption.push_back({{"image", r.annotation.image}, {"mentioned", found}, {"hallucinated", hallucinated}});
  }
  report["captions"] = per_caption;
  const std::string text = format_chair(score);
  std::cout << text;
  if (!out_dir_.empty()) {
    const auto dir = prepare_out_dir(out_dir_);
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(dir / "report.txt", text);
    m.outputs = {"report.json", "report.txt"};
    m.write(dir / "manifest.json");
  }
  return kExitOk;
}

int Cli::cmd_probe_ssd() {
  auto m = manifest("probe ssd");
  const fs::path spec_path = spec_;
  const json spec = read_json(spec_path);
  m.add_input(spec_path);
  const auto ds = load_dataset(spec.at("dataset"), spec_path.parent_path(), m);
  const std::size_t S = spec.value("S", std::size_t{14});
  const std::uint64_t seed = spec.value("seed", std::uint64_t{0});
  const double gamma = spec.value("gamma", 0.6);
  const std::size_t workers = workers_ ? workers_ : default_workers();

  SyntheticBackend backend(ds.scene);
  const auto summary = ssd_probe(backend, ds.items, S, seed, gamma, workers);

  const auto dir = prepare_out_dir(out_dir_);
  std::string lines;
  for (const auto& r : summary.records) lines += to_json(r).dump() + "\n";
  write_text(dir / "ssd_records.jsonl", lines);
  write_text(dir / "ssd_summary.json", to_json(summary).dump(2) + "\n");
  m.resolved = {{"dataset", ds.description}, {"S", S}, {"gamma", gamma}};
  m.seeds = {{"shuffle_seed", seed}};
  m.outputs = {"ssd_records.jsonl", "ssd_summary.json"};
  m.write(dir / "manifest.json");

  std::cout << std::fixed << std::setprecision(6) << "items GT=yes " << summary.count_yes << "  mean delta "
            << summary.mean_delta_yes << '\n'
            << "items GT=no  " << summary.count_no << "  mean delta " << summary.mean_delta_no << '\n'
            << "divergence   " << summary.divergence << '\n';
  return kExitOk;
}

int Cli::cmd_probe_bop() {
  auto m = manifest("probe bop");
  const fs::path spec_path = spec_;
  const json spec = read_json(spec_path);
  m.add_input(spec_path);

  std::vector<ImageGrid> images;
  const json& src = spec.at("images");
  if (src.is_array()) {
    for (const auto& p : src) {
      const fs::path path = spec_path.parent_path() / p.get<std::string>();
      images.push_back(read_image(path));
      m.add_input(path);
    }
  } else {
    // {"gradients": {"count": n, "side": s}}: ramps at evenly spaced angles
    const auto& g = src.at("gradients");
    const std::size_t count = g.value("count", std::size_t{8});
    const std::size_t side = g.value("side", std::size_t{112});
    for (std::size_t i = 0; i < count; ++i) {
      images.push_back(make_gradient(side, side, 360.0 * static_cast<double>(i) / static_cast<double>(count) + 20.0));
    }
  }
  const auto sizes = spec.at("sizes").get<std::vector<std::size_t>>();
  const auto seeds = spec.value("seeds", std::vector<std::uint64_t>{0, 1, 2});
  const std::string kind = spec.value("embedder", "texture");
  Embedder embedder;
  if (kind == "texture") {
    embedder = texture_signature_embedder(spec.value("patch_size", std::size_t{14}), spec.value("bins", std::size_t{8}));
  } else if (kind == "boundary") {
    embedder = boundary_aware_embedder(spec.value("scales", std::vector<std::size_t>{2, 7}));
  } else {
    throw Error(ErrorKind::kConfig, "embedder must be texture or boundary");
  }
  const auto curve = bop_probe(embedder, images, sizes, seeds);

  const auto dir = prepare_out_dir(out_dir_);
  write_text(dir / "bop.json", to_json(curve).dump(2) + "\n");
  std::ostringstream table;
  table << std::left << std::setw(8) << "S" << std::right << std::setw(14) << "mean cosine" << std::setw(10)
        << "samples" << '\n';
  for (const auto& p : curve) {
    table << std::left << std::setw(8) << p.patch_size << std::right << std::setw(14) << std::fixed
          << std::setprecision(6) << p.mean_cosine << std::setw(10) << p.samples << '\n';
  }
  write_text(dir / "bop.txt", table.str());
  m.resolved = {{"embedder", kind}, {"sizes", sizes}, {"images", images.size()}};
  m.seeds = {{"shuffle_seeds", seeds}};
  m.outputs = {"bop.json", "bop.txt"};
  m.write(dir / "manifest.json");
  std::cout << table.str();
  return kExitOk;
}

int Cli::cmd_sweep() {
  auto m = manifest("sweep");
  const fs::path spec_path = spec_;
  const json spec = read_json(spec_path);
  m.add_input(spec_path);
  const auto ds = load_dataset(spec.at("dataset"), spec_path.parent_path(), m);
  DecodingConfig config;
  if (spec.contains("config")) merge_config(spec.at("config"), config);
  config.validate();
  const std::string parameter = spec.at("parameter").get<std::string>();
  const std::size_t workers = workers_ ? workers_ : default_workers();

  SyntheticBackend backend(ds.scene);
  SweepResult result;
  if (parameter == "alpha") {
    result = alpha_sweep(backend, ds.items, spec.at("grid").get<std::vector<double>>(), config, workers);
  } else if (parameter == "S") {
    result = shuffle_size_sweep(backend, ds.items, spec.at("grid").get<std::vector<std::size_t>>(), config, workers);
  } else {
    throw Error(ErrorKind::kConfig, "sweep parameter must be alpha or S");
  }

  const auto dir = prepare_out_dir(out_dir_);
  const std::string table = format_table(result);
  write_text(dir / "sweep.json", to_json(result).dump(2) + "\n");
  write_text(dir / "sweep.txt", table);
  std::string lines;
  auto emit_rows = [&](const std::string& label, const SweepRow& row) {
    if (row.error) return;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
      lines += json{{"row", label},
                    {"id", ds.items[i].id},
                    {"object", ds.items[i].object},
                    {"ground_truth", ds.items[i].ground_truth ? "yes" : "no"},
                    {"answer", backend.render(row.outputs[i])}}
                   .dump() +
               "\n";
    }
  };
  emit_rows("regular", result.baseline);
  for (const auto& row : result.rows) {
    std::ostringstream label;
    label << parameter << "=" << row.parameter;
    emit_rows(label.str(), row);
  }
  write_text(dir / "sweep_answers.jsonl", lines);
  m.resolved = {{"parameter", parameter}, {"grid", spec.at("grid")}, {"dataset", ds.description}, {"config", config}};
  m.seeds = {{"sampling_seed", config.sampling_seed}, {"shuffle_seed", config.shuffle_seed}};
  m.outputs = {"sweep.json", "sweep.txt", "sweep_answers.jsonl"};
  m.write(dir / "manifest.json");
  std::cout << table;
  if (result.any_error()) {
    std::cerr << "sdcd: one or more sweep cells failed; see the table\n";
    return kExitPrecondition;
  }
  return kExitOk;
}

int Cli::cmd_make_dataset() {
  auto m = manifest("make-dataset");
  const auto ds = make_synthetic_dataset(ds_opts_);
  const auto dir = prepare_out_dir(out_dir_);
  prepare_out_dir((dir / "images").string());
  std::string lines;
  for (const auto& item : ds.items) {
    const std::string rel = "images/" + item.id + ".png";
    write_image(item.image, dir / rel);
    lines += json{{"id", item.id},
                  {"image", rel},
                  {"object", item.object},
                  {"ground_truth", item.ground_truth ? "yes" : "no"},
                  {"stratum", "random"}}
                 .dump() +
             "\n";
  }
  write_text(dir / "items.jsonl", lines);
  write_text(dir / "scene.json", scene_to_json(ds.scene).dump(2) + "\n");
  json opts;
  to_json(opts, ds_opts_);
  m.resolved = {{"options", opts}};
  m.seeds = {{"dataset_seed", ds_opts_.seed}};
  m.outputs = {"scene.json", "items.jsonl", "images/"};
  m.write(dir / "manifest.json");
  std::cout << "wrote " << ds.items.size() << " items to " << dir.string() << '\n';
  return kExitOk;
}

int Cli::cmd_replay() {
  const auto trace = read_trace(trace_);
  const auto tokens = replay(trace);
  std::ostringstream ids;
  for (std::size_t i = 0; i < tokens.size(); ++i) ids << (i ? " " : "") << tokens[i];
  std::cout << ids.str() << '\n';
  if (tokens != trace.tokens) {
    std::cerr << "sdcd: replayed tokens differ from the stored sequence\n";
    return kExitPrecondition;
  }
  return kExitOk;
}

int Cli::cmd_rerun() {
  const auto m = read_manifest(manifest_path_);
  for (const auto& [path, digest] : m.inputs) {
    if (sha256_file(path) != digest) throw Error(ErrorKind::kIo, "input " + path + " changed since the manifest was written");
  }
  if (!m.argv.empty() && m.argv.front() == "rerun") throw Error(ErrorKind::kInvalidArgument, "manifest records a rerun");
  return Cli(m.argv).run();
}

}  // namespace
}  // namespace sdcd::cli

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sdcd::cli::Cli(std::move(args)).run();
}
