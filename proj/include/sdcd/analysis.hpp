#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdcd/backend.hpp"
#include "sdcd/decoding.hpp"
#include "sdcd/metrics.hpp"
#include "sdcd/synthetic_backend.hpp"

namespace sdcd {

struct ProbeItem {
  std::string id;
  ImageGrid image;
  std::string object;
  bool ground_truth = false;
  // Token ids of the probe prompt; filled by tokenizing the default probe
  // prompt when empty.
  TokenSequence prompt;
};

using ProbeDataset = std::vector<ProbeItem>;

TokenSequence probe_tokens(const Backend& backend, const ProbeItem& item);

// ---------------------------------------------------------------------------
// Structure sensitivity: YES-NO margins under V and a shuffled V'.

struct SsdRecord {
  std::string id;
  bool ground_truth = false;
  double margin_original = 0.0;
  double margin_shuffled = 0.0;
  double delta = 0.0;  // margin_shuffled - margin_original
  ShuffleSpec shuffle;
};

struct SsdSummary {
  std::vector<SsdRecord> records;
  std::size_t count_yes = 0, count_no = 0;
  double mean_delta_yes = 0.0;
  double mean_delta_no = 0.0;
  double divergence = 0.0;  // mean_delta_no - mean_delta_yes
};

// Item i is shuffled with derive_seed(seed, i).
SsdSummary ssd_probe(Backend& backend, const ProbeDataset& items, std::size_t patch_size, std::uint64_t seed,
                     double attention_boost = 0.6, std::size_t workers = 1);

nlohmann::json to_json(const SsdRecord& r);
nlohmann::json to_json(const SsdSummary& s);

// ---------------------------------------------------------------------------
// Ablation sweeps over alpha or shuffle size.

struct SweepRow {
  double parameter = 0.0;
  std::optional<std::string> error;
  std::optional<PopeScore> score;
  double negative_yes_rate = 0.0;  // hallucination rate on GT=no items
  double positive_yes_rate = 0.0;
  std::vector<TokenSequence> outputs;  // per item, dataset order
};

struct ReferenceRow {
  double parameter;
  double precision, recall, f1, accuracy;
};

struct SweepResult {
  std::string parameter_name;  // "alpha" or "S"
  SweepRow baseline;           // regular decoding
  std::vector<SweepRow> rows;  // grid order
  std::vector<ReferenceRow> reference;
  bool any_error() const;
};

// Per item i: shuffle seed derive_seed(fixed.shuffle_seed, i) and sampling
// seed derive_seed(fixed.sampling_seed, i), identical in every row. The
// alpha sweep builds each item's V' once and shares it across rows.
SweepResult alpha_sweep(Backend& backend, const ProbeDataset& items, const std::vector<double>& alphas,
                        const DecodingConfig& fixed, std::size_t workers = 1);

// A size that does not divide an item image fails its own row only.
SweepResult shuffle_size_sweep(Backend& backend, const ProbeDataset& items, const std::vector<std::size_t>& sizes,
                               const DecodingConfig& fixed, std::size_t workers = 1);

BinaryAnswer answer_from_tokens(const TokenSequence& tokens, const BackendDescriptor& descriptor);

nlohmann::json to_json(const SweepResult& r);
std::string format_table(const SweepResult& r);

// Published 7B-scale numbers carried into reports; never asserted.
std::vector<ReferenceRow> alpha_reference_rows();
std::vector<ReferenceRow> shuffle_size_reference_rows();

// ---------------------------------------------------------------------------
// Bag-of-patches robustness of an image embedder.

using Embedder = std::function<std::vector<double>(const ImageGrid&)>;

struct LabelPrototype {
  std::string label;
  std::vector<double> embedding;
};

struct BopPoint {
  std::size_t patch_size = 0;
  double mean_cosine = 0.0;
  std::size_t samples = 0;
  std::optional<double> retrieval_retention;
};

std::vector<BopPoint> bop_probe(const Embedder& embedder, const std::vector<ImageGrid>& images,
                                const std::vector<std::size_t>& sizes, const std::vector<std::uint64_t>& seeds,
                                const std::vector<LabelPrototype>& labels = {});

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Patch-mean histogram: blind to patch order.
Embedder texture_signature_embedder(std::size_t patch_size = 14, std::size_t bins = 8);
// Structural coherence at each scale. Shuffles at S move whole cells of
// every scale dividing S, so the curve is monotone over such S.
Embedder boundary_aware_embedder(std::vector<std::size_t> scales = {2, 7});

nlohmann::json to_json(const std::vector<BopPoint>& curve);

// ---------------------------------------------------------------------------
// Synthetic probing dataset: structure-dominant objects present in their
// images (GT yes) and texture-bait objects absent from theirs (GT no).

struct SyntheticDatasetOptions {
  std::size_t real_items = 50;
  std::size_t bait_items = 50;
  std::size_t image_side = 112;
  std::uint64_t seed = 0;
  std::size_t analysis_patch_size = 14;
  std::size_t texture_bins = 8;
  double texture_release = 1.0;
  double bait_texture_weight = 0.5;
  double pixel_noise = 3.0;
};

struct SyntheticDataset {
  SyntheticSceneSpec scene;
  ProbeDataset items;
};

SyntheticDataset make_synthetic_dataset(const SyntheticDatasetOptions& options);

void from_json(const nlohmann::json& j, SyntheticDatasetOptions& o);
void to_json(nlohmann::json& j, const SyntheticDatasetOptions& o);

}  // namespace sdcd
