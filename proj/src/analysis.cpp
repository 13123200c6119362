#include "sdcd/analysis.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "sdcd/error.hpp"
#include "sdcd/parallel.hpp"
#include "sdcd/rng.hpp"
#include "sdcd/synthetic_backend.hpp"

namespace sdcd {

namespace {

double yes_no_margin(const LogitVector& logits, const BackendDescriptor& d) {
  return logits.at(static_cast<std::size_t>(d.yes_id)) - logits.at(static_cast<std::size_t>(d.no_id));
}

DecodingConfig item_config(const DecodingConfig& fixed, std::size_t index) {
  DecodingConfig c = fixed;
  c.shuffle_seed = derive_seed(fixed.shuffle_seed, index);
  c.sampling_seed = derive_seed(fixed.sampling_seed, index);
  return c;
}

void finish_row(SweepRow& row, const ProbeDataset& items, const BackendDescriptor& d) {
  std::vector<PopePrediction> predictions;
  std::size_t pos = 0, neg = 0, pos_yes = 0, neg_yes = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    PopeItem pi{items[i].id, items[i].id, items[i].object, items[i].ground_truth, PopeStratum::kRandom};
    const BinaryAnswer answer = answer_from_tokens(row.outputs[i], d);
    predictions.push_back({pi, answer});
    const bool yes = answer == BinaryAnswer::kYes;
    if (items[i].ground_truth) {
      ++pos;
      pos_yes += yes;
    } else {
      ++neg;
      neg_yes += yes;
    }
  }
  row.score = pope_score(predictions);
  row.positive_yes_rate = pos ? static_cast<double>(pos_yes) / static_cast<double>(pos) : 0.0;
  row.negative_yes_rate = neg ? static_cast<double>(neg_yes) / static_cast<double>(neg) : 0.0;
}

SweepRow regular_row(Backend& backend, const ProbeDataset& items, const DecodingConfig& fixed,
                     std::size_t workers) {
  SweepRow row;
  row.outputs.resize(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    row.outputs[i] = regular_generate(backend, items[i].image, probe_tokens(backend, items[i]),
                                      item_config(fixed, i)).tokens;
  });
  finish_row(row, items, backend.descriptor());
  return row;
}

std::string format_number(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

TokenSequence probe_tokens(const Backend& backend, const ProbeItem& item) {
  if (!item.prompt.empty()) return item.prompt;
  return backend.tokenize(probe_prompt(item.object));
}

SsdSummary ssd_probe(Backend& backend, const ProbeDataset& items, std::size_t patch_size, std::uint64_t seed,
                     double attention_boost, std::size_t workers) {
  if (items.empty()) throw Error(ErrorKind::kEmptyInput, "structure sensitivity probe needs items");
  SsdSummary summary;
  summary.records.resize(items.size());
  const auto& d = backend.descriptor();
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& item = items[i];
    const auto prompt = probe_tokens(backend, item);
    auto spec = make_shuffle_spec(item.image, patch_size, derive_seed(seed, i));
    const auto shuffled = shuffle_patches(item.image, spec);
    const auto v = backend.encode_view(item.image, attention_boost, ViewLabel::kOriginal);
    const auto vp = backend.encode_view(shuffled, attention_boost, ViewLabel::kShuffled);
    SsdRecord rec;
    rec.id = item.id;
    rec.ground_truth = item.ground_truth;
    rec.margin_original = yes_no_margin(backend.next_token_logits(v, prompt), d);
    rec.margin_shuffled = yes_no_margin(backend.next_token_logits(vp, prompt), d);
    rec.delta = rec.margin_shuffled - rec.margin_original;
    rec.shuffle = std::move(spec);
    summary.records[i] = std::move(rec);
  });
  double sum_yes = 0.0, sum_no = 0.0;
  for (const auto& r : summary.records) {
    if (r.ground_truth) {
      sum_yes += r.delta;
      ++summary.count_yes;
    } else {
      sum_no += r.delta;
      ++summary.count_no;
    }
  }
  summary.mean_delta_yes = summary.count_yes ? sum_yes / static_cast<double>(summary.count_yes) : 0.0;
  summary.mean_delta_no = summary.count_no ? sum_no / static_cast<double>(summary.count_no) : 0.0;
  summary.divergence = summary.mean_delta_no - summary.mean_delta_yes;
  return summary;
}

nlohmann::json to_json(const SsdRecord& r) {
  return {{"id", r.id},
          {"ground_truth", r.ground_truth ? "yes" : "no"},
          {"margin_v", r.margin_original},
          {"margin_vprime", r.margin_shuffled},
          {"delta", r.delta},
          {"shuffle_seed", r.shuffle.seed},
          {"S", r.shuffle.patch_size}};
}

nlohmann::json to_json(const SsdSummary& s) {
  return {{"count_yes", s.count_yes},
          {"count_no", s.count_no},
          {"mean_delta_yes", s.mean_delta_yes},
          {"mean_delta_no", s.mean_delta_no},
          {"divergence", s.divergence}};
}

BinaryAnswer answer_from_tokens(const TokenSequence& tokens, const BackendDescriptor& d) {
  if (tokens.empty()) return BinaryAnswer::kUnparseable;
  if (tokens.front() == d.yes_id) return BinaryAnswer::kYes;
  if (tokens.front() == d.no_id) return BinaryAnswer::kNo;
  return BinaryAnswer::kUnparseable;
}

bool SweepResult::any_error() const {
  return std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.error.has_value(); });
}

SweepResult alpha_sweep(Backend& backend, const ProbeDataset& items, const std::vector<double>& alphas,
                        const DecodingConfig& fixed, std::size_t workers) {
  if (alphas.empty()) throw Error(ErrorKind::kInvalidArgument, "alpha grid is empty");
  if (items.empty()) throw Error(ErrorKind::kEmptyInput, "sweep dataset is empty");
  for (double a : alphas) {
    if (!(a >= 0.0)) throw Error(ErrorKind::kConfig, "alpha grid values must be >= 0");
  }
  fixed.validate();
  SweepResult result;
  result.parameter_name = "alpha";
  result.reference = alpha_reference_rows();
  result.baseline = regular_row(backend, items, fixed, workers);

  struct SharedView {
    ImageGrid negative;
    std::optional<ShuffleSpec> shuffle;
  };
  std::vector<SharedView> views(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    views[i].negative = build_negative_view(items[i].image, item_config(fixed, i), &views[i].shuffle);
  });

  result.rows.resize(alphas.size());
  for (std::size_t r = 0; r < alphas.size(); ++r) {
    result.rows[r].parameter = alphas[r];
    result.rows[r].outputs.resize(items.size());
  }
  const std::size_t cells = alphas.size() * items.size();
  parallel_for(cells, workers, [&](std::size_t cell) {
    const std::size_t r = cell / items.size();
    const std::size_t i = cell % items.size();
    DecodingConfig c = item_config(fixed, i);
    c.alpha = alphas[r];
    result.rows[r].outputs[i] = generate_with_negative(backend, items[i].image, views[i].negative, views[i].shuffle,
                                                       probe_tokens(backend, items[i]), c).tokens;
  });
  for (auto& row : result.rows) finish_row(row, items, backend.descriptor());
  return result;
}

SweepResult shuffle_size_sweep(Backend& backend, const ProbeDataset& items, const std::vector<std::size_t>& sizes,
                               const DecodingConfig& fixed, std::size_t workers) {
  if (sizes.empty()) throw Error(ErrorKind::kInvalidArgument, "shuffle size grid is empty");
  if (items.empty()) throw Error(ErrorKind::kEmptyInput, "sweep dataset is empty");
  fixed.validate();
  SweepResult result;
  result.parameter_name = "S";
  result.reference = shuffle_size_reference_rows();
  result.baseline = regular_row(backend, items, fixed, workers);

  result.rows.resize(sizes.size());
  for (std::size_t r = 0; r < sizes.size(); ++r) {
    auto& row = result.rows[r];
    row.parameter = static_cast<double>(sizes[r]);
    row.outputs.resize(items.size());
    for (const auto& item : items) {
      if (sizes[r] == 0 || item.image.height() % sizes[r] != 0 || item.image.width() % sizes[r] != 0) {
        row.error = Error(ErrorKind::kNonDivisibleDimensions,
                          "S=" + std::to_string(sizes[r]) + " does not divide item '" + item.id + "' (" +
                              std::to_string(item.image.height()) + "x" + std::to_string(item.image.width()) + ")")
                        .what();
        break;
      }
    }
  }
  const std::size_t cells = sizes.size() * items.size();
  parallel_for(cells, workers, [&](std::size_t cell) {
    const std::size_t r = cell / items.size();
    const std::size_t i = cell % items.size();
    if (result.rows[r].error) return;
    DecodingConfig c = item_config(fixed, i);
    c.shuffle_patch_size = sizes[r];
    result.rows[r].outputs[i] = generate(backend, items[i].image, probe_tokens(backend, items[i]), c).tokens;
  });
  for (auto& row : result.rows) {
    if (!row.error) finish_row(row, items, backend.descriptor());
  }
  return result;
}

std::vector<ReferenceRow> alpha_reference_rows() {
  return {{0.0, 94.74, 73.27, 82.63, 84.60}, {0.4, 94.55, 75.20, 83.77, 85.43},
          {0.8, 93.54, 76.20, 83.98, 85.47}, {1.2, 93.50, 76.67, 84.25, 85.67},
          {1.6, 93.00, 77.00, 84.25, 85.60}, {2.0, 92.68, 77.67, 84.51, 85.77}};
}

std::vector<ReferenceRow> shuffle_size_reference_rows() {
  return {{14, 93.46, 77.20, 84.56, 85.90}, {28, 93.04, 73.07, 81.85, 83.80}, {56, 93.23, 70.73, 80.44, 82.80}};
}

namespace {

nlohmann::json row_json(const SweepRow& row, const std::string& name) {
  nlohmann::json j = {{name, row.parameter}};
  if (row.error) {
    j["error"] = *row.error;
    return j;
  }
  j["pope"] = to_json(*row.score);
  j["negative_yes_rate"] = row.negative_yes_rate;
  j["positive_yes_rate"] = row.positive_yes_rate;
  return j;
}

}  // namespace

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row, r.parameter_name));
  nlohmann::json reference = nlohmann::json::array();
  for (const auto& ref : r.reference) {
    reference.push_back({{r.parameter_name, ref.parameter},
                         {"precision", ref.precision},
                         {"recall", ref.recall},
                         {"f1", ref.f1},
                         {"accuracy", ref.accuracy}});
  }
  return {{"parameter", r.parameter_name},
          {"baseline", row_json(r.baseline, "regular")},
          {"rows", rows},
          {"reference",
           {{"note", "published LLaVA-1.5 7B results on POPE COCO random, percent; documentation only, not asserted"},
            {"rows", reference}}}};
}

std::string format_table(const SweepResult& r) {
  std::ostringstream os;
  auto line = [&os](const std::string& p, const std::string& prec, const std::string& rec, const std::string& f1,
                    const std::string& acc, const std::string& neg) {
    os << std::left << std::setw(10) << p << std::right << std::setw(11) << prec << std::setw(11) << rec
       << std::setw(11) << f1 << std::setw(11) << acc << std::setw(14) << neg << '\n';
  };
  line(r.parameter_name, "Precision", "Recall", "F1", "Accuracy", "GT=no yes%");
  auto emit = [&](const std::string& label, const SweepRow& row) {
    if (row.error) {
      os << std::left << std::setw(10) << label << "  error: " << *row.error << '\n';
      return;
    }
    const auto& s = *row.score;
    line(label, format_number(100 * s.precision, 2), format_number(100 * s.recall, 2), format_number(100 * s.f1, 2),
         format_number(100 * s.accuracy, 2), format_number(100 * row.negative_yes_rate, 2));
  };
  emit("regular", r.baseline);
  for (const auto& row : r.rows) {
    std::ostringstream p;
    p << row.parameter;
    emit(p.str(), row);
  }
  if (!r.reference.empty()) {
    os << "\nreference (published LLaVA-1.5 7B, POPE COCO random; not asserted)\n";
    for (const auto& ref : r.reference) {
      std::ostringstream p;
      p << ref.parameter;
      line(p.str(), format_number(ref.precision, 2), format_number(ref.recall, 2), format_number(ref.f1, 2),
           format_number(ref.accuracy, 2), "-");
    }
  }
  return os.str();
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kLengthMismatch, "embeddings differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
  if (a == b) return 1.0;
  return dot / std::sqrt(na * nb);
}

namespace {

std::vector<double> checked_embedding(const Embedder& embedder, const ImageGrid& image, std::size_t expected) {
  std::vector<double> e;
  try {
    e = embedder(image);
  } catch (const std::exception& ex) {
    throw Error(ErrorKind::kEmbedderFailure, ex.what());
  }
  if (e.empty() || (expected != 0 && e.size() != expected)) {
    throw Error(ErrorKind::kEmbedderFailure, "embedder returned a vector of unexpected length");
  }
  for (double v : e) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kEmbedderFailure, "embedder returned a non-finite value");
  }
  return e;
}

std::size_t nearest_label(const std::vector<double>& e, const std::vector<LabelPrototype>& labels) {
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double sim = cosine_similarity(e, labels[k].embedding);
    if (sim > best_sim) {
      best_sim = sim;
      best = k;
    }
  }
  return best;
}

}  // namespace

std::vector<BopPoint> bop_probe(const Embedder& embedder, const std::vector<ImageGrid>& images,
                                const std::vector<std::size_t>& sizes, const std::vector<std::uint64_t>& seeds,
                                const std::vector<LabelPrototype>& labels) {
  if (images.empty() || sizes.empty() || seeds.empty()) {
    throw Error(ErrorKind::kEmptyInput, "bag-of-patches probe needs images, sizes and seeds");
  }
  std::vector<std::vector<double>> originals;
  for (const auto& img : images) originals.push_back(checked_embedding(embedder, img, 0));
  const std::size_t dim = originals.front().size();
  for (const auto& e : originals) {
    if (e.size() != dim) throw Error(ErrorKind::kEmbedderFailure, "embedder output length varies across images");
  }

  std::vector<BopPoint> curve;
  for (std::size_t s : sizes) {
    BopPoint point;
    point.patch_size = s;
    double total = 0.0;
    std::size_t retained = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::size_t original_label = labels.empty() ? 0 : nearest_label(originals[i], labels);
      for (std::uint64_t seed : seeds) {
        const auto shuffled = shuffle_patches(images[i], make_shuffle_spec(images[i], s, seed));
        const auto e = checked_embedding(embedder, shuffled, dim);
        total += cosine_similarity(originals[i], e);
        if (!labels.empty() && nearest_label(e, labels) == original_label) ++retained;
        ++point.samples;
      }
    }
    point.mean_cosine = total / static_cast<double>(point.samples);
    if (!labels.empty()) point.retrieval_retention = static_cast<double>(retained) / static_cast<double>(point.samples);
    curve.push_back(point);
  }
  return curve;
}

Embedder texture_signature_embedder(std::size_t patch_size, std::size_t bins) {
  return [patch_size, bins](const ImageGrid& image) { return texture_signature(image, patch_size, bins); };
}

Embedder boundary_aware_embedder(std::vector<std::size_t> scales) {
  return [scales = std::move(scales)](const ImageGrid& image) {
    std::vector<double> e;
    for (std::size_t s : scales) {
      if (s > 0 && image.height() % s == 0 && image.width() % s == 0) e.push_back(structural_coherence(image, s));
    }
    return e;
  };
}

nlohmann::json to_json(const std::vector<BopPoint>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : curve) {
    nlohmann::json j = {{"S", p.patch_size}, {"mean_cosine", p.mean_cosine}, {"samples", p.samples}};
    if (p.retrieval_retention) j["retrieval_retention"] = *p.retrieval_retention;
    arr.push_back(std::move(j));
  }
  return arr;
}

void from_json(const nlohmann::json& j, SyntheticDatasetOptions& o) {
  o.real_items = j.value("real_items", o.real_items);
  o.bait_items = j.value("bait_items", o.bait_items);
  o.image_side = j.value("image_side", o.image_side);
  o.seed = j.value("seed", o.seed);
  o.analysis_patch_size = j.value("analysis_patch_size", o.analysis_patch_size);
  o.texture_bins = j.value("texture_bins", o.texture_bins);
  o.texture_release = j.value("texture_release", o.texture_release);
  o.bait_texture_weight = j.value("bait_texture_weight", o.bait_texture_weight);
  o.pixel_noise = j.value("pixel_noise", o.pixel_noise);
}

void to_json(nlohmann::json& j, const SyntheticDatasetOptions& o) {
  j = {{"real_items", o.real_items},
       {"bait_items", o.bait_items},
       {"image_side", o.image_side},
       {"seed", o.seed},
       {"analysis_patch_size", o.analysis_patch_size},
       {"texture_bins", o.texture_bins},
       {"texture_release", o.texture_release},
       {"bait_texture_weight", o.bait_texture_weight},
       {"pixel_noise", o.pixel_noise}};
}

SyntheticDataset make_synthetic_dataset(const SyntheticDatasetOptions& o) {
  static const char* const kRealNames[] = {"dog", "car", "chair", "bottle"};
  static const double kRealAngles[] = {0.0, 45.0, 90.0, 135.0};
  static const char* const kBaitNames[] = {"cat", "pillow", "rug", "towel"};
  const std::size_t side = o.image_side;

  SyntheticDataset ds;
  ds.scene.analysis_patch_size = o.analysis_patch_size;
  ds.scene.texture_bins = o.texture_bins;
  ds.scene.texture_release = o.texture_release;

  for (std::size_t k = 0; k < 4; ++k) {
    SyntheticObject obj;
    obj.name = kRealNames[k];
    obj.structural_weight = 1.0;
    obj.texture_weight = 0.0;
    obj.ground_truth_present = true;
    obj.template_source = {{"gradient", {{"height", side}, {"width", side}, {"angle_deg", kRealAngles[k]}}}};
    obj.structural_template = make_gradient(side, side, kRealAngles[k]);
    ds.scene.objects.push_back(std::move(obj));
  }
  // Bait signatures are the patch-mean statistics of full-range ramps, so
  // any gradient scene carries most of their texture evidence.
  for (std::size_t k = 0; k < 4; ++k) {
    SyntheticObject obj;
    obj.name = kBaitNames[k];
    obj.structural_weight = 0.0;
    obj.texture_weight = o.bait_texture_weight;
    obj.ground_truth_present = false;
    obj.texture_signature =
        texture_signature(make_gradient(side, side, 30.0 * static_cast<double>(k)), o.analysis_patch_size, o.texture_bins);
    ds.scene.objects.push_back(std::move(obj));
  }
  ds.scene.validate();

  Rng rng(o.seed);
  auto noisy = [&](ImageGrid img) {
    return o.pixel_noise > 0.0 ? gaussian_noise_view(img, o.pixel_noise, rng()) : img;
  };
  for (std::size_t i = 0; i < o.real_items; ++i) {
    const std::size_t k = i % 4;
    const double angle = kRealAngles[k] + 10.0 * (uniform_unit(rng) - 0.5);
    ProbeItem item;
    item.id = "real-" + std::to_string(i);
    item.object = kRealNames[k];
    item.ground_truth = true;
    item.image = noisy(make_gradient(side, side, angle));
    ds.items.push_back(std::move(item));
  }
  for (std::size_t i = 0; i < o.bait_items; ++i) {
    const std::size_t k = i % 4;
    const double angle = 360.0 * uniform_unit(rng);
    const double low = 40.0 * uniform_unit(rng);
    const double high = 215.0 + 40.0 * uniform_unit(rng);
    ProbeItem item;
    item.id = "bait-" + std::to_string(i);
    item.object = kBaitNames[k];
    item.ground_truth = false;
    item.image = noisy(make_gradient(side, side, angle, low, high));
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace sdcd
