#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sdcd/analysis.hpp"
#include "sdcd/decoding.hpp"
#include "sdcd/error.hpp"
#include "sdcd/metrics.hpp"
#include "sdcd/synthetic_backend.hpp"
#include "sdcd/view_transform.hpp"

namespace py = pybind11;
using namespace sdcd;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// HxW or HxWxC uint8 array -> ImageGrid
ImageGrid to_grid(const U8Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be HxW or HxWxC");
  const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  const auto c = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  if (c != 1 && c != 3) throw py::value_error("image must have 1 or 3 channels");
  return ImageGrid(h, w, c, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const ImageGrid& g) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(g.height()), static_cast<py::ssize_t>(g.width())};
  if (g.channels() == 3) shape.push_back(3);
  U8Array out(shape);
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json to_nlohmann(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

DecodingConfig config_from(const py::object& overrides) {
  DecodingConfig c;
  if (!overrides.is_none()) merge_config(to_nlohmann(overrides), c);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Structure-disrupted contrastive decoding core";

  static py::exception<Error> sdcd_error(m, "SdcdError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = sdcd_error;
      PyErr_SetObject(err.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
    }
  });

  m.def("make_permutation", &make_permutation, py::arg("n"), py::arg("seed"));

  m.def(
      "shuffle_patches",
      [](const U8Array& image, std::size_t patch_size, std::uint64_t seed) {
        const auto grid = to_grid(image);
        const auto spec = make_shuffle_spec(grid, patch_size, seed);
        return py::make_tuple(to_array(shuffle_patches(grid, spec)), spec.permutation);
      },
      py::arg("image"), py::arg("patch_size"), py::arg("seed"),
      "Returns (shuffled image, permutation); output patch i is input patch permutation[i].");

  m.def(
      "unshuffle_patches",
      [](const U8Array& image, std::size_t patch_size, const Permutation& permutation) {
        ShuffleSpec spec{patch_size, 0, invert(permutation)};
        return to_array(shuffle_patches(to_grid(image), spec));
      },
      py::arg("image"), py::arg("patch_size"), py::arg("permutation"));

  m.def(
      "calibrate",
      [](const std::vector<double>& a, const std::vector<double>& b, double alpha) {
        return sdcd_calibrate(a, b, alpha);
      },
      py::arg("logits_original"), py::arg("logits_negative"), py::arg("alpha"));
  m.def(
      "softmax", [](const std::vector<double>& l, double t) { return softmax(l, t); }, py::arg("logits"),
      py::arg("temperature") = 1.0);
  m.def(
      "plausibility_mask", [](const std::vector<double>& l, double beta) { return plausibility_mask(l, beta); },
      py::arg("logits_original"), py::arg("beta"));

  m.def(
      "parse_binary_answer", [](const std::string& text) { return std::string(to_string(parse_binary_answer(text))); },
      py::arg("text"));

  m.def(
      "pope_score",
      [](const std::vector<std::pair<bool, std::string>>& rows) {
        std::vector<PopePrediction> preds;
        for (const auto& [gt, answer] : rows) preds.push_back({PopeItem{"", "", "", gt, PopeStratum::kRandom}, parse_binary_answer(answer)});
        return from_json(to_json(pope_score(preds)));
      },
      py::arg("rows"), "rows: (ground_truth, answer text) pairs");

  m.def(
      "chair_score",
      [](const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
         const std::map<std::string, std::vector<std::string>>& synonyms) {
        SynonymMap map;
        for (const auto& [canonical, forms] : synonyms) map.add(canonical, forms);
        std::vector<CaptionResult> results;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          ChairAnnotation a{std::to_string(i), {}};
          for (const auto& o : rows[i].second) a.objects.insert(o);
          results.push_back({rows[i].first, a});
        }
        return from_json(to_json(chair_score(results, map)));
      },
      py::arg("rows"), py::arg("synonyms"), "rows: (caption, ground-truth objects) pairs");

  py::class_<SyntheticBackend>(m, "SyntheticBackend")
      .def(py::init([](const py::object& scene) { return SyntheticBackend(scene_from_json(to_nlohmann(scene))); }),
           py::arg("scene"))
      .def("tokenize", [](const SyntheticBackend& b, const std::string& t) { return b.tokenize(t); })
      .def("render", [](const SyntheticBackend& b, const TokenSequence& t) { return b.render(t); })
      .def(
          "generate",
          [](SyntheticBackend& b, const U8Array& image, const std::string& prompt, const py::object& config,
             bool contrastive) {
            const auto c = config_from(config);
            const auto grid = to_grid(image);
            const auto tokens = b.tokenize(prompt);
            const auto r = contrastive ? generate(b, grid, tokens, c) : regular_generate(b, grid, tokens, c);
            return py::make_tuple(r.tokens, b.render(r.tokens));
          },
          py::arg("image"), py::arg("prompt"), py::arg("config") = py::none(), py::arg("contrastive") = true,
          "Returns (token ids, rendered text).");

  m.def(
      "synthetic_dataset",
      [](const py::object& options) {
        SyntheticDatasetOptions o;
        if (!options.is_none()) sdcd::from_json(to_nlohmann(options), o);
        const auto ds = make_synthetic_dataset(o);
        py::list items;
        for (const auto& item : ds.items) {
          py::dict d;
          d["id"] = item.id;
          d["object"] = item.object;
          d["ground_truth"] = item.ground_truth;
          d["image"] = to_array(item.image);
          items.append(d);
        }
        return py::make_tuple(from_json(scene_to_json(ds.scene)), items);
      },
      py::arg("options") = py::none(), "Returns (scene dict, list of items).");

  m.def("probe_prompt", [](const std::string& object) { return probe_prompt(object); }, py::arg("object"));
  m.attr("CAPTION_PROMPT") = std::string(kCaptionPrompt);
}
