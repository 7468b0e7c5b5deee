#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "docspot/error.hpp"
#include "docspot/eval.hpp"
#include "docspot/index.hpp"
#include "docspot/proposals.hpp"
#include "docspot/siamese.hpp"
#include "docspot/synth.hpp"

namespace py = pybind11;
using namespace docspot;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const U8Array& a) {
  if (a.ndim() != 2) throw InputError("expected a 2-d uint8 array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return GrayImage(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array to_array(const GrayImage& img) {
  U8Array out({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

PageSet to_pages(const py::dict& pages) {
  PageSet out;
  for (const auto& [k, v] : pages) out.emplace(k.cast<std::string>(), to_image(v.cast<U8Array>()));
  return out;
}

py::dict from_pages(const PageSet& pages) {
  py::dict out;
  for (const auto& [id, img] : pages) out[py::str(id)] = to_array(img);
  return out;
}

// Trains on labelled patches; returns the model and per-epoch losses.
std::pair<SiameseModel, std::vector<double>> train_patches(const std::vector<std::string>& labels,
                                                           const std::vector<U8Array>& patches,
                                                           const SiameseModel& init, const TrainConfig& cfg) {
  if (labels.size() != patches.size()) throw InputError("labels and patches differ in length");
  std::vector<LabeledPatch> data;
  for (std::size_t i = 0; i < labels.size(); ++i) data.push_back({labels[i], to_image(patches[i])});
  const auto split = make_pairs(data, cfg);
  const auto pairs = materialize(data, split.train);
  py::gil_scoped_release release;
  auto r = train(init, pairs, cfg);
  return {std::move(r.model), std::move(r.epoch_loss)};
}

}  // namespace

PYBIND11_MODULE(_docspot, m) {
  m.doc() = "Pattern spotting in document images: proposals, siamese embeddings, feature index and evaluation.";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);
  py::register_exception<CorpusError>(m, "CorpusError", PyExc_RuntimeError);
  py::register_exception<CountError>(m, "CountError", PyExc_RuntimeError);

  py::class_<BBox>(m, "BBox")
      .def(py::init<std::int64_t, std::int64_t, std::int64_t, std::int64_t>(), py::arg("x"), py::arg("y"),
           py::arg("w"), py::arg("h"))
      .def_property_readonly("x", &BBox::x)
      .def_property_readonly("y", &BBox::y)
      .def_property_readonly("w", &BBox::w)
      .def_property_readonly("h", &BBox::h)
      .def_property_readonly("area", &BBox::area)
      .def_property_readonly("aspect", &BBox::aspect)
      .def("united", &BBox::united)
      .def(py::self == py::self)
      .def("__iter__", [](const BBox& b) { return py::iter(py::make_tuple(b.x(), b.y(), b.w(), b.h())); })
      .def("__repr__", [](const BBox& b) {
        return "BBox(" + std::to_string(b.x()) + ", " + std::to_string(b.y()) + ", " + std::to_string(b.w()) +
               ", " + std::to_string(b.h()) + ")";
      });

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("intersection_area", &intersection_area);
  m.def("aspect_gate", [](const BBox& q, const BBox& c, double tol) { return aspect_gate(q, c, AspectGate(tol)); },
        py::arg("query"), py::arg("candidate"), py::arg("tolerance") = 0.25);

  m.def("read_pgm", [](const std::filesystem::path& p) { return to_array(read_pgm(p)); });
  m.def("write_pgm", [](const U8Array& a, const std::filesystem::path& p) { write_pgm(to_image(a), p); });

  py::class_<SimilarityWeights>(m, "SimilarityWeights")
      .def(py::init<>())
      .def_readwrite("color", &SimilarityWeights::color)
      .def_readwrite("texture", &SimilarityWeights::texture)
      .def_readwrite("size", &SimilarityWeights::size)
      .def_readwrite("fill", &SimilarityWeights::fill);

  py::class_<ProposalParams>(m, "ProposalParams")
      .def(py::init<>())
      .def_readwrite("block", &ProposalParams::block)
      .def_readwrite("offset", &ProposalParams::offset)
      .def_readwrite("scales", &ProposalParams::scales)
      .def_readwrite("min_region_px", &ProposalParams::min_region_px)
      .def_readwrite("max_proposals", &ProposalParams::max_proposals)
      .def_readwrite("weights", &ProposalParams::weights)
      .def("validate", &ProposalParams::validate);

  m.def(
      "propose",
      [](const U8Array& page, const ProposalParams& params) {
        const GrayImage img = to_image(page);
        py::gil_scoped_release release;
        std::vector<BBox> out;
        for (const auto& c : propose(img, params)) out.push_back(c.bbox);
        return out;
      },
      py::arg("page"), py::arg("params") = ProposalParams{});

  py::class_<SiameseModel>(m, "SiameseModel")
      .def_property_readonly("embed_dim", &SiameseModel::embed_dim)
      .def_property_readonly("input_size", [](const SiameseModel& s) { return s.input().width; })
      .def_property_readonly("param_count", [](const SiameseModel& s) { return s.weights.size(); })
      .def_readwrite("head_w", &SiameseModel::head_w)
      .def_readwrite("head_b", &SiameseModel::head_b)
      .def(py::self == py::self)
      .def("save", [](const SiameseModel& s, const std::filesystem::path& p) { save_model(s, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
      .def("to_bytes", [](const SiameseModel& s) {
        const auto b = encode_model(s);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return decode_model({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
      });

  m.def(
      "desk_model",
      [](std::uint32_t embed_dim, std::uint32_t input_size, std::uint64_t seed) {
        return init_model(desk_architecture(embed_dim, input_size), seed);
      },
      py::arg("embed_dim") = 128, py::arg("input_size") = 32, py::arg("seed") = 1);

  m.def("embed", [](const SiameseModel& s, const U8Array& patch) { return embed_resized(s, to_image(patch)); });

  m.def(
      "pair_distance",
      [](const SiameseModel& s, const U8Array& a, const U8Array& b) {
        const int w = static_cast<int>(s.input().width), h = static_cast<int>(s.input().height);
        const auto r = pair_distance(s, resize_bilinear(to_image(a), w, h), resize_bilinear(to_image(b), w, h));
        return py::make_tuple(r.distance, r.prob);
      },
      "Returns (embedding distance, probability the pair is similar).");

  m.def("pair_loss", &pair_loss, py::arg("logit"), py::arg("label"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr0", &TrainConfig::lr0)
      .def_readwrite("decay", &TrainConfig::decay)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("neg_ratio", &TrainConfig::neg_ratio)
      .def_readwrite("split", &TrainConfig::split)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("verify_gradients", &TrainConfig::verify_gradients);

  m.def("train", &train_patches, py::arg("labels"), py::arg("patches"), py::arg("model"), py::arg("config"),
        "Pairs up the labelled patches and trains the model; returns (model, epoch_losses).");

  py::class_<FeatureStore>(m, "FeatureStore")
      .def(py::init<std::uint32_t>(), py::arg("dim"))
      .def(
          "add",
          [](FeatureStore& s, const std::string& doc, const BBox& b, const std::vector<float>& f) { s.add(doc, b, f); },
          py::arg("doc_id"), py::arg("bbox"), py::arg("feature"))
      .def_property_readonly("dim", &FeatureStore::dim)
      .def("__len__", &FeatureStore::size)
      .def("doc_id", &FeatureStore::doc_id)
      .def("bbox", &FeatureStore::bbox)
      .def("feature", [](const FeatureStore& s, std::size_t i) {
        const auto f = s.feature(i);
        return std::vector<float>(f.begin(), f.end());
      })
      .def(py::self == py::self)
      .def("save", [](const FeatureStore& s, const std::filesystem::path& p) { save_store(s, p); })
      .def_static("load", [](const std::filesystem::path& p) { return load_store(p); });

  m.def(
      "index_corpus",
      [](const py::dict& pages, const ProposalParams& params, const SiameseModel& model, unsigned threads) {
        const PageSet ps = to_pages(pages);
        py::gil_scoped_release release;
        return index_corpus(ps, params, model, threads).store;
      },
      py::arg("pages"), py::arg("params"), py::arg("model"), py::arg("threads") = 1);

  py::enum_<SearchMode>(m, "SearchMode")
      .value("Retrieval", SearchMode::Retrieval)
      .value("Spotting", SearchMode::Spotting);

  py::class_<RankedHit>(m, "RankedHit")
      .def_readonly("rank", &RankedHit::rank)
      .def_readonly("doc_id", &RankedHit::doc_id)
      .def_readonly("bbox", &RankedHit::bbox)
      .def_readonly("distance", &RankedHit::distance)
      .def_readonly("record", &RankedHit::record);

  m.def(
      "search",
      [](const FeatureStore& store, const SiameseModel& model, const U8Array& patch, const BBox& box,
         std::size_t topk, SearchMode mode, std::optional<double> gate, std::optional<std::string> exclude_doc) {
        QueryRequest req;
        req.query_patch = to_image(patch);
        req.query_box = box;
        req.topk = topk;
        req.mode = mode;
        req.gate = gate ? std::optional<AspectGate>(AspectGate(*gate)) : std::nullopt;
        req.exclude_doc = std::move(exclude_doc);
        return search(store, req, model);
      },
      py::arg("store"), py::arg("model"), py::arg("patch"), py::arg("box"), py::arg("topk") = 10,
      py::arg("mode") = SearchMode::Retrieval, py::arg("gate") = 0.25, py::arg("exclude_doc") = py::none());

  py::class_<GtEntry>(m, "GtEntry")
      .def(py::init([](std::string d, std::string c, BBox b) { return GtEntry{std::move(d), std::move(c), b}; }))
      .def_readonly("doc_id", &GtEntry::doc_id)
      .def_readonly("category", &GtEntry::category)
      .def_readonly("bbox", &GtEntry::bbox);

  py::class_<GroundTruth>(m, "GroundTruth")
      .def(py::init<std::vector<GtEntry>>())
      .def_property_readonly("entries", &GroundTruth::entries)
      .def("__len__", &GroundTruth::size)
      .def("count", &GroundTruth::count)
      .def_static("read", &read_ground_truth)
      .def("write", [](const GroundTruth& g, const std::filesystem::path& p) { write_ground_truth(g, p); });

  m.def("average_precision",
        [](const std::vector<bool>& rel, std::size_t r) {
          const auto buf = std::make_unique<bool[]>(rel.size());
          std::copy(rel.begin(), rel.end(), buf.get());
          return average_precision({buf.get(), rel.size()}, r);
        },
        py::arg("relevance"), py::arg("total_relevant"));

  m.def(
      "evaluate",
      [](const FeatureStore& store, const SiameseModel& model, const GroundTruth& gt, const py::dict& pages,
         std::vector<std::size_t> topk, std::vector<double> ious, SearchMode mode, std::optional<double> gate,
         unsigned threads) {
        EvalConfig cfg;
        cfg.topk_set = std::move(topk);
        cfg.iou_grid = std::move(ious);
        cfg.mode = mode;
        cfg.gate = gate ? std::optional<AspectGate>(AspectGate(*gate)) : std::nullopt;
        cfg.threads = threads;
        const PageSet ps = to_pages(pages);
        const auto queries = make_queries(gt);
        EvalReport rep;
        {
          py::gil_scoped_release release;
          rep = evaluate(store, model, gt, queries, ps, cfg);
        }
        py::dict out;
        for (const auto& row : rep.summary) {
          if (row.iou) out[py::make_tuple(row.topk, *row.iou)] = row.map;
          else out[py::int_(row.topk)] = row.map;
        }
        return py::make_tuple(out, rep.warnings);
      },
      py::arg("store"), py::arg("model"), py::arg("gt"), py::arg("pages"),
      py::arg("topk") = std::vector<std::size_t>{5, 10, 25, 50, 100},
      py::arg("ious") = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7},
      py::arg("mode") = SearchMode::Retrieval, py::arg("gate") = 0.25, py::arg("threads") = 1,
      "Returns ({topk or (topk, iou): mAP}, warnings).");

  m.def(
      "synth_corpus",
      [](int pages, int plants, std::uint64_t seed) {
        synth::PageParams pp;
        pp.pages = pages;
        pp.plants_per_page = plants;
        pp.seed = seed;
        auto c = synth::make_corpus(pp);
        return py::make_tuple(from_pages(c.pages), c.gt);
      },
      py::arg("pages") = 20, py::arg("plants") = 3, py::arg("seed") = 1, "Returns (pages, ground truth).");

  m.def(
      "stamp_dataset",
      [](int per_category, int size, std::uint64_t seed) {
        std::vector<std::string> labels;
        std::vector<U8Array> patches;
        for (const auto& d : synth::stamp_dataset(per_category, size, seed)) {
          labels.push_back(d.label);
          patches.push_back(to_array(d.patch));
        }
        return py::make_tuple(labels, patches);
      },
      py::arg("per_category"), py::arg("size") = 32, py::arg("seed") = 1, "Returns (labels, patches).");
}
