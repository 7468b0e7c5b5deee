#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "config.hpp"
#include "docspot/error.hpp"
#include "docspot/eval.hpp"
#include "docspot/index.hpp"
#include "docspot/rng.hpp"
#include "docspot/synth.hpp"
#include "docspot/tsv.hpp"

namespace docspot::cli {

namespace {

void require(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what + " (set it with --set " + what + "=...)");
}

void require_out(const RunConfig& c) {
  if (c.out.empty()) throw ConfigError("missing --out");
}

std::vector<DocumentRef> list_pages(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<DocumentRef> docs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") docs.push_back({e.path().stem().string(), e.path()});
  std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  if (docs.empty()) throw CorpusError("no .pgm pages in " + dir.string());
  return docs;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- synth ----

int cmd_synth(const RunConfig& c, std::ostream& out) {
  require_out(c);
  synth::PageParams pp;
  pp.pages = c.pages;
  pp.plants_per_page = c.plants;
  pp.text_lines = c.text_lines;
  pp.seed = c.seed;
  const auto corpus = synth::make_corpus(pp);
  synth::write_corpus(corpus, c.out);

  std::size_t patches = 0;
  if (c.per_category > 0) {
    const auto dir = c.out / "train";
    std::filesystem::create_directories(dir);
    const auto data = synth::stamp_dataset(c.per_category, 32, c.seed + 1);
    std::string labels;
    for (std::size_t i = 0; i < data.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "s%05zu.pgm", i);
      write_pgm(data[i].patch, dir / name);
      labels += std::string(name) + '\t' + data[i].label + '\n';
    }
    write_text(dir / "labels.tsv", labels);
    patches = data.size();
  }
  out << "wrote " << corpus.pages.size() << " pages, " << corpus.gt.size() << " planted instances, "
      << patches << " training patches to " << c.out.string() << '\n';
  return 0;
}

// ---- propose ----

int cmd_propose(const RunConfig& c, std::ostream& out) {
  require(c.corpus, "corpus");
  require_out(c);
  std::vector<Candidate> all;
  const auto docs = list_pages(c.corpus);
  for (const auto& d : docs) {
    const auto cands = propose(read_pgm(d.path), c.proposal, d.doc_id);
    all.insert(all.end(), cands.begin(), cands.end());
  }
  write_proposals(all, c.out);
  out << all.size() << " proposals over " << docs.size() << " pages\n";
  return 0;
}

// ---- train ----

std::vector<LabeledPatch> read_patches(const std::filesystem::path& dir, const TensorShape& in) {
  std::ifstream f(dir / "labels.tsv");
  if (!f) throw IoError("cannot open " + (dir / "labels.tsv").string());
  std::vector<LabeledPatch> data;
  std::string line;
  while (std::getline(f, line)) {
    if (tsv::skippable(line)) continue;
    const auto fields = tsv::split(line);
    if (fields.size() != 2) throw FormatError("labels.tsv lines need file<TAB>label");
    GrayImage img = read_pgm(dir / std::string(fields[0]));
    if (img.width() != static_cast<int>(in.width) || img.height() != static_cast<int>(in.height))
      img = resize_bilinear(img, static_cast<int>(in.width), static_cast<int>(in.height));
    data.push_back({std::string(fields[1]), std::move(img)});
  }
  return data;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  require_out(c);
  if (c.train_dir.empty()) require(c.corpus, "corpus");
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  tc.validate();
  const SiameseModel init = init_model(desk_architecture(c.embed_dim), c.seed);
  const auto data = read_patches(c.train_path(), init.input());
  const auto split = make_pairs(data, tc);
  const auto train_pairs = materialize(data, split.train);
  const auto result = train(init, train_pairs, tc);

  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    out << "epoch " << e + 1 << " loss " << fixed(result.epoch_loss[e], 6) << '\n';
  std::size_t correct = 0;
  for (const auto& p : materialize(data, split.test)) {
    const auto r = pair_distance(result.model, p.a, p.b);
    correct += ((r.prob > 0.5) == (p.label == 1)) ? 1 : 0;
  }
  const double acc = split.test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(split.test.size());
  out << "pairs train " << split.train.size() << " test " << split.test.size() << ", held-out accuracy "
      << fixed(acc, 4) << ", seed " << c.seed << '\n';
  save_model(result.model, c.out);
  return 0;
}

// ---- index ----

int cmd_index(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.corpus, "corpus");
  require(c.model, "model");
  require_out(c);
  const SiameseModel model = load_model(c.model);
  const auto res = index_corpus(list_pages(c.corpus), c.proposal, model, c.threads);
  for (const auto& e : res.errors) err << "warning: skipped " << e.doc_id << ": " << e.message << '\n';
  save_store(res.store, c.out);
  out << res.store.size() << " records of dim " << res.store.dim() << '\n';
  return 0;
}

// ---- query ----

int cmd_query(const RunConfig& c, std::ostream& out) {
  require(c.store, "store");
  require(c.model, "model");
  require(c.query_image, "query_image");
  const FeatureStore store = load_store(c.store);
  const SiameseModel model = load_model(c.model);
  if (store.dim() != model.embed_dim()) {
    throw ConfigError("dimension mismatch: store dim " + std::to_string(store.dim()) +
                      ", model embed dim " + std::to_string(model.embed_dim()));
  }
  const GrayImage img = read_pgm(c.query_image);
  QueryRequest req;
  req.query_box = c.query_box.value_or(img.bounds());
  req.query_patch = c.query_box ? crop(img, *c.query_box) : img;
  req.topk = c.topk;
  req.mode = c.mode;
  req.gate = c.aspect_gate();
  for (const auto& h : search(store, req, model, c.threads)) {
    out << h.rank << '\t' << h.doc_id << '\t' << h.bbox.x() << '\t' << h.bbox.y() << '\t' << h.bbox.w()
        << '\t' << h.bbox.h() << '\t' << fixed(h.distance, 6) << '\n';
  }
  return 0;
}

// ---- eval ----

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.store, "store");
  require(c.model, "model");
  require(c.corpus, "corpus");
  const FeatureStore store = load_store(c.store);
  const SiameseModel model = load_model(c.model);
  const GroundTruth gt = read_ground_truth(c.gt_path());
  const PageSet pages = synth::read_pages(c.corpus);
  EvalConfig ec;
  ec.topk_set = c.topk_set;
  ec.iou_grid = c.iou_grid;
  ec.mode = c.mode;
  ec.gate = c.aspect_gate();
  ec.threads = c.threads;
  const auto queries = make_queries(gt);
  const EvalReport rep = evaluate(store, model, gt, queries, pages, ec);

  const std::string head = "# seed " + std::to_string(c.seed) + '\n';
  const std::string table = head + format_report(rep);
  out << table;
  err << "mean query latency " << fixed(rep.mean_query_ms, 3) << " ms\n";
  if (!c.out.empty()) {
    write_text(c.out, head + report_tsv(rep));
    auto txt = c.out;
    txt.replace_extension(".txt");
    if (txt != c.out) write_text(txt, table);
  }
  return 0;
}

// ---- bench ----

int cmd_bench(const RunConfig& c, std::ostream& out) {
  Rng rng(c.seed);
  std::vector<QueryRequest> queries;
  for (std::size_t q = 0; q < std::max<std::size_t>(1, c.bench_queries); ++q) {
    const auto [w, h] = synth::stamp_size(q, rng);
    QueryRequest req;
    req.query_patch = synth::render_stamp(q, w, h, synth::PageParams{}, rng);
    req.query_box = req.query_patch.bounds();
    req.topk = c.topk;
    req.mode = c.mode;
    req.gate.reset();
    queries.push_back(std::move(req));
  }

  out << "dim\trecords\tcandidates_per_sec\tquery_ms\n";
  for (std::uint32_t dim : c.bench_dims) {
    const SiameseModel model = init_model(desk_architecture(dim), c.seed);
    FeatureStore store(model.embed_dim());
    store.reserve(c.bench_records);
    Rng frng(c.seed + dim);
    std::vector<float> f(model.embed_dim());
    for (std::size_t i = 0; i < c.bench_records; ++i) {
      for (auto& v : f) v = static_cast<float>(frng.uniform(-1.0, 1.0));
      store.add("r" + std::to_string(i % 1000), BBox(0, 0, 32, 32), f);
    }
    const std::vector<BenchTarget> target{{dim == 0 ? "full" : std::to_string(dim), &store, &model}};
    const auto rows = bench_throughput(target, queries, c.bench_repeats);
    const auto& r = rows.front();
    out << r.label << '\t' << r.records << '\t' << fixed(r.candidates_per_second, 0) << '\t'
        << fixed(r.query_ms, 3) << '\n';
  }

  if (!c.store.empty() && !c.model.empty() && !c.corpus.empty()) {
    const FeatureStore store = load_store(c.store);
    const SiameseModel model = load_model(c.model);
    const PageSet pages = synth::read_pages(c.corpus);
    const GroundTruth gt = read_ground_truth(c.gt_path());
    std::vector<QueryRequest> qs;
    for (const auto& q : make_queries(gt)) {
      if (qs.size() == c.bench_queries) break;
      QueryRequest req;
      req.query_patch = crop(pages.at(q.doc_id), q.bbox);
      req.query_box = q.bbox;
      req.topk = c.topk;
      req.mode = c.mode;
      req.gate = c.aspect_gate();
      qs.push_back(std::move(req));
    }
    const PathBench b = bench_paths(store, qs, model, pages);
    out << "path\tqueries\tcandidates\tseconds\n"
        << "extract_once\t" << b.queries << '\t' << b.candidates << '\t' << fixed(b.extract_once_seconds, 4) << '\n'
        << "pair_head\t" << b.queries << '\t' << b.candidates << '\t' << fixed(b.pair_head_seconds, 4) << '\n'
        << "identical_rankings\t" << (b.identical ? "yes" : "no") << '\n';
  }
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "configuration error";
  if (dynamic_cast<const FormatError*>(&e)) return "format error";
  if (dynamic_cast<const IoError*>(&e)) return "I/O error";
  if (dynamic_cast<const CorpusError*>(&e)) return "corpus error";
  if (dynamic_cast<const CountError*>(&e)) return "count error";
  if (dynamic_cast<const GradientCheckError*>(&e)) return "gradient check error";
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const ParameterError*>(&e)) return "parameter error";
  if (dynamic_cast<const InputError*>(&e)) return "input error";
  return "error";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Document pattern retrieval and spotting with a Siamese embedding", "docspot"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_path;

  using Handler = std::function<int(const RunConfig&)>;
  std::map<CLI::App*, Handler> handlers;
  auto add = [&](const char* name, const char* help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--seed", seed, "seed for every stochastic step");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--out", out_path, "output path");
    sub->add_option("-s,--set", sets, "override one config key (key=value)");
    handlers[sub] = std::move(h);
  };
  add("synth", "write a synthetic corpus, its ground truth and training stamps",
      [&](const RunConfig& c) { return cmd_synth(c, out); });
  add("propose", "dump candidate boxes for every page",
      [&](const RunConfig& c) { return cmd_propose(c, out); });
  add("train", "train the Siamese encoder on labelled patches",
      [&](const RunConfig& c) { return cmd_train(c, out); });
  add("index", "embed every candidate of a corpus into a feature store",
      [&](const RunConfig& c) { return cmd_index(c, out, err); });
  add("query", "rank stored candidates against one query image",
      [&](const RunConfig& c) { return cmd_query(c, out); });
  add("eval", "retrieval or spotting evaluation over all ground-truth queries",
      [&](const RunConfig& c) { return cmd_eval(c, out, err); });
  add("bench", "distance throughput per dimension and path timing",
      [&](const RunConfig& c) { return cmd_bench(c, out); });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) load_config(cfg, config_path);
    for (const auto& s : sets) {
      const auto [k, v] = split_assignment(s);
      apply(cfg, k, v);
    }
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!out_path.empty()) cfg.out = out_path;
    for (const auto& [sub, handler] : handlers)
      if (sub->parsed()) return handler(cfg);
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << error_kind(e) << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace docspot::cli
