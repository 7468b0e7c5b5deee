#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "docspot/binio.hpp"
#include "docspot/error.hpp"
#include "docspot/synth.hpp"
#include "../support/oracles.hpp"

using namespace docspot;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "docspot_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  const auto bytes = binio::read_file(p);
  return {bytes.begin(), bytes.end()};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("synthetic corpus postconditions") {
  synth::PageParams pp;
  pp.seed = 77;
  const auto a = synth::make_corpus(pp);
  CHECK(a.pages.size() == 20);
  std::map<std::string, int> per_page;
  for (const auto& e : a.gt.entries()) {
    const GrayImage& page = a.pages.at(e.doc_id);
    CHECK(e.bbox.right() <= page.width());
    CHECK(e.bbox.bottom() <= page.height());
    ++per_page[e.doc_id];
  }
  for (const auto& [id, n] : per_page) CHECK((n >= 1 && n <= 3));
  // Pairwise-disjoint stamps on each page.
  const auto& es = a.gt.entries();
  for (std::size_t i = 0; i < es.size(); ++i)
    for (std::size_t j = i + 1; j < es.size(); ++j)
      if (es[i].doc_id == es[j].doc_id) CHECK(intersection_area(es[i].bbox, es[j].bbox) == 0);

  const auto b = synth::make_corpus(pp);
  CHECK(a.pages == b.pages);
  CHECK(a.gt == b.gt);
  pp.seed = 78;
  CHECK_FALSE(synth::make_corpus(pp).pages == a.pages);

  // Every planted stamp contrasts strongly with the paper around it.
  const auto& e = es.front();
  const GrayImage& page = a.pages.at(e.doc_id);
  CHECK(page.at(static_cast<int>(e.bbox.x()), static_cast<int>(e.bbox.y())) < 80);

  synth::PageParams bad;
  bad.pages = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("stamp dataset covers every category") {
  const auto data = synth::stamp_dataset(3, 32, 5);
  CHECK(data.size() == 3 * synth::category_names().size());
  for (const auto& d : data) {
    CHECK(d.patch.width() == 32);
    CHECK(d.patch.height() == 32);
  }
  CHECK(synth::stamp_dataset(3, 32, 5)[7].patch == data[7].patch);
}

TEST_CASE("config file parsing and overrides") {
  const auto dir = fresh_dir("config");
  std::ofstream(dir / "run.cfg") << "# comment\nscales = 30, 60\nweights=1,0,1,0\n"
                                    "topk = 5,10\nmode = spotting\ngate = off\nseed = 9  # trailing\n";
  cli::RunConfig c;
  cli::load_config(c, dir / "run.cfg");
  CHECK(c.proposal.scales == std::vector<double>{30, 60});
  CHECK(c.proposal.weights.texture == 0.0);
  CHECK(c.topk_set == std::vector<std::size_t>{5, 10});
  CHECK(c.topk == 5);
  CHECK(c.mode == SearchMode::Spotting);
  CHECK_FALSE(c.aspect_gate().has_value());
  CHECK(c.seed == 9);

  std::ofstream(dir / "bad.cfg") << "epochs = many\n";
  CHECK_THROWS_AS(cli::load_config(c, dir / "bad.cfg"), ConfigError);
  std::ofstream(dir / "unknown.cfg") << "colour = red\n";
  CHECK_THROWS_AS(cli::load_config(c, dir / "unknown.cfg"), ConfigError);
  CHECK_THROWS_AS(cli::split_assignment("novalue"), ConfigError);
}

TEST_CASE("synth command: minimal corpus and byte-identical reruns") {
  const auto one = fresh_dir("synth_one");
  const Run r = invoke({"synth", "--out", one.string(), "-s", "pages=1", "-s", "plants=1", "-s", "per_category=0"});
  REQUIRE(r.status == 0);
  std::size_t pgms = 0;
  for (const auto& e : fs::directory_iterator(one)) pgms += e.path().extension() == ".pgm";
  CHECK(pgms == 1);
  CHECK(count_lines(slurp(one / "gt.tsv")) == 1);

  const auto a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  REQUIRE(invoke({"synth", "--out", a.string(), "--seed", "4", "-s", "pages=3"}).status == 0);
  REQUIRE(invoke({"synth", "--out", b.string(), "--seed", "4", "-s", "pages=3"}).status == 0);
  for (const char* f : {"page000.pgm", "page002.pgm", "gt.tsv", "train/labels.tsv", "train/s00005.pgm"})
    CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("commands fail with a one-line diagnostic") {
  Run r = invoke({"query"});
  CHECK(r.status != 0);
  CHECK(count_lines(r.err) == 1);
  r = invoke({"eval", "-s", "store=/nonexistent/store.bin", "-s", "model=/nonexistent/m.bin", "-s", "corpus=/nonexistent"});
  CHECK(r.status != 0);
  CHECK(r.err.find("I/O error") != std::string::npos);
  CHECK(invoke({"frobnicate"}).status != 0);
  CHECK(invoke({"synth", "-s", "pages"}).status != 0);
}

TEST_CASE("pipeline through the command surface") {
  const auto dir = fresh_dir("pipeline");
  const std::string corpus = (dir / "corpus").string();
  REQUIRE(invoke({"synth", "--out", corpus, "--seed", "12", "-s", "pages=20", "-s", "per_category=5"}).status == 0);

  std::ofstream(dir / "run.cfg") << "corpus = " << corpus << "\nepochs = 2\nlr0 = 0.01\nmomentum = 0.9\n"
                                 << "embed_dim = 32\nmax_proposals = 120\ntopk = 5,10\n";
  const std::string cfg = (dir / "run.cfg").string();
  const auto step = [&](std::vector<std::string> args) {
    args.insert(args.end(), {"--config", cfg, "--seed", "12"});
    const Run r = invoke(args);
    INFO(r.err);
    REQUIRE(r.status == 0);
    return r;
  };
  step({"propose", "--out", (dir / "props.tsv").string()});
  CHECK(read_proposals(dir / "props.tsv").size() > 6);
  step({"train", "--out", (dir / "model.bin").string()});
  step({"train", "--out", (dir / "model2.bin").string()});
  CHECK(slurp(dir / "model.bin") == slurp(dir / "model2.bin"));

  const std::string model = "model=" + (dir / "model.bin").string();
  step({"index", "-s", model, "--out", (dir / "store.bin").string()});
  step({"index", "-s", model, "--threads", "3", "--out", (dir / "store2.bin").string()});
  CHECK(slurp(dir / "store.bin") == slurp(dir / "store2.bin"));

  const std::string store = "store=" + (dir / "store.bin").string();
  step({"eval", "-s", model, "-s", store, "--out", (dir / "rep.tsv").string()});
  step({"eval", "-s", model, "-s", store, "--out", (dir / "rep2.tsv").string()});
  CHECK(slurp(dir / "rep.tsv") == slurp(dir / "rep2.tsv"));
  CHECK(slurp(dir / "rep.txt") == slurp(dir / "rep2.txt"));

  // The written report is the library evaluation of the same artifacts.
  const auto pages = synth::read_pages(corpus);
  const auto gt = read_ground_truth(fs::path(corpus) / "gt.tsv");
  EvalConfig ec;
  ec.topk_set = {5, 10};
  const auto rep = evaluate(load_store(dir / "store.bin"), load_model(dir / "model.bin"), gt,
                            make_queries(gt), pages, ec);
  CHECK(slurp(dir / "rep.tsv") == "# seed 12\n" + report_tsv(rep));
  const auto want = oracle::evaluate(load_store(dir / "store.bin"), load_model(dir / "model.bin"), gt,
                                     make_queries(gt), pages, ec.topk_set, ec.iou_grid, false, 0.25);
  REQUIRE(want.size() == rep.scores.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(rep.scores[i].query_id == want[i].query_id);
    CHECK(rep.scores[i].topk == want[i].topk);
    CHECK(rep.scores[i].ap == want[i].ap);
    CHECK(rep.scores[i].recall == want[i].recall);
  }

  const auto& e = gt.entries().front();
  const std::string box = "query_box=" + std::to_string(e.bbox.x()) + "," + std::to_string(e.bbox.y()) + "," +
                          std::to_string(e.bbox.w()) + "," + std::to_string(e.bbox.h());
  const Run q = step({"query", "-s", model, "-s", store, "-s", "query_image=" + corpus + "/" + e.doc_id + ".pgm",
                      "-s", box, "-s", "topk=3"});
  CHECK(count_lines(q.out) == 3);
  std::istringstream rows(q.out);
  std::set<std::string> docs;
  double last = 0;
  for (std::string line; std::getline(rows, line);) {
    std::istringstream f(line);
    int rank, x, y, w, h;
    std::string doc;
    double d;
    f >> rank >> doc >> x >> y >> w >> h >> d;
    CHECK(docs.insert(doc).second);
    CHECK(d >= last);
    last = d;
  }

  // A model of another width cannot query this store.
  step({"train", "-s", "embed_dim=16", "-s", "epochs=0", "--out", (dir / "m16.bin").string()});
  const Run bad = invoke({"query", "--config", cfg, "-s", store, "-s", "model=" + (dir / "m16.bin").string(),
                       "-s", "query_image=" + corpus + "/page000.pgm"});
  CHECK(bad.status != 0);
  CHECK(bad.err.find("32") != std::string::npos);
  CHECK(bad.err.find("16") != std::string::npos);

  const Run bench = invoke({"bench", "-s", "bench_records=2000", "-s", "bench_dims=64,32,0", "-s", "bench_queries=1"});
  REQUIRE(bench.status == 0);
  CHECK(count_lines(bench.out) == 4);
  CHECK(bench.out.find("\nfull\t") != std::string::npos);
}
