#include "docspot/index.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string_view>
#include <unordered_set>

#include "docspot/binio.hpp"
#include "docspot/distance.hpp"
#include "docspot/error.hpp"
#include "docspot/tsv.hpp"
#include "parallel.hpp"

namespace docspot {

namespace {

constexpr char kStoreMagic[4] = {'S', 'P', 'O', 'T'};
constexpr std::uint16_t kStoreVersion = 1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_dims(const FeatureStore& store, const SiameseModel& model) {
  if (store.dim() != model.embed_dim()) {
    throw ConfigError("dimension mismatch: store dim " + std::to_string(store.dim()) +
                      ", model embed dim " + std::to_string(model.embed_dim()));
  }
}

// Rows that pass the page exclusion and the aspect gate, in store order.
std::vector<std::size_t> eligible_records(const FeatureStore& store, const QueryRequest& req) {
  if (req.topk < 1) throw ParameterError("topk must be at least 1");
  std::vector<std::size_t> rows;
  rows.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (req.exclude_doc && store.doc_id(i) == *req.exclude_doc) continue;
    if (req.gate && !aspect_gate(req.query_box, store.bbox(i), *req.gate)) continue;
    rows.push_back(i);
  }
  return rows;
}

// Orders rows by (key, doc_id, row) and applies the per-mode dedupe.
// `report` maps a sort key to the reported distance.
template <class Report>
std::vector<RankedHit> rank(const FeatureStore& store, const std::vector<std::size_t>& rows,
                            const std::vector<double>& key, const QueryRequest& req,
                            Report report) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] < key[b];
    const int c = store.doc_id(rows[a]).compare(store.doc_id(rows[b]));
    if (c != 0) return c < 0;
    return rows[a] < rows[b];
  });

  std::vector<RankedHit> hits;
  std::unordered_set<std::string_view> seen_docs;
  std::set<std::pair<std::string_view, BBox>> seen_boxes;
  for (std::size_t o : order) {
    if (hits.size() == req.topk) break;
    const std::size_t r = rows[o];
    const std::string& doc = store.doc_id(r);
    if (req.mode == SearchMode::Retrieval) {
      if (!seen_docs.insert(doc).second) continue;
    } else if (!seen_boxes.emplace(doc, store.bbox(r)).second) {
      continue;
    }
    hits.push_back({hits.size() + 1, doc, store.bbox(r), report(key[o]), r});
  }
  return hits;
}

GrayImage to_model_input(const SiameseModel& model, const GrayImage& patch) {
  return resize_bilinear(patch, static_cast<int>(model.input().width),
                         static_cast<int>(model.input().height));
}

struct PageRecords {
  std::string doc_id;
  std::vector<BBox> boxes;
  std::vector<std::vector<float>> features;
  std::optional<std::string> error;
};

template <class Load>
IndexResult build_index(std::size_t n, Load load, const ProposalParams& params,
                        const SiameseModel& model, unsigned threads) {
  params.validate();
  std::vector<PageRecords> pages(n);
  detail::parallel_for(n, threads, [&](std::size_t i) {
    PageRecords& out = pages[i];
    GrayImage img;
    try {
      img = load(i, out.doc_id);
    } catch (const std::exception& e) {
      out.error = e.what();
      return;
    }
    for (const Candidate& c : propose(img, params, out.doc_id)) {
      out.boxes.push_back(c.bbox);
      out.features.push_back(embed_resized(model, crop(img, c.bbox)));
    }
  });

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pages[a].doc_id < pages[b].doc_id; });
  for (std::size_t i = 1; i < n; ++i) {
    if (pages[order[i]].doc_id == pages[order[i - 1]].doc_id)
      throw InputError("duplicate doc_id: " + pages[order[i]].doc_id);
  }

  IndexResult result{FeatureStore(model.embed_dim()), {}};
  std::size_t total = 0;
  for (const auto& p : pages) total += p.boxes.size();
  result.store.reserve(total);
  for (std::size_t i : order) {
    PageRecords& p = pages[i];
    if (p.error) {
      result.errors.push_back({p.doc_id, *p.error});
      continue;
    }
    for (std::size_t k = 0; k < p.boxes.size(); ++k) result.store.add(p.doc_id, p.boxes[k], p.features[k]);
  }
  if (result.store.empty()) throw CorpusError("indexing produced no records");
  return result;
}

}  // namespace

void FeatureStore::add(std::string doc_id, const BBox& bbox, std::span<const float> feature) {
  if (feature.size() != dim_) {
    throw ParameterError("feature length " + std::to_string(feature.size()) +
                         " does not match store dim " + std::to_string(dim_));
  }
  doc_ids_.push_back(std::move(doc_id));
  boxes_.push_back(bbox);
  data_.insert(data_.end(), feature.begin(), feature.end());
}

void FeatureStore::reserve(std::size_t n) {
  doc_ids_.reserve(n);
  boxes_.reserve(n);
  data_.reserve(n * dim_);
}

IndexResult index_corpus(std::span<const DocumentRef> docs, const ProposalParams& params,
                         const SiameseModel& model, unsigned threads) {
  return build_index(
      docs.size(),
      [&](std::size_t i, std::string& id) {
        id = docs[i].doc_id;
        return read_pgm(docs[i].path);
      },
      params, model, threads);
}

IndexResult index_corpus(const PageSet& pages, const ProposalParams& params,
                         const SiameseModel& model, unsigned threads) {
  std::vector<PageSet::const_iterator> its;
  for (auto it = pages.begin(); it != pages.end(); ++it) its.push_back(it);
  return build_index(
      its.size(),
      [&](std::size_t i, std::string& id) {
        id = its[i]->first;
        return its[i]->second;
      },
      params, model, threads);
}

std::vector<RankedHit> search_embedding(const FeatureStore& store, std::span<const float> query,
                                        const QueryRequest& req, unsigned threads) {
  if (query.size() != store.dim()) {
    throw ConfigError("dimension mismatch: store dim " + std::to_string(store.dim()) +
                      ", query dim " + std::to_string(query.size()));
  }
  const auto rows = eligible_records(store, req);
  std::vector<double> sq(rows.size());
  detail::parallel_chunks(rows.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) sq[i] = squared_l2(query, store.feature(rows[i]));
  });
  return rank(store, rows, sq, req, [](double s) { return std::sqrt(s); });
}

std::vector<RankedHit> search(const FeatureStore& store, const QueryRequest& req,
                              const SiameseModel& model, unsigned threads) {
  check_dims(store, model);
  const auto q = embed_resized(model, req.query_patch);
  return search_embedding(store, q, req, threads);
}

std::vector<RankedHit> search_via_pair_head(const FeatureStore& store, const QueryRequest& req,
                                            const SiameseModel& model, const PageSet& pages) {
  check_dims(store, model);
  const auto rows = eligible_records(store, req);
  const GrayImage q = to_model_input(model, req.query_patch);
  std::vector<double> dist(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string& doc = store.doc_id(rows[i]);
    const auto page = pages.find(doc);
    if (page == pages.end()) throw InputError("no page image for " + doc);
    const GrayImage c = to_model_input(model, crop(page->second, store.bbox(rows[i])));
    dist[i] = pair_distance(model, q, c).distance;
  }
  return rank(store, rows, dist, req, [](double d) { return d; });
}

PathBench bench_paths(const FeatureStore& store, std::span<const QueryRequest> queries,
                      const SiameseModel& model, const PageSet& pages) {
  PathBench b;
  b.queries = queries.size();
  b.candidates = store.size();
  std::vector<std::vector<RankedHit>> fast;
  auto t0 = Clock::now();
  for (const auto& q : queries) fast.push_back(search(store, q, model));
  b.extract_once_seconds = seconds_since(t0);
  t0 = Clock::now();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto slow = search_via_pair_head(store, queries[i], model, pages);
    if (slow != fast[i]) b.identical = false;
  }
  b.pair_head_seconds = seconds_since(t0);
  return b;
}

std::vector<ThroughputRow> bench_throughput(std::span<const BenchTarget> targets,
                                            std::span<const QueryRequest> queries,
                                            int repeats) {
  repeats = std::max(1, repeats);
  std::vector<ThroughputRow> rows;
  for (const BenchTarget& t : targets) {
    const FeatureStore& store = *t.store;
    const SiameseModel& model = *t.model;
    check_dims(store, model);
    ThroughputRow row{t.label, store.dim(), store.size(), 0.0, 0.0, {}};

    std::vector<std::vector<float>> qs;
    for (const auto& q : queries) qs.push_back(embed_resized(model, q.query_patch));
    if (qs.empty()) qs.emplace_back(store.dim(), 0.0f);

    double sink = 0.0;
    const auto t0 = Clock::now();
    for (int r = 0; r < repeats; ++r)
      for (const auto& q : qs)
        for (std::size_t i = 0; i < store.size(); ++i) sink += squared_l2(q, store.feature(i));
    const double secs = std::max(seconds_since(t0), 1e-9);
    row.candidates_per_second =
        static_cast<double>(store.size()) * static_cast<double>(qs.size()) * repeats / secs;
    if (sink < 0) row.candidates_per_second = 0;  // keeps the loop observable

    if (!queries.empty()) {
      const auto t1 = Clock::now();
      for (const auto& q : queries) row.hits.push_back(search(store, q, model));
      row.query_ms = 1e3 * seconds_since(t1) / static_cast<double>(queries.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::uint8_t> encode_store(const FeatureStore& store) {
  binio::Writer w;
  w.bytes(std::string_view(kStoreMagic, 4));
  w.u16(kStoreVersion);
  if (store.dim() > 0xFFFFFFFFu) throw ParameterError("store dim too large");
  w.u32(static_cast<std::uint32_t>(store.dim()));
  w.u64(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& id = store.doc_id(i);
    if (id.size() > 0xFFFF) throw ParameterError("doc_id longer than 65535 bytes");
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
    const BBox& b = store.bbox(i);
    for (std::int64_t v : {b.x(), b.y(), b.w(), b.h()}) {
      if (v > 0xFFFFFFFFLL) throw ParameterError("bbox coordinate exceeds 32 bits");
      w.u32(static_cast<std::uint32_t>(v));
    }
    for (float f : store.feature(i)) w.f32(f);
  }
  return w.take();
}

FeatureStore decode_store(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4) != std::string_view(kStoreMagic, 4)) throw FormatError("not a feature store (bad magic)");
  const auto version = r.u16();
  if (version != kStoreVersion)
    throw FormatError("unsupported feature store version " + std::to_string(version));
  const std::size_t dim = r.u32();
  const std::uint64_t count = r.u64();
  FeatureStore store(dim);
  const std::size_t min_record = 2 + 16 + 4 * dim;
  store.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, r.remaining() / min_record)));
  std::vector<float> f(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = r.bytes(r.u16());
    const std::int64_t x = r.u32(), y = r.u32(), w = r.u32(), h = r.u32();
    for (auto& v : f) v = r.f32();
    BBox box;
    try {
      box = BBox(x, y, w, h);
    } catch (const ParameterError& e) {
      throw FormatError(std::string("bad record box: ") + e.what());
    }
    store.add(std::move(id), box, f);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after the last record");
  return store;
}

void save_store(const FeatureStore& store, const std::filesystem::path& path) {
  binio::write_file(path, encode_store(store));
}

FeatureStore load_store(const std::filesystem::path& path) {
  return decode_store(binio::read_file(path));
}

FeatureStore import_features(const std::filesystem::path& matrix,
                             const std::filesystem::path& manifest, std::size_t dim) {
  if (dim == 0) throw ParameterError("import dim must be positive");
  const auto bytes = binio::read_file(matrix);
  if (bytes.size() % (4 * dim) != 0)
    throw FormatError("matrix size is not a multiple of " + std::to_string(dim) + " floats");
  const std::size_t rows = bytes.size() / (4 * dim);

  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  std::vector<std::pair<std::string, BBox>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (tsv::skippable(line)) continue;
    const auto fields = tsv::split(line);
    if (fields.size() != 5) throw FormatError("manifest line needs 5 fields: " + line);
    entries.emplace_back(std::string(fields[0]), tsv::to_bbox(fields, 1));
  }
  if (entries.size() != rows) {
    throw FormatError("matrix has " + std::to_string(rows) + " rows but manifest has " +
                      std::to_string(entries.size()));
  }

  binio::Reader r(bytes);
  FeatureStore store(dim);
  store.reserve(rows);
  std::vector<float> f(dim);
  for (auto& [id, box] : entries) {
    for (auto& v : f) v = r.f32();
    store.add(std::move(id), box, f);
  }
  return store;
}

}  // namespace docspot
