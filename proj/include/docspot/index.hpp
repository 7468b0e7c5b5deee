#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docspot/geometry.hpp"
#include "docspot/image.hpp"
#include "docspot/proposals.hpp"
#include "docspot/siamese.hpp"

namespace docspot {

/// Embeddings of every indexed candidate, stored row-major in one block.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::size_t dim) : dim_(dim) {}

  /// Throws ParameterError if the feature length differs from dim().
  void add(std::string doc_id, const BBox& bbox, std::span<const float> feature);
  void reserve(std::size_t n);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return doc_ids_.size(); }
  bool empty() const noexcept { return doc_ids_.empty(); }
  const std::string& doc_id(std::size_t i) const { return doc_ids_[i]; }
  const BBox& bbox(std::size_t i) const { return boxes_[i]; }
  std::span<const float> feature(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> doc_ids_;
  std::vector<BBox> boxes_;
  std::vector<float> data_;
};

/// Page images keyed by doc_id.
using PageSet = std::map<std::string, GrayImage, std::less<>>;

struct DocumentRef {
  std::string doc_id;
  std::filesystem::path path;
};

struct DocumentError {
  std::string doc_id;
  std::string message;
};

struct IndexResult {
  FeatureStore store;
  std::vector<DocumentError> errors;  // documents that could not be read
};

/// Proposes candidates on every page, embeds each crop once and collects the
/// records in (doc_id, emission order). Unreadable pages are reported in
/// `errors`; an empty store is a CorpusError.
IndexResult index_corpus(std::span<const DocumentRef> docs, const ProposalParams& params,
                         const SiameseModel& model, unsigned threads = 1);
IndexResult index_corpus(const PageSet& pages, const ProposalParams& params,
                         const SiameseModel& model, unsigned threads = 1);

enum class SearchMode { Retrieval, Spotting };

struct RankedHit {
  std::size_t rank = 0;  // 1-based
  std::string doc_id;
  BBox bbox;
  double distance = 0.0;
  std::size_t record = 0;  // store row
  friend bool operator==(const RankedHit&, const RankedHit&) = default;
};

struct QueryRequest {
  GrayImage query_patch;
  BBox query_box;  // only its shape matters, for the aspect gate
  std::size_t topk = 10;
  SearchMode mode = SearchMode::Retrieval;
  std::optional<AspectGate> gate = AspectGate{};
  std::optional<std::string> exclude_doc;  // records of this page are skipped
};

/// Exhaustive Euclidean ranking of the stored embeddings against the query
/// embedding. Ties go to the smaller (doc_id, record index).
std::vector<RankedHit> search(const FeatureStore& store, const QueryRequest& req,
                              const SiameseModel& model, unsigned threads = 1);

/// Same ranking with a precomputed query embedding.
std::vector<RankedHit> search_embedding(const FeatureStore& store, std::span<const float> query,
                                        const QueryRequest& req, unsigned threads = 1);

/// Scores each candidate by running both network branches on the (query,
/// candidate crop) pair. Crops come from `pages`.
std::vector<RankedHit> search_via_pair_head(const FeatureStore& store, const QueryRequest& req,
                                            const SiameseModel& model, const PageSet& pages);

struct PathBench {
  std::size_t queries = 0;
  std::size_t candidates = 0;  // store records
  double extract_once_seconds = 0.0;
  double pair_head_seconds = 0.0;
  bool identical = true;  // rank-for-rank agreement on every query
};

/// Times search against search_via_pair_head over the same queries.
PathBench bench_paths(const FeatureStore& store, std::span<const QueryRequest> queries,
                      const SiameseModel& model, const PageSet& pages);

struct BenchTarget {
  std::string label;
  const FeatureStore* store = nullptr;
  const SiameseModel* model = nullptr;
};

struct ThroughputRow {
  std::string label;
  std::size_t dim = 0;
  std::size_t records = 0;
  double candidates_per_second = 0.0;  // distance evaluations only
  double query_ms = 0.0;               // mean end-to-end query latency
  std::vector<std::vector<RankedHit>> hits;
};

/// Distance throughput and query latency for each target. `repeats` scans
/// of the full store are timed per target.
std::vector<ThroughputRow> bench_throughput(std::span<const BenchTarget> targets,
                                            std::span<const QueryRequest> queries,
                                            int repeats = 3);

void save_store(const FeatureStore& store, const std::filesystem::path& path);
FeatureStore load_store(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_store(const FeatureStore& store);
FeatureStore decode_store(std::span<const std::uint8_t> bytes);

/// Raw little-endian f32 rows of length `dim` plus a
/// `doc_id<TAB>x<TAB>y<TAB>w<TAB>h` manifest, one line per row.
FeatureStore import_features(const std::filesystem::path& matrix,
                             const std::filesystem::path& manifest, std::size_t dim);

}  // namespace docspot
