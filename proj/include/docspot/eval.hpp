#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docspot/geometry.hpp"
#include "docspot/index.hpp"

namespace docspot {

struct GtEntry {
  std::string doc_id;
  std::string category;
  BBox bbox;
  friend bool operator==(const GtEntry&, const GtEntry&) = default;
};

/// Labelled pattern instances. (doc_id, bbox) pairs are unique and
/// categories nonempty; the constructor throws InputError otherwise.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(std::vector<GtEntry> entries);

  const std::vector<GtEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t count(std::string_view category) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;

 private:
  std::vector<GtEntry> entries_;
};

/// `doc_id<TAB>category<TAB>x<TAB>y<TAB>w<TAB>h` lines.
GroundTruth read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);

struct QuerySpec {
  std::string query_id;
  std::string category;
  std::string doc_id;  // source page of the query crop
  BBox bbox;
  friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

/// One query per entry whose category occurs at least twice, ids q0000,
/// q0001, ... in entry order.
std::vector<QuerySpec> make_queries(const GroundTruth& gt);

/// Some entry of the query category lies on the hit's page, other than the
/// query's own source entry.
bool retrieval_relevance(const RankedHit& hit, const QuerySpec& q, const GroundTruth& gt);

/// Some entry of the query category on the hit's page, other than the
/// source entry, overlaps the hit with IoU >= iou_thresh.
bool spotting_relevance(const RankedHit& hit, const QuerySpec& q, const GroundTruth& gt,
                        double iou_thresh);

/// Sum of precision at each relevant rank over min(R, list length).
double average_precision(std::span<const bool> relevance, std::size_t total_relevant);
double recall_at_k(std::span<const bool> relevance, std::size_t total_relevant);

struct EvalConfig {
  std::vector<std::size_t> topk_set{5, 10, 25, 50, 100};
  std::vector<double> iou_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  SearchMode mode = SearchMode::Retrieval;
  std::optional<AspectGate> gate = AspectGate{};
  unsigned threads = 1;

  void validate() const;
};

struct QueryScore {
  std::string query_id;
  std::size_t topk = 0;
  std::optional<double> iou;  // spotting only
  double ap = 0.0;
  double recall = 0.0;
  friend bool operator==(const QueryScore&, const QueryScore&) = default;
};

struct SummaryRow {
  std::size_t topk = 0;
  std::optional<double> iou;
  double map = 0.0;
  double mean_recall = 0.0;
  std::size_t queries = 0;
  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct EvalReport {
  SearchMode mode = SearchMode::Retrieval;
  std::vector<std::size_t> topk_set;
  std::vector<double> iou_grid;
  std::vector<QueryScore> scores;   // by query_id, then topk, then iou
  std::vector<SummaryRow> summary;  // by topk, then iou
  std::vector<std::string> warnings;
  std::size_t candidates = 0;        // store records
  double mean_candidates_searched = 0.0;
  double mean_query_ms = 0.0;

  const SummaryRow& at(std::size_t topk, std::optional<double> iou = {}) const;
};

/// Runs every query through search (the query's own page is left out of the
/// ranking) and scores the ranked lists under the chosen protocol. Spotting
/// hits claim their best-overlapping instance; a second hit on an already
/// claimed instance counts as irrelevant.
EvalReport evaluate(const FeatureStore& store, const SiameseModel& model, const GroundTruth& gt,
                    std::span<const QuerySpec> queries, const PageSet& pages,
                    const EvalConfig& cfg);

/// Aligned plain-text table of the summary rows.
std::string format_report(const EvalReport& report);

/// `query_id<TAB>topk<TAB>iou<TAB>ap<TAB>recall` rows followed by `mAP` rows.
std::string report_tsv(const EvalReport& report);

}  // namespace docspot
