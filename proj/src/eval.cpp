#include "docspot/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "docspot/error.hpp"
#include "docspot/tsv.hpp"

namespace docspot {

GroundTruth::GroundTruth(std::vector<GtEntry> entries) : entries_(std::move(entries)) {
  std::set<std::pair<std::string_view, BBox>> seen;
  for (const auto& e : entries_) {
    if (e.category.empty()) throw InputError("ground-truth entry on " + e.doc_id + " has no category");
    if (!seen.emplace(e.doc_id, e.bbox).second)
      throw InputError("duplicate ground-truth box on " + e.doc_id);
  }
}

std::size_t GroundTruth::count(std::string_view category) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [&](const GtEntry& e) { return e.category == category; }));
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<GtEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tsv::skippable(line)) continue;
    const auto f = tsv::split(line);
    if (f.size() != 6)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    entries.push_back({std::string(f[0]), std::string(f[1]), tsv::to_bbox(f, 2)});
  }
  try {
    return GroundTruth(std::move(entries));
  } catch (const InputError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : gt.entries()) {
    out << e.doc_id << '\t' << e.category << '\t' << e.bbox.x() << '\t' << e.bbox.y() << '\t'
        << e.bbox.w() << '\t' << e.bbox.h() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<QuerySpec> make_queries(const GroundTruth& gt) {
  std::map<std::string_view, std::size_t> counts;
  for (const auto& e : gt.entries()) ++counts[e.category];
  std::vector<QuerySpec> out;
  for (const auto& e : gt.entries()) {
    if (counts[e.category] < 2) continue;
    char id[32];
    std::snprintf(id, sizeof id, "q%04zu", out.size());
    out.push_back({id, e.category, e.doc_id, e.bbox});
  }
  return out;
}

namespace {

bool is_source(const GtEntry& e, const QuerySpec& q) {
  return e.doc_id == q.doc_id && e.bbox == q.bbox;
}

bool is_target(const GtEntry& e, const QuerySpec& q, std::string_view doc) {
  return e.doc_id == doc && e.category == q.category && !is_source(e, q);
}

void check_iou_threshold(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw ParameterError("IoU threshold must lie in (0, 1]");
}

}  // namespace

bool retrieval_relevance(const RankedHit& hit, const QuerySpec& q, const GroundTruth& gt) {
  return std::any_of(gt.entries().begin(), gt.entries().end(),
                     [&](const GtEntry& e) { return is_target(e, q, hit.doc_id); });
}

bool spotting_relevance(const RankedHit& hit, const QuerySpec& q, const GroundTruth& gt,
                        double iou_thresh) {
  check_iou_threshold(iou_thresh);
  return std::any_of(gt.entries().begin(), gt.entries().end(), [&](const GtEntry& e) {
    return is_target(e, q, hit.doc_id) && iou(hit.bbox, e.bbox) >= iou_thresh;
  });
}

double average_precision(std::span<const bool> relevance, std::size_t total_relevant) {
  const std::size_t denom = std::min(total_relevant, relevance.size());
  if (denom == 0) return 0.0;
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(denom);
}

double recall_at_k(std::span<const bool> relevance, std::size_t total_relevant) {
  if (total_relevant == 0) return 0.0;
  const auto found = std::count(relevance.begin(), relevance.end(), true);
  return static_cast<double>(found) / static_cast<double>(total_relevant);
}

void EvalConfig::validate() const {
  if (topk_set.empty()) throw ParameterError("topk set is empty");
  for (auto k : topk_set)
    if (k < 1) throw ParameterError("topk must be at least 1");
  if (mode == SearchMode::Spotting) {
    if (iou_grid.empty()) throw ParameterError("IoU grid is empty");
    for (double t : iou_grid) check_iou_threshold(t);
  }
}

const SummaryRow& EvalReport::at(std::size_t topk, std::optional<double> iou) const {
  for (const auto& row : summary) {
    if (row.topk != topk) continue;
    if (!iou && !row.iou) return row;
    if (iou && row.iou && std::abs(*iou - *row.iou) < 1e-9) return row;
  }
  throw ParameterError("no summary row for topk " + std::to_string(topk));
}

EvalReport evaluate(const FeatureStore& store, const SiameseModel& model, const GroundTruth& gt,
                    std::span<const QuerySpec> queries, const PageSet& pages,
                    const EvalConfig& cfg) {
  cfg.validate();
  if (store.dim() != model.embed_dim()) {
    throw ConfigError("dimension mismatch: store dim " + std::to_string(store.dim()) +
                      ", model embed dim " + std::to_string(model.embed_dim()));
  }
  const bool spotting = cfg.mode == SearchMode::Spotting;

  EvalReport rep;
  rep.mode = cfg.mode;
  rep.topk_set = cfg.topk_set;
  std::sort(rep.topk_set.begin(), rep.topk_set.end());
  rep.topk_set.erase(std::unique(rep.topk_set.begin(), rep.topk_set.end()), rep.topk_set.end());
  if (spotting) rep.iou_grid = cfg.iou_grid;
  rep.candidates = store.size();
  const std::size_t max_k = rep.topk_set.back();

  std::vector<const QuerySpec*> order;
  for (const auto& q : queries) order.push_back(&q);
  std::sort(order.begin(), order.end(),
            [](const QuerySpec* a, const QuerySpec* b) { return a->query_id < b->query_id; });

  // Accumulators per (topk, iou) cell; retrieval uses a single iou slot.
  const std::size_t n_iou = spotting ? rep.iou_grid.size() : 1;
  std::vector<double> ap_sum(rep.topk_set.size() * n_iou, 0.0), rec_sum(ap_sum.size(), 0.0);
  std::size_t scored = 0;
  double searched = 0.0, elapsed = 0.0;

  for (const QuerySpec* qp : order) {
    const QuerySpec& q = *qp;
    const auto& entries = gt.entries();
    const bool known = std::any_of(entries.begin(), entries.end(),
                                   [&](const GtEntry& e) { return is_source(e, q) && e.category == q.category; });
    if (!known) throw InputError("query " + q.query_id + " does not match a ground-truth entry");
    if (gt.count(q.category) < 2) {
      rep.warnings.push_back("skipped " + q.query_id + ": category " + q.category +
                             " has fewer than two instances");
      continue;
    }

    // Relevant targets live on pages other than the query's own.
    std::vector<std::size_t> targets;
    std::set<std::string_view> target_docs;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].category == q.category && entries[i].doc_id != q.doc_id) {
        targets.push_back(i);
        target_docs.insert(entries[i].doc_id);
      }
    }
    if (targets.empty()) {
      rep.warnings.push_back("skipped " + q.query_id + ": every instance of " + q.category +
                             " is on the query page");
      continue;
    }

    const auto page = pages.find(q.doc_id);
    if (page == pages.end()) throw InputError("no page image for " + q.doc_id);
    QueryRequest req{crop(page->second, q.bbox), q.bbox, max_k, cfg.mode, cfg.gate, q.doc_id};
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (store.doc_id(i) == q.doc_id) continue;
      if (cfg.gate && !aspect_gate(q.bbox, store.bbox(i), *cfg.gate)) continue;
      searched += 1.0;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto hits = search(store, req, model, cfg.threads);
    elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (std::size_t g = 0; g < n_iou; ++g) {
      const auto rel = std::make_unique<bool[]>(max_k);  // all false
      std::size_t total = 0;
      if (!spotting) {
        total = target_docs.size();
        for (std::size_t h = 0; h < hits.size(); ++h) rel[h] = retrieval_relevance(hits[h], q, gt);
      } else {
        total = targets.size();
        const double thr = rep.iou_grid[g];
        std::set<std::size_t> claimed;
        for (std::size_t h = 0; h < hits.size(); ++h) {
          std::optional<std::size_t> best;
          double best_iou = -1.0;
          for (std::size_t t : targets) {
            if (entries[t].doc_id != hits[h].doc_id) continue;
            const double v = iou(hits[h].bbox, entries[t].bbox);
            if (v > best_iou) {
              best_iou = v;
              best = t;
            }
          }
          if (best && best_iou >= thr && claimed.insert(*best).second) rel[h] = true;
        }
      }
      for (std::size_t k = 0; k < rep.topk_set.size(); ++k) {
        const std::size_t topk = rep.topk_set[k];
        const std::span<const bool> view(rel.get(), topk);
        const double ap = average_precision(view, total);
        const double rc = recall_at_k(view, total);
        ap_sum[k * n_iou + g] += ap;
        rec_sum[k * n_iou + g] += rc;
        rep.scores.push_back({q.query_id, topk,
                              spotting ? std::optional<double>(rep.iou_grid[g]) : std::nullopt, ap, rc});
      }
    }
    ++scored;
  }

  std::stable_sort(rep.scores.begin(), rep.scores.end(), [](const QueryScore& a, const QueryScore& b) {
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.topk < b.topk;
  });
  for (std::size_t k = 0; k < rep.topk_set.size(); ++k) {
    for (std::size_t g = 0; g < n_iou; ++g) {
      SummaryRow row;
      row.topk = rep.topk_set[k];
      if (spotting) row.iou = rep.iou_grid[g];
      row.queries = scored;
      if (scored > 0) {
        row.map = ap_sum[k * n_iou + g] / static_cast<double>(scored);
        row.mean_recall = rec_sum[k * n_iou + g] / static_cast<double>(scored);
      }
      rep.summary.push_back(row);
    }
  }
  if (scored > 0) {
    rep.mean_candidates_searched = searched / static_cast<double>(scored);
    rep.mean_query_ms = 1e3 * elapsed / static_cast<double>(scored);
  }
  return rep;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string iou_text(const std::optional<double>& iou) { return iou ? fmt("%.2f", *iou) : "-"; }

}  // namespace

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  const std::size_t queries = r.summary.empty() ? 0 : r.summary.front().queries;
  out << (r.mode == SearchMode::Retrieval ? "retrieval" : "spotting") << " evaluation, " << queries
      << " queries, " << r.candidates << " candidates, "
      << fmt("%.1f", r.mean_candidates_searched) << " searched per query\n";
  char line[128];
  std::snprintf(line, sizeof line, "%6s  %5s  %8s  %8s\n", "Top-k", "IoU", "mAP", "recall");
  out << line;
  for (const auto& row : r.summary) {
    std::snprintf(line, sizeof line, "%6zu  %5s  %8.4f  %8.4f\n", row.topk, iou_text(row.iou).c_str(),
                  row.map, row.mean_recall);
    out << line;
  }
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string report_tsv(const EvalReport& r) {
  std::ostringstream out;
  out << "query_id\ttopk\tiou\tap\trecall\n";
  for (const auto& s : r.scores) {
    out << s.query_id << '\t' << s.topk << '\t' << iou_text(s.iou) << '\t' << fmt("%.6f", s.ap)
        << '\t' << fmt("%.6f", s.recall) << '\n';
  }
  for (const auto& row : r.summary) {
    out << "mAP\t" << row.topk << '\t' << iou_text(row.iou) << '\t' << fmt("%.6f", row.map) << '\t'
        << fmt("%.6f", row.mean_recall) << '\n';
  }
  return out.str();
}

}  // namespace docspot
