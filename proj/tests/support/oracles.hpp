#pragma once
// Independent reference implementations used only by the test suites. None of
// these call into the library code paths they check.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Box {
  int x, y, w, h;
};

// IoU by rasterizing both boxes onto a grid and counting member pixels.
inline double pixel_iou(const Box& a, const Box& b, int grid) {
  std::int64_t inter = 0, uni = 0;
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      const bool ia = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
      const bool ib = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      inter += (ia && ib) ? 1 : 0;
      uni += (ia || ib) ? 1 : 0;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace oracle

#include <algorithm>
#include <variant>

#include "docspot/siamese.hpp"

namespace oracle {

// Straight-line forward pass written directly from the layer definitions,
// with explicit index arithmetic in double precision.
inline std::vector<double> forward(const docspot::SiameseModel& m,
                                   const docspot::GrayImage& patch) {
  int C = 1, H = patch.height(), W = patch.width();
  std::vector<double> x(static_cast<std::size_t>(H) * W);
  for (int yy = 0; yy < H; ++yy)
    for (int xx = 0; xx < W; ++xx) x[yy * W + xx] = (255.0 - patch.at(xx, yy)) / 255.0;
  std::size_t off = 0;
  for (const auto& layer : m.arch.layers()) {
    if (auto* c = std::get_if<docspot::ConvLayer>(&layer)) {
      const int O = c->out_channels, K = c->kernel, S = c->stride;
      const int OH = (H - K) / S + 1, OW = (W - K) / S + 1;
      std::vector<double> y(static_cast<std::size_t>(O) * OH * OW);
      const std::size_t boff = off + static_cast<std::size_t>(O) * C * K * K;
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < OH; ++i)
          for (int j = 0; j < OW; ++j) {
            double acc = m.weights[boff + o];
            for (int ci = 0; ci < C; ++ci)
              for (int a = 0; a < K; ++a)
                for (int b = 0; b < K; ++b)
                  acc += m.weights[off + ((o * C + ci) * K + a) * K + b] *
                         x[(ci * H + i * S + a) * W + j * S + b];
            y[(o * OH + i) * OW + j] = acc;
          }
      off = boff + O;
      x.swap(y);
      C = O, H = OH, W = OW;
    } else if (std::holds_alternative<docspot::ReluLayer>(layer)) {
      for (double& v : x) v = std::max(v, 0.0);
    } else if (auto* p = std::get_if<docspot::MaxPoolLayer>(&layer)) {
      const int P = p->window, S = p->stride;
      const int OH = (H - P) / S + 1, OW = (W - P) / S + 1;
      std::vector<double> y(static_cast<std::size_t>(C) * OH * OW);
      for (int ci = 0; ci < C; ++ci)
        for (int i = 0; i < OH; ++i)
          for (int j = 0; j < OW; ++j) {
            double best = -1e300;
            for (int a = 0; a < P; ++a)
              for (int b = 0; b < P; ++b)
                best = std::max(best, x[(ci * H + i * S + a) * W + j * S + b]);
            y[(ci * OH + i) * OW + j] = best;
          }
      x.swap(y);
      H = OH, W = OW;
    } else if (auto* d = std::get_if<docspot::DenseLayer>(&layer)) {
      const int N = C * H * W, O = d->out_dim;
      std::vector<double> y(O);
      for (int o = 0; o < O; ++o) {
        double acc = m.weights[off + static_cast<std::size_t>(O) * N + o];
        for (int i = 0; i < N; ++i) acc += m.weights[off + static_cast<std::size_t>(o) * N + i] * x[i];
        y[o] = acc;
      }
      off += static_cast<std::size_t>(O) * N + O;
      x.swap(y);
      C = O, H = 1, W = 1;
    }
  }
  return x;
}

}  // namespace oracle

#include <map>
#include <set>
#include <string>
#include <tuple>

#include "docspot/eval.hpp"
#include "docspot/index.hpp"

namespace oracle {

struct Hit {
  std::string doc_id;
  docspot::BBox bbox;
  double distance;
  std::size_t record;
};

// Brute-force ranking: every distance in one loop, one full stable sort on
// (squared distance, doc_id, index), then a linear dedupe pass.
inline std::vector<Hit> rank(const docspot::FeatureStore& store, const std::vector<float>& q,
                             std::size_t topk, bool per_document,
                             const std::string& skip_doc = {},
                             const docspot::BBox* qbox = nullptr, double tol = 0.0) {
  std::vector<std::tuple<double, std::string, std::size_t>> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!skip_doc.empty() && store.doc_id(i) == skip_doc) continue;
    if (qbox) {
      const double rq = static_cast<double>(qbox->h()) / static_cast<double>(qbox->w());
      const double rc = static_cast<double>(store.bbox(i).h()) / static_cast<double>(store.bbox(i).w());
      if (rc < rq * (1.0 - tol) || rc > rq * (1.0 + tol)) continue;
    }
    const auto f = store.feature(i);
    double s = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double diff = static_cast<double>(q[d]) - static_cast<double>(f[d]);
      s += diff * diff;
    }
    all.emplace_back(s, store.doc_id(i), i);
  }
  std::stable_sort(all.begin(), all.end());
  std::vector<Hit> out;
  std::set<std::string> docs;
  std::set<std::pair<std::string, docspot::BBox>> boxes;
  for (const auto& [s, doc, i] : all) {
    if (out.size() == topk) break;
    if (per_document ? !docs.insert(doc).second : !boxes.insert({doc, store.bbox(i)}).second) continue;
    out.push_back({doc, store.bbox(i), std::sqrt(s), i});
  }
  return out;
}

// End-to-end scoring of a query list: per query AP and recall at
// each topk (and IoU threshold when spotting), in query_id order.
struct Score {
  std::string query_id;
  std::size_t topk;
  double iou;  // 0 for retrieval
  double ap;
  double recall;
};

inline std::vector<Score> evaluate(const docspot::FeatureStore& store,
                                   const docspot::SiameseModel& model,
                                   const docspot::GroundTruth& gt,
                                   std::vector<docspot::QuerySpec> queries,
                                   const docspot::PageSet& pages,
                                   const std::vector<std::size_t>& topks,
                                   const std::vector<double>& ious, bool spotting,
                                   double gate_tol = 0.0) {
  std::sort(queries.begin(), queries.end(),
            [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
  std::vector<Score> out;
  const auto& es = gt.entries();
  for (const auto& q : queries) {
    std::size_t same = 0;
    std::set<std::string> rel_docs;
    std::vector<std::size_t> rel_boxes;
    for (std::size_t i = 0; i < es.size(); ++i) {
      if (es[i].category != q.category) continue;
      ++same;
      if (es[i].doc_id != q.doc_id) {
        rel_docs.insert(es[i].doc_id);
        rel_boxes.push_back(i);
      }
    }
    if (same < 2 || rel_boxes.empty()) continue;
    const std::size_t kmax = *std::max_element(topks.begin(), topks.end());
    const auto qv = docspot::embed_resized(model, docspot::crop(pages.at(q.doc_id), q.bbox));
    const auto hits = rank(store, qv, kmax, !spotting, q.doc_id,
                           gate_tol > 0.0 ? &q.bbox : nullptr, gate_tol);

    const std::vector<double> grid = spotting ? ious : std::vector<double>{0.0};
    for (double thr : grid) {
      std::vector<int> rel(kmax, 0);
      std::set<std::size_t> used;
      for (std::size_t h = 0; h < hits.size(); ++h) {
        if (!spotting) {
          rel[h] = rel_docs.count(hits[h].doc_id) ? 1 : 0;
          continue;
        }
        // Best-overlapping same-category instance on that page, first on ties.
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t t : rel_boxes) {
          if (es[t].doc_id != hits[h].doc_id) continue;
          const auto& a = hits[h].bbox;
          const auto& b = es[t].bbox;
          const std::int64_t iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
          const std::int64_t ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
          const std::int64_t inter = (iw > 0 && ih > 0) ? iw * ih : 0;
          const double v = static_cast<double>(inter) /
                           static_cast<double>(a.area() + b.area() - inter);
          if (v > best) {
            best = v;
            arg = t;
          }
        }
        rel[h] = (best >= thr && used.insert(arg).second) ? 1 : 0;
      }
      const std::size_t R = spotting ? rel_boxes.size() : rel_docs.size();
      for (std::size_t k : topks) {
        double sum = 0.0;
        std::size_t found = 0;
        for (std::size_t i = 0; i < k; ++i) {
          if (!rel[i]) continue;
          ++found;
          sum += static_cast<double>(found) / static_cast<double>(i + 1);
        }
        const double ap = sum / static_cast<double>(std::min(R, k));
        out.push_back({q.query_id, k, thr, ap, static_cast<double>(found) / static_cast<double>(R)});
      }
    }
  }
  return out;
}

}  // namespace oracle
