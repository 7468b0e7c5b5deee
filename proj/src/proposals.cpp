#include "docspot/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>

#include "docspot/error.hpp"
#include "docspot/tsv.hpp"

namespace docspot {

void ProposalParams::validate() const {
  if (block < 3 || block % 2 == 0) {
    throw ParameterError("block must be odd and >= 3, got " + std::to_string(block));
  }
  if (!(offset >= 0.0 && offset < 1.0)) {
    throw ParameterError("offset must lie in [0,1), got " + std::to_string(offset));
  }
  if (scales.empty()) throw ParameterError("at least one segmentation scale is required");
  for (double k : scales) {
    if (!(k > 0.0)) throw ParameterError("segmentation scale must be > 0");
  }
  const SimilarityWeights& w = weights;
  if (w.color < 0 || w.texture < 0 || w.size < 0 || w.fill < 0 ||
      w.color + w.texture + w.size + w.fill <= 0) {
    throw ParameterError("similarity weights must be >= 0 with at least one > 0");
  }
  if (min_region_px < 0) throw ParameterError("min_region_px must be >= 0");
}

BinaryMask adaptive_threshold(const GrayImage& img, int block, double offset) {
  if (block < 3 || block % 2 == 0) {
    throw ParameterError("block must be odd and >= 3, got " + std::to_string(block));
  }
  const int w = img.width();
  const int h = img.height();
  // Summed-area table with a zero row/column in front.
  std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  for (int y = 0; y < h; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += img.at(x, y);
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
          sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  auto sat_at = [&](int x, int y) { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };

  BinaryMask mask{w, h, std::vector<std::uint8_t>(img.size(), 0)};
  const int r = block / 2;
  const double shift = offset * 255.0;
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w, x + r + 1);
      const std::int64_t sum = sat_at(x1, y1) - sat_at(x0, y1) - sat_at(x1, y0) + sat_at(x0, y0);
      const double mean = static_cast<double>(sum) / ((x1 - x0) * (y1 - y0));
      if (img.at(x, y) < mean - shift) mask.bits[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return mask;
}

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Joins two roots; the merged component's internal difference becomes `w`.
  void join(std::size_t a, std::size_t b, double w) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = w;
  }

  std::size_t size(std::size_t root) const { return size_[root]; }
  double internal(std::size_t root) const { return internal_[root]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> internal_;
};

struct Edge {
  std::uint32_t a;
  std::uint32_t b;
};

}  // namespace

Segmentation segment(const GrayImage& img, double scale) {
  if (img.empty()) throw InputError("cannot segment an empty image");
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = img.size();

  // Edges are generated in (source, target) order; a stable bucket pass over
  // the 256 possible weights then yields (weight, source, target) order.
  std::array<std::vector<Edge>, 256> buckets;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::uint32_t>(y * w + x);
      const int v = img.at(x, y);
      if (x + 1 < w) buckets[std::abs(v - img.at(x + 1, y))].push_back({i, i + 1});
      if (y + 1 < h) {
        buckets[std::abs(v - img.at(x, y + 1))].push_back({i, i + static_cast<std::uint32_t>(w)});
      }
    }
  }

  DisjointSet sets(n);
  for (int weight = 0; weight < 256; ++weight) {
    const double wt = weight;
    for (const Edge& e : buckets[weight]) {
      const std::size_t ra = sets.find(e.a);
      const std::size_t rb = sets.find(e.b);
      if (ra == rb) continue;
      const double ta = sets.internal(ra) + scale / static_cast<double>(sets.size(ra));
      const double tb = sets.internal(rb) + scale / static_cast<double>(sets.size(rb));
      if (wt <= std::min(ta, tb)) sets.join(ra, rb, wt);
    }
  }

  Segmentation seg;
  seg.width = w;
  seg.height = h;
  seg.labels.assign(n, -1);
  std::vector<int> root_label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = sets.find(i);
    if (root_label[r] < 0) root_label[r] = seg.region_count++;
    seg.labels[i] = root_label[r];
  }
  return seg;
}

namespace {

// Orientation bin per pixel from derivatives of a Gaussian-smoothed image.
std::vector<std::uint8_t> orientation_bins(const GrayImage& img) {
  constexpr double sigma = 1.0;
  constexpr int radius = 3;
  std::array<double, 2 * radius + 1> kernel{};
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int w = img.width();
  const int h = img.height();
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  std::vector<double> tmp(img.size()), smooth(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
      }
      tmp[idx(x, y)] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] * tmp[idx(x, std::clamp(y + i, 0, h - 1))];
      }
      smooth[idx(x, y)] = acc;
    }
  }

  std::vector<std::uint8_t> bins(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = smooth[idx(std::min(x + 1, w - 1), y)] - smooth[idx(std::max(x - 1, 0), y)];
      const double gy = smooth[idx(x, std::min(y + 1, h - 1))] - smooth[idx(x, std::max(y - 1, 0))];
      const double theta = std::atan2(gy, gx) + std::numbers::pi;  // [0, 2pi]
      int bin = static_cast<int>(theta / (2.0 * std::numbers::pi) * kTextureBins);
      bins[idx(x, y)] = static_cast<std::uint8_t>(std::clamp(bin, 0, kTextureBins - 1));
    }
  }
  return bins;
}

template <std::size_t N>
double intersection(const std::array<double, N>& a, const std::array<double, N>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < N; ++i) s += std::min(a[i], b[i]);
  return s;
}

template <std::size_t N>
std::array<double, N> blend(const std::array<double, N>& a, double wa,
                            const std::array<double, N>& b, double wb) {
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = (a[i] * wa + b[i] * wb) / (wa + wb);
  return out;
}

}  // namespace

std::vector<Region> describe_regions(const GrayImage& img, const Segmentation& seg,
                                     const BinaryMask* mask) {
  const auto bins = orientation_bins(img);
  struct Acc {
    std::int64_t x0 = INT64_MAX, y0 = INT64_MAX, x1 = -1, y1 = -1;
    std::int64_t size = 0, ink = 0;
    std::array<double, kColorBins> color{};
    std::array<double, kTextureBins> texture{};
  };
  std::vector<Acc> acc(static_cast<std::size_t>(seg.region_count));
  for (int y = 0; y < seg.height; ++y) {
    for (int x = 0; x < seg.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * seg.width + x;
      Acc& a = acc[static_cast<std::size_t>(seg.labels[i])];
      a.x0 = std::min<std::int64_t>(a.x0, x);
      a.y0 = std::min<std::int64_t>(a.y0, y);
      a.x1 = std::max<std::int64_t>(a.x1, x);
      a.y1 = std::max<std::int64_t>(a.y1, y);
      ++a.size;
      if (mask != nullptr && mask->bits[i] != 0) ++a.ink;
      a.color[img.pixels()[i] * kColorBins / 256] += 1.0;
      a.texture[bins[i]] += 1.0;
    }
  }
  std::vector<Region> regions;
  regions.reserve(acc.size());
  for (std::size_t r = 0; r < acc.size(); ++r) {
    const Acc& a = acc[r];
    Region reg;
    reg.id = static_cast<int>(r);
    reg.bbox = BBox(a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1);
    reg.size = a.size;
    reg.ink = a.ink;
    const double n = static_cast<double>(a.size);
    for (int i = 0; i < kColorBins; ++i) reg.color_hist[i] = a.color[i] / n;
    for (int i = 0; i < kTextureBins; ++i) reg.texture_hist[i] = a.texture[i] / n;
    regions.push_back(reg);
  }
  return regions;
}

double region_similarity(const Region& a, const Region& b, const SimilarityWeights& w,
                         std::int64_t img_area) {
  const double area = static_cast<double>(img_area);
  double s = 0.0;
  if (w.color > 0) s += w.color * intersection(a.color_hist, b.color_hist);
  if (w.texture > 0) s += w.texture * intersection(a.texture_hist, b.texture_hist);
  if (w.size > 0) s += w.size * (1.0 - static_cast<double>(a.size + b.size) / area);
  if (w.fill > 0) {
    const auto joint = a.bbox.united(b.bbox).area();
    s += w.fill * (1.0 - static_cast<double>(joint - a.size - b.size) / area);
  }
  return s;
}

namespace {

// Greedy hierarchical grouping. Emits every initial region followed by each
// merged region, in merge order.
//
// Regions are immutable while alive and merges always create a fresh id, so a
// queued pair is current exactly when both ends are still alive. Stale pairs
// are skipped on pop instead of being erased.
std::vector<Region> group_regions(std::vector<Region> regions, const Segmentation& seg,
                                  const SimilarityWeights& weights) {
  const std::int64_t img_area = static_cast<std::int64_t>(seg.width) * seg.height;
  const std::size_t n0 = regions.size();
  const std::size_t cap = n0 == 0 ? 0 : 2 * n0 - 1;

  std::vector<std::pair<int, int>> adjacent;
  for (int y = 0; y < seg.height; ++y) {
    for (int x = 0; x < seg.width; ++x) {
      const int a = seg.label(x, y);
      if (x + 1 < seg.width && seg.label(x + 1, y) != a)
        adjacent.emplace_back(std::min(a, seg.label(x + 1, y)), std::max(a, seg.label(x + 1, y)));
      if (y + 1 < seg.height && seg.label(x, y + 1) != a)
        adjacent.emplace_back(std::min(a, seg.label(x, y + 1)), std::max(a, seg.label(x, y + 1)));
    }
  }
  std::sort(adjacent.begin(), adjacent.end());
  adjacent.erase(std::unique(adjacent.begin(), adjacent.end()), adjacent.end());

  // Highest similarity first; ties resolved by the smaller (lo, hi) id pair.
  struct Pair {
    double sim;
    int lo;
    int hi;
  };
  const auto later = [](const Pair& a, const Pair& b) {
    if (a.sim != b.sim) return a.sim < b.sim;
    if (a.lo != b.lo) return a.lo > b.lo;
    return a.hi > b.hi;
  };

  std::vector<Region> emitted = std::move(regions);
  emitted.reserve(cap);
  std::vector<char> alive(cap, 0);
  std::fill(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(n0), 1);
  std::vector<std::vector<int>> nbrs(cap);
  std::vector<Pair> heap;
  const auto push = [&](int a, int b) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    heap.push_back({region_similarity(emitted[lo], emitted[hi], weights, img_area), lo, hi});
    std::push_heap(heap.begin(), heap.end(), later);
  };
  for (const auto& [a, b] : adjacent) {
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
    push(a, b);
  }

  std::vector<std::size_t> stamp(cap, 0);
  std::size_t compact_at = 2 * heap.size() + 4096;
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), later);
    const Pair best = heap.back();
    heap.pop_back();
    if (!alive[best.lo] || !alive[best.hi]) continue;

    const int id = static_cast<int>(emitted.size());
    const Region& ra = emitted[best.lo];
    const Region& rb = emitted[best.hi];
    Region merged;
    merged.id = id;
    merged.bbox = ra.bbox.united(rb.bbox);
    merged.size = ra.size + rb.size;
    merged.ink = ra.ink + rb.ink;
    const double wa = static_cast<double>(ra.size);
    const double wb = static_cast<double>(rb.size);
    merged.color_hist = blend(ra.color_hist, wa, rb.color_hist, wb);
    merged.texture_hist = blend(ra.texture_hist, wa, rb.texture_hist, wb);
    emitted.push_back(merged);

    alive[best.lo] = alive[best.hi] = 0;
    alive[id] = 1;
    std::vector<int> joined;
    for (int old : {best.lo, best.hi}) {
      for (int nb : nbrs[old]) {
        if (!alive[nb] || stamp[nb] == static_cast<std::size_t>(id)) continue;
        stamp[nb] = static_cast<std::size_t>(id);
        joined.push_back(nb);
      }
      std::vector<int>().swap(nbrs[old]);
    }
    for (int nb : joined) {
      auto& list = nbrs[nb];
      std::erase_if(list, [&](int v) { return !alive[v]; });
      list.push_back(id);
      push(nb, id);
    }
    nbrs[id] = std::move(joined);

    if (heap.size() > compact_at) {
      std::erase_if(heap, [&](const Pair& p) { return !alive[p.lo] || !alive[p.hi]; });
      std::make_heap(heap.begin(), heap.end(), later);
      compact_at = 2 * heap.size() + 4096;
    }
  }
  return emitted;
}

}  // namespace

std::vector<Candidate> propose(const GrayImage& img, const ProposalParams& params,
                               const std::string& doc_id) {
  params.validate();
  if (img.empty()) throw InputError("cannot propose on an empty image");
  const BinaryMask mask = adaptive_threshold(img, params.block, params.offset);
  const BBox page = img.bounds();

  std::vector<Candidate> out;
  std::set<BBox> seen;
  for (double k : params.scales) {
    const Segmentation seg = segment(img, k);
    const auto hierarchy = group_regions(describe_regions(img, seg, &mask), seg, params.weights);
    for (const Region& r : hierarchy) {
      // Ink-free regions are blank paper; the full-page root is always kept.
      const bool root = r.bbox == page && r.size == page.area();
      if (!root && (r.ink == 0 || r.size < params.min_region_px)) continue;
      if (!seen.insert(r.bbox).second) continue;
      out.push_back({doc_id, r.bbox, std::nullopt});
    }
  }
  if (out.size() > params.max_proposals) out.resize(params.max_proposals);
  return out;
}

std::vector<Candidate> filter_candidates(std::span<const Candidate> cands,
                                         const BBox& query_box, const AspectGate& gate) {
  std::vector<Candidate> out;
  for (const Candidate& c : cands) {
    if (aspect_gate(query_box, c.bbox, gate)) out.push_back(c);
  }
  return out;
}

void write_proposals(std::span<const Candidate> cands, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Candidate& c : cands) {
    out << c.doc_id << '\t' << c.bbox.x() << '\t' << c.bbox.y() << '\t' << c.bbox.w() << '\t'
        << c.bbox.h() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Candidate> read_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Candidate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tsv::skippable(line)) continue;
    const auto f = tsv::split(line);
    if (f.size() != 5) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    out.push_back({std::string(f[0]), tsv::to_bbox(f, 1), std::nullopt});
  }
  return out;
}

}  // namespace docspot
