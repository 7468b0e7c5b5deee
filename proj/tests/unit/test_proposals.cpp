#include <doctest.h>

#include <algorithm>
#include <deque>
#include <random>
#include <set>

#include "docspot/error.hpp"
#include "docspot/proposals.hpp"

using namespace docspot;

namespace {

GrayImage page_with_rect(int w, int h, const BBox& r, std::uint8_t bg = 230,
                         std::uint8_t ink = 40) {
  GrayImage img(w, h, bg);
  for (auto y = r.y(); y < r.bottom(); ++y)
    for (auto x = r.x(); x < r.right(); ++x) img.at(static_cast<int>(x), static_cast<int>(y)) = ink;
  return img;
}

// Every region must be a single 4-connected component.
bool regions_connected(const Segmentation& seg) {
  std::vector<char> seen(seg.labels.size(), 0);
  std::set<int> started;
  for (std::size_t s = 0; s < seg.labels.size(); ++s) {
    if (seen[s]) continue;
    if (!started.insert(seg.labels[s]).second) return false;  // second component
    std::deque<std::size_t> todo{s};
    seen[s] = 1;
    while (!todo.empty()) {
      const std::size_t i = todo.front();
      todo.pop_front();
      const int x = static_cast<int>(i % seg.width), y = static_cast<int>(i / seg.width);
      const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int nx = x + dx[d], ny = y + dy[d];
        if (nx < 0 || ny < 0 || nx >= seg.width || ny >= seg.height) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * seg.width + nx;
        if (!seen[j] && seg.labels[j] == seg.labels[i]) {
          seen[j] = 1;
          todo.push_back(j);
        }
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("adaptive threshold on uniform images marks nothing") {
  CHECK(adaptive_threshold(GrayImage(30, 20, 200), 9, 0.12).count() == 0);
  CHECK(adaptive_threshold(GrayImage(30, 20, 0), 9, 0.12).count() == 0);
}

TEST_CASE("adaptive threshold picks out a single dark pixel") {
  GrayImage img(9, 9, 255);
  img.at(4, 4) = 0;
  const BinaryMask m = adaptive_threshold(img, 9, 0.12);
  CHECK(m.count() == 1);
  CHECK(m.at(4, 4));
}

TEST_CASE("adaptive threshold rejects bad block sizes") {
  const GrayImage img(9, 9, 255);
  CHECK_THROWS_AS(adaptive_threshold(img, 8, 0.12), ParameterError);
  CHECK_THROWS_AS(adaptive_threshold(img, 1, 0.12), ParameterError);
}

TEST_CASE("segment examples") {
  CHECK(segment(GrayImage(17, 9, 128), 50).region_count == 1);

  GrayImage halves(4, 2, 255);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) halves.at(x, y) = 0;
  const Segmentation s = segment(halves, 50);
  CHECK(s.region_count == 2);
  CHECK(s.label(0, 0) == s.label(1, 1));
  CHECK(s.label(2, 0) == s.label(3, 1));
  CHECK(s.label(0, 0) != s.label(3, 0));

  GrayImage checker(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) checker.at(x, y) = ((x + y) % 2) ? 255 : 0;
  CHECK(segment(checker, 255.0 * 6 * 5).region_count == 1);
  CHECK(segment(checker, 1.0).region_count == 30);
}

TEST_CASE("segment partitions pixels into connected regions, coarser with larger scale") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dim(3, 40), val(0, 255);
    const int w = dim(rng), h = dim(rng);
    GrayImage img(w, h);
    // Blocky content with mild noise; pure noise makes region counts meaningless.
    const int cell = 1 + trial % 5;
    std::vector<int> base(static_cast<std::size_t>((w / cell + 1) * (h / cell + 1)));
    for (int& b : base) b = val(rng);
    std::uniform_int_distribution<int> noise(-6, 6);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(x, y) = static_cast<std::uint8_t>(
            std::clamp(base[(y / cell) * (w / cell + 1) + x / cell] + noise(rng), 0, 255));

    int prev = -1;
    for (double k : {5.0, 20.0, 50.0, 100.0, 300.0, 1000.0}) {
      const Segmentation seg = segment(img, k);
      REQUIRE(seg.labels.size() == img.size());
      for (int l : seg.labels) CHECK((l >= 0 && l < seg.region_count));
      CHECK(regions_connected(seg));
      if (prev >= 0) CHECK(seg.region_count <= prev);
      prev = seg.region_count;
    }
  }
}

TEST_CASE("region descriptors are normalized and enclose their pixels") {
  const GrayImage img = page_with_rect(50, 40, BBox(10, 5, 12, 9));
  const Segmentation seg = segment(img, 50);
  const auto regions = describe_regions(img, seg, nullptr);
  REQUIRE(regions.size() == 2);
  std::int64_t total = 0;
  for (const Region& r : regions) {
    double c = 0, t = 0;
    for (double v : r.color_hist) c += v;
    for (double v : r.texture_hist) t += v;
    CHECK(c == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t == doctest::Approx(1.0).epsilon(1e-9));
    total += r.size;
  }
  CHECK(total == 50 * 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 50; ++x) CHECK(regions[seg.label(x, y)].bbox.contains(x, y));
  CHECK(regions[seg.label(12, 7)].bbox == BBox(10, 5, 12, 9));
}

TEST_CASE("region similarity examples") {
  Region a, b;
  a.color_hist.fill(0);
  b.color_hist.fill(0);
  a.texture_hist.fill(0);
  b.texture_hist.fill(0);
  a.color_hist[3] = 0.5;
  a.color_hist[7] = 0.5;
  a.texture_hist[2] = 1.0;
  b.color_hist = a.color_hist;
  b.texture_hist = a.texture_hist;
  a.size = b.size = 100;
  a.bbox = BBox(0, 0, 10, 10);
  b.bbox = BBox(10, 0, 10, 10);
  CHECK(region_similarity(a, b, {1, 1, 0, 0}, 10000) == doctest::Approx(2.0));

  b.color_hist.fill(0);
  b.color_hist[20] = 1.0;
  b.texture_hist.fill(0);
  b.texture_hist[5] = 1.0;
  CHECK(region_similarity(a, b, {1, 1, 0, 0}, 10000) == 0.0);

  // size: 1 - 200/10000; fill: the pair tiles its 10x20 joint box exactly
  CHECK(region_similarity(a, b, {0, 0, 1, 1}, 10000) == doctest::Approx(1.98).epsilon(1e-12));
}

TEST_CASE("proposal params validation") {
  ProposalParams p;
  CHECK_NOTHROW(p.validate());
  p.block = 240;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.scales = {50, 0};
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.weights = {0, 0, 0, 0};
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.offset = 1.0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("propose on a uniform page yields the single full-page box") {
  const auto c = propose(GrayImage(120, 90, 210), ProposalParams{}, "blank");
  REQUIRE(c.size() == 1);
  CHECK(c[0].bbox == BBox(0, 0, 120, 90));
  CHECK(c[0].doc_id == "blank");
}

TEST_CASE("propose finds a planted rectangle and the gate removes it") {
  const BBox plant(70, 90, 40, 30);
  const GrayImage img = page_with_rect(200, 200, plant);
  const auto cands = propose(img, ProposalParams{}, "p");
  double best = 0.0;
  for (const auto& c : cands) best = std::max(best, iou(c.bbox, plant));
  CHECK(best >= 0.9);

  std::set<BBox> uniq;
  for (const auto& c : cands) {
    CHECK(c.bbox.right() <= 200);
    CHECK(c.bbox.bottom() <= 200);
    CHECK(uniq.insert(c.bbox).second);
  }
  CHECK(propose(img, ProposalParams{}, "p") == cands);

  const auto gated = filter_candidates(cands, BBox(0, 0, 10, 100), AspectGate{});
  for (const auto& c : gated) CHECK(c.bbox != plant);
}

TEST_CASE("propose honours max_proposals and min_region_px") {
  GrayImage img(100, 100, 230);
  for (int i = 0; i < 5; ++i)
    for (int y = 10 + 15 * i; y < 18 + 15 * i; ++y)
      for (int x = 10; x < 10 + 10 * (i + 1); ++x) img.at(x, y) = 30;
  ProposalParams p;
  const auto all = propose(img, p);
  p.max_proposals = 3;
  const auto few = propose(img, p);
  REQUIRE(few.size() == 3);
  CHECK(std::equal(few.begin(), few.end(), all.begin()));
  p = {};
  p.min_region_px = 81;  // the smallest bar has 80 pixels
  for (const auto& c : propose(img, p)) CHECK(c.bbox != BBox(10, 10, 10, 8));
}

TEST_CASE("filter_candidates keeps the in-interval subset in order") {
  CHECK(filter_candidates({}, BBox(0, 0, 10, 5), AspectGate{}).empty());

  std::vector<Candidate> same{{"a", BBox(0, 0, 10, 5), {}}, {"b", BBox(3, 3, 20, 10), {}}};
  CHECK(filter_candidates(same, BBox(0, 0, 40, 20), AspectGate{}) == same);

  // query ratio 0.5: accepted range [0.375, 0.625]
  std::vector<Candidate> mixed{
      {"a", BBox(0, 0, 10, 3), {}},    // 0.3
      {"b", BBox(0, 0, 8, 3), {}},     // 0.375
      {"c", BBox(0, 0, 10, 10), {}},   // 1.0
      {"d", BBox(0, 0, 10, 6), {}},    // 0.6
      {"e", BBox(0, 0, 8, 5), {}},     // 0.625
      {"f", BBox(0, 0, 100, 63), {}},  // 0.63
  };
  const auto out = filter_candidates(mixed, BBox(0, 0, 40, 20), AspectGate{});
  REQUIRE(out.size() == 3);
  CHECK(out[0].doc_id == "b");
  CHECK(out[1].doc_id == "d");
  CHECK(out[2].doc_id == "e");
  CHECK(filter_candidates(out, BBox(0, 0, 40, 20), AspectGate{}) == out);
}
