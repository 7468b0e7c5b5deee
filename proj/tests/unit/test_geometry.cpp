#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "docspot/error.hpp"
#include "docspot/geometry.hpp"

using namespace docspot;

TEST_CASE("bbox rejects empty or negative boxes") {
  CHECK_THROWS_AS(BBox(0, 0, 0, 5), ParameterError);
  CHECK_THROWS_AS(BBox(0, 0, 5, -1), ParameterError);
  CHECK_THROWS_AS(BBox(-1, 0, 5, 5), ParameterError);
  CHECK(BBox(3, 4, 5, 6).area() == 30);
}

TEST_CASE("iou worked examples") {
  CHECK(iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0);
  CHECK(iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0);
  // 50 shared pixels over a 150-pixel union
  CHECK(iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(BBox(0, 0, 10, 10), BBox(10, 0, 10, 10)) == 0.0);  // touching edges
}

TEST_CASE("iou is symmetric, bounded, and matches pixel counting") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> pos(0, 40), ext(1, 24);
  for (int i = 0; i < 2000; ++i) {
    const oracle::Box a{pos(rng), pos(rng), ext(rng), ext(rng)};
    const oracle::Box b{pos(rng), pos(rng), ext(rng), ext(rng)};
    const BBox ba(a.x, a.y, a.w, a.h), bb(b.x, b.y, b.w, b.h);
    const double v = iou(ba, bb);
    CHECK(v == iou(bb, ba));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(ba, ba) == 1.0);
    CHECK(v == oracle::pixel_iou(a, b, 64));
  }
}

TEST_CASE("aspect gate interval is inclusive") {
  const AspectGate gate;  // 25%
  const BBox q(0, 0, 40, 20);  // ratio 0.5
  CHECK(aspect_gate(q, BBox(0, 0, 40, 20), gate));
  CHECK(aspect_gate(q, BBox(0, 0, 80, 30), gate));   // 0.375, lower end
  CHECK(aspect_gate(q, BBox(0, 0, 80, 50), gate));   // 0.625, upper end
  CHECK_FALSE(aspect_gate(q, BBox(0, 0, 10, 7), gate));  // 0.7
  CHECK_FALSE(aspect_gate(q, BBox(0, 0, 1000, 374), gate));
  CHECK_THROWS_AS(AspectGate(0.0), ParameterError);
  CHECK_THROWS_AS(AspectGate(1.0), ParameterError);
}

TEST_CASE("aspect gate is invariant under uniform scaling") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> ext(1, 60), scale(2, 9);
  const AspectGate gate(0.25);
  for (int i = 0; i < 5000; ++i) {
    const int qw = ext(rng), qh = ext(rng), cw = ext(rng), ch = ext(rng), s = scale(rng);
    CHECK(aspect_gate(BBox(0, 0, qw, qh), BBox(0, 0, cw, ch), gate) ==
          aspect_gate(BBox(0, 0, qw * s, qh * s), BBox(0, 0, cw * s, ch * s), gate));
  }
}
