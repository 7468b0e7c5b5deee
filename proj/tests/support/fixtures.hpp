#pragma once
// Small builders shared by the test suites.

#include <cstdint>

#include "docspot/image.hpp"
#include "docspot/rng.hpp"

namespace fixture {

// Random blocky patch: a few dark rectangles on light paper.
inline docspot::GrayImage random_patch(docspot::Rng& rng, int w, int h) {
  docspot::GrayImage img(w, h, static_cast<std::uint8_t>(rng.range(180, 255)));
  const int blobs = static_cast<int>(rng.range(1, 4));
  for (int b = 0; b < blobs; ++b) {
    const int x0 = static_cast<int>(rng.range(0, w - 2)), y0 = static_cast<int>(rng.range(0, h - 2));
    const int x1 = static_cast<int>(rng.range(x0 + 1, w)), y1 = static_cast<int>(rng.range(y0 + 1, h));
    const auto v = static_cast<std::uint8_t>(rng.range(0, 120));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) img.at(x, y) = v;
  }
  return img;
}

inline docspot::GrayImage inverted(const docspot::GrayImage& img) {
  docspot::GrayImage out = img;
  for (auto& p : out.pixels()) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

}  // namespace fixture
