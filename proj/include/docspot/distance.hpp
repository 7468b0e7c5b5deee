#pragma once

#include <cassert>
#include <span>

namespace docspot {

/// Squared Euclidean distance of two f32 vectors, accumulated in f64. Every
/// ranking path goes through this one function so that ties are bitwise
/// reproducible.
inline double squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

}  // namespace docspot
