#include "docspot/geometry.hpp"

#include <algorithm>
#include <string>

#include "docspot/error.hpp"

namespace docspot {

BBox::BBox(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h)
    : x_(x), y_(y), w_(w), h_(h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0) {
    throw ParameterError("invalid bbox (" + std::to_string(x) + "," + std::to_string(y) +
                         "," + std::to_string(w) + "," + std::to_string(h) + ")");
  }
}

BBox BBox::united(const BBox& other) const noexcept {
  BBox out;
  out.x_ = std::min(x_, other.x_);
  out.y_ = std::min(y_, other.y_);
  out.w_ = std::max(right(), other.right()) - out.x_;
  out.h_ = std::max(bottom(), other.bottom()) - out.y_;
  return out;
}

std::ostream& operator<<(std::ostream& os, const BBox& b) {
  return os << '(' << b.x() << ',' << b.y() << ',' << b.w() << ',' << b.h() << ')';
}

std::int64_t intersection_area(const BBox& a, const BBox& b) noexcept {
  const std::int64_t iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const std::int64_t ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (iw <= 0 || ih <= 0) return 0;
  return iw * ih;
}

double iou(const BBox& a, const BBox& b) noexcept {
  const std::int64_t inter = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

AspectGate::AspectGate(double tolerance) : tolerance_(tolerance) {
  if (!(tolerance > 0.0 && tolerance < 1.0)) {
    throw ParameterError("aspect gate tolerance must lie in (0,1), got " +
                         std::to_string(tolerance));
  }
}

bool aspect_gate(const BBox& query, const BBox& cand, const AspectGate& gate) noexcept {
  const double rq = query.aspect();
  const double rc = cand.aspect();
  return rc >= rq * (1.0 - gate.tolerance()) && rc <= rq * (1.0 + gate.tolerance());
}

}  // namespace docspot
