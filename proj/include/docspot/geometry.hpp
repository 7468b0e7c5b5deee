#pragma once

#include <cstdint>
#include <compare>
#include <ostream>

namespace docspot {

/// Axis-aligned pixel rectangle. Construction rejects negative origins and
/// empty extents, so every BBox in the system has positive area.
class BBox {
 public:
  BBox() = default;  // 1x1 box at the origin
  BBox(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h);

  std::int64_t x() const noexcept { return x_; }
  std::int64_t y() const noexcept { return y_; }
  std::int64_t w() const noexcept { return w_; }
  std::int64_t h() const noexcept { return h_; }
  std::int64_t right() const noexcept { return x_ + w_; }   // exclusive
  std::int64_t bottom() const noexcept { return y_ + h_; }  // exclusive
  std::int64_t area() const noexcept { return w_ * h_; }

  /// Height over width.
  double aspect() const noexcept {
    return static_cast<double>(h_) / static_cast<double>(w_);
  }

  /// Smallest box enclosing both.
  BBox united(const BBox& other) const noexcept;

  bool contains(std::int64_t px, std::int64_t py) const noexcept {
    return px >= x_ && px < right() && py >= y_ && py < bottom();
  }

  friend auto operator<=>(const BBox&, const BBox&) = default;

 private:
  std::int64_t x_ = 0;
  std::int64_t y_ = 0;
  std::int64_t w_ = 1;
  std::int64_t h_ = 1;
};

std::ostream& operator<<(std::ostream& os, const BBox& b);

/// Intersection area in exact integer arithmetic.
std::int64_t intersection_area(const BBox& a, const BBox& b) noexcept;

/// Intersection over union. Exact integer areas, one final division.
double iou(const BBox& a, const BBox& b) noexcept;

/// Candidate filter on height/width ratio relative to the query.
class AspectGate {
 public:
  AspectGate() = default;
  explicit AspectGate(double tolerance);

  double tolerance() const noexcept { return tolerance_; }

 private:
  double tolerance_ = 0.25;
};

/// True iff aspect(cand) lies in [aspect(q)(1-tol), aspect(q)(1+tol)], both
/// ends inclusive.
bool aspect_gate(const BBox& query, const BBox& cand, const AspectGate& gate) noexcept;

}  // namespace docspot
