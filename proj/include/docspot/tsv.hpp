#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "docspot/geometry.hpp"

namespace docspot::tsv {

/// Splits one line on tabs. A trailing '\r' is dropped.
std::vector<std::string_view> split(std::string_view line);

/// Strict integer/real parsing; throws FormatError naming `what`.
std::int64_t to_int(std::string_view field, std::string_view what);
double to_real(std::string_view field, std::string_view what);

/// Parses four consecutive fields x, y, w, h.
BBox to_bbox(const std::vector<std::string_view>& fields, std::size_t first);

/// True for blank lines and '#' comments.
bool skippable(std::string_view line);

}  // namespace docspot::tsv
