#include "docspot/tsv.hpp"

#include <charconv>
#include <string>

#include "docspot/error.hpp"

namespace docspot::tsv {

std::vector<std::string_view> split(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

std::int64_t to_int(std::string_view field, std::string_view what) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError("bad " + std::string(what) + " field '" + std::string(field) + "'");
  }
  return v;
}

double to_real(std::string_view field, std::string_view what) {
  // std::from_chars for double is missing on older libstdc++.
  const std::string s(field);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad " + std::string(what) + " field '" + s + "'");
  }
}

BBox to_bbox(const std::vector<std::string_view>& fields, std::size_t first) {
  if (fields.size() < first + 4) throw FormatError("missing bbox fields");
  try {
    return BBox(to_int(fields[first], "x"), to_int(fields[first + 1], "y"),
                to_int(fields[first + 2], "w"), to_int(fields[first + 3], "h"));
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
}

bool skippable(std::string_view line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string_view::npos || line[pos] == '#';
}

}  // namespace docspot::tsv
