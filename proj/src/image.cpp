#include "docspot/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "docspot/error.hpp"

namespace docspot {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) throw ParameterError("image dimensions must be >= 1");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw ParameterError("image dimensions must be >= 1");
  if (pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw ParameterError("pixel buffer size does not match width*height");
  }
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v < 1 || v > (1 << 20)) throw FormatError("");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PGM header field '" + tok + "'");
  }
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (pgm_token(in) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  const int w = parse_dim(pgm_token(in), path);
  const int h = parse_dim(pgm_token(in), path);
  const int maxval = parse_dim(pgm_token(in), path);
  if (maxval != 255) {
    throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval));
  }
  // pgm_token consumed exactly one whitespace byte after maxval.
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (in.gcount() != static_cast<std::streamsize>(px.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  return GrayImage(w, h, std::move(px));
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels().data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

GrayImage crop(const GrayImage& img, const BBox& box) {
  if (box.right() > img.width() || box.bottom() > img.height()) {
    throw InputError("crop box lies outside the image");
  }
  const int w = static_cast<int>(box.w());
  const int h = static_cast<int>(box.h());
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto* src = img.pixels().data() +
                      static_cast<std::size_t>(box.y() + y) * img.width() + box.x();
    std::copy(src, src + w, out.pixels().data() + static_cast<std::size_t>(y) * w);
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  GrayImage out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      const double top = img.at(x0, y0) * (1.0 - tx) + img.at(x1, y0) * tx;
      const double bot = img.at(x0, y1) * (1.0 - tx) + img.at(x1, y1) * tx;
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(top * (1.0 - ty) + bot * ty));
    }
  }
  return out;
}

}  // namespace docspot
