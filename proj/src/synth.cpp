#include "docspot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "docspot/error.hpp"

namespace docspot::synth {

namespace {

struct Style {
  const char* name;
  double aspect;  // h / w
};

constexpr Style kStyles[] = {
    {"hbars", 0.5},  {"checker", 0.5}, {"disk", 1.0},
    {"vbars", 1.0},  {"cross", 1.8},   {"diag", 1.8},
};
constexpr std::size_t kCategories = std::size(kStyles);
constexpr double kBaseArea = 44.0 * 44.0;

std::uint8_t shade(int base, int noise, Rng& rng) {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(base + rng.range(-noise, noise), 0, 255));
}

// True where the category pattern puts ink at (x, y) of a w x h stamp.
bool ink_at(std::size_t cat, int x, int y, int w, int h) {
  const int frame = 3, gap = 3;
  if (x < frame || y < frame || x >= w - frame || y >= h - frame) return true;
  const int ix = x - frame - gap, iy = y - frame - gap;
  const int iw = w - 2 * (frame + gap), ih = h - 2 * (frame + gap);
  if (ix < 0 || iy < 0 || ix >= iw || iy >= ih) return false;
  switch (cat) {
    case 0: return (iy / 3) % 2 == 0;                   // horizontal bars
    case 1: return ((ix / 5) + (iy / 5)) % 2 == 0;      // checks
    case 2: {                                           // filled ellipse
      const double dx = (ix + 0.5) / iw - 0.5, dy = (iy + 0.5) / ih - 0.5;
      return dx * dx + dy * dy <= 0.25;
    }
    case 3: return (ix / 3) % 2 == 0;                   // vertical bars
    case 4: {                                           // plus sign
      const int tx = std::max(2, iw / 4), ty = std::max(2, ih / 6);
      return std::abs(2 * ix + 1 - iw) <= tx || std::abs(2 * iy + 1 - ih) <= ty;
    }
    default: return ((ix + iy) / 3) % 2 == 0;           // diagonal stripes
  }
}

void stamp_into(GrayImage& page, const BBox& box, std::size_t cat, const PageParams& s, Rng& rng) {
  const int w = static_cast<int>(box.w()), h = static_cast<int>(box.h());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (ink_at(cat, x, y, w, h))
        page.at(static_cast<int>(box.x()) + x, static_cast<int>(box.y()) + y) = shade(s.ink, s.noise, rng);
}

bool overlaps(const BBox& a, const std::vector<BBox>& placed, int margin) {
  const BBox grown(std::max<std::int64_t>(0, a.x() - margin), std::max<std::int64_t>(0, a.y() - margin),
                   a.w() + 2 * margin, a.h() + 2 * margin);
  return std::any_of(placed.begin(), placed.end(),
                     [&](const BBox& b) { return intersection_area(grown, b) > 0; });
}

// Word-like dashes along a line; skipped wherever they would touch a stamp.
void draw_text_line(GrayImage& page, const std::vector<BBox>& stamps, const PageParams& s, Rng& rng) {
  const int lh = static_cast<int>(rng.range(4, 6));
  const int y = static_cast<int>(rng.range(4, s.height - lh - 4));
  int x = static_cast<int>(rng.range(4, s.width / 3));
  const int end = static_cast<int>(rng.range(s.width / 2, s.width - 4));
  while (x < end) {
    const int ww = static_cast<int>(rng.range(6, 20));
    if (x + ww >= end) break;
    const BBox word(x, y, ww, lh);
    if (!overlaps(word, stamps, 6)) {
      for (int yy = y; yy < y + lh; ++yy)
        for (int xx = x; xx < x + ww; ++xx)
          if (rng.uniform() < 0.8) page.at(xx, yy) = shade(s.ink, s.noise, rng);
    }
    x += ww + static_cast<int>(rng.range(4, 8));
  }
}

}  // namespace

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& s : kStyles) v.emplace_back(s.name);
    return v;
  }();
  return names;
}

void PageParams::validate() const {
  if (pages < 1) throw ParameterError("pages must be at least 1");
  if (plants_per_page < 1) throw ParameterError("plants per page must be at least 1");
  if (width < 96 || height < 96) throw ParameterError("pages must be at least 96x96");
  if (paper < 0 || paper > 255 || ink < 0 || ink > 255 || noise < 0)
    throw ParameterError("paper, ink and noise must be 8-bit levels");
  if (text_lines < 0) throw ParameterError("text_lines must be non-negative");
}

std::pair<int, int> stamp_size(std::size_t category, Rng& rng) {
  const double aspect = kStyles[category % kCategories].aspect * rng.uniform(0.93, 1.07);
  const double area = kBaseArea * std::pow(rng.uniform(0.8, 1.25), 2);
  const int w = static_cast<int>(std::lround(std::sqrt(area / aspect)));
  const int h = static_cast<int>(std::lround(aspect * w));
  return {w, h};
}

GrayImage render_stamp(std::size_t category, int w, int h, const PageParams& style, Rng& rng) {
  GrayImage img(w, h);
  for (auto& p : img.pixels()) p = shade(style.paper, style.noise, rng);
  stamp_into(img, img.bounds(), category % kCategories, style, rng);
  return img;
}

Corpus make_corpus(const PageParams& params) {
  params.validate();
  Rng rng(params.seed);
  Corpus corpus;
  std::vector<GtEntry> gt;
  for (int p = 0; p < params.pages; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "page%03d", p);
    GrayImage page(params.width, params.height);
    for (auto& px : page.pixels()) px = shade(params.paper, params.noise, rng);

    std::vector<BBox> placed;
    const int plants = static_cast<int>(rng.range(1, params.plants_per_page));
    for (int k = 0; k < plants; ++k) {
      const std::size_t cat = rng.index(kCategories);
      const auto [w, h] = stamp_size(cat, rng);
      if (w + 8 > params.width || h + 8 > params.height) continue;
      for (int attempt = 0; attempt < 200; ++attempt) {
        const BBox box(rng.range(4, params.width - w - 4), rng.range(4, params.height - h - 4), w, h);
        if (overlaps(box, placed, 10)) continue;
        stamp_into(page, box, cat, params, rng);
        placed.push_back(box);
        gt.push_back({id, kStyles[cat].name, box});
        break;
      }
    }
    for (int t = 0; t < params.text_lines; ++t) draw_text_line(page, placed, params, rng);
    corpus.pages.emplace(id, std::move(page));
  }
  corpus.gt = GroundTruth(std::move(gt));
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [id, img] : corpus.pages) write_pgm(img, dir / (id + ".pgm"));
  write_ground_truth(corpus.gt, dir / "gt.tsv");
}

PageSet read_pages(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  PageSet pages;
  for (const auto& f : files) pages.emplace(f.stem().string(), read_pgm(f));
  return pages;
}

std::vector<LabeledPatch> stamp_dataset(int per_category, int size, std::uint64_t seed) {
  if (per_category < 1 || size < 4) throw ParameterError("bad stamp dataset size");
  Rng rng(seed);
  const PageParams style;
  std::vector<LabeledPatch> out;
  for (int i = 0; i < per_category; ++i) {
    for (std::size_t cat = 0; cat < kCategories; ++cat) {
      const auto [w, h] = stamp_size(cat, rng);
      const int pad = 4;
      GrayImage canvas(w + 2 * pad, h + 2 * pad);
      for (auto& p : canvas.pixels()) p = shade(style.paper, style.noise, rng);
      stamp_into(canvas, BBox(pad, pad, w, h), cat, style, rng);
      const int j = 2;
      const std::int64_t x0 = pad + rng.range(-j, j), y0 = pad + rng.range(-j, j);
      const std::int64_t x1 = pad + w + rng.range(-j, j), y1 = pad + h + rng.range(-j, j);
      const GrayImage patch = crop(canvas, BBox(x0, y0, x1 - x0, y1 - y0));
      out.push_back({kStyles[cat].name, resize_bilinear(patch, size, size)});
    }
  }
  return out;
}

}  // namespace docspot::synth
