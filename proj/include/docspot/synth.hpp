#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "docspot/eval.hpp"
#include "docspot/index.hpp"
#include "docspot/rng.hpp"
#include "docspot/siamese.hpp"

namespace docspot::synth {

// Stamp categories: a dark frame around a category-specific fill. Pairs of
// categories share an aspect ratio so shape alone cannot separate them.
const std::vector<std::string>& category_names();

struct PageParams {
  int pages = 20;
  int plants_per_page = 3;  // each page gets 1..plants_per_page stamps
  int width = 256;
  int height = 256;
  int paper = 225;
  int ink = 45;
  int noise = 8;            // uniform +-noise per pixel
  int text_lines = 4;       // clutter lines of word-like dashes per page
  std::uint64_t seed = 1;

  void validate() const;
};

struct Corpus {
  PageSet pages;  // doc_ids page000, page001, ...
  GroundTruth gt;
};

/// Draws a stamp of the given category and size on a fresh paper patch.
GrayImage render_stamp(std::size_t category, int w, int h, const PageParams& style, Rng& rng);

/// Random stamp size for a category: its base shape scaled and mildly
/// stretched.
std::pair<int, int> stamp_size(std::size_t category, Rng& rng);

/// Seeded corpus of pages with planted stamps and their ground truth.
Corpus make_corpus(const PageParams& params);

/// Writes `<doc_id>.pgm` per page and `gt.tsv` into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Reads every `*.pgm` in `dir` (doc_id = file stem).
PageSet read_pages(const std::filesystem::path& dir);

/// Training patches at `size`x`size`: `per_category` stamps per category,
/// each cropped with a few pixels of box jitter to mimic proposal slack.
std::vector<LabeledPatch> stamp_dataset(int per_category, int size, std::uint64_t seed);

}  // namespace docspot::synth
