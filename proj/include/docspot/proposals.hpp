#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docspot/geometry.hpp"
#include "docspot/image.hpp"

namespace docspot {

inline constexpr int kColorBins = 25;
inline constexpr int kTextureBins = 8;

/// Weights of the four grouping similarities.
struct SimilarityWeights {
  double color = 1.0;
  double texture = 1.0;
  double size = 1.0;
  double fill = 1.0;
};

struct ProposalParams {
  int block = 241;        // adaptive-threshold window, odd
  double offset = 0.12;   // fraction of the 8-bit range subtracted from the mean
  std::vector<double> scales{50.0, 100.0};
  std::int64_t min_region_px = 16;
  std::size_t max_proposals = 4000;
  SimilarityWeights weights;

  /// Throws ParameterError on any violated constraint.
  void validate() const;
};

/// Foreground (ink) iff intensity < mean(block window) - offset*255. Windows
/// are truncated at the image border.
BinaryMask adaptive_threshold(const GrayImage& img, int block, double offset);

/// Pixel partition produced by graph segmentation. Labels are dense,
/// numbered in raster order of each region's first pixel.
struct Segmentation {
  int width = 0;
  int height = 0;
  int region_count = 0;
  std::vector<int> labels;

  int label(int x, int y) const noexcept {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

/// Felzenszwalb-Huttenlocher segmentation on the 4-connected grid with
/// |intensity difference| edge weights. Edges are visited in
/// (weight, source, target) order, so the result is fully deterministic.
Segmentation segment(const GrayImage& img, double scale);

struct Region {
  int id = 0;
  BBox bbox;
  std::int64_t size = 0;       // member pixels
  std::int64_t ink = 0;        // member pixels marked foreground
  std::array<double, kColorBins> color_hist{};
  std::array<double, kTextureBins> texture_hist{};
};

/// Region descriptors for a segmentation. `mask` supplies the ink counts and
/// may be null.
std::vector<Region> describe_regions(const GrayImage& img, const Segmentation& seg,
                                     const BinaryMask* mask = nullptr);

/// Weighted sum of color and texture histogram intersection, size and fill
/// similarity.
double region_similarity(const Region& a, const Region& b, const SimilarityWeights& w,
                         std::int64_t img_area);

struct Candidate {
  std::string doc_id;
  BBox bbox;
  std::optional<std::vector<float>> feature;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Full proposal pipeline for one page: threshold, per-scale segmentation and
/// greedy grouping, scale union with exact-duplicate removal, truncation.
std::vector<Candidate> propose(const GrayImage& img, const ProposalParams& params,
                               const std::string& doc_id = {});

/// Order-preserving subsequence of `cands` accepted by the aspect gate.
std::vector<Candidate> filter_candidates(std::span<const Candidate> cands,
                                         const BBox& query_box, const AspectGate& gate);

/// Proposal dump: `doc_id<TAB>x<TAB>y<TAB>w<TAB>h` per line.
void write_proposals(std::span<const Candidate> cands, const std::filesystem::path& path);
std::vector<Candidate> read_proposals(const std::filesystem::path& path);

}  // namespace docspot
