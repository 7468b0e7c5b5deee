#pragma once
// Run configuration: flat `key = value` files with '#' comments. Later
// assignments (including command-line overrides) replace earlier ones.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docspot/eval.hpp"
#include "docspot/proposals.hpp"
#include "docspot/siamese.hpp"

namespace docspot::cli {

struct RunConfig {
  // paths
  std::filesystem::path corpus;      // directory of page PGMs
  std::filesystem::path gt;          // defaults to <corpus>/gt.tsv
  std::filesystem::path model;
  std::filesystem::path store;
  std::filesystem::path train_dir;   // defaults to <corpus>/train
  std::filesystem::path query_image;
  std::filesystem::path out;

  ProposalParams proposal;
  TrainConfig train;
  std::uint32_t embed_dim = 128;     // 0 = unreduced
  int per_category = 16;             // synth: training stamps per category

  // synth
  int pages = 20;
  int plants = 3;
  int text_lines = 4;

  // query / eval
  std::optional<BBox> query_box;
  std::size_t topk = 10;
  std::vector<std::size_t> topk_set{5, 10, 25, 50, 100};
  std::vector<double> iou_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  double gate = 0.25;                // 0 disables the aspect gate
  SearchMode mode = SearchMode::Retrieval;

  // bench
  std::vector<std::uint32_t> bench_dims{512, 256, 128, 0};
  std::size_t bench_records = 100000;
  std::size_t bench_queries = 5;
  int bench_repeats = 3;

  std::uint64_t seed = 1;
  unsigned threads = 1;

  std::optional<AspectGate> aspect_gate() const;
  std::filesystem::path gt_path() const { return gt.empty() ? corpus / "gt.tsv" : gt; }
  std::filesystem::path train_path() const { return train_dir.empty() ? corpus / "train" : train_dir; }
};

/// Applies one assignment. Unknown keys and malformed values are ConfigErrors.
void apply(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every assignment in a config file.
void load_config(RunConfig& cfg, const std::filesystem::path& path);

/// `key=value` split; ConfigError without '='.
std::pair<std::string, std::string> split_assignment(std::string_view text);

}  // namespace docspot::cli
