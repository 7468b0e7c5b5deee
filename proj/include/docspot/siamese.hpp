#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "docspot/image.hpp"

namespace docspot {

// Layer descriptors of the shared encoder. Convolutions and pooling use
// valid (unpadded) windows.
struct ConvLayer {
  std::uint32_t out_channels;
  std::uint32_t kernel;
  std::uint32_t stride = 1;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};
struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};
struct MaxPoolLayer {
  std::uint32_t window;
  std::uint32_t stride;
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};
struct DenseLayer {
  std::uint32_t out_dim;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};
using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, DenseLayer>;

struct TensorShape {
  std::uint32_t channels = 1;
  std::uint32_t height = 1;
  std::uint32_t width = 1;
  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Input shape plus layer list, with the derived per-layer output shapes and
/// parameter offsets.
class Architecture {
 public:
  Architecture() = default;
  /// Throws ParameterError if the shapes do not chain.
  Architecture(TensorShape input, std::vector<Layer> layers);

  const TensorShape& input() const noexcept { return input_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const TensorShape& output_of(std::size_t layer) const { return shapes_[layer + 1]; }
  const TensorShape& input_of(std::size_t layer) const { return shapes_[layer]; }
  std::size_t param_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t param_count(std::size_t layer) const { return offsets_[layer + 1] - offsets_[layer]; }
  std::size_t total_params() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t embed_dim() const noexcept { return shapes_.empty() ? 0 : shapes_.back().numel(); }

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_;
  }

 private:
  TensorShape input_;
  std::vector<Layer> layers_;
  std::vector<TensorShape> shapes_;
  std::vector<std::size_t> offsets_;
};

/// Shared-weight embedding network plus the scalar affine head that turns
/// the pair distance into a similarity logit.
struct SiameseModel {
  Architecture arch;
  std::vector<float> weights;  // all layer parameters in declaration order
  float head_w = 0.0f;
  float head_b = 0.0f;

  std::size_t embed_dim() const noexcept { return arch.embed_dim(); }
  const TensorShape& input() const noexcept { return arch.input(); }

  friend bool operator==(const SiameseModel&, const SiameseModel&) = default;
};

/// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, head_w = -1,
/// head_b = 0.
SiameseModel init_model(const Architecture& arch, std::uint64_t seed);

/// 32x32 input, conv(8,3x3) relu pool2 conv(16,3x3) relu pool2, then a dense
/// layer of `embed_dim`. embed_dim == 0 selects the unreduced mode: the
/// flattened pooled feature map is the embedding.
Architecture desk_architecture(std::uint32_t embed_dim, std::uint32_t input_size = 32);

/// Forward pass of one branch. Throws InputError on size mismatch.
std::vector<float> embed(const SiameseModel& model, const GrayImage& patch);

/// Resamples `patch` to the model input size (bilinear) and embeds it.
std::vector<float> embed_resized(const SiameseModel& model, const GrayImage& patch);

struct PairLossTerm {
  double distance = 0.0;
  double logit = 0.0;
  double prob = 0.5;  // P(similar)
  std::optional<int> label;
  std::optional<double> loss;
};

/// Binary cross-entropy of sigmoid(logit) against label, evaluated stably.
double pair_loss(double logit, int label);

/// Distance head on two embeddings.
PairLossTerm score_embeddings(const SiameseModel& model, std::span<const float> a,
                              std::span<const float> b, std::optional<int> label = {});

/// Full two-branch evaluation of a pair.
PairLossTerm pair_distance(const SiameseModel& model, const GrayImage& a, const GrayImage& b,
                           std::optional<int> label = {});

struct PairSample {
  GrayImage a;
  GrayImage b;
  int label = 0;  // 1 = similar
};

enum class GradScope { All, HeadOnly };

struct GradCheckOptions {
  GradScope scope = GradScope::All;
  std::size_t max_params = 0;  // 0 = every parameter; otherwise a seeded subsample
  std::uint64_t seed = 0;
  double kink_distance = 1e-3;  // pairs closer than this are skipped
};

struct GradCheckReport {
  bool skipped = false;
  std::string reason;
  double distance = 0.0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Analytic loss gradient against central finite differences. The error per
/// parameter is |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
GradCheckReport grad_check(const SiameseModel& model, const PairSample& sample, double eps,
                           const GradCheckOptions& opts = {});

struct TrainConfig {
  double lr0 = 1e-3;
  double decay = 0.95;  // lr(epoch) = lr0 * decay^epoch
  int epochs = 30;
  std::size_t batch = 16;
  double momentum = 0.0;
  double neg_ratio = 1.5;
  double split = 0.70;
  std::uint64_t seed = 1;
  bool verify_gradients = true;

  void validate() const;
};

struct LabeledPatch {
  std::string label;
  GrayImage patch;
};

struct PairIndex {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

struct PairSplit {
  std::vector<PairIndex> train;
  std::vector<PairIndex> test;
};

/// Same-class pairs are similar, cross-class pairs dissimilar; both are
/// sampled without replacement with round(neg_ratio * positives) negatives,
/// then split by pair, floor(split * N) going to training.
/// `positives` defaults to every available same-class pair.
PairSplit make_pairs(std::span<const LabeledPatch> dataset, const TrainConfig& cfg,
                     std::optional<std::size_t> positives = {});

std::vector<PairSample> materialize(std::span<const LabeledPatch> dataset,
                                    std::span<const PairIndex> pairs);

struct TrainResult {
  SiameseModel model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Minibatch SGD on the mean pair loss. Throws DivergenceError on a
/// non-finite loss and GradientCheckError if the initial check fails.
TrainResult train(const SiameseModel& model, std::span<const PairSample> pairs,
                  const TrainConfig& cfg);

void save_model(const SiameseModel& model, const std::filesystem::path& path);
SiameseModel load_model(const std::filesystem::path& path);

/// Serialized form, shared by save_model/load_model.
std::vector<std::uint8_t> encode_model(const SiameseModel& model);
SiameseModel decode_model(std::span<const std::uint8_t> bytes);

/// Pair list: `path_a<TAB>path_b<TAB>label`.
struct PairListEntry {
  std::string path_a;
  std::string path_b;
  int label = 0;
};
std::vector<PairListEntry> read_pair_list(const std::filesystem::path& path);
void write_pair_list(std::span<const PairListEntry> pairs, const std::filesystem::path& path);

}  // namespace docspot
