#include "docspot/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "docspot/binio.hpp"
#include "docspot/distance.hpp"
#include "docspot/error.hpp"
#include "docspot/rng.hpp"
#include "docspot/tsv.hpp"
#include "network.hpp"

namespace docspot {

Architecture::Architecture(TensorShape input, std::vector<Layer> layers)
    : input_(input), layers_(std::move(layers)) {
  if (input_.numel() == 0) throw ParameterError("input shape must be non-empty");
  shapes_.push_back(input_);
  offsets_.push_back(0);
  for (const Layer& layer : layers_) {
    const TensorShape in = shapes_.back();
    TensorShape out = in;
    std::size_t params = 0;
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0 || l.kernel > in.height ||
                l.kernel > in.width) {
              throw ParameterError("convolution does not fit its input");
            }
            out = {l.out_channels, (in.height - l.kernel) / l.stride + 1,
                   (in.width - l.kernel) / l.stride + 1};
            params = static_cast<std::size_t>(l.out_channels) * in.channels * l.kernel * l.kernel +
                     l.out_channels;
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            if (l.window == 0 || l.stride == 0 || l.window > in.height || l.window > in.width) {
              throw ParameterError("pooling window does not fit its input");
            }
            out = {in.channels, (in.height - l.window) / l.stride + 1,
                   (in.width - l.window) / l.stride + 1};
          } else if constexpr (std::is_same_v<L, DenseLayer>) {
            if (l.out_dim == 0) throw ParameterError("dense layer needs out_dim > 0");
            out = {l.out_dim, 1, 1};
            params = static_cast<std::size_t>(l.out_dim) * in.numel() + l.out_dim;
          }
        },
        layer);
    shapes_.push_back(out);
    offsets_.push_back(offsets_.back() + params);
  }
}

Architecture desk_architecture(std::uint32_t embed_dim, std::uint32_t input_size) {
  std::vector<Layer> layers{ConvLayer{8, 3, 1}, ReluLayer{}, MaxPoolLayer{2, 2},
                            ConvLayer{16, 3, 1}, ReluLayer{}, MaxPoolLayer{2, 2}};
  if (embed_dim > 0) layers.push_back(DenseLayer{embed_dim});
  return Architecture({1, input_size, input_size}, std::move(layers));
}

SiameseModel init_model(const Architecture& arch, std::uint64_t seed) {
  SiameseModel m;
  m.arch = arch;
  m.weights.assign(arch.total_params(), 0.0f);
  Rng rng(seed);
  for (std::size_t li = 0; li < arch.layers().size(); ++li) {
    const TensorShape& is = arch.input_of(li);
    const TensorShape& os = arch.output_of(li);
    float* p = m.weights.data() + arch.param_offset(li);
    std::size_t count = 0;
    double fan_in = 0, fan_out = 0;
    if (const auto* c = std::get_if<ConvLayer>(&arch.layers()[li])) {
      const double kk = static_cast<double>(c->kernel) * c->kernel;
      fan_in = is.channels * kk;
      fan_out = c->out_channels * kk;
      count = static_cast<std::size_t>(c->out_channels) * is.channels * c->kernel * c->kernel;
    } else if (std::holds_alternative<DenseLayer>(arch.layers()[li])) {
      fan_in = static_cast<double>(is.numel());
      fan_out = static_cast<double>(os.numel());
      count = is.numel() * os.numel();
    }
    const double limit = count ? std::sqrt(6.0 / (fan_in + fan_out)) : 0.0;
    for (std::size_t i = 0; i < count; ++i) p[i] = static_cast<float>(rng.uniform(-limit, limit));
  }
  // Larger distance means lower similarity from the first step on; a
  // positive start lets SGD collapse all distances instead.
  m.head_w = -1.0f;
  m.head_b = 0.0f;
  return m;
}

namespace {

void check_patch(const SiameseModel& model, const GrayImage& patch) {
  const TensorShape& in = model.input();
  if (in.channels != 1 || patch.width() != static_cast<int>(in.width) ||
      patch.height() != static_cast<int>(in.height)) {
    throw InputError("patch is " + std::to_string(patch.width()) + "x" +
                     std::to_string(patch.height()) + ", model expects " +
                     std::to_string(in.width) + "x" + std::to_string(in.height));
  }
}

constexpr double kSqrtClamp = 1e-12;

template <class T>
T logistic(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <class T>
T bce_with_logit(T z, int label) {
  return std::max(z, T(0)) - T(label) * z + std::log1p(std::exp(-std::abs(z)));
}

// Evaluation of one pair at scalar precision T. Training runs in double;
// grad_check evaluates its finite differences in long double so that loss
// roundoff stays far below the gradients being compared.
template <class T>
struct PairEngine {
  const Architecture& arch;
  detail::Trace<T> ta{}, tb{};

  // Returns the loss; when `grad` is non-empty accumulates scale*dL/dtheta
  // into it. `theta` holds the layer weights followed by head_w, head_b.
  T run(std::span<const T> theta, const PairSample& s, std::span<T> grad, T scale,
        double* distance = nullptr) {
    const std::size_t n = arch.total_params();
    const std::span<const T> w = theta.first(n);
    const T hw = theta[n];
    const T hb = theta[n + 1];
    ta.acts.resize(1);
    tb.acts.resize(1);
    detail::load_input(s.a, ta.acts[0]);
    detail::load_input(s.b, tb.acts[0]);
    detail::forward<T>(arch, w, ta);
    detail::forward<T>(arch, w, tb);
    const std::vector<T>& ea = ta.acts.back();
    const std::vector<T>& eb = tb.acts.back();
    T sq = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) sq += (ea[i] - eb[i]) * (ea[i] - eb[i]);
    const T d = std::sqrt(sq);
    if (distance != nullptr) *distance = static_cast<double>(d);
    const T z = hw * d + hb;
    const T loss = bce_with_logit(z, s.label);
    if (grad.empty()) return loss;

    const T dz = (logistic(z) - T(s.label)) * scale;
    grad[n] += dz * d;
    grad[n + 1] += dz;
    const T dd = dz * hw;
    const T ds = dd * T(0.5) / std::sqrt(std::max(sq, T(kSqrtClamp)));
    std::vector<T> ga(ea.size()), gb(ea.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
      ga[i] = T(2) * ds * (ea[i] - eb[i]);
      gb[i] = -ga[i];
    }
    detail::backward<T>(arch, w, ta, std::move(ga), grad.first(n));
    detail::backward<T>(arch, w, tb, std::move(gb), grad.first(n));
    return loss;
  }
};

std::vector<double> theta_of(const SiameseModel& m) {
  std::vector<double> theta(m.weights.begin(), m.weights.end());
  theta.push_back(m.head_w);
  theta.push_back(m.head_b);
  return theta;
}

}  // namespace

std::vector<float> embed(const SiameseModel& model, const GrayImage& patch) {
  check_patch(model, patch);
  detail::Trace<float> tr;
  tr.acts.resize(1);
  detail::load_input(patch, tr.acts[0]);
  detail::forward<float>(model.arch, model.weights, tr);
  return std::move(tr.acts.back());
}

std::vector<float> embed_resized(const SiameseModel& model, const GrayImage& patch) {
  const TensorShape& in = model.input();
  return embed(model, resize_bilinear(patch, static_cast<int>(in.width),
                                      static_cast<int>(in.height)));
}

double pair_loss(double logit, int label) {
  // -[y ln s(z) + (1-y) ln(1-s(z))] = max(z,0) - y z + ln(1 + e^-|z|)
  return bce_with_logit(logit, label);
}

PairLossTerm score_embeddings(const SiameseModel& model, std::span<const float> a,
                              std::span<const float> b, std::optional<int> label) {
  if (a.size() != b.size()) throw InputError("embedding sizes differ");
  PairLossTerm t;
  t.distance = std::sqrt(squared_l2(a, b));
  t.logit = static_cast<double>(model.head_w) * t.distance + static_cast<double>(model.head_b);
  t.prob = logistic(t.logit);
  if (label) {
    if (*label != 0 && *label != 1) throw InputError("pair label must be 0 or 1");
    t.label = label;
    t.loss = pair_loss(t.logit, *label);
  }
  return t;
}

PairLossTerm pair_distance(const SiameseModel& model, const GrayImage& a, const GrayImage& b,
                           std::optional<int> label) {
  const auto ea = embed(model, a);
  const auto eb = embed(model, b);
  return score_embeddings(model, ea, eb, label);
}

GradCheckReport grad_check(const SiameseModel& model, const PairSample& sample, double eps,
                           const GradCheckOptions& opts) {
  if (!(eps >= 1e-5 && eps <= 1e-3)) throw ParameterError("grad_check step must lie in [1e-5, 1e-3]");
  check_patch(model, sample.a);
  check_patch(model, sample.b);

  PairEngine<double> engine{model.arch};
  const std::vector<double> theta = theta_of(model);
  std::vector<double> grad(theta.size(), 0.0);
  GradCheckReport report;
  engine.run(theta, sample, grad, 1.0, &report.distance);
  if (report.distance < opts.kink_distance) {
    report.skipped = true;
    report.reason = "pair distance " + std::to_string(report.distance) +
                    " is at the non-differentiable sqrt point";
    return report;
  }

  const std::size_t n = model.arch.total_params();
  std::vector<std::size_t> indices;
  if (opts.scope == GradScope::HeadOnly) {
    indices = {n, n + 1};
  } else {
    indices.resize(theta.size());
    std::iota(indices.begin(), indices.end(), 0);
    if (opts.max_params > 0 && opts.max_params < indices.size()) {
      Rng rng(opts.seed);
      rng.shuffle(indices);
      indices.resize(opts.max_params);
      std::sort(indices.begin(), indices.end());
    }
  }

  PairEngine<long double> fd_engine{model.arch};
  std::vector<long double> theta_x(theta.begin(), theta.end());
  const auto h = static_cast<long double>(eps);
  for (std::size_t i : indices) {
    const long double saved = theta_x[i];
    theta_x[i] = saved + h;
    const long double up = fd_engine.run(theta_x, sample, {}, 1.0L);
    theta_x[i] = saved - h;
    const long double down = fd_engine.run(theta_x, sample, {}, 1.0L);
    theta_x[i] = saved;
    const auto fd = static_cast<double>((up - down) / (2.0L * h));
    const double err = std::abs(grad[i] - fd) / std::max(1e-8, std::abs(grad[i]) + std::abs(fd));
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
  }
  return report;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ParameterError("lr0 must be > 0");
  if (!(decay > 0 && decay <= 1)) throw ParameterError("decay must lie in (0,1]");
  if (!(neg_ratio > 0)) throw ParameterError("neg_ratio must be > 0");
  if (!(split > 0 && split < 1)) throw ParameterError("split must lie in (0,1)");
  if (epochs < 0) throw ParameterError("epochs must be >= 0");
  if (batch == 0) throw ParameterError("batch must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw ParameterError("momentum must lie in [0,1)");
}

PairSplit make_pairs(std::span<const LabeledPatch> dataset, const TrainConfig& cfg,
                     std::optional<std::size_t> positives) {
  cfg.validate();
  std::map<std::string, std::size_t> per_class;
  for (const auto& p : dataset) ++per_class[p.label];
  if (per_class.size() < 2) throw CountError("pair construction needs at least 2 classes");
  for (const auto& [label, count] : per_class) {
    if (count < 2) throw CountError("class '" + label + "' has fewer than 2 samples");
  }

  std::vector<PairIndex> pos, neg;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = i + 1; j < dataset.size(); ++j) {
      if (dataset[i].label == dataset[j].label) {
        pos.push_back({i, j, 1});
      } else {
        neg.push_back({i, j, 0});
      }
    }
  }
  const std::size_t want_pos = positives.value_or(pos.size());
  if (want_pos > pos.size()) {
    throw CountError("requested " + std::to_string(want_pos) + " similar pairs, only " +
                     std::to_string(pos.size()) + " exist");
  }
  const auto want_neg = static_cast<std::size_t>(std::llround(cfg.neg_ratio * want_pos));
  if (want_neg > neg.size()) {
    throw CountError("requested " + std::to_string(want_neg) + " non-similar pairs, only " +
                     std::to_string(neg.size()) + " exist");
  }

  Rng rng(cfg.seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<PairIndex> all(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(want_pos));
  all.insert(all.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(want_neg));
  rng.shuffle(all);

  const auto n_train = static_cast<std::size_t>(std::floor(cfg.split * all.size() + 1e-9));
  PairSplit split;
  split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return split;
}

std::vector<PairSample> materialize(std::span<const LabeledPatch> dataset,
                                    std::span<const PairIndex> pairs) {
  std::vector<PairSample> out;
  out.reserve(pairs.size());
  for (const PairIndex& p : pairs) {
    out.push_back({dataset[p.a].patch, dataset[p.b].patch, p.label});
  }
  return out;
}

TrainResult train(const SiameseModel& model, std::span<const PairSample> pairs,
                  const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result{model, {}};
  if (cfg.epochs == 0 || pairs.empty()) return result;
  for (const PairSample& s : pairs) {
    check_patch(model, s.a);
    check_patch(model, s.b);
  }

  if (cfg.verify_gradients) {
    for (const PairSample& s : pairs) {
      const GradCheckReport r = grad_check(model, s, 1e-5, {GradScope::All, 200, cfg.seed});
      if (r.skipped) continue;
      if (r.max_rel_error >= 1e-4) {
        throw GradientCheckError("gradient check failed before training: max relative error " +
                                 std::to_string(r.max_rel_error));
      }
      break;
    }
  }

  const std::size_t n = model.arch.total_params();
  std::vector<double> theta = theta_of(model);
  std::vector<double> grad(theta.size()), velocity(theta.size(), 0.0);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  PairEngine<double> engine{model.arch};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr0 * std::pow(cfg.decay, epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        loss_sum += engine.run(theta, pairs[order[i]], grad, scale);
      }
      for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - lr * grad[i];
        theta[i] += velocity[i];
      }
    }
    const double mean = loss_sum / static_cast<double>(pairs.size());
    if (!std::isfinite(mean)) {
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                       ": non-finite loss");
    }
    result.epoch_loss.push_back(mean);
  }

  for (std::size_t i = 0; i < n; ++i) result.model.weights[i] = static_cast<float>(theta[i]);
  result.model.head_w = static_cast<float>(theta[n]);
  result.model.head_b = static_cast<float>(theta[n + 1]);
  return result;
}

namespace {

constexpr char kModelMagic[] = "SIAM";
constexpr std::uint16_t kModelVersion = 1;

enum class LayerTag : std::uint8_t { Input = 0, Conv = 1, Relu = 2, MaxPool = 3, Dense = 4 };

}  // namespace

std::vector<std::uint8_t> encode_model(const SiameseModel& model) {
  binio::Writer w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  w.u16(static_cast<std::uint16_t>(model.arch.layers().size() + 1));
  const TensorShape& in = model.input();
  w.u8(static_cast<std::uint8_t>(LayerTag::Input));
  w.u32(in.channels);
  w.u32(in.height);
  w.u32(in.width);
  for (const Layer& layer : model.arch.layers()) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::Conv));
            w.u32(l.out_channels);
            w.u32(l.kernel);
            w.u32(l.stride);
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::Relu));
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            w.u8(static_cast<std::uint8_t>(LayerTag::MaxPool));
            w.u32(l.window);
            w.u32(l.stride);
          } else {
            w.u8(static_cast<std::uint8_t>(LayerTag::Dense));
            w.u32(l.out_dim);
          }
        },
        layer);
  }
  w.u32(static_cast<std::uint32_t>(model.embed_dim()));
  for (float v : model.weights) w.f32(v);
  w.f32(model.head_w);
  w.f32(model.head_b);
  return w.take();
}

SiameseModel decode_model(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4) != std::string_view(kModelMagic, 4)) throw FormatError("bad model magic");
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw FormatError("unsupported model version " + std::to_string(version));
  }
  const std::uint16_t count = r.u16();
  if (count < 1 || r.u8() != static_cast<std::uint8_t>(LayerTag::Input)) {
    throw FormatError("model must start with an input descriptor");
  }
  TensorShape input{r.u32(), r.u32(), r.u32()};
  std::vector<Layer> layers;
  for (std::uint16_t i = 1; i < count; ++i) {
    switch (static_cast<LayerTag>(r.u8())) {
      case LayerTag::Conv: {
        const auto out = r.u32();
        const auto k = r.u32();
        const auto s = r.u32();
        layers.emplace_back(ConvLayer{out, k, s});
        break;
      }
      case LayerTag::Relu:
        layers.emplace_back(ReluLayer{});
        break;
      case LayerTag::MaxPool: {
        const auto win = r.u32();
        const auto s = r.u32();
        layers.emplace_back(MaxPoolLayer{win, s});
        break;
      }
      case LayerTag::Dense:
        layers.emplace_back(DenseLayer{r.u32()});
        break;
      default:
        throw FormatError("unknown layer tag");
    }
  }
  SiameseModel m;
  try {
    m.arch = Architecture(input, std::move(layers));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("layer shapes do not chain: ") + e.what());
  }
  const std::uint32_t dim = r.u32();
  if (dim != m.arch.embed_dim()) {
    throw FormatError("declared embed_dim " + std::to_string(dim) + " does not match layers (" +
                      std::to_string(m.arch.embed_dim()) + ")");
  }
  const std::size_t expected = (m.arch.total_params() + 2) * 4;
  if (r.remaining() != expected) {
    throw FormatError("weight payload is " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(expected));
  }
  m.weights.resize(m.arch.total_params());
  for (float& v : m.weights) v = r.f32();
  m.head_w = r.f32();
  m.head_b = r.f32();
  return m;
}

void save_model(const SiameseModel& model, const std::filesystem::path& path) {
  binio::write_file(path, encode_model(model));
}

SiameseModel load_model(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return decode_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<PairListEntry> read_pair_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PairListEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (tsv::skippable(line)) continue;
    const auto f = tsv::split(line);
    const auto label = f.size() == 3 ? tsv::to_int(f[2], "label") : -1;
    if (f.size() != 3 || (label != 0 && label != 1)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected path_a<TAB>path_b<TAB>{0,1}");
    }
    out.push_back({std::string(f[0]), std::string(f[1]), static_cast<int>(label)});
  }
  return out;
}

void write_pair_list(std::span<const PairListEntry> pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << p.path_a << '\t' << p.path_b << '\t' << p.label << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace docspot
