#pragma once
// Forward and backward passes of the encoder, templated on the scalar type:
// float for inference, double for training and gradient checking.

#include <cstdint>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "docspot/image.hpp"
#include "docspot/siamese.hpp"

namespace docspot::detail {

template <class T>
struct Trace {
  std::vector<std::vector<T>> acts;                  // acts[0] input, acts[i+1] layer i output
  std::vector<std::vector<std::uint32_t>> argmax;    // pooling winners, per layer
};

// Ink maps to 1, blank paper to 0.
template <class T>
void load_input(const GrayImage& patch, std::vector<T>& out) {
  out.resize(patch.size());
  const auto px = patch.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    out[i] = static_cast<T>(255 - px[i]) / static_cast<T>(255);
  }
}

template <class T>
void forward(const Architecture& arch, std::span<const T> params, Trace<T>& tr) {
  const auto& layers = arch.layers();
  tr.acts.resize(layers.size() + 1);
  tr.argmax.resize(layers.size());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const TensorShape& is = arch.input_of(li);
    const TensorShape& os = arch.output_of(li);
    const std::vector<T>& in = tr.acts[li];
    std::vector<T>& out = tr.acts[li + 1];
    out.assign(os.numel(), T(0));
    const T* p = params.data() + arch.param_offset(li);

    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            const std::size_t k = layer.kernel, s = layer.stride;
            const T* bias = p + static_cast<std::size_t>(os.channels) * is.channels * k * k;
            for (std::size_t o = 0; o < os.channels; ++o) {
              T* dst = out.data() + o * os.height * os.width;
              for (std::size_t i = 0; i < os.height * os.width; ++i) dst[i] = bias[o];
              for (std::size_t c = 0; c < is.channels; ++c) {
                const T* src = in.data() + c * is.height * is.width;
                const T* w = p + (o * is.channels + c) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = w[ky * k + kx];
                    for (std::size_t y = 0; y < os.height; ++y) {
                      const T* row = src + (y * s + ky) * is.width + kx;
                      T* drow = dst + y * os.width;
                      for (std::size_t x = 0; x < os.width; ++x) drow[x] += wv * row[x * s];
                    }
                  }
                }
              }
            }
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            auto& arg = tr.argmax[li];
            arg.assign(out.size(), 0);
            const std::size_t win = layer.window, s = layer.stride;
            for (std::size_t c = 0; c < os.channels; ++c) {
              for (std::size_t y = 0; y < os.height; ++y) {
                for (std::size_t x = 0; x < os.width; ++x) {
                  std::size_t best = (c * is.height + y * s) * is.width + x * s;
                  for (std::size_t wy = 0; wy < win; ++wy) {
                    for (std::size_t wx = 0; wx < win; ++wx) {
                      const std::size_t idx = (c * is.height + y * s + wy) * is.width + x * s + wx;
                      if (in[idx] > in[best]) best = idx;
                    }
                  }
                  const std::size_t o = (c * os.height + y) * os.width + x;
                  out[o] = in[best];
                  arg[o] = static_cast<std::uint32_t>(best);
                }
              }
            }
          } else {
            const std::size_t n_in = is.numel();
            const T* bias = p + static_cast<std::size_t>(layer.out_dim) * n_in;
            for (std::size_t o = 0; o < layer.out_dim; ++o) {
              const T* w = p + o * n_in;
              T acc = bias[o];
              for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in[i];
              out[o] = acc;
            }
          }
        },
        layers[li]);
  }
}

// Accumulates dLoss/dparams into `grad` given dLoss/d(output) in `grad_out`.
template <class T>
void backward(const Architecture& arch, std::span<const T> params, const Trace<T>& tr,
              std::vector<T> grad_out, std::span<T> grad) {
  const auto& layers = arch.layers();
  std::vector<T> grad_in;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const TensorShape& is = arch.input_of(li);
    const TensorShape& os = arch.output_of(li);
    const std::vector<T>& in = tr.acts[li];
    grad_in.assign(is.numel(), T(0));
    const T* p = params.data() + arch.param_offset(li);
    T* g = grad.data() + arch.param_offset(li);
    const bool need_input_grad = li > 0;

    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            const std::size_t k = layer.kernel, s = layer.stride;
            const std::size_t wcount = static_cast<std::size_t>(os.channels) * is.channels * k * k;
            for (std::size_t o = 0; o < os.channels; ++o) {
              const T* go = grad_out.data() + o * os.height * os.width;
              T bsum = 0;
              for (std::size_t i = 0; i < os.height * os.width; ++i) bsum += go[i];
              g[wcount + o] += bsum;
              for (std::size_t c = 0; c < is.channels; ++c) {
                const T* src = in.data() + c * is.height * is.width;
                T* gsrc = grad_in.data() + c * is.height * is.width;
                const T* w = p + (o * is.channels + c) * k * k;
                T* gw = g + (o * is.channels + c) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = w[ky * k + kx];
                    T acc = 0;
                    for (std::size_t y = 0; y < os.height; ++y) {
                      const T* row = src + (y * s + ky) * is.width + kx;
                      T* grow = gsrc + (y * s + ky) * is.width + kx;
                      const T* gorow = go + y * os.width;
                      for (std::size_t x = 0; x < os.width; ++x) {
                        acc += gorow[x] * row[x * s];
                        if (need_input_grad) grow[x * s] += wv * gorow[x];
                      }
                    }
                    gw[ky * k + kx] += acc;
                  }
                }
              }
            }
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > T(0) ? grad_out[i] : T(0);
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            const auto& arg = tr.argmax[li];
            for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[arg[o]] += grad_out[o];
          } else {
            const std::size_t n_in = is.numel();
            T* gbias = g + static_cast<std::size_t>(layer.out_dim) * n_in;
            for (std::size_t o = 0; o < layer.out_dim; ++o) {
              const T go = grad_out[o];
              gbias[o] += go;
              if (go == T(0)) continue;
              const T* w = p + o * n_in;
              T* gw = g + o * n_in;
              for (std::size_t i = 0; i < n_in; ++i) {
                gw[i] += go * in[i];
                grad_in[i] += go * w[i];
              }
            }
          }
        },
        layers[li]);
    grad_out.swap(grad_in);
  }
}

}  // namespace docspot::detail
