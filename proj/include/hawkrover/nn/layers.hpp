#ifndef HAWKROVER_NN_LAYERS_HPP
#define HAWKROVER_NN_LAYERS_HPP

// Fixed layer set with hand-written backward passes. Forward calls are const and
// hand back whatever the backward pass needs in a cache object, so one layer can
// be evaluated for many inputs before any gradient is taken. Backward calls
// accumulate (+=) into the parameter gradients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hawkrover/error.hpp"
#include "hawkrover/nn/tensor.hpp"

namespace hawkrover::nn {

// ---------------------------------------------------------------- dense

class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out) : in_(in), out_(out), weight_({out, in}), bias_({out}) {}

  void init(std::mt19937_64& rng) {
    glorot_uniform(weight_.value, in_, out_, rng);
    bias_.value.fill(0.0);
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  std::vector<double> forward(std::span<const double> x) const {
    require(x.size() == in_, Errc::shape_mismatch, "dense input size");
    std::vector<double> y(bias_.value.storage());
    const double* w = weight_.value.data();
    for (std::size_t o = 0; o < out_; ++o) {
      const double* row = w + o * in_;
      double acc = 0.0;
      for (std::size_t i = 0; i < in_; ++i) acc += row[i] * x[i];
      y[o] += acc;
    }
    return y;
  }

  /// `x` is the input the forward pass saw.
  std::vector<double> backward(std::span<const double> x, std::span<const double> dy) {
    require(dy.size() == out_ && x.size() == in_, Errc::shape_mismatch, "dense backward size");
    std::vector<double> dx(in_, 0.0);
    const double* w = weight_.value.data();
    double* gw = weight_.grad.data();
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dy[o];
      bias_.grad[o] += g;
      if (g == 0.0) continue;
      const double* row = w + o * in_;
      double* grow = gw + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        grow[i] += g * x[i];
        dx[i] += g * row[i];
      }
    }
    return dx;
  }

  void collect(ParameterList& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_});
    out.push_back({prefix + ".bias", &bias_});
  }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Parameter weight_;  // [out, in]
  Parameter bias_;    // [out]
};

// ---------------------------------------------------------------- relu

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
  return y;
}

inline std::vector<double> relu(std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  return y;
}

/// Subgradient 0 at x == 0.
inline void relu_backward_inplace(std::span<const double> x, std::span<double> dy) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) dy[i] = 0.0;
  }
}

// ---------------------------------------------------------------- conv2d

struct Conv2dCache {
  Tensor padded;  // [C, H + 2p, W + 2p]
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Cross-correlation with zero padding.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
         std::size_t stride = 1, std::size_t padding = 0)
      : in_(in_channels), out_(out_channels), kh_(kernel_h), kw_(kernel_w), stride_(stride), pad_(padding),
        kernel_({out_channels, in_channels, kernel_h, kernel_w}), bias_({out_channels}) {
    require(stride >= 1, Errc::invalid_argument, "conv stride must be >= 1");
  }

  void init(std::mt19937_64& rng) {
    glorot_uniform(kernel_.value, in_ * kh_ * kw_, out_ * kh_ * kw_, rng);
    bias_.value.fill(0.0);
  }

  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }

  std::vector<std::size_t> output_shape(std::size_t h, std::size_t w) const {
    require(kh_ <= h + 2 * pad_ && kw_ <= w + 2 * pad_, Errc::shape_mismatch, "kernel larger than padded input");
    return {out_, (h + 2 * pad_ - kh_) / stride_ + 1, (w + 2 * pad_ - kw_) / stride_ + 1};
  }

  Tensor forward(const Tensor& x, Conv2dCache* cache = nullptr) const {
    require(x.rank() == 3 && x.dim(0) == in_, Errc::shape_mismatch, "conv2d input must be [C,H,W]");
    const std::size_t h = x.dim(1), w = x.dim(2);
    const auto os = output_shape(h, w);
    const std::size_t oh = os[1], ow = os[2];
    const std::size_t ph = h + 2 * pad_, pw = w + 2 * pad_;

    Conv2dCache local;
    Conv2dCache& c = cache ? *cache : local;
    c.height = h;
    c.width = w;
    c.padded = Tensor({in_, ph, pw});
    for (std::size_t ch = 0; ch < in_; ++ch) {
      for (std::size_t r = 0; r < h; ++r) {
        const double* src = x.data() + (ch * h + r) * w;
        std::copy(src, src + w, c.padded.data() + (ch * ph + r + pad_) * pw + pad_);
      }
    }

    Tensor y({out_, oh, ow});
    const double* k = kernel_.value.data();
    const double* p = c.padded.data();
    for (std::size_t f = 0; f < out_; ++f) {
      double* yf = y.data() + f * oh * ow;
      std::fill(yf, yf + oh * ow, bias_.value[f]);
      for (std::size_t ch = 0; ch < in_; ++ch) {
        for (std::size_t ki = 0; ki < kh_; ++ki) {
          for (std::size_t kj = 0; kj < kw_; ++kj) {
            const double wv = k[((f * in_ + ch) * kh_ + ki) * kw_ + kj];
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const double* prow = p + (ch * ph + oy * stride_ + ki) * pw + kj;
              double* yrow = yf + oy * ow;
              if (stride_ == 1) {
                for (std::size_t ox = 0; ox < ow; ++ox) yrow[ox] += wv * prow[ox];
              } else {
                for (std::size_t ox = 0; ox < ow; ++ox) yrow[ox] += wv * prow[ox * stride_];
              }
            }
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Conv2dCache& c, const Tensor& dy) {
    const std::size_t oh = dy.dim(1), ow = dy.dim(2);
    const std::size_t ph = c.padded.dim(1), pw = c.padded.dim(2);
    require(dy.dim(0) == out_, Errc::shape_mismatch, "conv2d backward channels");
    Tensor dp({in_, ph, pw});
    const double* k = kernel_.value.data();
    double* gk = kernel_.grad.data();
    const double* p = c.padded.data();
    for (std::size_t f = 0; f < out_; ++f) {
      const double* dyf = dy.data() + f * oh * ow;
      double bsum = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) bsum += dyf[i];
      bias_.grad[f] += bsum;
      for (std::size_t ch = 0; ch < in_; ++ch) {
        for (std::size_t ki = 0; ki < kh_; ++ki) {
          for (std::size_t kj = 0; kj < kw_; ++kj) {
            const std::size_t kidx = ((f * in_ + ch) * kh_ + ki) * kw_ + kj;
            const double wv = k[kidx];
            double gacc = 0.0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::size_t base = (ch * ph + oy * stride_ + ki) * pw + kj;
              const double* prow = p + base;
              double* dprow = dp.data() + base;
              const double* dyrow = dyf + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                gacc += dyrow[ox] * prow[ox * stride_];
                dprow[ox * stride_] += wv * dyrow[ox];
              }
            }
            gk[kidx] += gacc;
          }
        }
      }
    }
    Tensor dx({in_, c.height, c.width});
    for (std::size_t ch = 0; ch < in_; ++ch) {
      for (std::size_t r = 0; r < c.height; ++r) {
        const double* src = dp.data() + (ch * ph + r + pad_) * pw + pad_;
        std::copy(src, src + c.width, dx.data() + (ch * c.height + r) * c.width);
      }
    }
    return dx;
  }

  void collect(ParameterList& out, const std::string& prefix) {
    out.push_back({prefix + ".kernel", &kernel_});
    out.push_back({prefix + ".bias", &bias_});
  }

 private:
  std::size_t in_ = 0, out_ = 0, kh_ = 0, kw_ = 0, stride_ = 1, pad_ = 0;
  Parameter kernel_;  // [F, C, kH, kW]
  Parameter bias_;    // [F]
};

/// Plain six-loop cross-correlation, kept as an independent reference.
inline Tensor conv2d_reference(const Tensor& x, const Tensor& kernels, std::span<const double> bias, std::size_t stride,
                               std::size_t padding) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t f_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  require(kernels.dim(1) == c_in, Errc::shape_mismatch, "kernel channels");
  require(kh <= h + 2 * padding && kw <= w + 2 * padding, Errc::shape_mismatch, "kernel larger than padded input");
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1, ow = (w + 2 * padding - kw) / stride + 1;
  Tensor y({f_out, oh, ow});
  for (std::size_t f = 0; f < f_out; ++f)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[f];
        for (std::size_t ch = 0; ch < c_in; ++ch)
          for (std::size_t ki = 0; ki < kh; ++ki)
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(padding);
              const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += kernels[((f * c_in + ch) * kh + ki) * kw + kj] *
                     x[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        y[(f * oh + oy) * ow + ox] = acc;
      }
  return y;
}

// ---------------------------------------------------------------- conv1d (circular)

struct Conv1dCache {
  Tensor padded;  // [C, N + k - 1]
  std::size_t length = 0;
};

/// 1-D cross-correlation over a ring: output length equals input length (odd kernel).
class Conv1dCircular {
 public:
  Conv1dCircular() = default;
  Conv1dCircular(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
      : in_(in_channels), out_(out_channels), k_(kernel), kernel_({out_channels, in_channels, kernel}),
        bias_({out_channels}) {
    require(kernel % 2 == 1, Errc::invalid_argument, "circular conv kernel must be odd");
  }

  void init(std::mt19937_64& rng) {
    glorot_uniform(kernel_.value, in_ * k_, out_ * k_, rng);
    bias_.value.fill(0.0);
  }

  Parameter& kernel() { return kernel_; }
  Parameter& bias() { return bias_; }

  Tensor forward(const Tensor& x, Conv1dCache* cache = nullptr) const {
    require(x.rank() == 2 && x.dim(0) == in_, Errc::shape_mismatch, "conv1d input must be [C,N]");
    const std::size_t n = x.dim(1);
    require(n >= k_, Errc::shape_mismatch, "ring shorter than kernel");
    const std::size_t half = k_ / 2, pn = n + k_ - 1;
    Conv1dCache local;
    Conv1dCache& c = cache ? *cache : local;
    c.length = n;
    c.padded = Tensor({in_, pn});
    for (std::size_t ch = 0; ch < in_; ++ch) {
      const double* src = x.data() + ch * n;
      double* dst = c.padded.data() + ch * pn;
      for (std::size_t i = 0; i < pn; ++i) dst[i] = src[(i + n - half) % n];
    }
    Tensor y({out_, n});
    const double* k = kernel_.value.data();
    for (std::size_t f = 0; f < out_; ++f) {
      double* yf = y.data() + f * n;
      std::fill(yf, yf + n, bias_.value[f]);
      for (std::size_t ch = 0; ch < in_; ++ch) {
        const double* p = c.padded.data() + ch * pn;
        for (std::size_t j = 0; j < k_; ++j) {
          const double wv = k[(f * in_ + ch) * k_ + j];
          const double* pj = p + j;
          for (std::size_t i = 0; i < n; ++i) yf[i] += wv * pj[i];
        }
      }
    }
    return y;
  }

  Tensor backward(const Conv1dCache& c, const Tensor& dy) {
    const std::size_t n = c.length, pn = n + k_ - 1, half = k_ / 2;
    Tensor dp({in_, pn});
    const double* k = kernel_.value.data();
    double* gk = kernel_.grad.data();
    for (std::size_t f = 0; f < out_; ++f) {
      const double* dyf = dy.data() + f * n;
      double bsum = 0.0;
      for (std::size_t i = 0; i < n; ++i) bsum += dyf[i];
      bias_.grad[f] += bsum;
      for (std::size_t ch = 0; ch < in_; ++ch) {
        const double* p = c.padded.data() + ch * pn;
        double* dpc = dp.data() + ch * pn;
        for (std::size_t j = 0; j < k_; ++j) {
          const std::size_t kidx = (f * in_ + ch) * k_ + j;
          const double wv = k[kidx];
          double gacc = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            gacc += dyf[i] * p[i + j];
            dpc[i + j] += wv * dyf[i];
          }
          gk[kidx] += gacc;
        }
      }
    }
    Tensor dx({in_, n});
    for (std::size_t ch = 0; ch < in_; ++ch) {
      const double* src = dp.data() + ch * pn;
      double* dst = dx.data() + ch * n;
      for (std::size_t i = 0; i < pn; ++i) dst[(i + n - half) % n] += src[i];
    }
    return dx;
  }

  void collect(ParameterList& out, const std::string& prefix) {
    out.push_back({prefix + ".kernel", &kernel_});
    out.push_back({prefix + ".bias", &bias_});
  }

 private:
  std::size_t in_ = 0, out_ = 0, k_ = 1;
  Parameter kernel_;  // [F, C, k]
  Parameter bias_;
};

// ---------------------------------------------------------------- pooling

struct PoolCache {
  std::vector<std::size_t> argmax;  // flat input index per output element
  std::vector<std::size_t> in_shape;
};

/// Max over window x window patches; ties go to the first index in row-major order.
inline Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride, PoolCache* cache = nullptr) {
  require(x.rank() == 3, Errc::shape_mismatch, "maxpool2d input must be [C,H,W]");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(window >= 1 && stride >= 1 && window <= h && window <= w, Errc::shape_mismatch, "pool window too large");
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor y({c, oh, ow});
  if (cache) {
    cache->argmax.assign(y.size(), 0);
    cache->in_shape = x.shape();
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + oy * stride) * w + ox * stride;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (ch * h + oy * stride + dy) * w + ox * stride + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        y[o] = x[best];
        if (cache) cache->argmax[o] = best;
      }
  return y;
}

/// Max over windows along the last axis of [C, N].
inline Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride, PoolCache* cache = nullptr) {
  require(x.rank() == 2, Errc::shape_mismatch, "maxpool1d input must be [C,N]");
  const std::size_t c = x.dim(0), n = x.dim(1);
  require(window >= 1 && stride >= 1 && window <= n, Errc::shape_mismatch, "pool window too large");
  const std::size_t on = (n - window) / stride + 1;
  Tensor y({c, on});
  if (cache) {
    cache->argmax.assign(y.size(), 0);
    cache->in_shape = x.shape();
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t o = 0; o < on; ++o) {
      std::size_t best = ch * n + o * stride;
      for (std::size_t d = 1; d < window; ++d) {
        const std::size_t idx = ch * n + o * stride + d;
        if (x[idx] > x[best]) best = idx;
      }
      y[ch * on + o] = x[best];
      if (cache) cache->argmax[ch * on + o] = best;
    }
  return y;
}

/// Max over the whole ring, [C, N] -> [C].
inline Tensor global_maxpool1d(const Tensor& x, PoolCache* cache = nullptr) {
  require(x.rank() == 2, Errc::shape_mismatch, "global maxpool input must be [C,N]");
  Tensor pooled = maxpool1d(x, x.dim(1), 1, cache);
  return Tensor({x.dim(0)}, pooled.storage());
}

/// Routes each output gradient to the input element that won the max.
inline Tensor maxpool_backward(const PoolCache& cache, const Tensor& dy) {
  Tensor dx(cache.in_shape);
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) dx[cache.argmax[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------- recurrent cells

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace detail {
// y += M x for row-major M [rows, cols]
inline void matvec_add(const double* m, std::size_t rows, std::size_t cols, std::span<const double> x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}
// G += g x^T, dx += M^T g
inline void outer_backward(const double* m, double* gm, std::size_t rows, std::size_t cols, std::span<const double> g,
                           std::span<const double> x, std::span<double> dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = m + r * cols;
    double* grow = gm + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      grow[c] += gr * x[c];
      dx[c] += gr * row[c];
    }
  }
}
}  // namespace detail

struct RnnCache {
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> hs;  // hs[0] = initial state, hs[t + 1] = state after step t
};

struct SequenceGrads {
  std::vector<std::vector<double>> dxs;
  std::vector<double> dh0;
  std::vector<double> dc0;  // LSTM only
};

/// Elman cell: h' = tanh(Wx x + Wh h + b).
class RnnCell {
 public:
  RnnCell() = default;
  RnnCell(std::size_t input, std::size_t hidden)
      : input_(input), hidden_(hidden), wx_({hidden, input}), wh_({hidden, hidden}), b_({hidden}) {}

  void init(std::mt19937_64& rng) {
    glorot_uniform(wx_.value, input_, hidden_, rng);
    glorot_uniform(wh_.value, hidden_, hidden_, rng);
    b_.value.fill(0.0);
  }

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  Parameter& wx() { return wx_; }
  Parameter& wh() { return wh_; }
  Parameter& bias() { return b_; }

  std::vector<double> step(std::span<const double> x, std::span<const double> h) const {
    require(x.size() == input_ && h.size() == hidden_, Errc::shape_mismatch, "rnn step dimensions");
    std::vector<double> z(b_.value.storage());
    detail::matvec_add(wx_.value.data(), hidden_, input_, x, z.data());
    detail::matvec_add(wh_.value.data(), hidden_, hidden_, h, z.data());
    for (double& v : z) v = std::tanh(v);
    return z;
  }

  /// Runs the sequence; returns the final hidden state.
  std::vector<double> run(const std::vector<std::vector<double>>& xs, std::span<const double> h0,
                          RnnCache* cache = nullptr) const {
    std::vector<double> h(h0.begin(), h0.end());
    if (cache) {
      cache->xs = xs;
      cache->hs.assign(1, h);
    }
    for (const auto& x : xs) {
      h = step(x, h);
      if (cache) cache->hs.push_back(h);
    }
    return h;
  }

  /// Backpropagation through time. dhs[t] is dLoss/dh after step t (may be empty).
  SequenceGrads backward(const RnnCache& c, const std::vector<std::vector<double>>& dhs) {
    const std::size_t steps = c.xs.size();
    SequenceGrads g;
    g.dxs.assign(steps, std::vector<double>(input_, 0.0));
    std::vector<double> dh_next(hidden_, 0.0);
    std::vector<double> dz(hidden_);
    for (std::size_t s = steps; s-- > 0;) {
      const auto& hn = c.hs[s + 1];
      for (std::size_t j = 0; j < hidden_; ++j) {
        const double dh = dh_next[j] + (dhs.size() > s && !dhs[s].empty() ? dhs[s][j] : 0.0);
        dz[j] = dh * (1.0 - hn[j] * hn[j]);
        b_.grad[j] += dz[j];
      }
      detail::outer_backward(wx_.value.data(), wx_.grad.data(), hidden_, input_, dz, c.xs[s], g.dxs[s]);
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      detail::outer_backward(wh_.value.data(), wh_.grad.data(), hidden_, hidden_, dz, c.hs[s], dh_next);
    }
    g.dh0 = dh_next;
    return g;
  }

  void collect(ParameterList& out, const std::string& prefix) {
    out.push_back({prefix + ".wx", &wx_});
    out.push_back({prefix + ".wh", &wh_});
    out.push_back({prefix + ".bias", &b_});
  }

 private:
  std::size_t input_ = 0, hidden_ = 0;
  Parameter wx_, wh_, b_;
};

struct LstmStepCache {
  std::vector<double> x, h, c;           // inputs to the step
  std::vector<double> i, f, g, o;        // gate activations
  std::vector<double> c_next, tanh_c;    // new cell state and its tanh
};

struct LstmCache {
  std::vector<LstmStepCache> steps;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

/// Standard LSTM cell; gate rows are stacked as input, forget, candidate, output.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input, std::size_t hidden)
      : input_(input), hidden_(hidden), w_({4 * hidden, input}), u_({4 * hidden, hidden}), b_({4 * hidden}) {}

  void init(std::mt19937_64& rng) {
    glorot_uniform(w_.value, input_, 4 * hidden_, rng);
    glorot_uniform(u_.value, hidden_, 4 * hidden_, rng);
    b_.value.fill(0.0);
  }

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  Parameter& w() { return w_; }
  Parameter& u() { return u_; }
  Parameter& bias() { return b_; }

  LstmState step(std::span<const double> x, std::span<const double> h, std::span<const double> c,
                 LstmStepCache* cache = nullptr) const {
    require(x.size() == input_ && h.size() == hidden_ && c.size() == hidden_, Errc::shape_mismatch,
            "lstm step dimensions");
    const std::size_t H = hidden_;
    std::vector<double> z(b_.value.storage());
    detail::matvec_add(w_.value.data(), 4 * H, input_, x, z.data());
    detail::matvec_add(u_.value.data(), 4 * H, H, h, z.data());
    LstmStepCache local;
    LstmStepCache& k = cache ? *cache : local;
    k.x.assign(x.begin(), x.end());
    k.h.assign(h.begin(), h.end());
    k.c.assign(c.begin(), c.end());
    k.i.resize(H), k.f.resize(H), k.g.resize(H), k.o.resize(H), k.c_next.resize(H), k.tanh_c.resize(H);
    LstmState out{std::vector<double>(H), std::vector<double>(H)};
    for (std::size_t j = 0; j < H; ++j) {
      k.i[j] = sigmoid(z[j]);
      k.f[j] = sigmoid(z[H + j]);
      k.g[j] = std::tanh(z[2 * H + j]);
      k.o[j] = sigmoid(z[3 * H + j]);
      k.c_next[j] = k.f[j] * c[j] + k.i[j] * k.g[j];
      k.tanh_c[j] = std::tanh(k.c_next[j]);
      out.c[j] = k.c_next[j];
      out.h[j] = k.o[j] * k.tanh_c[j];
    }
    return out;
  }

  LstmState run(const std::vector<std::vector<double>>& xs, const LstmState& init, LstmCache* cache = nullptr) const {
    LstmState s = init;
    if (cache) cache->steps.assign(xs.size(), {});
    for (std::size_t t = 0; t < xs.size(); ++t) s = step(xs[t], s.h, s.c, cache ? &cache->steps[t] : nullptr);
    return s;
  }

  /// dhs[t] is dLoss/dh after step t (may be empty); dc_last seeds the final cell state.
  SequenceGrads backward(const LstmCache& cache, const std::vector<std::vector<double>>& dhs,
                         std::span<const double> dc_last = {}) {
    const std::size_t H = hidden_;
    const std::size_t steps = cache.steps.size();
    SequenceGrads g;
    g.dxs.assign(steps, std::vector<double>(input_, 0.0));
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(4 * H);
    if (!dc_last.empty()) dc_next.assign(dc_last.begin(), dc_last.end());
    for (std::size_t s = steps; s-- > 0;) {
      const auto& k = cache.steps[s];
      for (std::size_t j = 0; j < H; ++j) {
        const double dh = dh_next[j] + (dhs.size() > s && !dhs[s].empty() ? dhs[s][j] : 0.0);
        const double d_o = dh * k.tanh_c[j];
        const double dc = dc_next[j] + dh * k.o[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
        const double d_i = dc * k.g[j];
        const double d_g = dc * k.i[j];
        const double d_f = dc * k.c[j];
        dc_next[j] = dc * k.f[j];
        dz[j] = d_i * k.i[j] * (1.0 - k.i[j]);
        dz[H + j] = d_f * k.f[j] * (1.0 - k.f[j]);
        dz[2 * H + j] = d_g * (1.0 - k.g[j] * k.g[j]);
        dz[3 * H + j] = d_o * k.o[j] * (1.0 - k.o[j]);
      }
      for (std::size_t r = 0; r < 4 * H; ++r) b_.grad[r] += dz[r];
      detail::outer_backward(w_.value.data(), w_.grad.data(), 4 * H, input_, dz, k.x, g.dxs[s]);
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      detail::outer_backward(u_.value.data(), u_.grad.data(), 4 * H, H, dz, k.h, dh_next);
    }
    g.dh0 = dh_next;
    g.dc0 = dc_next;
    return g;
  }

  void collect(ParameterList& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w_});
    out.push_back({prefix + ".u", &u_});
    out.push_back({prefix + ".bias", &b_});
  }

 private:
  std::size_t input_ = 0, hidden_ = 0;
  Parameter w_, u_, b_;
};

// ---------------------------------------------------------------- softmax

inline std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (double& v : p) v /= sum;
  return p;
}

struct SoftmaxLoss {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<double> grad;  // dLoss/dlogits = p - onehot
};

inline SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  require(logits.size() >= 2, Errc::invalid_argument, "softmax needs at least two classes");
  if (label >= logits.size()) fail(Errc::label_out_of_range, "label " + std::to_string(label));
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  SoftmaxLoss out;
  out.loss = std::log(sum) - (logits[label] - m);
  out.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.probs[i] = std::exp(logits[i] - m) / sum;
  out.grad = out.probs;
  out.grad[label] -= 1.0;
  return out;
}

}  // namespace hawkrover::nn

#endif  // HAWKROVER_NN_LAYERS_HPP
