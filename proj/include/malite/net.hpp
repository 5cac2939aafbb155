#pragma once

// MALITE-MN: a small inverted-residual CNN. Every layer is a template on the
// scalar type so the same code runs in float for training, in double for
// gradient checking, and with an instrumented scalar for operation counting.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "malite/error.hpp"
#include "malite/util.hpp"

namespace malite {

/// NHWC extent. Vectors and matrices use degenerate forms such as (1,1,1,c).
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * h * w * c;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s), data(s.size(), fill) {}

  T& at(int n, int y, int x, int c) { return data[index(n, y, x, c)]; }
  const T& at(int n, int y, int x, int c) const { return data[index(n, y, x, c)]; }
  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape.h + y) * shape.w + x) * shape.c + c;
  }
  std::size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
};

/// Accumulator type for reductions: double for float tensors.
template <class T>
using Acc = std::conditional_t<std::is_same_v<T, float>, double, T>;

template <class T>
struct Param {
  std::string name;
  std::vector<std::uint32_t> dims;  // logical shape for serialization
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param(std::string n, std::vector<std::uint32_t> d, Shape s, bool train = true)
      : name(std::move(n)), dims(std::move(d)), value(s), grad(s), trainable(train) {}
};

enum class Mode { Train, Infer };

/// Called around every conv / depthwise / fully connected forward pass with
/// done = false before and done = true after.
using LayerObserver = std::function<void(std::string_view layer, bool done)>;

inline int same_out(int extent, int stride) { return (extent + stride - 1) / stride; }

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::ShapeError, what);
}

template <class T>
void he_uniform(Tensor<T>& t, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = T((2.0 * uniform01(rng) - 1.0) * limit);
}

namespace detail {

/// TF-style same padding: extra pixel goes to the bottom/right.
struct Padding {
  int out_h, out_w, top, left, padded_h, padded_w;
};

inline Padding same_padding(int h, int w, int k, int s) {
  Padding p{};
  p.out_h = same_out(h, s);
  p.out_w = same_out(w, s);
  const int th = std::max((p.out_h - 1) * s + k - h, 0);
  const int tw = std::max((p.out_w - 1) * s + k - w, 0);
  p.top = th / 2;
  p.left = tw / 2;
  p.padded_h = h + th;
  p.padded_w = w + tw;
  return p;
}

template <class T>
Tensor<T> pad(const Tensor<T>& x, const Padding& p) {
  if (p.padded_h == x.shape.h && p.padded_w == x.shape.w) return x;
  Tensor<T> out(Shape{x.shape.n, p.padded_h, p.padded_w, x.shape.c});
  const std::size_t row = static_cast<std::size_t>(x.shape.w) * x.shape.c;
  for (int n = 0; n < x.shape.n; ++n) {
    for (int y = 0; y < x.shape.h; ++y) {
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(x.index(n, y, 0, 0)), row,
                  out.data.begin() + static_cast<std::ptrdiff_t>(out.index(n, y + p.top, p.left, 0)));
    }
  }
  return out;
}

template <class T>
Tensor<T> crop(const Tensor<T>& padded, Shape target, const Padding& p) {
  if (padded.shape == target) return padded;
  Tensor<T> out(target);
  const std::size_t row = static_cast<std::size_t>(target.w) * target.c;
  for (int n = 0; n < target.n; ++n) {
    for (int y = 0; y < target.h; ++y) {
      auto src = padded.data.begin() + static_cast<std::ptrdiff_t>(padded.index(n, y + p.top, p.left, 0));
      std::copy_n(src, row, out.data.begin() + static_cast<std::ptrdiff_t>(out.index(n, y, 0, 0)));
    }
  }
  return out;
}

}  // namespace detail

/// Dense k x k convolution, HWIO weights, same padding, no bias.
template <class T>
class Conv2d {
 public:
  Conv2d(std::string name, int cin, int cout, int k, int stride)
      : cin_(cin), cout_(cout), k_(k), stride_(stride),
        weight_(name + ".w",
                {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(cin),
                 static_cast<std::uint32_t>(cout)},
                Shape{k, k, cin, cout}),
        name_(std::move(name)) {}

  Tensor<T> forward(const Tensor<T>& x) {
    check_shape(x.shape.c == cin_, name_ + ": expected " + std::to_string(cin_) + " input channels, got " +
                                       std::to_string(x.shape.c));
    in_shape_ = x.shape;
    pad_ = detail::same_padding(x.shape.h, x.shape.w, k_, stride_);
    padded_ = detail::pad(x, pad_);
    Tensor<T> y(Shape{x.shape.n, pad_.out_h, pad_.out_w, cout_});
    const T* w = weight_.value.data.data();
    for (int n = 0; n < x.shape.n; ++n) {
      for (int oy = 0; oy < pad_.out_h; ++oy) {
        for (int ox = 0; ox < pad_.out_w; ++ox) {
          T* out = &y.at(n, oy, ox, 0);
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const T* in = &padded_.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              const T* wk = w + (static_cast<std::size_t>(ky) * k_ + kx) * cin_ * cout_;
              for (int ci = 0; ci < cin_; ++ci) {
                const T v = in[ci];
                const T* wrow = wk + static_cast<std::size_t>(ci) * cout_;
                for (int co = 0; co < cout_; ++co) out[co] += v * wrow[co];
              }
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gp(padded_.shape);
    const T* w = weight_.value.data.data();
    T* gw = weight_.grad.data.data();
    for (int n = 0; n < gy.shape.n; ++n) {
      for (int oy = 0; oy < gy.shape.h; ++oy) {
        for (int ox = 0; ox < gy.shape.w; ++ox) {
          const T* g = &gy.at(n, oy, ox, 0);
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const T* in = &padded_.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              T* gin = &gp.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              const std::size_t base = (static_cast<std::size_t>(ky) * k_ + kx) * cin_ * cout_;
              for (int ci = 0; ci < cin_; ++ci) {
                const T* wrow = w + base + static_cast<std::size_t>(ci) * cout_;
                T* gwrow = gw + base + static_cast<std::size_t>(ci) * cout_;
                const T v = in[ci];
                T acc = T(0);
                for (int co = 0; co < cout_; ++co) {
                  acc += g[co] * wrow[co];
                  gwrow[co] += v * g[co];
                }
                gin[ci] += acc;
              }
            }
          }
        }
      }
    }
    return detail::crop(gp, in_shape_, pad_);
  }

  Param<T>& weight() { return weight_; }
  const std::string& name() const { return name_; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }

 private:
  int cin_, cout_, k_, stride_;
  Param<T> weight_;
  std::string name_;
  Shape in_shape_;
  detail::Padding pad_{};
  Tensor<T> padded_;
};

/// Per-channel k x k convolution (channel multiplier 1), same padding.
template <class T>
class DepthwiseConv2d {
 public:
  DepthwiseConv2d(std::string name, int channels, int k, int stride)
      : c_(channels), k_(k), stride_(stride),
        weight_(name + ".w",
                {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(channels)},
                Shape{1, k, k, channels}),
        name_(std::move(name)) {}

  Tensor<T> forward(const Tensor<T>& x) {
    check_shape(x.shape.c == c_, name_ + ": channel mismatch");
    in_shape_ = x.shape;
    pad_ = detail::same_padding(x.shape.h, x.shape.w, k_, stride_);
    padded_ = detail::pad(x, pad_);
    Tensor<T> y(Shape{x.shape.n, pad_.out_h, pad_.out_w, c_});
    const T* w = weight_.value.data.data();
    for (int n = 0; n < x.shape.n; ++n) {
      for (int oy = 0; oy < pad_.out_h; ++oy) {
        for (int ox = 0; ox < pad_.out_w; ++ox) {
          T* out = &y.at(n, oy, ox, 0);
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const T* in = &padded_.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              const T* wk = w + (static_cast<std::size_t>(ky) * k_ + kx) * c_;
              for (int c = 0; c < c_; ++c) out[c] += in[c] * wk[c];
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gp(padded_.shape);
    const T* w = weight_.value.data.data();
    T* gw = weight_.grad.data.data();
    for (int n = 0; n < gy.shape.n; ++n) {
      for (int oy = 0; oy < gy.shape.h; ++oy) {
        for (int ox = 0; ox < gy.shape.w; ++ox) {
          const T* g = &gy.at(n, oy, ox, 0);
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const T* in = &padded_.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              T* gin = &gp.at(n, oy * stride_ + ky, ox * stride_ + kx, 0);
              const std::size_t base = (static_cast<std::size_t>(ky) * k_ + kx) * c_;
              for (int c = 0; c < c_; ++c) {
                gin[c] += g[c] * w[base + c];
                gw[base + c] += in[c] * g[c];
              }
            }
          }
        }
      }
    }
    return detail::crop(gp, in_shape_, pad_);
  }

  Param<T>& weight() { return weight_; }
  const std::string& name() const { return name_; }
  int channels() const { return c_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }

 private:
  int c_, k_, stride_;
  Param<T> weight_;
  std::string name_;
  Shape in_shape_;
  detail::Padding pad_{};
  Tensor<T> padded_;
};

template <class T>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm(const std::string& name, int channels)
      : c_(channels),
        gamma_(name + ".gamma", {static_cast<std::uint32_t>(channels)}, Shape{1, 1, 1, channels}),
        beta_(name + ".beta", {static_cast<std::uint32_t>(channels)}, Shape{1, 1, 1, channels}),
        mean_(name + ".mean", {static_cast<std::uint32_t>(channels)}, Shape{1, 1, 1, channels}, false),
        var_(name + ".var", {static_cast<std::uint32_t>(channels)}, Shape{1, 1, 1, channels}, false) {
    std::fill(gamma_.value.data.begin(), gamma_.value.data.end(), T(1));
    std::fill(var_.value.data.begin(), var_.value.data.end(), T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    check_shape(x.shape.c == c_, gamma_.name + ": channel mismatch");
    mode_ = mode;
    const std::size_t m = x.size() / static_cast<std::size_t>(c_);
    inv_std_.assign(static_cast<std::size_t>(c_), T(0));
    std::vector<T> mean(static_cast<std::size_t>(c_));
    using std::sqrt;
    if (mode == Mode::Train) {
      std::vector<Acc<T>> sum(static_cast<std::size_t>(c_), Acc<T>(0));
      for (std::size_t i = 0; i < x.size(); ++i) sum[i % c_] += Acc<T>(x.data[i]);
      std::vector<Acc<T>> mu(static_cast<std::size_t>(c_));
      for (int c = 0; c < c_; ++c) mu[c] = sum[c] / Acc<T>(static_cast<double>(m));
      std::vector<Acc<T>> sq(static_cast<std::size_t>(c_), Acc<T>(0));
      for (std::size_t i = 0; i < x.size(); ++i) {
        const Acc<T> d = Acc<T>(x.data[i]) - mu[i % c_];
        sq[i % c_] += d * d;
      }
      for (int c = 0; c < c_; ++c) {
        const Acc<T> var = sq[c] / Acc<T>(static_cast<double>(m));
        mean[c] = static_cast<T>(mu[c]);
        inv_std_[c] = static_cast<T>(Acc<T>(1.0) / sqrt(var + Acc<T>(kEps)));
        mean_.value.data[c] = T(1.0 - kMomentum) * mean_.value.data[c] + T(kMomentum) * static_cast<T>(mu[c]);
        var_.value.data[c] = T(1.0 - kMomentum) * var_.value.data[c] + T(kMomentum) * static_cast<T>(var);
      }
    } else {
      for (int c = 0; c < c_; ++c) {
        mean[c] = mean_.value.data[c];
        inv_std_[c] = T(1) / sqrt(var_.value.data[c] + T(kEps));
      }
    }
    xhat_ = Tensor<T>(x.shape);
    Tensor<T> y(x.shape);
    const T* g = gamma_.value.data.data();
    const T* b = beta_.value.data.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t c = i % c_;
      xhat_.data[i] = (x.data[i] - mean[c]) * inv_std_[c];
      y.data[i] = xhat_.data[i] * g[c] + b[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.shape);
    const T* g = gamma_.value.data.data();
    std::vector<Acc<T>> sum_g(static_cast<std::size_t>(c_), Acc<T>(0));
    std::vector<Acc<T>> sum_gx(static_cast<std::size_t>(c_), Acc<T>(0));
    for (std::size_t i = 0; i < gy.size(); ++i) {
      sum_g[i % c_] += Acc<T>(gy.data[i]);
      sum_gx[i % c_] += Acc<T>(gy.data[i]) * Acc<T>(xhat_.data[i]);
    }
    for (int c = 0; c < c_; ++c) {
      gamma_.grad.data[c] += static_cast<T>(sum_gx[c]);
      beta_.grad.data[c] += static_cast<T>(sum_g[c]);
    }
    if (mode_ == Mode::Infer) {
      for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] = gy.data[i] * g[i % c_] * inv_std_[i % c_];
      return gx;
    }
    const double m = static_cast<double>(gy.size() / static_cast<std::size_t>(c_));
    std::vector<T> mean_g(static_cast<std::size_t>(c_)), mean_gx(static_cast<std::size_t>(c_));
    for (int c = 0; c < c_; ++c) {
      mean_g[c] = static_cast<T>(sum_g[c] / Acc<T>(m));
      mean_gx[c] = static_cast<T>(sum_gx[c] / Acc<T>(m));
    }
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const std::size_t c = i % c_;
      gx.data[i] = g[c] * inv_std_[c] * (gy.data[i] - mean_g[c] - xhat_.data[i] * mean_gx[c]);
    }
    return gx;
  }

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  Param<T>& running_mean() { return mean_; }
  Param<T>& running_var() { return var_; }
  int channels() const { return c_; }

 private:
  int c_;
  Param<T> gamma_, beta_, mean_, var_;
  Mode mode_ = Mode::Infer;
  std::vector<T> inv_std_;
  Tensor<T> xhat_;
};

template <class T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x.data[i] > T(0)) {
        y.data[i] = x.data[i];
        mask_[i] = 1;
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.shape);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (mask_[i]) gx.data[i] = gy.data[i];
    }
    return gx;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

/// Fully connected layer on (n,1,1,in) tensors; weights (in, out) plus bias.
template <class T>
class Linear {
 public:
  Linear(const std::string& name, int in, int out)
      : in_(in), out_(out),
        weight_(name + ".w", {static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(out)}, Shape{1, 1, in, out}),
        bias_(name + ".b", {static_cast<std::uint32_t>(out)}, Shape{1, 1, 1, out}),
        name_(name) {}

  Tensor<T> forward(const Tensor<T>& x) {
    check_shape(x.shape.h == 1 && x.shape.w == 1 && x.shape.c == in_, name_ + ": expected (n,1,1," +
                                                                          std::to_string(in_) + ") input");
    x_ = x;
    Tensor<T> y(Shape{x.shape.n, 1, 1, out_});
    const T* w = weight_.value.data.data();
    for (int n = 0; n < x.shape.n; ++n) {
      T* out = &y.at(n, 0, 0, 0);
      for (int i = 0; i < in_; ++i) {
        const T v = x.at(n, 0, 0, i);
        for (int o = 0; o < out_; ++o) out[o] += v * w[static_cast<std::size_t>(i) * out_ + o];
      }
      for (int o = 0; o < out_; ++o) out[o] += bias_.value.data[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(x_.shape);
    const T* w = weight_.value.data.data();
    T* gw = weight_.grad.data.data();
    for (int n = 0; n < gy.shape.n; ++n) {
      const T* g = &gy.at(n, 0, 0, 0);
      for (int i = 0; i < in_; ++i) {
        const T v = x_.at(n, 0, 0, i);
        T acc = T(0);
        for (int o = 0; o < out_; ++o) {
          acc += g[o] * w[static_cast<std::size_t>(i) * out_ + o];
          gw[static_cast<std::size_t>(i) * out_ + o] += v * g[o];
        }
        gx.at(n, 0, 0, i) = acc;
      }
      for (int o = 0; o < out_; ++o) bias_.grad.data[o] += g[o];
    }
    return gx;
  }

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  const std::string& name() const { return name_; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
  std::string name_;
  Tensor<T> x_;
};

template <class T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_shape_ = x.shape;
    Tensor<T> y(Shape{x.shape.n, 1, 1, x.shape.c});
    const double area = static_cast<double>(x.shape.h) * x.shape.w;
    for (int n = 0; n < x.shape.n; ++n) {
      std::vector<Acc<T>> sum(static_cast<std::size_t>(x.shape.c), Acc<T>(0));
      for (int yy = 0; yy < x.shape.h; ++yy) {
        for (int xx = 0; xx < x.shape.w; ++xx) {
          for (int c = 0; c < x.shape.c; ++c) sum[c] += Acc<T>(x.at(n, yy, xx, c));
        }
      }
      for (int c = 0; c < x.shape.c; ++c) y.at(n, 0, 0, c) = static_cast<T>(sum[c] / Acc<T>(area));
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    const T scale = T(1.0 / (static_cast<double>(in_shape_.h) * in_shape_.w));
    for (int n = 0; n < in_shape_.n; ++n) {
      for (int yy = 0; yy < in_shape_.h; ++yy) {
        for (int xx = 0; xx < in_shape_.w; ++xx) {
          for (int c = 0; c < in_shape_.c; ++c) gx.at(n, yy, xx, c) = gy.at(n, 0, 0, c) * scale;
        }
      }
    }
    return gx;
  }

 private:
  Shape in_shape_;
};

/// Inverted-residual block hyperparameters: x -> x_out channels, stride s,
/// expansion t, kernel k.
struct BottleneckSpec {
  int x = 0;
  int x_out = 0;
  int stride = 1;
  int t = 6;
  int k = 3;

  bool residual() const { return stride == 1 && x == x_out; }
  int hidden() const { return t * x; }
  void validate() const;
};

/// expand 1x1 + BN + ReLU -> depthwise kxk (stride s) + BN + ReLU ->
/// project 1x1 + BN (linear), plus identity skip when residual().
template <class T>
class Bottleneck {
 public:
  Bottleneck(const std::string& name, const BottleneckSpec& spec)
      : spec_(spec),
        expand_(name + ".expand", spec.x, spec.hidden(), 1, 1),
        bn1_(name + ".expand_bn", spec.hidden()),
        depthwise_(name + ".depthwise", spec.hidden(), spec.k, spec.stride),
        bn2_(name + ".depthwise_bn", spec.hidden()),
        project_(name + ".project", spec.hidden(), spec.x_out, 1, 1),
        bn3_(name + ".project_bn", spec.x_out) {
    spec.validate();
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, const LayerObserver& observe = {}) {
    check_shape(x.shape.c == spec_.x, expand_.name() + ": expected " + std::to_string(spec_.x) + " channels");
    auto run = [&](auto& layer, const Tensor<T>& in) {
      if (observe) observe(layer.name(), false);
      auto out = layer.forward(in);
      if (observe) observe(layer.name(), true);
      return out;
    };
    Tensor<T> h = relu1_.forward(bn1_.forward(run(expand_, x), mode));
    h = relu2_.forward(bn2_.forward(run(depthwise_, h), mode));
    Tensor<T> y = bn3_.forward(run(project_, h), mode);
    if (spec_.residual()) {
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = project_.backward(bn3_.backward(gy));
    g = depthwise_.backward(bn2_.backward(relu2_.backward(g)));
    g = expand_.backward(bn1_.backward(relu1_.backward(g)));
    if (spec_.residual()) {
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[i];
    }
    return g;
  }

  void collect(std::vector<Param<T>*>& out) {
    for (Param<T>* p : {&expand_.weight(), &bn1_.gamma(), &bn1_.beta(), &bn1_.running_mean(),
                        &bn1_.running_var(), &depthwise_.weight(), &bn2_.gamma(), &bn2_.beta(),
                        &bn2_.running_mean(), &bn2_.running_var(), &project_.weight(), &bn3_.gamma(),
                        &bn3_.beta(), &bn3_.running_mean(), &bn3_.running_var()}) {
      out.push_back(p);
    }
  }

  const BottleneckSpec& spec() const { return spec_; }
  Conv2d<T>& expand() { return expand_; }
  DepthwiseConv2d<T>& depthwise() { return depthwise_; }
  Conv2d<T>& project() { return project_; }
  BatchNorm<T>& project_bn() { return bn3_; }

 private:
  BottleneckSpec spec_;
  Conv2d<T> expand_;
  BatchNorm<T> bn1_;
  ReLU<T> relu1_;
  DepthwiseConv2d<T> depthwise_;
  BatchNorm<T> bn2_;
  ReLU<T> relu2_;
  Conv2d<T> project_;
  BatchNorm<T> bn3_;
};

struct BlockConfig {
  int out_channels = 16;
  int stride = 1;
  int expansion = 6;
};

/// Whole-network layout: stem conv, eight bottlenecks, head conv, global
/// average pooling, fully connected classifier.
struct NetConfig {
  static constexpr int kBlocks = 8;
  static constexpr int kKernel = 3;

  int input_channels = 1;
  int stem_channels = 32;
  int stem_stride = 2;
  std::vector<BlockConfig> blocks;
  int head_channels = 160;
  int classes = 10;

  void validate() const;
  std::vector<BottleneckSpec> bottlenecks() const;

  /// Reconstruction sized so the cost model lands on the published budget
  /// (about 0.18M parameters, 303.5M Mult-Adds at 256x256, 10 classes).
  static NetConfig malite_default(int classes = 10, int input_channels = 1);
  /// Same topology with every width scaled by `factor` (rounded to >= 4).
  NetConfig scaled(double factor) const;
};

std::string to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const std::string& text);

template <class T>
class Model {
 public:
  explicit Model(NetConfig cfg)
      : cfg_(validated(std::move(cfg))),
        stem_("stem", cfg_.input_channels, cfg_.stem_channels, NetConfig::kKernel, cfg_.stem_stride),
        stem_bn_("stem_bn", cfg_.stem_channels),
        head_("head", last_channels(cfg_), cfg_.head_channels, NetConfig::kKernel, 1),
        head_bn_("head_bn", cfg_.head_channels),
        fc_("fc", cfg_.head_channels, cfg_.classes) {
    auto specs = cfg_.bottlenecks();
    for (std::size_t i = 0; i < specs.size(); ++i) {
      blocks_.push_back(std::make_unique<Bottleneck<T>>("block" + std::to_string(i), specs[i]));
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// He-uniform weights, BN gamma 1 / beta 0, zero bias.
  void initialize(std::uint64_t seed) {
    std::uint64_t stream = 0;
    for (Param<T>* p : params()) {
      Rng rng(mix_seed(seed, stream++));
      const auto& d = p->dims;
      if (p->name.ends_with(".w")) {
        int fan_in = 1;
        if (d.size() == 4) fan_in = static_cast<int>(d[0] * d[1] * d[2]);
        else if (d.size() == 3) fan_in = static_cast<int>(d[0] * d[1]);
        else if (d.size() == 2) fan_in = static_cast<int>(d[0]);
        he_uniform(p->value, fan_in, rng);
      } else if (p->name.ends_with(".gamma") || p->name.ends_with(".var")) {
        std::fill(p->value.data.begin(), p->value.data.end(), T(1));
      } else {
        p->value.zero();
      }
    }
  }

  /// Returns logits of shape (n,1,1,classes).
  Tensor<T> forward(const Tensor<T>& x, Mode mode, const LayerObserver& observe = {}) {
    check_shape(x.shape.c == cfg_.input_channels,
                "model expects " + std::to_string(cfg_.input_channels) + " input channels, got " + to_string(x.shape));
    auto run = [&](auto& layer, const Tensor<T>& in) {
      if (observe) observe(layer.name(), false);
      auto out = layer.forward(in);
      if (observe) observe(layer.name(), true);
      return out;
    };
    Tensor<T> h = stem_relu_.forward(stem_bn_.forward(run(stem_, x), mode));
    for (auto& b : blocks_) h = b->forward(h, mode, observe);
    h = head_relu_.forward(head_bn_.forward(run(head_, h), mode));
    return run(fc_, pool_.forward(h));
  }

  /// Accumulates parameter gradients for d(loss)/d(logits).
  Tensor<T> backward(const Tensor<T>& grad_logits) {
    Tensor<T> g = pool_.backward(fc_.backward(grad_logits));
    g = head_.backward(head_bn_.backward(head_relu_.backward(g)));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
    return stem_.backward(stem_bn_.backward(stem_relu_.backward(g)));
  }

  /// All tensors in serialization order, including BN running statistics.
  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out{&stem_.weight(), &stem_bn_.gamma(), &stem_bn_.beta(), &stem_bn_.running_mean(),
                               &stem_bn_.running_var()};
    for (auto& b : blocks_) b->collect(out);
    for (Param<T>* p : {&head_.weight(), &head_bn_.gamma(), &head_bn_.beta(), &head_bn_.running_mean(),
                        &head_bn_.running_var(), &fc_.weight(), &fc_.bias()}) {
      out.push_back(p);
    }
    return out;
  }

  std::vector<Param<T>*> params() const { return const_cast<Model*>(this)->params(); }

  void zero_grad() {
    for (Param<T>* p : params()) p->grad.zero();
  }

  const NetConfig& config() const { return cfg_; }
  Bottleneck<T>& block(std::size_t i) { return *blocks_.at(i); }

 private:
  static NetConfig validated(NetConfig c) {
    c.validate();
    return c;
  }
  static int last_channels(const NetConfig& c) {
    return c.blocks.empty() ? c.stem_channels : c.blocks.back().out_channels;
  }

  NetConfig cfg_;
  Conv2d<T> stem_;
  BatchNorm<T> stem_bn_;
  ReLU<T> stem_relu_;
  std::vector<std::unique_ptr<Bottleneck<T>>> blocks_;
  Conv2d<T> head_;
  BatchNorm<T> head_bn_;
  ReLU<T> head_relu_;
  GlobalAvgPool<T> pool_;
  Linear<T> fc_;
};

/// Row-wise softmax of (n,1,1,k) logits.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  using std::exp;
  Tensor<T> p(logits.shape);
  const int k = logits.shape.c;
  for (int n = 0; n < logits.shape.n; ++n) {
    T mx = logits.at(n, 0, 0, 0);
    for (int j = 1; j < k; ++j) {
      if (logits.at(n, 0, 0, j) > mx) mx = logits.at(n, 0, 0, j);
    }
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      p.at(n, 0, 0, j) = exp(logits.at(n, 0, 0, j) - mx);
      sum += p.at(n, 0, 0, j);
    }
    for (int j = 0; j < k; ++j) p.at(n, 0, 0, j) /= sum;
  }
  return p;
}

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d(mean loss)/d(logits)
};

/// Mean categorical cross-entropy over the batch.
template <class T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  check_shape(static_cast<std::size_t>(logits.shape.n) == labels.size(), "labels do not match batch size");
  Tensor<T> p = softmax(logits);
  LossResult<T> r;
  r.grad = p;
  const double inv_n = 1.0 / static_cast<double>(labels.size());
  for (int n = 0; n < logits.shape.n; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    check_shape(y >= 0 && y < logits.shape.c, "label out of range");
    r.loss -= std::log(std::max(static_cast<double>(p.at(n, 0, 0, y)), 1e-300)) * inv_n;
    r.grad.at(n, 0, 0, y) -= T(1);
  }
  for (auto& g : r.grad.data) g *= T(inv_n);
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  static constexpr double kPublishedLrStart = 1e-4;
  static constexpr double kPublishedLrEnd = 5e-5;
  static constexpr int kPublishedWarmupSteps = 5000;
  static constexpr int kPublishedEpochs = 1000;

  double lr_start = kPublishedLrStart;
  double lr_end = kPublishedLrEnd;
  int warmup_steps = 100;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Linear warmup to lr_start, then a quarter-period cosine from lr_start
/// down to lr_end at the last step.
class LrSchedule {
 public:
  LrSchedule(double lr_start, double lr_end, int warmup_steps, long total_steps);
  double at(long step) const;

 private:
  double start_, end_;
  int warmup_;
  long total_;
};

class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon) : b1_(beta1), b2_(beta2), eps_(epsilon) {}

  void step(const std::vector<Param<float>*>& params, double lr);

 private:
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

struct Batch {
  Tensor<float> images;
  std::vector<int> labels;
};

/// Owns the optimizer state for one model.
class Trainer {
 public:
  Trainer(Model<float>& model, const TrainConfig& cfg, long total_steps);

  /// One forward/backward/Adam update; returns the pre-update batch loss.
  double train_step(const Batch& batch);

  long step() const { return step_; }
  double current_lr() const { return schedule_.at(step_); }

 private:
  Model<float>& model_;
  TrainConfig cfg_;
  LrSchedule schedule_;
  Adam adam_;
  long step_ = 0;
};

struct Prediction {
  std::vector<int> classes;
  std::vector<std::vector<float>> probabilities;
};

/// Inference-mode classification of a (n,h,w,c) batch.
Prediction predict(Model<float>& model, const Tensor<float>& images);

/// Converts byte samples to a (1,h,w,c) tensor scaled to [0,1].
Tensor<float> image_tensor(std::span<const std::uint8_t> pixels, int h, int w, int c);

void write_weights(const Model<float>& model, ByteWriter& w);
void read_weights(Model<float>& model, ByteReader& r);

}  // namespace malite
