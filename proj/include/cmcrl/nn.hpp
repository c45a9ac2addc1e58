#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "cmcrl/common.hpp"
#include "cmcrl/rng.hpp"
#include "cmcrl/tensor.hpp"

namespace cmcrl {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapM = Eigen::Map<const MatRM<T>>;

/// Named learnable tensor with its gradient.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string n, std::vector<std::size_t> dims)
      : name(std::move(n)), value(dims), grad(std::move(dims)) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Named non-learnable state (running statistics).
template <class T>
struct Buffer {
  std::string name;
  Tensor<T> value;

  Buffer(std::string n, std::vector<std::size_t> dims, T fill = T(0))
      : name(std::move(n)), value(std::move(dims), fill) {}
};

namespace nn {

constexpr double kNormEps = 1e-5;
constexpr double kBnMomentum = 0.1;

template <class T>
void he_normal_init(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 3x3 convolution (configurable stride/pad) via im2col + GEMM. Bias is
/// optional; convolutions feeding a normalization layer go without.
template <class T>
class Conv2d {
public:
  Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t ksize,
         std::size_t stride, std::size_t pad, Rng& rng, bool use_bias = true)
      : cin_(cin),
        cout_(cout),
        k_(ksize),
        stride_(stride),
        pad_(pad),
        use_bias_(use_bias),
        weight_(name + ".weight", {cout, cin, ksize, ksize}),
        bias_(name + ".bias", {cout}) {
    he_normal_init(weight_.value, cin * ksize * ksize, rng);
  }

  std::size_t out_size(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    check_contract(x.dim(1) == cin_, "conv: channel mismatch");
    check_contract(h + 2 * pad_ >= k_ && w + 2 * pad_ >= k_, "conv: input smaller than kernel");
    const std::size_t ho = out_size(h), wo = out_size(w);
    input_ = x;
    Tensor<T> y({n, cout_, ho, wo});
    Tensor<T> col({cin_ * k_ * k_, ho * wo});
    CMapM<T> wmat(weight_.value.data(), cout_, cin_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      im2col(x, i, col);
      MapM<T> ymat(y.data() + i * cout_ * ho * wo, cout_, ho * wo);
      CMapM<T> cmat(col.data(), cin_ * k_ * k_, ho * wo);
      ymat.noalias() = wmat * cmat;
      if (use_bias_)
        for (std::size_t c = 0; c < cout_; ++c) ymat.row(c).array() += bias_.value[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t n = input_.dim(0);
    const std::size_t ho = dy.dim(2), wo = dy.dim(3);
    Tensor<T> dx(input_.dims(), T(0));
    Tensor<T> col({cin_ * k_ * k_, ho * wo});
    Tensor<T> dcol({cin_ * k_ * k_, ho * wo});
    CMapM<T> wmat(weight_.value.data(), cout_, cin_ * k_ * k_);
    MapM<T> dwmat(weight_.grad.data(), cout_, cin_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      CMapM<T> dymat(dy.data() + i * cout_ * ho * wo, cout_, ho * wo);
      im2col(input_, i, col);
      CMapM<T> cmat(col.data(), cin_ * k_ * k_, ho * wo);
      dwmat.noalias() += dymat * cmat.transpose();
      if (use_bias_)
        for (std::size_t c = 0; c < cout_; ++c) bias_.grad[c] += dymat.row(c).sum();
      MapM<T> dcmat(dcol.data(), cin_ * k_ * k_, ho * wo);
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im(dcol, i, dx);
    }
    return dx;
  }

  std::vector<Param<T>*> params() {
    if (use_bias_) return {&weight_, &bias_};
    return {&weight_};
  }

private:
  void im2col(const Tensor<T>& x, std::size_t i, Tensor<T>& col) const {
    const std::size_t h = x.dim(2), w = x.dim(3);
    const std::size_t ho = out_size(h), wo = out_size(w);
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t r = (ci * k_ + ky) * k_ + kx;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
              T v = T(0);
              if (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                  ix < static_cast<std::ptrdiff_t>(w))
                v = x.at(i, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              col.at(r, oy * wo + ox) = v;
            }
          }
        }
      }
    }
  }

  void col2im(const Tensor<T>& dcol, std::size_t i, Tensor<T>& dx) const {
    const std::size_t h = dx.dim(2), w = dx.dim(3);
    const std::size_t ho = out_size(h), wo = out_size(w);
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t r = (ci * k_ + ky) * k_ + kx;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              dx.at(i, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                  dcol.at(r, oy * wo + ox);
            }
          }
        }
      }
    }
  }

  std::size_t cin_, cout_, k_, stride_, pad_;
  bool use_bias_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Batch normalization over (N, H, W) per channel. Training mode uses batch
/// statistics and maintains running estimates for evaluation mode.
template <class T>
class BatchNorm2d {
public:
  BatchNorm2d(std::string name, std::size_t channels)
      : channels_(channels),
        gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_(name + ".running_mean", {channels}, T(0)),
        running_var_(name + ".running_var", {channels}, T(1)) {
    gamma_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    check_contract(c == channels_, "batchnorm: channel mismatch");
    Tensor<T> y(x.dims());
    train_cached_ = train;
    if (train) {
      const double m = static_cast<double>(n * h * w);
      mean_.assign(channels_, 0.0);
      inv_std_.assign(channels_, 0.0);
      for (std::size_t ci = 0; ci < channels_; ++ci) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) {
              const double v = static_cast<double>(x.at(i, ci, yy, xx));
              sum += v;
              sq += v * v;
            }
        const double mu = sum / m;
        const double var = std::max(0.0, sq / m - mu * mu);
        mean_[ci] = mu;
        inv_std_[ci] = 1.0 / std::sqrt(var + kNormEps);
        running_mean_.value[ci] = static_cast<T>((1.0 - kBnMomentum) *
                                                     static_cast<double>(running_mean_.value[ci]) +
                                                 kBnMomentum * mu);
        running_var_.value[ci] = static_cast<T>(
            (1.0 - kBnMomentum) * static_cast<double>(running_var_.value[ci]) + kBnMomentum * var);
      }
      xhat_ = Tensor<T>(x.dims());
      for (std::size_t ci = 0; ci < channels_; ++ci) {
        const T g = gamma_.value[ci], b = beta_.value[ci];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) {
              const T xh = static_cast<T>((static_cast<double>(x.at(i, ci, yy, xx)) - mean_[ci]) *
                                          inv_std_[ci]);
              xhat_.at(i, ci, yy, xx) = xh;
              y.at(i, ci, yy, xx) = g * xh + b;
            }
      }
    } else {
      for (std::size_t ci = 0; ci < channels_; ++ci) {
        const double mu = static_cast<double>(running_mean_.value[ci]);
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var_.value[ci]) + kNormEps);
        const T g = gamma_.value[ci], b = beta_.value[ci];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx)
              y.at(i, ci, yy, xx) = static_cast<T>(
                  g * (static_cast<double>(x.at(i, ci, yy, xx)) - mu) * istd + b);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    check_contract(train_cached_, "batchnorm: backward requires a training-mode forward");
    const std::size_t n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const double m = static_cast<double>(n * h * w);
    Tensor<T> dx(dy.dims());
    for (std::size_t ci = 0; ci < channels_; ++ci) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double d = static_cast<double>(dy.at(i, ci, yy, xx));
            sum_dy += d;
            sum_dy_xhat += d * static_cast<double>(xhat_.at(i, ci, yy, xx));
          }
      gamma_.grad[ci] += static_cast<T>(sum_dy_xhat);
      beta_.grad[ci] += static_cast<T>(sum_dy);
      const double g = static_cast<double>(gamma_.value[ci]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double d = static_cast<double>(dy.at(i, ci, yy, xx));
            const double xh = static_cast<double>(xhat_.at(i, ci, yy, xx));
            dx.at(i, ci, yy, xx) = static_cast<T>(
                g * inv_std_[ci] / m * (m * d - sum_dy - xh * sum_dy_xhat));
          }
    }
    return dx;
  }

  std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>*> buffers() { return {&running_mean_, &running_var_}; }

private:
  std::size_t channels_;
  Param<T> gamma_, beta_;
  Buffer<T> running_mean_, running_var_;
  std::vector<double> mean_, inv_std_;
  Tensor<T> xhat_;
  bool train_cached_ = false;
};

/// Instance normalization over (H, W) per sample and channel, with affine
/// parameters. Uses instance statistics in both modes.
template <class T>
class InstanceNorm2d {
public:
  InstanceNorm2d(std::string name, std::size_t channels)
      : channels_(channels),
        gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}) {
    gamma_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool /*train*/) {
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const double m = static_cast<double>(h * w);
    Tensor<T> y(x.dims());
    xhat_ = Tensor<T>(x.dims());
    inv_std_.assign(n * channels_, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ci = 0; ci < channels_; ++ci) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double v = static_cast<double>(x.at(i, ci, yy, xx));
            sum += v;
            sq += v * v;
          }
        const double mu = sum / m;
        const double var = std::max(0.0, sq / m - mu * mu);
        const double istd = 1.0 / std::sqrt(var + kNormEps);
        inv_std_[i * channels_ + ci] = istd;
        const T g = gamma_.value[ci], b = beta_.value[ci];
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const T xh = static_cast<T>((static_cast<double>(x.at(i, ci, yy, xx)) - mu) * istd);
            xhat_.at(i, ci, yy, xx) = xh;
            y.at(i, ci, yy, xx) = g * xh + b;
          }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const double m = static_cast<double>(h * w);
    Tensor<T> dx(dy.dims());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ci = 0; ci < channels_; ++ci) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double d = static_cast<double>(dy.at(i, ci, yy, xx));
            sum_dy += d;
            sum_dy_xhat += d * static_cast<double>(xhat_.at(i, ci, yy, xx));
          }
        gamma_.grad[ci] += static_cast<T>(sum_dy_xhat);
        beta_.grad[ci] += static_cast<T>(sum_dy);
        const double g = static_cast<double>(gamma_.value[ci]);
        const double istd = inv_std_[i * channels_ + ci];
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            const double d = static_cast<double>(dy.at(i, ci, yy, xx));
            const double xh = static_cast<double>(xhat_.at(i, ci, yy, xx));
            dx.at(i, ci, yy, xx) =
                static_cast<T>(g * istd / m * (m * d - sum_dy - xh * sum_dy_xhat));
          }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }

private:
  std::size_t channels_;
  Param<T> gamma_, beta_;
  std::vector<double> inv_std_;
  Tensor<T> xhat_;
};

/// Stage normalization: plain BN, or the IBN split (instance norm on the
/// first half of the channels, batch norm on the rest).
template <class T>
class Norm2d {
public:
  Norm2d(std::string name, std::size_t channels, bool ibn)
      : channels_(channels), split_(ibn ? channels / 2 : 0) {
    if (split_ > 0) in_ = std::make_unique<InstanceNorm2d<T>>(name + ".in", split_);
    bn_ = std::make_unique<BatchNorm2d<T>>(name + ".bn", channels_ - split_);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (split_ == 0) return bn_->forward(x, train);
    auto [front, back] = split_channels(x);
    Tensor<T> yf = in_->forward(front, train);
    Tensor<T> yb = bn_->forward(back, train);
    return concat_channels(yf, yb);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (split_ == 0) return bn_->backward(dy);
    auto [front, back] = split_channels(dy);
    Tensor<T> dxf = in_->backward(front);
    Tensor<T> dxb = bn_->backward(back);
    return concat_channels(dxf, dxb);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    if (in_) {
      auto p = in_->params();
      out.insert(out.end(), p.begin(), p.end());
    }
    auto p = bn_->params();
    out.insert(out.end(), p.begin(), p.end());
    return out;
  }

  std::vector<Buffer<T>*> buffers() { return bn_->buffers(); }

private:
  std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x) const {
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<T> front({n, split_, h, w});
    Tensor<T> back({n, channels_ - split_, h, w});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) {
            if (c < split_)
              front.at(i, c, yy, xx) = x.at(i, c, yy, xx);
            else
              back.at(i, c - split_, yy, xx) = x.at(i, c, yy, xx);
          }
    return {std::move(front), std::move(back)};
  }

  Tensor<T> concat_channels(const Tensor<T>& front, const Tensor<T>& back) const {
    const std::size_t n = front.dim(0), h = front.dim(2), w = front.dim(3);
    Tensor<T> out({n, channels_, h, w});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx)
            out.at(i, c, yy, xx) =
                c < split_ ? front.at(i, c, yy, xx) : back.at(i, c - split_, yy, xx);
    return out;
  }

  std::size_t channels_, split_;
  std::unique_ptr<InstanceNorm2d<T>> in_;
  std::unique_ptr<BatchNorm2d<T>> bn_;
};

// ---------------------------------------------------------------------------
// Pointwise / dense layers
// ---------------------------------------------------------------------------

template <class T>
class ReLU {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    mask_.assign(x.size(), 0);
    Tensor<T> y(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.dims());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = mask_[i] ? dy[i] : T(0);
    return dx;
  }

private:
  std::vector<unsigned char> mask_;
};

template <class T>
class Linear {
public:
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
      : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {
    he_normal_init(weight_.value, in, rng);
  }

  /// x: {N, in} -> {N, out}
  Tensor<T> forward(const Tensor<T>& x) {
    check_contract(x.dim(1) == in_, "linear: input dim mismatch");
    input_ = x;
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_});
    CMapM<T> xm(x.data(), n, in_);
    CMapM<T> wm(weight_.value.data(), out_, in_);
    MapM<T> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) y.at(i, j) += bias_.value[j];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t n = dy.dim(0);
    Tensor<T> dx({n, in_});
    CMapM<T> dym(dy.data(), n, out_);
    CMapM<T> xm(input_.data(), n, in_);
    CMapM<T> wm(weight_.value.data(), out_, in_);
    MapM<T> dwm(weight_.grad.data(), out_, in_);
    MapM<T> dxm(dx.data(), n, in_);
    dwm.noalias() += dym.transpose() * xm;
    dxm.noalias() = dym * wm;
    for (std::size_t j = 0; j < out_; ++j) bias_.grad[j] += dym.col(j).sum();
    return dx;
  }

  std::vector<Param<T>*> params() { return {&weight_, &bias_}; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

/// Global average pooling: {N,C,H,W} -> {N,C}.
template <class T>
class GlobalAvgPool {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    dims_ = x.dims();
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c});
    const double m = static_cast<double>(h * w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) s += static_cast<double>(x.at(i, ci, yy, xx));
        y.at(i, ci) = static_cast<T>(s / m);
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t n = dims_[0], c = dims_[1], h = dims_[2], w = dims_[3];
    Tensor<T> dx(dims_);
    const T inv = static_cast<T>(1.0 / static_cast<double>(h * w));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const T g = dy.at(i, ci) * inv;
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) dx.at(i, ci, yy, xx) = g;
      }
    return dx;
  }

private:
  std::vector<std::size_t> dims_;
};

/// Row-wise L2 normalization: {N,d} -> {N,d} unit rows. The divisor is
/// floored at kNormFloor so a degenerate all-zero row cannot blow up the
/// backward pass; rows with a healthy norm are normalized exactly.
template <class T>
class L2Normalize {
public:
  static constexpr double kNormFloor = 1e-3;

  Tensor<T> forward(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    output_ = Tensor<T>({n, d});
    norms_.assign(n, 0.0);
    floored_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double nrm = l2_norm(x.data() + i * d, d);
      floored_[i] = nrm < kNormFloor;
      norms_[i] = std::max(nrm, kNormFloor);
      for (std::size_t j = 0; j < d; ++j)
        output_.at(i, j) = static_cast<T>(static_cast<double>(x.at(i, j)) / norms_[i]);
    }
    return output_;
  }

  // dx = (dy - y <y, dy>) / ||x||; on the floored branch y is linear in x,
  // so the projection term drops.
  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t n = dy.dim(0), d = dy.dim(1);
    Tensor<T> dx({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const double proj =
          floored_[i] ? 0.0 : dot(output_.data() + i * d, dy.data() + i * d, d);
      for (std::size_t j = 0; j < d; ++j)
        dx.at(i, j) = static_cast<T>((static_cast<double>(dy.at(i, j)) -
                                      static_cast<double>(output_.at(i, j)) * proj) /
                                     norms_[i]);
    }
    return dx;
  }

private:
  Tensor<T> output_;
  std::vector<double> norms_;
  std::vector<char> floored_;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// SGD with classic momentum and L2 weight decay.
template <class T>
class Sgd {
public:
  Sgd(std::vector<Param<T>*> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (auto* p : params_) velocity_.emplace_back(p->value.dims(), T(0));
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i] + static_cast<T>(weight_decay_) * p.value[i];
        v[i] = static_cast<T>(momentum_) * v[i] + g;
        p.value[i] -= static_cast<T>(lr) * v[i];
      }
    }
  }

  const std::vector<Param<T>*>& params() const { return params_; }
  std::vector<Tensor<T>>& velocity() { return velocity_; }

private:
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> velocity_;
  double momentum_, weight_decay_;
};

}  // namespace nn
}  // namespace cmcrl
