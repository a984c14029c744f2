#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "handoff/rng.hpp"

namespace handoff::net {

/// Batch-major activation buffer: n samples by f features, row-major.
template <typename T>
struct Mat {
  int n = 0;
  int features = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int n_, int f_) : n(n_), features(f_), data(size_t(n_) * f_, T(0)) {}

  T* row(int i) { return data.data() + size_t(i) * features; }
  const T* row(int i) const { return data.data() + size_t(i) * features; }
  void resize(int n_, int f_) {
    n = n_;
    features = f_;
    data.assign(size_t(n_) * f_, T(0));
  }
};

namespace detail {

/// Deterministic batch parallelism: contiguous sample chunks per thread,
/// per-thread accumulators merged in thread order by the caller.
inline void parallel_for(int n, int n_threads, const std::function<void(int, int, int)>& fn) {
  n_threads = std::max(1, std::min(n_threads, n));
  if (n_threads == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  const int chunk = (n + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back(fn, t, lo, hi);
  }
  for (auto& th : threads) th.join();
}

inline int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

}  // namespace detail

template <typename T>
struct ParamView {
  std::vector<T>* value;
  std::vector<T>* grad;
};

/// Base layer; activations are cached between forward and backward.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual int out_features(int in_features) const = 0;
  virtual void forward(const Mat<T>& in, Mat<T>& out, bool train) = 0;
  virtual void backward(const Mat<T>& grad_out, Mat<T>& grad_in) = 0;
  virtual std::vector<ParamView<T>> params() { return {}; }
  /// Non-trainable state (batch-norm running statistics).
  virtual std::vector<std::vector<T>*> state() { return {}; }
  virtual std::string describe() const = 0;
};

template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(int in, int out, Rng& rng, int threads) : in_(in), out_(out), threads_(threads) {
    weight_.resize(size_t(out) * in);
    bias_.assign(size_t(out), T(0));
    const double scale = std::sqrt(2.0 / in);
    for (auto& w : weight_) w = T(rng.gaussian() * scale);
    grad_w_.assign(weight_.size(), T(0));
    grad_b_.assign(bias_.size(), T(0));
  }

  int out_features(int) const override { return out_; }

  void forward(const Mat<T>& in, Mat<T>& out, bool) override {
    assert(in.features == in_);
    input_ = in;
    out.resize(in.n, out_);
    detail::parallel_for(in.n, threads_, [&](int, int lo, int hi) {
      for (int s = lo; s < hi; ++s) {
        const T* x = in.row(s);
        T* y = out.row(s);
        for (int o = 0; o < out_; ++o) {
          const T* w = weight_.data() + size_t(o) * in_;
          T acc = bias_[size_t(o)];
          for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
          y[o] = acc;
        }
      }
    });
  }

  void backward(const Mat<T>& grad_out, Mat<T>& grad_in) override {
    grad_in.resize(input_.n, in_);
    const int nt = std::max(1, std::min(threads_, input_.n));
    std::vector<std::vector<T>> tw(static_cast<size_t>(nt));
    std::vector<std::vector<T>> tb(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      tw[size_t(t)].assign(weight_.size(), T(0));
      tb[size_t(t)].assign(bias_.size(), T(0));
    }
    detail::parallel_for(input_.n, nt, [&](int tid, int lo, int hi) {
      auto& dw = tw[size_t(tid)];
      auto& db = tb[size_t(tid)];
      for (int s = lo; s < hi; ++s) {
        const T* x = input_.row(s);
        const T* dy = grad_out.row(s);
        T* dx = grad_in.row(s);
        for (int o = 0; o < out_; ++o) {
          const T g = dy[o];
          if (g == T(0)) continue;
          const T* w = weight_.data() + size_t(o) * in_;
          T* dwo = dw.data() + size_t(o) * in_;
          db[size_t(o)] += g;
          for (int i = 0; i < in_; ++i) {
            dwo[i] += g * x[i];
            dx[i] += g * w[i];
          }
        }
      }
    });
    for (int t = 0; t < nt; ++t) {
      for (size_t i = 0; i < grad_w_.size(); ++i) grad_w_[i] += tw[size_t(t)][i];
      for (size_t i = 0; i < grad_b_.size(); ++i) grad_b_[i] += tb[size_t(t)][i];
    }
  }

  std::vector<ParamView<T>> params() override {
    return {{&weight_, &grad_w_}, {&bias_, &grad_b_}};
  }

  std::string describe() const override {
    return "linear " + std::to_string(in_) + " " + std::to_string(out_);
  }

 private:
  int in_, out_, threads_;
  std::vector<T> weight_, bias_, grad_w_, grad_b_;
  Mat<T> input_;
};

template <typename T>
class Relu : public Layer<T> {
 public:
  int out_features(int in) const override { return in; }

  void forward(const Mat<T>& in, Mat<T>& out, bool) override {
    input_ = in;
    out = in;
    for (auto& v : out.data) v = std::max(v, T(0));
  }

  void backward(const Mat<T>& grad_out, Mat<T>& grad_in) override {
    grad_in = grad_out;
    for (size_t i = 0; i < grad_in.data.size(); ++i)
      if (input_.data[i] <= T(0)) grad_in.data[i] = T(0);
  }

  std::string describe() const override { return "relu"; }

 private:
  Mat<T> input_;
};

/// 2D convolution over CHW samples, stride 2, no padding.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, Rng& rng, int threads)
      : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), stride_(stride),
        threads_(threads) {
    out_h_ = (in_h - kernel) / stride + 1;
    out_w_ = (in_w - kernel) / stride + 1;
    if (out_h_ <= 0 || out_w_ <= 0) throw std::invalid_argument("conv: kernel larger than input");
    weight_.resize(size_t(out_c) * in_c * kernel * kernel);
    bias_.assign(size_t(out_c), T(0));
    const double scale = std::sqrt(2.0 / (in_c * kernel * kernel));
    for (auto& w : weight_) w = T(rng.gaussian() * scale);
    grad_w_.assign(weight_.size(), T(0));
    grad_b_.assign(bias_.size(), T(0));
  }

  int out_features(int) const override { return out_c_ * out_h_ * out_w_; }
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_c() const { return out_c_; }

  void forward(const Mat<T>& in, Mat<T>& out, bool) override {
    assert(in.features == in_c_ * in_h_ * in_w_);
    input_ = in;
    out.resize(in.n, out_c_ * out_h_ * out_w_);
    detail::parallel_for(in.n, threads_, [&](int, int lo, int hi) {
      std::vector<T> patches(size_t(positions()) * patch_dim());
      for (int s = lo; s < hi; ++s) forward_sample(in.row(s), out.row(s), patches.data());
    });
  }

  void backward(const Mat<T>& grad_out, Mat<T>& grad_in) override {
    grad_in.resize(input_.n, in_c_ * in_h_ * in_w_);
    const int nt = std::max(1, std::min(threads_, input_.n));
    std::vector<std::vector<T>> tw(static_cast<size_t>(nt));
    std::vector<std::vector<T>> tb(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
      tw[size_t(t)].assign(weight_.size(), T(0));
      tb[size_t(t)].assign(bias_.size(), T(0));
    }
    detail::parallel_for(input_.n, nt, [&](int tid, int lo, int hi) {
      std::vector<T> patches(size_t(positions()) * patch_dim());
      std::vector<T> dpatches(size_t(positions()) * patch_dim());
      for (int s = lo; s < hi; ++s)
        backward_sample(input_.row(s), grad_out.row(s), grad_in.row(s), tw[size_t(tid)].data(),
                        tb[size_t(tid)].data(), patches.data(), dpatches.data());
    });
    for (int t = 0; t < nt; ++t) {
      for (size_t i = 0; i < grad_w_.size(); ++i) grad_w_[i] += tw[size_t(t)][i];
      for (size_t i = 0; i < grad_b_.size(); ++i) grad_b_[i] += tb[size_t(t)][i];
    }
  }

  std::vector<ParamView<T>> params() override {
    return {{&weight_, &grad_w_}, {&bias_, &grad_b_}};
  }

  std::string describe() const override {
    std::ostringstream s;
    s << "conv2d " << in_c_ << " " << in_h_ << " " << in_w_ << " " << out_c_ << " " << k_ << " "
      << stride_;
    return s.str();
  }

 private:
  // im2col layout: one row per output position, patch elements contiguous,
  // so the per-position inner products vectorize.
  int patch_dim() const { return in_c_ * k_ * k_; }
  int positions() const { return out_h_ * out_w_; }

  void fill_patches(const T* x, T* patches) const {
    const int plane_in = in_h_ * in_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        T* row = patches + (size_t(oy) * out_w_ + ox) * patch_dim();
        const int iy0 = oy * stride_;
        const int ix0 = ox * stride_;
        for (int ic = 0; ic < in_c_; ++ic) {
          const T* xp = x + size_t(ic) * plane_in + size_t(iy0) * in_w_ + ix0;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) *row++ = xp[size_t(ky) * in_w_ + kx];
          }
        }
      }
    }
  }

  void forward_sample(const T* x, T* y, T* patches) const {
    fill_patches(x, patches);
    const int d = patch_dim();
    const int p = positions();
    for (int oc = 0; oc < out_c_; ++oc) {
      const T* w = weight_.data() + size_t(oc) * d;
      const T b = bias_[size_t(oc)];
      T* yp = y + size_t(oc) * p;
      for (int i = 0; i < p; ++i) {
        const T* row = patches + size_t(i) * d;
        T acc = T(0);
        for (int j = 0; j < d; ++j) acc += w[j] * row[j];
        yp[i] = acc + b;
      }
    }
  }

  void backward_sample(const T* x, const T* dy, T* dx, T* dw, T* db, T* patches,
                       T* dpatches) const {
    fill_patches(x, patches);
    const int d = patch_dim();
    const int p = positions();
    std::fill(dpatches, dpatches + size_t(p) * d, T(0));
    for (int oc = 0; oc < out_c_; ++oc) {
      const T* w = weight_.data() + size_t(oc) * d;
      T* dwo = dw + size_t(oc) * d;
      const T* dyp = dy + size_t(oc) * p;
      for (int i = 0; i < p; ++i) {
        const T g = dyp[i];
        if (g == T(0)) continue;
        db[oc] += g;
        const T* row = patches + size_t(i) * d;
        T* drow = dpatches + size_t(i) * d;
        for (int j = 0; j < d; ++j) {
          dwo[j] += g * row[j];
          drow[j] += g * w[j];
        }
      }
    }
    // col2im: accumulate patch gradients back onto the input plane.
    const int plane_in = in_h_ * in_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        const T* drow = dpatches + (size_t(oy) * out_w_ + ox) * patch_dim();
        const int iy0 = oy * stride_;
        const int ix0 = ox * stride_;
        for (int ic = 0; ic < in_c_; ++ic) {
          T* dxp = dx + size_t(ic) * plane_in + size_t(iy0) * in_w_ + ix0;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) dxp[size_t(ky) * in_w_ + kx] += *drow++;
          }
        }
      }
    }
  }

  int in_c_, in_h_, in_w_, out_c_, k_, stride_, threads_;
  int out_h_ = 0, out_w_ = 0;
  std::vector<T> weight_, bias_, grad_w_, grad_b_;
  Mat<T> input_;
};

/// Per-channel batch normalization over (batch x spatial). Training mode
/// normalizes with batch statistics and updates running averages; inference
/// uses the running statistics so evaluation is deterministic.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(int channels, int spatial, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), spatial_(spatial), momentum_(T(momentum)), eps_(T(eps)) {
    gamma_.assign(size_t(c_), T(1));
    beta_.assign(size_t(c_), T(0));
    grad_gamma_.assign(size_t(c_), T(0));
    grad_beta_.assign(size_t(c_), T(0));
    running_mean_.assign(size_t(c_), T(0));
    running_var_.assign(size_t(c_), T(1));
  }

  int out_features(int in) const override { return in; }

  void forward(const Mat<T>& in, Mat<T>& out, bool train) override {
    assert(in.features == c_ * spatial_);
    out.resize(in.n, in.features);
    xhat_.resize(in.n, in.features);
    invstd_.assign(size_t(c_), T(0));
    mean_.assign(size_t(c_), T(0));
    train_ = train;
    const size_t count = size_t(in.n) * spatial_;

    for (int ch = 0; ch < c_; ++ch) {
      T mean, var;
      if (train) {
        T sum = T(0), sq = T(0);
        for (int s = 0; s < in.n; ++s) {
          const T* x = in.row(s) + size_t(ch) * spatial_;
          for (int i = 0; i < spatial_; ++i) {
            sum += x[i];
            sq += x[i] * x[i];
          }
        }
        mean = sum / T(count);
        var = sq / T(count) - mean * mean;
        if (var < T(0)) var = T(0);
        running_mean_[size_t(ch)] =
            (T(1) - momentum_) * running_mean_[size_t(ch)] + momentum_ * mean;
        running_var_[size_t(ch)] = (T(1) - momentum_) * running_var_[size_t(ch)] + momentum_ * var;
      } else {
        mean = running_mean_[size_t(ch)];
        var = running_var_[size_t(ch)];
      }
      const T inv = T(1) / std::sqrt(var + eps_);
      mean_[size_t(ch)] = mean;
      invstd_[size_t(ch)] = inv;
      for (int s = 0; s < in.n; ++s) {
        const T* x = in.row(s) + size_t(ch) * spatial_;
        T* xh = xhat_.row(s) + size_t(ch) * spatial_;
        T* y = out.row(s) + size_t(ch) * spatial_;
        for (int i = 0; i < spatial_; ++i) {
          xh[i] = (x[i] - mean) * inv;
          y[i] = gamma_[size_t(ch)] * xh[i] + beta_[size_t(ch)];
        }
      }
    }
  }

  void backward(const Mat<T>& grad_out, Mat<T>& grad_in) override {
    grad_in.resize(xhat_.n, xhat_.features);
    const size_t count = size_t(xhat_.n) * spatial_;
    for (int ch = 0; ch < c_; ++ch) {
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int s = 0; s < xhat_.n; ++s) {
        const T* dy = grad_out.row(s) + size_t(ch) * spatial_;
        const T* xh = xhat_.row(s) + size_t(ch) * spatial_;
        for (int i = 0; i < spatial_; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xh[i];
        }
      }
      grad_gamma_[size_t(ch)] += sum_dy_xhat;
      grad_beta_[size_t(ch)] += sum_dy;
      const T g = gamma_[size_t(ch)];
      const T inv = invstd_[size_t(ch)];
      for (int s = 0; s < xhat_.n; ++s) {
        const T* dy = grad_out.row(s) + size_t(ch) * spatial_;
        const T* xh = xhat_.row(s) + size_t(ch) * spatial_;
        T* dx = grad_in.row(s) + size_t(ch) * spatial_;
        if (train_) {
          for (int i = 0; i < spatial_; ++i)
            dx[i] = g * inv / T(count) *
                    (T(count) * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
        } else {
          for (int i = 0; i < spatial_; ++i) dx[i] = g * inv * dy[i];
        }
      }
    }
  }

  std::vector<ParamView<T>> params() override {
    return {{&gamma_, &grad_gamma_}, {&beta_, &grad_beta_}};
  }

  std::vector<std::vector<T>*> state() override { return {&running_mean_, &running_var_}; }

  std::string describe() const override {
    return "batchnorm " + std::to_string(c_) + " " + std::to_string(spatial_);
  }

 private:
  int c_, spatial_;
  T momentum_, eps_;
  bool train_ = true;
  std::vector<T> gamma_, beta_, grad_gamma_, grad_beta_;
  std::vector<T> running_mean_, running_var_, mean_, invstd_;
  Mat<T> xhat_;
};

template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Mat<T> forward(const Mat<T>& in, bool train) {
    Mat<T> cur = in;
    for (auto& l : layers_) {
      Mat<T> next;
      l->forward(cur, next, train);
      cur = std::move(next);
    }
    return cur;
  }

  Mat<T> backward(const Mat<T>& grad_out) {
    Mat<T> cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      Mat<T> prev;
      (*it)->backward(cur, prev);
      cur = std::move(prev);
    }
    return cur;
  }

  std::vector<ParamView<T>> params() {
    std::vector<ParamView<T>> out;
    for (auto& l : layers_)
      for (auto p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<std::vector<T>*> state() {
    std::vector<std::vector<T>*> out;
    for (auto& l : layers_)
      for (auto s : l->state()) out.push_back(s);
    return out;
  }

  std::string describe() const {
    std::string s;
    for (const auto& l : layers_) s += l->describe() + "\n";
    return s;
  }

  size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

struct TrainingDivergedError : std::runtime_error {
  TrainingDivergedError() : std::runtime_error("training diverged: non-finite loss") {}
};

/// Adam with global-norm gradient clipping.
template <typename T>
class Adam {
 public:
  Adam(std::vector<ParamView<T>> params, double lr = 1e-3, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8, double clip_norm = 10.0)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps),
        clip_norm_(clip_norm) {
    for (auto& p : params_) {
      m_.emplace_back(p.value->size(), T(0));
      v_.emplace_back(p.value->size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), T(0));
  }

  void step() {
    ++t_;
    double norm2 = 0.0;
    for (auto& p : params_)
      for (T g : *p.grad) norm2 += double(g) * double(g);
    if (!std::isfinite(norm2)) throw TrainingDivergedError();
    const double scale = norm2 > clip_norm_ * clip_norm_ ? clip_norm_ / std::sqrt(norm2) : 1.0;
    const double bc1 = 1.0 - std::pow(b1_, double(t_));
    const double bc2 = 1.0 - std::pow(b2_, double(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& val = *params_[pi].value;
      auto& grad = *params_[pi].grad;
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < val.size(); ++i) {
        const double g = double(grad[i]) * scale;
        m[i] = T(b1_ * double(m[i]) + (1.0 - b1_) * g);
        v[i] = T(b2_ * double(v[i]) + (1.0 - b2_) * g * g);
        const double mhat = double(m[i]) / bc1;
        const double vhat = double(v[i]) / bc2;
        val[i] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ParamView<T>> params_;
  double lr_, b1_, b2_, eps_, clip_norm_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

/// Copy trainable parameters and running statistics (target-network sync,
/// checkpoint cloning). Shapes must match.
template <typename T>
inline void copy_weights(Sequential<T>& dst, Sequential<T>& src) {
  auto pd = dst.params();
  auto ps = src.params();
  if (pd.size() != ps.size()) throw std::invalid_argument("copy_weights: layout mismatch");
  for (size_t i = 0; i < pd.size(); ++i) {
    if (pd[i].value->size() != ps[i].value->size())
      throw std::invalid_argument("copy_weights: shape mismatch");
    *pd[i].value = *ps[i].value;
  }
  auto sd = dst.state();
  auto ss = src.state();
  for (size_t i = 0; i < sd.size(); ++i) *sd[i] = *ss[i];
}

}  // namespace handoff::net
