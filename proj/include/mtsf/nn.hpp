#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mtsf/common.hpp"
#include "mtsf/kernels.hpp"
#include "mtsf/mat.hpp"

// Network building blocks with explicit forward/backward pairs. Layers hold
// parameters and gradients; per-application activations live in caller-owned
// cache structs so one parameter set can serve many views and frames.
namespace mtsf::nn {

template <typename T>
struct Param {
  std::string name;
  Mat<T> w;
  Mat<T> g;

  void init_uniform(int rows, int cols, int fan_in, Rng& rng) {
    w = Mat<T>(rows, cols);
    g = Mat<T>(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<T>(rng.next_range(-bound, bound));
  }

  void init_const(int rows, int cols, T value) {
    w = Mat<T>(rows, cols, value);
    g = Mat<T>(rows, cols);
  }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

template <typename T>
bool has_nonfinite(const Mat<T>& x) {
  for (size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(static_cast<double>(x.data()[i]))) return true;
  return false;
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / T(M_SQRT2)));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / T(M_SQRT2)));
  const T pdf = std::exp(T(-0.5) * x * x) / T(std::sqrt(2.0 * M_PI));
  return cdf + x * pdf;
}

// sin/cos table added to frame tokens before the temporal layers
template <typename T>
Mat<T> sinusoidal_position_table(int length, int dim) {
  Mat<T> pe(length, dim);
  for (int t = 0; t < length; ++t)
    for (int i = 0; i < dim; ++i) {
      const double angle = t / std::pow(10000.0, 2.0 * (i / 2) / dim);
      pe(t, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
  Param<T> w;  // in x out
  Param<T> b;  // 1 x out

  void init(int in, int out, Rng& rng) {
    w.init_uniform(in, out, in, rng);
    b.init_uniform(1, out, in, rng);
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    out.push_back(&w);
    out.push_back(&b);
  }

  Mat<T> forward(const Mat<T>& x) const {
    if (x.cols() != w.w.rows()) throw std::invalid_argument("Linear: input width mismatch");
    Mat<T> y(x.rows(), w.w.cols());
    kern::matmul(y, x, w.w);
    kern::add_row_bias(y, b.w);
    return y;
  }

  // x is the cached forward input
  Mat<T> backward(const Mat<T>& dy, const Mat<T>& x) {
    kern::matmul_tn(w.g, x, dy, /*accumulate=*/true);
    kern::colsum_accum(b.g, dy);
    Mat<T> dx(x.rows(), x.cols());
    kern::matmul_nt(dx, dy, w.w);
    return dx;
  }
};

// ---------------------------------------------------------------------------

template <typename T>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Param<T> gain;  // 1 x dim
  Param<T> bias;  // 1 x dim

  struct Cache {
    Mat<T> xhat;
    std::vector<T> inv_std;
  };

  void init(int dim) {
    gain.init_const(1, dim, T(1));
    bias.init_const(1, dim, T(0));
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    gain.name = prefix + ".g";
    bias.name = prefix + ".b";
    out.push_back(&gain);
    out.push_back(&bias);
  }

  Mat<T> forward(const Mat<T>& x, Cache& cache) const {
    const int m = x.rows(), n = x.cols();
    cache.xhat = Mat<T>(m, n);
    cache.inv_std.resize(m);
    Mat<T> y(m, n);
    for (int i = 0; i < m; ++i) {
      const T* xi = x.row(i);
      T mean = T(0);
      for (int j = 0; j < n; ++j) mean += xi[j];
      mean /= T(n);
      T var = T(0);
      for (int j = 0; j < n; ++j) {
        const T d = xi[j] - mean;
        var += d * d;
      }
      var /= T(n);
      const T inv = T(1) / std::sqrt(var + T(kEps));
      cache.inv_std[i] = inv;
      for (int j = 0; j < n; ++j) {
        const T xh = (xi[j] - mean) * inv;
        cache.xhat(i, j) = xh;
        y(i, j) = gain.w(0, j) * xh + bias.w(0, j);
      }
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& cache) {
    const int m = dy.rows(), n = dy.cols();
    Mat<T> dx(m, n);
    for (int i = 0; i < m; ++i) {
      const T* dyi = dy.row(i);
      const T* xh = cache.xhat.row(i);
      T sum_g = T(0), sum_gx = T(0);
      for (int j = 0; j < n; ++j) {
        const T gdy = gain.w(0, j) * dyi[j];
        sum_g += gdy;
        sum_gx += gdy * xh[j];
        gain.g(0, j) += dyi[j] * xh[j];
        bias.g(0, j) += dyi[j];
      }
      const T inv = cache.inv_std[i];
      for (int j = 0; j < n; ++j) {
        const T gdy = gain.w(0, j) * dyi[j];
        dx(i, j) = inv * (gdy - sum_g / T(n) - xh[j] * sum_gx / T(n));
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------

// softmax(Q K^T / sqrt(d_k)) V with row-max stabilization. Row-stochastic
// weights are exposed for attention export and for the fusion record.
template <typename T>
Mat<T> scaled_dot_attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v,
                            Mat<T>* weights_out = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() < 1)
    throw std::invalid_argument("scaled_dot_attention: inconsistent dims");
  if (has_nonfinite(q) || has_nonfinite(k) || has_nonfinite(v))
    throw std::invalid_argument("scaled_dot_attention: non-finite input");
  Mat<T> s(q.rows(), k.rows());
  kern::matmul_nt(s, q, k);
  kern::scale(s, T(1) / static_cast<T>(std::sqrt(static_cast<double>(q.cols()))));
  kern::softmax_rows(s);
  if (weights_out) *weights_out = s;
  Mat<T> y(q.rows(), v.cols());
  kern::matmul(y, s, v);
  return y;
}

// Gradients of scaled_dot_attention given the cached softmax weights.
template <typename T>
void scaled_dot_attention_backward(const Mat<T>& dy, const Mat<T>& weights, const Mat<T>& q,
                                   const Mat<T>& k, const Mat<T>& v, Mat<T>& dq, Mat<T>& dk,
                                   Mat<T>& dv) {
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(q.cols())));
  dv = Mat<T>(v.rows(), v.cols());
  kern::matmul_tn(dv, weights, dy);
  Mat<T> dw(weights.rows(), weights.cols());
  kern::matmul_nt(dw, dy, v);
  // softmax jacobian: ds = w .* (dw - rowdot(dw, w))
  Mat<T> ds(weights.rows(), weights.cols());
  for (int i = 0; i < weights.rows(); ++i) {
    T dot = T(0);
    for (int j = 0; j < weights.cols(); ++j) dot += dw(i, j) * weights(i, j);
    for (int j = 0; j < weights.cols(); ++j) ds(i, j) = weights(i, j) * (dw(i, j) - dot);
  }
  kern::scale(ds, inv_sqrt);
  dq = Mat<T>(q.rows(), q.cols());
  kern::matmul(dq, ds, k);
  dk = Mat<T>(k.rows(), k.cols());
  kern::matmul_tn(dk, ds, q);
}

// ---------------------------------------------------------------------------

template <typename T>
struct MultiHeadAttention {
  int dim = 0, heads = 0;
  Linear<T> wq, wk, wv, wo;

  struct Cache {
    Mat<T> x, q, k, v, concat;
    std::vector<Mat<T>> head_weights;  // per head, M x M
  };

  void init(int d, int h, Rng& rng) {
    if (d % h != 0) throw std::invalid_argument("attention width must divide heads");
    dim = d;
    heads = h;
    wq.init(d, d, rng);
    wk.init(d, d, rng);
    wv.init(d, d, rng);
    wo.init(d, d, rng);
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
  }

  Mat<T> forward(const Mat<T>& x, Cache& cache) const {
    const int m = x.rows(), dh = dim / heads;
    cache.x = x;
    cache.q = wq.forward(x);
    cache.k = wk.forward(x);
    cache.v = wv.forward(x);
    cache.head_weights.assign(heads, Mat<T>());
    cache.concat = Mat<T>(m, dim);
    for (int h = 0; h < heads; ++h) {
      Mat<T> qh = slice_cols(cache.q, h * dh, dh);
      Mat<T> kh = slice_cols(cache.k, h * dh, dh);
      Mat<T> vh = slice_cols(cache.v, h * dh, dh);
      Mat<T> yh = scaled_dot_attention(qh, kh, vh, &cache.head_weights[h]);
      put_cols(cache.concat, yh, h * dh);
    }
    return wo.forward(cache.concat);
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& cache) {
    const int m = cache.x.rows(), dh = dim / heads;
    Mat<T> dconcat = wo.backward(dy, cache.concat);
    Mat<T> dq(m, dim), dk(m, dim), dv(m, dim);
    for (int h = 0; h < heads; ++h) {
      Mat<T> qh = slice_cols(cache.q, h * dh, dh);
      Mat<T> kh = slice_cols(cache.k, h * dh, dh);
      Mat<T> vh = slice_cols(cache.v, h * dh, dh);
      Mat<T> dyh = slice_cols(dconcat, h * dh, dh);
      Mat<T> dqh, dkh, dvh;
      scaled_dot_attention_backward(dyh, cache.head_weights[h], qh, kh, vh, dqh, dkh, dvh);
      put_cols(dq, dqh, h * dh);
      put_cols(dk, dkh, h * dh);
      put_cols(dv, dvh, h * dh);
    }
    Mat<T> dx = wq.backward(dq, cache.x);
    kern::add_inplace(dx, wk.backward(dk, cache.x));
    kern::add_inplace(dx, wv.backward(dv, cache.x));
    return dx;
  }

  // attention weights averaged over heads, rows still sum to 1
  static Mat<T> head_average(const Cache& cache) {
    const auto& hw = cache.head_weights;
    Mat<T> avg(hw[0].rows(), hw[0].cols());
    for (const auto& w : hw) kern::add_inplace(avg, w);
    kern::scale(avg, T(1) / static_cast<T>(hw.size()));
    return avg;
  }

  static Mat<T> slice_cols(const Mat<T>& x, int c0, int n) {
    Mat<T> out(x.rows(), n);
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < n; ++j) out(i, j) = x(i, c0 + j);
    return out;
  }

  static void put_cols(Mat<T>& dst, const Mat<T>& src, int c0) {
    for (int i = 0; i < src.rows(); ++i)
      for (int j = 0; j < src.cols(); ++j) dst(i, c0 + j) = src(i, j);
  }
};

// ---------------------------------------------------------------------------

template <typename T>
struct FeedForward {
  Linear<T> lin1, lin2;

  struct Cache {
    Mat<T> x, pre, act;
  };

  void init(int dim, int hidden, Rng& rng) {
    lin1.init(dim, hidden, rng);
    lin2.init(hidden, dim, rng);
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    lin1.collect(prefix + ".lin1", out);
    lin2.collect(prefix + ".lin2", out);
  }

  Mat<T> forward(const Mat<T>& x, Cache& cache) const {
    cache.x = x;
    cache.pre = lin1.forward(x);
    cache.act = cache.pre;
    for (size_t i = 0; i < cache.act.size(); ++i) cache.act.data()[i] = gelu(cache.act.data()[i]);
    return lin2.forward(cache.act);
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& cache) {
    Mat<T> dact = lin2.backward(dy, cache.act);
    for (size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_grad(cache.pre.data()[i]);
    return lin1.backward(dact, cache.x);
  }
};

// ---------------------------------------------------------------------------

// Pre-norm block: x + MHA(LN1(x)), then + FF(LN2(.))
template <typename T>
struct TransformerLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;

  struct Cache {
    typename LayerNorm<T>::Cache ln1c, ln2c;
    typename MultiHeadAttention<T>::Cache attnc;
    typename FeedForward<T>::Cache ffc;
  };

  void init(int dim, int heads, int ffn_hidden, Rng& rng) {
    ln1.init(dim);
    attn.init(dim, heads, rng);
    ln2.init(dim);
    ff.init(dim, ffn_hidden, rng);
  }

  void collect(const std::string& prefix, ParamRefs<T>& out) {
    ln1.collect(prefix + ".ln1", out);
    attn.collect(prefix + ".attn", out);
    ln2.collect(prefix + ".ln2", out);
    ff.collect(prefix + ".ff", out);
  }

  Mat<T> forward(const Mat<T>& x, Cache& cache) const {
    Mat<T> a = ln1.forward(x, cache.ln1c);
    Mat<T> x1 = attn.forward(a, cache.attnc);
    kern::add_inplace(x1, x);
    Mat<T> b = ln2.forward(x1, cache.ln2c);
    Mat<T> out = ff.forward(b, cache.ffc);
    kern::add_inplace(out, x1);
    return out;
  }

  Mat<T> backward(const Mat<T>& dout, const Cache& cache) {
    Mat<T> db = ff.backward(dout, cache.ffc);
    Mat<T> dx1 = ln2.backward(db, cache.ln2c);
    kern::add_inplace(dx1, dout);  // residual around the feed-forward
    Mat<T> da = attn.backward(dx1, cache.attnc);
    Mat<T> dx = ln1.backward(da, cache.ln1c);
    kern::add_inplace(dx, dx1);  // residual around the attention
    return dx;
  }
};

}  // namespace mtsf::nn
