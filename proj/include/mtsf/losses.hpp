#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsf/common.hpp"
#include "mtsf/mat.hpp"

namespace mtsf {

template <typename T>
T stable_softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Mean binary cross-entropy over probabilities with epsilon clamping.
// Gradient (w.r.t. the probabilities) is written to `grad` when given.
template <typename T>
T bce_prob_loss(const Mat<T>& probs, const Mat<uint8_t>& targets, Mat<T>* grad = nullptr) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    throw std::invalid_argument("bce_prob_loss: shape mismatch");
  constexpr double kEps = 1e-7;
  const size_t m = probs.size();
  if (grad) *grad = Mat<T>(probs.rows(), probs.cols());
  double total = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double p = std::clamp(static_cast<double>(probs.data()[i]), kEps, 1.0 - kEps);
    const double h = targets.data()[i];
    total -= h * std::log(p) + (1.0 - h) * std::log(1.0 - p);
    if (grad) {
      const double raw = probs.data()[i];
      const double g =
          (raw > kEps && raw < 1.0 - kEps) ? (p - h) / (p * (1.0 - p)) / double(m) : 0.0;
      grad->data()[i] = static_cast<T>(g);
    }
  }
  return static_cast<T>(total / double(m));
}

// Mean binary cross-entropy over logits (numerically stable form).
template <typename T>
T bce_logit_loss(const Mat<T>& logits, const Mat<uint8_t>& targets, Mat<T>* grad = nullptr) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw std::invalid_argument("bce_logit_loss: shape mismatch");
  const size_t m = logits.size();
  if (grad) *grad = Mat<T>(logits.rows(), logits.cols());
  double total = 0.0;
  for (size_t i = 0; i < m; ++i) {
    const double x = logits.data()[i];
    const double y = targets.data()[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    if (grad) grad->data()[i] = static_cast<T>((sigmoid(x) - y) / double(m));
  }
  return static_cast<T>(total / double(m));
}

// Row-wise two-way loss: each row holds the class logits of one sample.
// For a row with positive set P and negative set N (both non-empty),
//   z = logsumexp_{n in N} x_n + gamma * logsumexp_{p in P} (-x_p / gamma)
//   contribution = softplus(z)
// and the result is the mean over contributing rows. Rows missing either
// set are skipped; if every row is skipped the loss is 0 with zero grads.
template <typename T>
T two_way_loss(const Mat<T>& logits, const Mat<uint8_t>& labels, T gamma, Mat<T>* grad = nullptr) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols())
    throw std::invalid_argument("two_way_loss: shape mismatch");
  if (!(gamma > T(0))) throw std::invalid_argument("two_way_loss: gamma must be positive");
  const int s = logits.rows(), c = logits.cols();
  if (grad) *grad = Mat<T>(s, c);

  struct RowResult {
    double z = 0.0;
    bool used = false;
  };
  std::vector<RowResult> rows(s);
  int contributing = 0;
  double total = 0.0;
  for (int i = 0; i < s; ++i) {
    double max_n = -std::numeric_limits<double>::infinity();
    double max_p = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      const double x = logits(i, j);
      if (labels(i, j))
        max_p = std::max(max_p, -x / double(gamma));
      else
        max_n = std::max(max_n, x);
    }
    if (!std::isfinite(max_n) || !std::isfinite(max_p)) continue;  // empty set
    double sum_n = 0.0, sum_p = 0.0;
    for (int j = 0; j < c; ++j) {
      const double x = logits(i, j);
      if (labels(i, j))
        sum_p += std::exp(-x / double(gamma) - max_p);
      else
        sum_n += std::exp(x - max_n);
    }
    const double z =
        (max_n + std::log(sum_n)) + double(gamma) * (max_p + std::log(sum_p));
    rows[i] = {z, true};
    total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    ++contributing;
  }
  if (contributing == 0) return T(0);
  if (grad) {
    for (int i = 0; i < s; ++i) {
      if (!rows[i].used) continue;
      const double sz = sigmoid(rows[i].z) / double(contributing);
      // softmax over each set, recomputed with max-shift
      double max_n = -std::numeric_limits<double>::infinity();
      double max_p = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) {
        const double x = logits(i, j);
        if (labels(i, j))
          max_p = std::max(max_p, -x / double(gamma));
        else
          max_n = std::max(max_n, x);
      }
      double sum_n = 0.0, sum_p = 0.0;
      for (int j = 0; j < c; ++j) {
        const double x = logits(i, j);
        if (labels(i, j))
          sum_p += std::exp(-x / double(gamma) - max_p);
        else
          sum_n += std::exp(x - max_n);
      }
      for (int j = 0; j < c; ++j) {
        const double x = logits(i, j);
        if (labels(i, j))
          (*grad)(i, j) = static_cast<T>(-sz * std::exp(-x / double(gamma) - max_p) / sum_p);
        else
          (*grad)(i, j) = static_cast<T>(sz * std::exp(x - max_n) / sum_n);
      }
    }
  }
  return static_cast<T>(total / contributing);
}

// Column-wise dual of two_way_loss: transposes logits and labels and runs the
// same row-wise code, so the duality between the two directions is exact.
template <typename T>
T two_way_loss_classwise(const Mat<T>& logits, const Mat<uint8_t>& labels, T gamma,
                         Mat<T>* grad = nullptr) {
  Mat<T> lt = logits.transposed();
  Mat<uint8_t> yt = labels.transposed();
  Mat<T> gt;
  const T loss = two_way_loss(lt, yt, gamma, grad ? &gt : nullptr);
  if (grad) *grad = gt.transposed();
  return loss;
}

enum class LossMode { kTwoWay, kBce };

inline std::string to_string(LossMode m) { return m == LossMode::kTwoWay ? "two_way" : "bce"; }

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "two_way") return LossMode::kTwoWay;
  if (s == "bce") return LossMode::kBce;
  throw std::invalid_argument("unknown loss mode: " + s);
}

struct LossWeights {
  double beta1 = 1.0;   // human presence term
  double beta2 = 1.0;   // frame-level term
  double beta3 = 1.0;   // sequence-level term
  double alpha1 = 1.0;  // frame class-wise mix
  double alpha2 = 1.0;  // sequence class-wise mix
  double gamma_s = 1.0;
  double gamma_c = 1.0;
  LossMode mode = LossMode::kTwoWay;
};

template <typename T>
struct LossBreakdown {
  T human = T(0);
  T frame_sample = T(0);
  T frame_class = T(0);
  T seq_sample = T(0);
  T seq_class = T(0);
  T total = T(0);
};

// Weighted total: beta1*human + beta2*(frame_sample + alpha1*frame_class)
//               + beta3*(seq_sample + alpha2*seq_class)
template <typename T>
LossBreakdown<T> combine_losses(T human, T frame_sample, T frame_class, T seq_sample, T seq_class,
                                const LossWeights& w) {
  for (T v : {human, frame_sample, frame_class, seq_sample, seq_class})
    if (!std::isfinite(static_cast<double>(v)))
      throw numeric_error("loss component is not finite");
  LossBreakdown<T> b;
  b.human = human;
  b.frame_sample = frame_sample;
  b.frame_class = frame_class;
  b.seq_sample = seq_sample;
  b.seq_class = seq_class;
  b.total = static_cast<T>(w.beta1) * human +
            static_cast<T>(w.beta2) * (frame_sample + static_cast<T>(w.alpha1) * frame_class) +
            static_cast<T>(w.beta3) * (seq_sample + static_cast<T>(w.alpha2) * seq_class);
  return b;
}

// Frame- or sequence-level objective on a logit matrix: sample-wise plus
// alpha-weighted class-wise two-way terms, or plain BCE when mode says so.
// Returns sample + alpha * classwise; `grad` (if given) is assigned the
// gradient of that combination.
template <typename T>
T combined_score_loss(const Mat<T>& logits, const Mat<uint8_t>& labels, T gamma_s, T gamma_c,
                      T alpha, LossMode mode, T* sample_out = nullptr, T* class_out = nullptr,
                      Mat<T>* grad = nullptr) {
  if (mode == LossMode::kBce) {
    const T l = bce_logit_loss(logits, labels, grad);
    if (sample_out) *sample_out = l;
    if (class_out) *class_out = T(0);
    return l;
  }
  Mat<T> gs, gc;
  const T ls = two_way_loss(logits, labels, gamma_s, grad ? &gs : nullptr);
  const T lc = two_way_loss_classwise(logits, labels, gamma_c, grad ? &gc : nullptr);
  if (sample_out) *sample_out = ls;
  if (class_out) *class_out = lc;
  if (grad) {
    *grad = Mat<T>(logits.rows(), logits.cols());
    if (gs.size() == 0) gs = Mat<T>(logits.rows(), logits.cols());
    if (gc.size() == 0) gc = Mat<T>(logits.rows(), logits.cols());
    for (size_t i = 0; i < grad->size(); ++i)
      grad->data()[i] = gs.data()[i] + alpha * gc.data()[i];
  }
  return ls + alpha * lc;
}

}  // namespace mtsf
