#pragma once

#include <string>
#include <vector>

#include "mtsf/nn.hpp"

namespace mtsf {

enum class FusionStrategy { kTransformer, kMax, kMean, kConcat };

inline std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kTransformer: return "transformer";
    case FusionStrategy::kMax: return "max";
    case FusionStrategy::kMean: return "mean";
    case FusionStrategy::kConcat: return "concat";
  }
  return "?";
}

inline FusionStrategy fusion_strategy_from_string(const std::string& s) {
  if (s == "transformer") return FusionStrategy::kTransformer;
  if (s == "max") return FusionStrategy::kMax;
  if (s == "mean") return FusionStrategy::kMean;
  if (s == "concat") return FusionStrategy::kConcat;
  throw std::invalid_argument("unknown fusion strategy: " + s);
}

// Self-attention over the frame axis of one view's feature sequence, with a
// fixed sin/cos position table. One parameter set serves every view.
template <typename T>
struct TemporalEncoder {
  int dim = 0;
  Mat<T> pos;  // max_t x dim, not learned
  std::vector<nn::TransformerLayer<T>> layers;

  struct Cache {
    std::vector<typename nn::TransformerLayer<T>::Cache> layerc;
  };

  void init(int width, int depth, int heads, int ffn_hidden, int max_t, Rng& rng) {
    dim = width;
    pos = nn::sinusoidal_position_table<T>(max_t, width);
    layers.resize(depth);
    for (auto& l : layers) l.init(width, heads, ffn_hidden, rng);
  }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  }

  Mat<T> forward(const Mat<T>& x, Cache& cache) const {
    if (x.rows() > pos.rows()) throw std::invalid_argument("TemporalEncoder: sequence too long");
    Mat<T> y = x;
    for (int t = 0; t < y.rows(); ++t)
      for (int j = 0; j < dim; ++j) y(t, j) += pos(t, j);
    cache.layerc.assign(layers.size(), {});
    for (size_t i = 0; i < layers.size(); ++i) y = layers[i].forward(y, cache.layerc[i]);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, Cache& cache) {
    Mat<T> dx = dy;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
      dx = layers[i].backward(dx, cache.layerc[i]);
    return dx;  // the position add is an identity for gradients
  }

  // head-averaged attention of the final layer, rows sum to 1
  Mat<T> last_attention(const Cache& cache) const {
    return nn::MultiHeadAttention<T>::head_average(cache.layerc.back().attnc);
  }
};

// Combines the per-view feature sequences into one. The transformer strategy
// attends across the view axis independently at every frame and then averages
// the contextualized view tokens; max/mean work elementwise; concat stacks
// views featurewise and mixes them with a linear layer.
template <typename T>
struct ViewFusion {
  FusionStrategy strategy = FusionStrategy::kTransformer;
  int dim = 0, n_views = 0;
  nn::TransformerLayer<T> xview;  // transformer strategy only
  nn::Linear<T> mixer;            // concat strategy only

  struct Cache {
    int t = 0;
    std::vector<typename nn::TransformerLayer<T>::Cache> framec;
    std::vector<Mat<T>> frame_in;  // per frame: n_views x dim
    Mat<T> concat_in;
    std::vector<int> argmax;  // winner view per (frame, channel)
  };

  void init(FusionStrategy s, int width, int views, int heads, int ffn_hidden, Rng& rng) {
    strategy = s;
    dim = width;
    n_views = views;
    if (strategy == FusionStrategy::kTransformer) xview.init(width, heads, ffn_hidden, rng);
    if (strategy == FusionStrategy::kConcat) mixer.init(views * width, width, rng);
  }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    if (strategy == FusionStrategy::kTransformer) xview.collect(prefix + ".xview", out);
    if (strategy == FusionStrategy::kConcat) mixer.collect(prefix + ".mixer", out);
  }

  Mat<T> forward(const std::vector<Mat<T>>& views, Cache& cache) const {
    if (static_cast<int>(views.size()) != n_views)
      throw std::invalid_argument("ViewFusion: view count mismatch");
    const int t = views[0].rows();
    cache.t = t;
    Mat<T> fused(t, dim);
    switch (strategy) {
      case FusionStrategy::kTransformer: {
        cache.framec.assign(t, {});
        cache.frame_in.assign(t, Mat<T>());
        for (int ft = 0; ft < t; ++ft) {
          Mat<T> x(n_views, dim);
          for (int n = 0; n < n_views; ++n)
            for (int j = 0; j < dim; ++j) x(n, j) = views[n](ft, j);
          cache.frame_in[ft] = x;
          Mat<T> y = xview.forward(x, cache.framec[ft]);
          for (int j = 0; j < dim; ++j) {
            T acc = T(0);
            for (int n = 0; n < n_views; ++n) acc += y(n, j);
            fused(ft, j) = acc / T(n_views);
          }
        }
        break;
      }
      case FusionStrategy::kMean: {
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < dim; ++j) {
            T acc = T(0);
            for (int n = 0; n < n_views; ++n) acc += views[n](ft, j);
            fused(ft, j) = acc / T(n_views);
          }
        break;
      }
      case FusionStrategy::kMax: {
        cache.argmax.assign(size_t(t) * dim, 0);
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < dim; ++j) {
            int win = 0;
            T best = views[0](ft, j);
            for (int n = 1; n < n_views; ++n)
              if (views[n](ft, j) > best) {
                best = views[n](ft, j);
                win = n;
              }
            fused(ft, j) = best;
            cache.argmax[size_t(ft) * dim + j] = win;
          }
        break;
      }
      case FusionStrategy::kConcat: {
        cache.concat_in = Mat<T>(t, n_views * dim);
        for (int ft = 0; ft < t; ++ft)
          for (int n = 0; n < n_views; ++n)
            for (int j = 0; j < dim; ++j) cache.concat_in(ft, n * dim + j) = views[n](ft, j);
        fused = mixer.forward(cache.concat_in);
        break;
      }
    }
    return fused;
  }

  std::vector<Mat<T>> backward(const Mat<T>& dy, Cache& cache) {
    const int t = cache.t;
    std::vector<Mat<T>> dviews(n_views, Mat<T>(t, dim));
    switch (strategy) {
      case FusionStrategy::kTransformer: {
        for (int ft = 0; ft < t; ++ft) {
          Mat<T> dpool(n_views, dim);
          for (int n = 0; n < n_views; ++n)
            for (int j = 0; j < dim; ++j) dpool(n, j) = dy(ft, j) / T(n_views);
          Mat<T> dx = xview.backward(dpool, cache.framec[ft]);
          for (int n = 0; n < n_views; ++n)
            for (int j = 0; j < dim; ++j) dviews[n](ft, j) = dx(n, j);
        }
        break;
      }
      case FusionStrategy::kMean: {
        for (int n = 0; n < n_views; ++n)
          for (int ft = 0; ft < t; ++ft)
            for (int j = 0; j < dim; ++j) dviews[n](ft, j) = dy(ft, j) / T(n_views);
        break;
      }
      case FusionStrategy::kMax: {
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < dim; ++j)
            dviews[cache.argmax[size_t(ft) * dim + j]](ft, j) = dy(ft, j);
        break;
      }
      case FusionStrategy::kConcat: {
        Mat<T> dcat = mixer.backward(dy, cache.concat_in);
        for (int ft = 0; ft < t; ++ft)
          for (int n = 0; n < n_views; ++n)
            for (int j = 0; j < dim; ++j) dviews[n](ft, j) = dcat(ft, n * dim + j);
        break;
      }
    }
    return dviews;
  }

  // per-frame head-averaged cross-view attention (transformer strategy)
  std::vector<Mat<T>> attention(const Cache& cache) const {
    std::vector<Mat<T>> out;
    if (strategy != FusionStrategy::kTransformer) return out;
    out.reserve(cache.framec.size());
    for (const auto& fc : cache.framec)
      out.push_back(nn::MultiHeadAttention<T>::head_average(fc.attnc));
    return out;
  }
};

// Linear classifiers: one per frame on the fused sequence, one on its
// temporal mean for the whole episode.
template <typename T>
struct ScoreHeads {
  nn::Linear<T> frame;
  nn::Linear<T> seq;

  struct Cache {
    Mat<T> fused;
    Mat<T> pooled;
  };

  void init(int dim, int n_classes, Rng& rng) {
    frame.init(dim, n_classes, rng);
    seq.init(dim, n_classes, rng);
  }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    frame.collect(prefix + ".frame", out);
    seq.collect(prefix + ".seq", out);
  }

  void forward(const Mat<T>& fused, Cache& cache, Mat<T>& frame_logits,
               Mat<T>& seq_logits) const {
    cache.fused = fused;
    frame_logits = frame.forward(fused);
    cache.pooled = Mat<T>(1, fused.cols());
    for (int j = 0; j < fused.cols(); ++j) {
      T acc = T(0);
      for (int i = 0; i < fused.rows(); ++i) acc += fused(i, j);
      cache.pooled(0, j) = acc / T(fused.rows());
    }
    seq_logits = seq.forward(cache.pooled);
  }

  Mat<T> backward(const Mat<T>& dframe, const Mat<T>& dseq, Cache& cache) {
    Mat<T> dfused = frame.backward(dframe, cache.fused);
    Mat<T> dpooled = seq.backward(dseq, cache.pooled);
    const int t = cache.fused.rows();
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < cache.fused.cols(); ++j) dfused(i, j) += dpooled(0, j) / T(t);
    return dfused;
  }
};

}  // namespace mtsf
