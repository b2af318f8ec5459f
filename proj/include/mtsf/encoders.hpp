#pragma once

#include <vector>

#include "mtsf/losses.hpp"
#include "mtsf/nn.hpp"

namespace mtsf {

// Cuts one D x H x W frame into non-overlapping P x P patches. Row i of the
// result is patch (gy, gx) with gy * (W/P) + gx = i, flattened channel-major
// (c, py, px). Frame data is the generator's float layout.
template <typename T>
Mat<T> patchify(const float* frame, int d, int h, int w, int p) {
  if (h % p != 0 || w % p != 0) throw std::invalid_argument("patchify: patch must divide H and W");
  const int gh = h / p, gw = w / p;
  Mat<T> out(gh * gw, d * p * p);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      T* row = out.row(gy * gw + gx);
      int k = 0;
      for (int c = 0; c < d; ++c)
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px)
            row[k++] = static_cast<T>(frame[(c * h + gy * p + py) * w + gx * p + px]);
    }
  return out;
}

// Patch-token encoder for a single frame: linear embedding, optional learned
// per-token position table, a stack of pre-norm transformer layers, then a
// mean over tokens. One parameter set serves every view and frame.
template <typename T>
struct VisualEncoder {
  int n_tokens = 0, dim = 0;
  bool use_pos = true;
  nn::Linear<T> embed;
  nn::Param<T> pos;
  std::vector<nn::TransformerLayer<T>> layers;

  struct Cache {
    Mat<T> patches;
    Mat<T> tokens;  // embedded (+pos) input to the first layer
    std::vector<Mat<T>> layer_in;
    std::vector<typename nn::TransformerLayer<T>::Cache> layerc;
  };

  void init(int patch_dim, int tokens, int width, int depth, int heads, int ffn_hidden,
            bool learned_pos, Rng& rng) {
    n_tokens = tokens;
    dim = width;
    use_pos = learned_pos;
    embed.init(patch_dim, width, rng);
    if (use_pos) pos.init_uniform(tokens, width, width, rng);
    layers.resize(depth);
    for (auto& l : layers) l.init(width, heads, ffn_hidden, rng);
  }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    embed.collect(prefix + ".embed", out);
    if (use_pos) {
      pos.name = prefix + ".pos";
      out.push_back(&pos);
    }
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  }

  // patches: n_tokens x patch_dim -> pooled feature as a 1 x dim row
  Mat<T> forward(const Mat<T>& patches, Cache& cache) const {
    if (patches.rows() != n_tokens) throw std::invalid_argument("VisualEncoder: token count");
    cache.patches = patches;
    Mat<T> x = embed.forward(patches);
    if (use_pos) kern::add_inplace(x, pos.w);
    cache.tokens = x;
    cache.layer_in.clear();
    cache.layerc.assign(layers.size(), {});
    for (size_t i = 0; i < layers.size(); ++i) {
      cache.layer_in.push_back(x);
      x = layers[i].forward(x, cache.layerc[i]);
    }
    cache.layer_in.push_back(x);  // final tokens, used by pool backward
    Mat<T> pooled(1, dim);
    for (int j = 0; j < dim; ++j) {
      T acc = T(0);
      for (int i = 0; i < n_tokens; ++i) acc += x(i, j);
      pooled(0, j) = acc / T(n_tokens);
    }
    return pooled;
  }

  void backward(const Mat<T>& dpooled, Cache& cache) {
    Mat<T> dx(n_tokens, dim);
    for (int i = 0; i < n_tokens; ++i)
      for (int j = 0; j < dim; ++j) dx(i, j) = dpooled(0, j) / T(n_tokens);
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
      dx = layers[i].backward(dx, cache.layerc[i]);
    if (use_pos) kern::add_inplace(pos.g, dx);
    embed.backward(dx, cache.patches);  // input grad discarded: patches are data
  }
};

// Spectrogram-frame encoder: per-frame linear projection then transformer
// layers across the frame sequence. Deliberately has no position table, so a
// constant spectrogram yields identical features at every frame.
template <typename T>
struct AudioEncoder {
  int dim = 0;
  nn::Linear<T> proj;
  std::vector<nn::TransformerLayer<T>> layers;

  struct Cache {
    Mat<T> spect;
    std::vector<typename nn::TransformerLayer<T>::Cache> layerc;
  };

  void init(int f_bins, int width, int depth, int heads, int ffn_hidden, Rng& rng) {
    dim = width;
    proj.init(f_bins, width, rng);
    layers.resize(depth);
    for (auto& l : layers) l.init(width, heads, ffn_hidden, rng);
  }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    proj.collect(prefix + ".proj", out);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".layer" + std::to_string(i), out);
  }

  // spect: t x f_bins -> t x dim
  Mat<T> forward(const Mat<T>& spect, Cache& cache) const {
    cache.spect = spect;
    cache.layerc.assign(layers.size(), {});
    Mat<T> x = proj.forward(spect);
    for (size_t i = 0; i < layers.size(); ++i) x = layers[i].forward(x, cache.layerc[i]);
    return x;
  }

  void backward(const Mat<T>& dy, Cache& cache) {
    Mat<T> dx = dy;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i)
      dx = layers[i].backward(dx, cache.layerc[i]);
    proj.backward(dx, cache.spect);  // input grad discarded
  }
};

// Per-frame person-presence probability from the visual feature.
template <typename T>
struct HumanHead {
  nn::Linear<T> lin;

  struct Cache {
    Mat<T> feats;
    Mat<T> probs;
  };

  void init(int d_v, Rng& rng) { lin.init(d_v, 1, rng); }

  void collect(const std::string& prefix, nn::ParamRefs<T>& out) {
    lin.collect(prefix, out);
  }

  // feats: t x d_v -> t x 1 probabilities
  Mat<T> forward(const Mat<T>& feats, Cache& cache) const {
    cache.feats = feats;
    Mat<T> z = lin.forward(feats);
    for (size_t i = 0; i < z.size(); ++i) z.data()[i] = sigmoid(z.data()[i]);
    cache.probs = z;
    return z;
  }

  // dprobs: gradient w.r.t. the probabilities; returns gradient on feats
  Mat<T> backward(const Mat<T>& dprobs, Cache& cache) {
    Mat<T> dz = dprobs;
    for (size_t i = 0; i < dz.size(); ++i) {
      const T p = cache.probs.data()[i];
      dz.data()[i] *= p * (T(1) - p);
    }
    return lin.backward(dz, cache.feats);
  }
};

}  // namespace mtsf
