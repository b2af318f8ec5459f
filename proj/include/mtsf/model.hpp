#pragma once

#include <string>
#include <vector>

#include "mtsf/encoders.hpp"
#include "mtsf/episode.hpp"
#include "mtsf/fusion.hpp"

namespace mtsf {

enum class Modality { kAudioVisual, kVisualOnly, kAudioOnly };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::kAudioVisual: return "av";
    case Modality::kVisualOnly: return "visual";
    case Modality::kAudioOnly: return "audio";
  }
  return "?";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "av") return Modality::kAudioVisual;
  if (s == "visual") return Modality::kVisualOnly;
  if (s == "audio") return Modality::kAudioOnly;
  throw std::invalid_argument("unknown modality: " + s);
}

struct ModelConfig {
  int n_views = 3, n_classes = 8, t = 16;
  int d = 3, h = 32, w = 32, f = 32;  // raw frame and spectrogram dims
  int patch = 8;
  int d_a = 32, d_v = 32, d_t = 32;
  int audio_layers = 1, visual_layers = 1, temporal_layers = 2, ffn_mult = 2;
  int audio_heads = 4, visual_heads = 4, temporal_heads = 4, fusion_heads = 4;
  bool visual_pos = true;
  Modality modality = Modality::kAudioVisual;
  FusionStrategy fusion = FusionStrategy::kTransformer;

  bool has_visual() const { return modality != Modality::kAudioOnly; }
  bool has_audio() const { return modality != Modality::kVisualOnly; }
  int d_av() const { return (has_audio() ? d_a : 0) + (has_visual() ? d_v : 0); }
  int n_tokens() const { return (h / patch) * (w / patch); }
  int patch_dim() const { return d * patch * patch; }
};

// The whole network for one episode: shared per-view encoders, concatenated
// audio/visual features projected to the temporal width, per-view temporal
// self-attention, cross-view fusion, then the two classifier heads plus the
// per-view person-presence head.
template <typename T>
struct Model {
  ModelConfig cfg;
  VisualEncoder<T> visual;
  AudioEncoder<T> audio;
  HumanHead<T> human;
  nn::Linear<T> av_proj;
  TemporalEncoder<T> temporal;
  ViewFusion<T> fusion;
  ScoreHeads<T> heads;
  nn::ParamRefs<T> params;

  void init(const ModelConfig& c, uint64_t seed) {
    cfg = c;
    Rng rng(seed);
    params.clear();
    if (cfg.has_visual()) {
      visual.init(cfg.patch_dim(), cfg.n_tokens(), cfg.d_v, cfg.visual_layers, cfg.visual_heads,
                  cfg.ffn_mult * cfg.d_v, cfg.visual_pos, rng);
      visual.collect("visual", params);
      human.init(cfg.d_v, rng);
      human.collect("human", params);
    }
    if (cfg.has_audio()) {
      audio.init(cfg.f, cfg.d_a, cfg.audio_layers, cfg.audio_heads, cfg.ffn_mult * cfg.d_a, rng);
      audio.collect("audio", params);
    }
    av_proj.init(cfg.d_av(), cfg.d_t, rng);
    av_proj.collect("av_proj", params);
    temporal.init(cfg.d_t, cfg.temporal_layers, cfg.temporal_heads, cfg.ffn_mult * cfg.d_t, cfg.t,
                  rng);
    temporal.collect("temporal", params);
    fusion.init(cfg.fusion, cfg.d_t, cfg.n_views, cfg.fusion_heads, cfg.ffn_mult * cfg.d_t, rng);
    fusion.collect("fusion", params);
    heads.init(cfg.d_t, cfg.n_classes, rng);
    heads.collect("heads", params);
  }

  void zero_grads() {
    for (auto* p : params) p->g.zero();
  }

  struct Input {
    std::vector<std::vector<Mat<T>>> patches;  // [view][frame]: n_tokens x patch_dim
    std::vector<Mat<T>> audio;                 // [view]: t x f
  };

  struct Output {
    Mat<T> human_probs;   // n_views x t (empty when the visual path is off)
    Mat<T> frame_logits;  // t x n_classes
    Mat<T> seq_logits;    // 1 x n_classes
  };

  struct ItemCache {
    std::vector<std::vector<typename VisualEncoder<T>::Cache>> visc;
    std::vector<Mat<T>> vfeat;  // [view]: t x d_v
    std::vector<typename HumanHead<T>::Cache> humanc;
    std::vector<typename AudioEncoder<T>::Cache> audc;
    std::vector<Mat<T>> concat;  // [view]: t x d_av
    std::vector<typename TemporalEncoder<T>::Cache> tempc;
    typename ViewFusion<T>::Cache fusec;
    typename ScoreHeads<T>::Cache headc;
  };

  Output forward(const Input& in, ItemCache& cache) const {
    const int n = cfg.n_views, t = cfg.t;
    Output out;
    cache.visc.assign(n, {});
    cache.vfeat.assign(n, Mat<T>());
    cache.humanc.assign(n, {});
    cache.audc.assign(n, {});
    cache.concat.assign(n, Mat<T>());
    cache.tempc.assign(n, {});
    if (cfg.has_visual()) out.human_probs = Mat<T>(n, t);
    std::vector<Mat<T>> g(n);
    for (int v = 0; v < n; ++v) {
      Mat<T> af, vf;
      if (cfg.has_visual()) {
        cache.visc[v].assign(t, {});
        vf = Mat<T>(t, cfg.d_v);
        for (int ft = 0; ft < t; ++ft) {
          Mat<T> pooled = visual.forward(in.patches[v][ft], cache.visc[v][ft]);
          for (int j = 0; j < cfg.d_v; ++j) vf(ft, j) = pooled(0, j);
        }
        cache.vfeat[v] = vf;
        Mat<T> probs = human.forward(vf, cache.humanc[v]);
        for (int ft = 0; ft < t; ++ft) out.human_probs(v, ft) = probs(ft, 0);
      }
      if (cfg.has_audio()) af = audio.forward(in.audio[v], cache.audc[v]);
      // feature order in the concatenation: audio block then visual block
      Mat<T> cat(t, cfg.d_av());
      int col = 0;
      if (cfg.has_audio()) {
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < cfg.d_a; ++j) cat(ft, j) = af(ft, j);
        col += cfg.d_a;
      }
      if (cfg.has_visual())
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < cfg.d_v; ++j) cat(ft, col + j) = vf(ft, j);
      cache.concat[v] = cat;
      Mat<T> proj = av_proj.forward(cat);
      g[v] = temporal.forward(proj, cache.tempc[v]);
    }
    Mat<T> fused = fusion.forward(g, cache.fusec);
    heads.forward(fused, cache.headc, out.frame_logits, out.seq_logits);
    return out;
  }

  // dhuman is the gradient w.r.t. the presence probabilities (may be empty
  // when the visual path is off or the presence term is disabled).
  void backward(ItemCache& cache, const Mat<T>& dframe, const Mat<T>& dseq, const Mat<T>& dhuman) {
    const int n = cfg.n_views, t = cfg.t;
    Mat<T> dfused = heads.backward(dframe, dseq, cache.headc);
    std::vector<Mat<T>> dg = fusion.backward(dfused, cache.fusec);
    for (int v = 0; v < n; ++v) {
      Mat<T> dproj = temporal.backward(dg[v], cache.tempc[v]);
      Mat<T> dcat = av_proj.backward(dproj, cache.concat[v]);
      int col = 0;
      if (cfg.has_audio()) {
        Mat<T> daf(t, cfg.d_a);
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < cfg.d_a; ++j) daf(ft, j) = dcat(ft, j);
        audio.backward(daf, cache.audc[v]);
        col += cfg.d_a;
      }
      if (cfg.has_visual()) {
        Mat<T> dvf(t, cfg.d_v);
        for (int ft = 0; ft < t; ++ft)
          for (int j = 0; j < cfg.d_v; ++j) dvf(ft, j) = dcat(ft, col + j);
        if (dhuman.size() > 0) {
          Mat<T> dprobs(t, 1);
          for (int ft = 0; ft < t; ++ft) dprobs(ft, 0) = dhuman(v, ft);
          kern::add_inplace(dvf, human.backward(dprobs, cache.humanc[v]));
        }
        for (int ft = 0; ft < t; ++ft) {
          Mat<T> drow(1, cfg.d_v);
          for (int j = 0; j < cfg.d_v; ++j) drow(0, j) = dvf(ft, j);
          visual.backward(drow, cache.visc[v][ft]);
        }
      }
    }
  }

  // Builds the per-episode input at the given sampled frame indices.
  Input make_input(const Episode& ep, const std::vector<int>& idx) const {
    Input in;
    const int n = cfg.n_views, t = static_cast<int>(idx.size());
    if (ep.n_views != n) throw std::invalid_argument("make_input: view count mismatch");
    if (cfg.has_visual()) {
      in.patches.assign(n, {});
      for (int v = 0; v < n; ++v) {
        in.patches[v].reserve(t);
        for (int i = 0; i < t; ++i)
          in.patches[v].push_back(patchify<T>(ep.frame(v, idx[i]), cfg.d, cfg.h, cfg.w, cfg.patch));
      }
    }
    if (cfg.has_audio()) {
      in.audio.assign(n, Mat<T>());
      for (int v = 0; v < n; ++v) {
        Mat<T> a(t, cfg.f);
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < cfg.f; ++j) a(i, j) = static_cast<T>(ep.audio[v](idx[i], j));
        in.audio[v] = a;
      }
    }
    return in;
  }

  // Attention views for export: per-view temporal maps from the last temporal
  // layer, and (transformer fusion only) per-frame cross-view maps.
  Mat<T> temporal_attention(const ItemCache& cache, int view) const {
    return temporal.last_attention(cache.tempc[view]);
  }
  std::vector<Mat<T>> fusion_attention(const ItemCache& cache) const {
    return fusion.attention(cache.fusec);
  }
};

}  // namespace mtsf
