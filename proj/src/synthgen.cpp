#include "mtsf/synthgen.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "mtsf/common.hpp"

namespace mtsf::synthgen {

using nlohmann::json;

std::string to_string(SignatureMode mode) {
  switch (mode) {
    case SignatureMode::kBoth: return "both";
    case SignatureMode::kSplit: return "split";
    case SignatureMode::kVisualOnly: return "visual";
    case SignatureMode::kAudioOnly: return "audio";
  }
  return "split";
}

SignatureMode signature_mode_from_string(const std::string& s) {
  if (s == "both") return SignatureMode::kBoth;
  if (s == "split") return SignatureMode::kSplit;
  if (s == "visual") return SignatureMode::kVisualOnly;
  if (s == "audio") return SignatureMode::kAudioOnly;
  throw std::invalid_argument("unknown signature mode: " + s);
}

std::string GenConfig::to_json() const {
  json j{{"n_views", n_views},
         {"t_raw", t_raw},
         {"n_classes", n_classes},
         {"n_events", n_events},
         {"d", d},
         {"h", h},
         {"w", w},
         {"f", f},
         {"signature_mode", to_string(signature_mode)},
         {"visual_amplitude", visual_amplitude},
         {"audio_amplitude", audio_amplitude},
         {"noise_sigma", noise_sigma},
         {"imbalance_factor", imbalance_factor},
         {"class_jitter", class_jitter}};
  return j.dump();
}

GenConfig GenConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GenConfig c;
  c.n_views = j.at("n_views").get<int>();
  c.t_raw = j.at("t_raw").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.n_events = j.at("n_events").get<int>();
  c.d = j.at("d").get<int>();
  c.h = j.at("h").get<int>();
  c.w = j.at("w").get<int>();
  c.f = j.at("f").get<int>();
  c.signature_mode = signature_mode_from_string(j.at("signature_mode").get<std::string>());
  c.visual_amplitude = j.at("visual_amplitude").get<double>();
  c.audio_amplitude = j.at("audio_amplitude").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.imbalance_factor = j.at("imbalance_factor").get<double>();
  c.class_jitter = j.at("class_jitter").get<int>();
  return c;
}

bool class_has_visual_signature(const GenConfig& config, int class_id) {
  switch (config.signature_mode) {
    case SignatureMode::kBoth: return true;
    case SignatureMode::kVisualOnly: return true;
    case SignatureMode::kAudioOnly: return false;
    case SignatureMode::kSplit: return class_id % 2 == 0;
  }
  return true;
}

bool class_has_audio_signature(const GenConfig& config, int class_id) {
  switch (config.signature_mode) {
    case SignatureMode::kBoth: return true;
    case SignatureMode::kVisualOnly: return false;
    case SignatureMode::kAudioOnly: return true;
    case SignatureMode::kSplit: return class_id % 2 == 1;
  }
  return true;
}

namespace {

void validate(const GenConfig& c) {
  if (c.n_views < 1 || c.n_classes < 1 || c.n_events < 0 || c.d < 1 || c.h < 1 || c.w < 1 ||
      c.f < 1)
    throw std::invalid_argument("generator counts must be >= 1");
  if (c.t_raw < 4) throw std::invalid_argument("t_raw must be >= 4");
}

// class c occupies one cell of a 4x4 block grid; the person block sits at the
// center regardless of class
struct Block {
  int r0, r1, c0, c1;
};

Block class_block(const GenConfig& cfg, int class_id) {
  const int bh = std::max(1, cfg.h / 4), bw = std::max(1, cfg.w / 4);
  const int gr = class_id % 4, gc = (class_id / 4) % 4;
  const int r0 = std::min(gr * bh, cfg.h - bh), c0 = std::min(gc * bw, cfg.w - bw);
  return {r0, r0 + bh, c0, c0 + bw};
}

Block person_block(const GenConfig& cfg) {
  const int bh = std::max(1, cfg.h / 4), bw = std::max(1, cfg.w / 4);
  const int r0 = (cfg.h - bh) / 2, c0 = (cfg.w - bw) / 2;
  return {r0, r0 + bh, c0, c0 + bw};
}

void add_block(Episode& e, int view, int t, const Block& b, float amp) {
  float* fr = e.frame(view, t);
  for (int ch = 0; ch < e.d; ++ch) {
    float* plane = fr + static_cast<size_t>(ch) * e.h * e.w;
    for (int r = b.r0; r < b.r1; ++r)
      for (int c = b.c0; c < b.c1; ++c) plane[r * e.w + c] += amp;
  }
}

ActionEvent sample_event(const GenConfig& cfg, Rng& rng, int class_id) {
  constexpr int kMaxTries = 100;
  const int min_len = 2;
  const int max_len = std::max(min_len, cfg.t_raw / 3);
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    const int len = min_len + rng.next_int(max_len - min_len + 1);
    if (len > cfg.t_raw) continue;
    const int start = rng.next_int(cfg.t_raw - len + 1);

    ActionEvent ev;
    ev.class_id = class_id;
    ev.start_frame = start;
    ev.end_frame = start + len;

    const int k = 1 + rng.next_int(cfg.n_views);
    std::vector<int> views(cfg.n_views);
    for (int i = 0; i < cfg.n_views; ++i) views[i] = i + 1;
    for (int i = 0; i < k; ++i) {  // partial Fisher-Yates, first k entries
      const int j = i + rng.next_int(cfg.n_views - i);
      std::swap(views[i], views[j]);
    }
    ev.visible_views.assign(views.begin(), views.begin() + k);
    std::sort(ev.visible_views.begin(), ev.visible_views.end());

    ev.band_lo = static_cast<int>(static_cast<int64_t>(class_id % cfg.n_classes) * cfg.f / cfg.n_classes) % cfg.f;
    ev.band_hi = static_cast<int>(static_cast<int64_t>(class_id % cfg.n_classes + 1) * cfg.f / cfg.n_classes);
    if (ev.band_hi <= ev.band_lo) ev.band_hi = ev.band_lo + 1;
    ev.band_hi = std::min(ev.band_hi, cfg.f);
    if (ev.band_hi <= ev.band_lo) ev.band_lo = ev.band_hi - 1;
    return ev;
  }
  throw generation_error("could not place event after bounded retries");
}

}  // namespace

Episode generate_episode(const GenConfig& cfg, uint64_t seed, const std::string& id) {
  validate(cfg);
  Rng rng(seed);

  Episode e;
  e.id = id;
  e.n_views = cfg.n_views;
  e.t_raw = cfg.t_raw;
  e.n_classes = cfg.n_classes;
  e.d = cfg.d;
  e.h = cfg.h;
  e.w = cfg.w;
  e.f = cfg.f;
  e.seed = seed;

  // Classes cycle from a random offset so small datasets still cover every
  // class; jitter and the imbalance knob perturb the cycle.
  const int offset = rng.next_int(cfg.n_classes);
  for (int k = 0; k < cfg.n_events; ++k) {
    int cls = (offset + k + rng.next_int(cfg.class_jitter + 1)) % cfg.n_classes;
    if (cfg.imbalance_factor > 0.0) {
      const double p = cfg.imbalance_factor / (1.0 + cfg.imbalance_factor);
      if (rng.next_unit() < p) cls = rng.next_int(std::max(1, cfg.n_classes / 4));
    }
    e.events.push_back(sample_event(cfg, rng, cls));
  }

  e.frame_labels = Mat<uint8_t>(cfg.t_raw, cfg.n_classes);
  e.human_mask = Mat<uint8_t>(cfg.n_views, cfg.t_raw);
  e.seq_label.assign(cfg.n_classes, 0);
  for (const auto& ev : e.events) {
    for (int t = ev.start_frame; t < ev.end_frame; ++t) {
      e.frame_labels(t, ev.class_id) = 1;
      for (int v : ev.visible_views) e.human_mask(v - 1, t) = 1;
    }
    e.seq_label[ev.class_id] = 1;
  }

  const size_t frame_floats = e.frame_size();
  for (int n = 0; n < cfg.n_views; ++n) {
    std::vector<float> view(static_cast<size_t>(cfg.t_raw) * frame_floats);
    for (float& x : view) x = static_cast<float>(cfg.noise_sigma * rng.next_gaussian());
    e.visual.push_back(std::move(view));
  }
  for (int n = 0; n < cfg.n_views; ++n) {
    Mat<float> spec(cfg.t_raw, cfg.f);
    for (float& x : spec.vec()) x = static_cast<float>(cfg.noise_sigma * rng.next_gaussian());
    e.audio.push_back(std::move(spec));
  }

  const Block person = person_block(cfg);
  const float vis_amp = static_cast<float>(cfg.visual_amplitude);
  const float aud_amp = static_cast<float>(cfg.audio_amplitude);
  for (const auto& ev : e.events) {
    const Block cls = class_block(cfg, ev.class_id);
    const bool draw_class = class_has_visual_signature(cfg, ev.class_id);
    for (int t = ev.start_frame; t < ev.end_frame; ++t) {
      for (int v : ev.visible_views) {
        add_block(e, v - 1, t, person, vis_amp);
        if (draw_class) add_block(e, v - 1, t, cls, vis_amp);
      }
      if (class_has_audio_signature(cfg, ev.class_id)) {
        // audio carries to every sensor, not just the views that see the event
        for (int n = 0; n < cfg.n_views; ++n)
          for (int b = ev.band_lo; b < ev.band_hi; ++b) e.audio[n](t, b) += aud_amp;
      }
    }
  }
  return e;
}

storage::Manifest generate_dataset(int n_episodes, const GenConfig& cfg, uint64_t seed,
                                   const std::filesystem::path& out_dir) {
  if (n_episodes < 0) throw std::invalid_argument("n_episodes must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw storage_error("cannot create dataset directory " + out_dir.string());

  storage::Manifest manifest;
  manifest.seed = seed;
  manifest.gen_config_json = cfg.to_json();
  for (int i = 0; i < n_episodes; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ep%05d", i);
    const std::string id(buf);
    Episode e = generate_episode(cfg, mix_seed(seed, static_cast<uint64_t>(i)), id);
    storage::write_episode(out_dir / id, e);
    manifest.episode_ids.push_back(id);
  }
  storage::write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace mtsf::synthgen
