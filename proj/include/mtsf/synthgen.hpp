#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mtsf/episode.hpp"
#include "mtsf/storage.hpp"

namespace mtsf::synthgen {

// Which modality carries each class signature. In split mode even classes
// render a visual block only and odd classes an audio band only, so neither
// modality alone can separate every class.
enum class SignatureMode { kBoth, kSplit, kVisualOnly, kAudioOnly };

std::string to_string(SignatureMode mode);
SignatureMode signature_mode_from_string(const std::string& s);

struct GenConfig {
  int n_views = 3;
  int t_raw = 200;
  int n_classes = 8;
  int n_events = 4;
  int d = 3, h = 32, w = 32;  // visual channels / height / width
  int f = 32;                 // audio frequency bins
  SignatureMode signature_mode = SignatureMode::kSplit;
  double visual_amplitude = 0.5;  // block intensity added over the noise floor
  double audio_amplitude = 1.0;   // band energy added in every view
  double noise_sigma = 1.0;       // background noise, both modalities
  double imbalance_factor = 0.0;  // > 0 skews class draws toward head classes
  int class_jitter = 1;           // round-robin perturbation magnitude

  std::string to_json() const;  // canonical, sorted keys
  static GenConfig from_json(const std::string& text);
};

// Deterministic episode synthesis. Every event renders a person block into
// its visible views, a class block when the class has a visual signature, and
// band energy into all views' spectrograms when it has an audio signature.
Episode generate_episode(const GenConfig& config, uint64_t seed, const std::string& id = "");

// Writes n_episodes episodes plus manifest.json under out_dir. Episode seeds
// derive from (seed, index) so the dataset regenerates byte-identically.
storage::Manifest generate_dataset(int n_episodes, const GenConfig& config, uint64_t seed,
                                   const std::filesystem::path& out_dir);

bool class_has_visual_signature(const GenConfig& config, int class_id);
bool class_has_audio_signature(const GenConfig& config, int class_id);

}  // namespace mtsf::synthgen
