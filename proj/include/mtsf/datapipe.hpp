#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtsf/common.hpp"
#include "mtsf/episode.hpp"
#include "mtsf/mat.hpp"

namespace mtsf {

// Midpoint subsampling of t_raw frames down to t. Without jitter index i maps
// to floor((i + 0.5) * t_raw / t). With jitter each index gets an independent
// uniform offset in [-j_max, +j_max], j_max = t_raw / (2t), is clamped to the
// valid range and the result is sorted so time stays monotone.
std::vector<int> sample_frame_indices(int t_raw, int t, bool jitter = false, Rng* rng = nullptr);

// First-order iterative stratification over multi-label data. `labels` is
// S x C; `ratios` gives the desired fraction per subset (must sum to ~1).
// Returns the subset index for every example. Deterministic given the seed.
std::vector<int> stratified_split(const Mat<uint8_t>& labels, const std::vector<double>& ratios,
                                  uint64_t seed);

// splits.json holds a plain object: split name -> list of episode ids.
void write_splits(const std::string& path,
                  const std::map<std::string, std::vector<std::string>>& splits);
std::map<std::string, std::vector<std::string>> read_splits(const std::string& path);

// One line of a detection manifest: an externally supplied human-presence
// flag for (episode, view, frame). Views are 1-based.
struct DetectionRecord {
  std::string episode_id;
  int view = 0;
  int frame = 0;
  uint8_t present = 0;
};

// Parses a JSONL manifest. Malformed JSON, missing/mistyped fields, negative
// indices and duplicate (episode, view, frame) keys raise format_error with
// the offending line number in the message.
std::vector<DetectionRecord> load_detection_manifest(const std::string& path);

// Overwrites human-mask entries covered by the records; others keep their
// existing value. Out-of-range view/frame raises format_error.
void apply_detections(Episode& ep, const std::vector<DetectionRecord>& records);

// An episode reduced to t sampled frames, ready for the model.
struct SampledEpisode {
  std::string id;
  std::vector<int> frame_idx;   // length t, ascending
  Mat<uint8_t> frame_labels;    // t x C
  std::vector<uint8_t> seq_label;
  Mat<uint8_t> human;           // n_views x t
};

SampledEpisode sample_episode(const Episode& ep, int t, bool jitter = false, Rng* rng = nullptr);

}  // namespace mtsf
