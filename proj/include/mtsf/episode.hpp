#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtsf/mat.hpp"

namespace mtsf {

// One action occurrence inside an episode. Views are 1-based sensor ids.
struct ActionEvent {
  int class_id = 0;
  int start_frame = 0;  // inclusive
  int end_frame = 0;    // exclusive
  std::vector<int> visible_views;
  int band_lo = 0;  // audio frequency-bin interval [band_lo, band_hi)
  int band_hi = 0;

  bool operator==(const ActionEvent&) const = default;
};

// One synthetic multi-view recording. Visual data is stored flat per view as
// t_raw x d x h x w row-major; audio per view as a t_raw x f matrix.
struct Episode {
  std::string id;
  int n_views = 0;
  int t_raw = 0;
  int n_classes = 0;
  int d = 0, h = 0, w = 0;  // channels, height, width
  int f = 0;                // frequency bins
  uint64_t seed = 0;

  std::vector<std::vector<float>> visual;  // [view][t*d*h*w]
  std::vector<Mat<float>> audio;           // [view], t_raw x f
  Mat<uint8_t> frame_labels;               // t_raw x C
  std::vector<uint8_t> seq_label;          // C
  Mat<uint8_t> human_mask;                 // n_views x t_raw
  std::vector<ActionEvent> events;

  size_t frame_size() const { return static_cast<size_t>(d) * h * w; }

  const float* frame(int view, int t) const {
    return visual[view].data() + static_cast<size_t>(t) * frame_size();
  }
  float* frame(int view, int t) {
    return visual[view].data() + static_cast<size_t>(t) * frame_size();
  }
};

}  // namespace mtsf
