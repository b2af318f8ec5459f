#include "mtsf/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace mtsf {

using nlohmann::json;

std::vector<int> sample_frame_indices(int t_raw, int t, bool jitter, Rng* rng) {
  if (t_raw < 1 || t < 1) throw std::invalid_argument("sample_frame_indices: lengths must be >= 1");
  if (t > t_raw) throw std::invalid_argument("sample_frame_indices: cannot sample more than t_raw");
  if (jitter && !rng) throw std::invalid_argument("sample_frame_indices: jitter needs an rng");
  std::vector<int> idx(t);
  for (int i = 0; i < t; ++i)
    idx[i] = static_cast<int>((int64_t(2 * i + 1) * t_raw) / (2 * int64_t(t)));
  if (jitter) {
    const int j_max = t_raw / (2 * t);
    if (j_max > 0) {
      for (int i = 0; i < t; ++i) {
        const int offset = rng->next_int(2 * j_max + 1) - j_max;
        idx[i] = std::clamp(idx[i] + offset, 0, t_raw - 1);
      }
      std::sort(idx.begin(), idx.end());
    }
  }
  return idx;
}

std::vector<int> stratified_split(const Mat<uint8_t>& labels, const std::vector<double>& ratios,
                                  uint64_t seed) {
  const int s = labels.rows(), c = labels.cols(), k = static_cast<int>(ratios.size());
  if (k < 2) throw std::invalid_argument("stratified_split: need at least two subsets");
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw std::invalid_argument("stratified_split: ratios must be positive");
    ratio_sum += r;
  }
  if (std::abs(ratio_sum - 1.0) > 1e-6)
    throw std::invalid_argument("stratified_split: ratios must sum to 1");

  Rng rng(seed);
  std::vector<int> assign(s, -1);

  // desired per-subset positive counts per label, and overall capacities
  std::vector<std::vector<double>> desired(k, std::vector<double>(c, 0.0));
  std::vector<double> capacity(k, 0.0);
  std::vector<int> label_pos(c, 0);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < c; ++j) label_pos[j] += labels(i, j) != 0;
  for (int q = 0; q < k; ++q) {
    capacity[q] = ratios[q] * s;
    for (int j = 0; j < c; ++j) desired[q][j] = ratios[q] * label_pos[j];
  }

  auto pick_subset = [&](int label) {
    // greatest remaining demand for this label, then greatest remaining
    // capacity, then a seeded coin
    std::vector<int> best;
    if (label >= 0) {
      double top = -1e300;
      for (int q = 0; q < k; ++q) {
        if (desired[q][label] > top + 1e-12) {
          top = desired[q][label];
          best.assign(1, q);
        } else if (std::abs(desired[q][label] - top) <= 1e-12) {
          best.push_back(q);
        }
      }
    } else {
      for (int q = 0; q < k; ++q) best.push_back(q);
    }
    if (best.size() > 1) {
      double top = -1e300;
      std::vector<int> keep;
      for (int q : best) {
        if (capacity[q] > top + 1e-12) {
          top = capacity[q];
          keep.assign(1, q);
        } else if (std::abs(capacity[q] - top) <= 1e-12) {
          keep.push_back(q);
        }
      }
      best.swap(keep);
    }
    if (best.size() > 1) return best[rng.next_int(static_cast<int>(best.size()))];
    return best[0];
  };

  auto commit = [&](int example, int subset) {
    assign[example] = subset;
    capacity[subset] -= 1.0;
    for (int j = 0; j < c; ++j)
      if (labels(example, j)) desired[subset][j] -= 1.0;
  };

  for (;;) {
    // label with the fewest unassigned positives (but at least one)
    int target = -1, fewest = 0;
    for (int j = 0; j < c; ++j) {
      int remaining = 0;
      for (int i = 0; i < s; ++i) remaining += assign[i] < 0 && labels(i, j);
      if (remaining > 0 && (target < 0 || remaining < fewest)) {
        target = j;
        fewest = remaining;
      }
    }
    if (target < 0) break;
    for (int i = 0; i < s; ++i)
      if (assign[i] < 0 && labels(i, target)) commit(i, pick_subset(target));
  }
  for (int i = 0; i < s; ++i)
    if (assign[i] < 0) commit(i, pick_subset(-1));

  // The greedy pass lands close to the per-label desiderata but multi-label
  // rows can leave a count off by two.  Polish with best-improvement local
  // search: single reassignments and cross-subset swaps, minimizing squared
  // deviation from the fractional targets (labels weighted above sizes).
  // Purely deterministic, so the result still depends only on the inputs.
  std::vector<std::vector<double>> pos(k, std::vector<double>(c, 0.0));
  std::vector<double> filled(k, 0.0);
  for (int i = 0; i < s; ++i) {
    filled[assign[i]] += 1.0;
    for (int j = 0; j < c; ++j)
      if (labels(i, j)) pos[assign[i]][j] += 1.0;
  }
  auto subset_cost = [&](int q) {
    const double ds = filled[q] - ratios[q] * s;
    double o = 0.25 * ds * ds;
    for (int j = 0; j < c; ++j) {
      const double d = pos[q][j] - ratios[q] * label_pos[j];
      o += d * d;
    }
    return o;
  };
  auto reassign = [&](int i, int to) {
    const int from = assign[i];
    filled[from] -= 1.0;
    filled[to] += 1.0;
    for (int j = 0; j < c; ++j)
      if (labels(i, j)) {
        pos[from][j] -= 1.0;
        pos[to][j] += 1.0;
      }
    assign[i] = to;
  };
  for (int pass = 0; pass < 400; ++pass) {
    double best_gain = 1e-9;
    int move_i = -1, move_to = -1, swap_i = -1, swap_j = -1;
    for (int i = 0; i < s; ++i)
      for (int q = 0; q < k; ++q) {
        const int a = assign[i];
        if (q == a) continue;
        const double before = subset_cost(a) + subset_cost(q);
        reassign(i, q);
        const double gain = before - subset_cost(a) - subset_cost(q);
        reassign(i, a);
        if (gain > best_gain) {
          best_gain = gain;
          move_i = i;
          move_to = q;
          swap_i = swap_j = -1;
        }
      }
    for (int i = 0; i < s; ++i)
      for (int j = i + 1; j < s; ++j) {
        const int a = assign[i], b = assign[j];
        if (a == b) continue;
        const double before = subset_cost(a) + subset_cost(b);
        reassign(i, b);
        reassign(j, a);
        const double gain = before - subset_cost(a) - subset_cost(b);
        reassign(j, b);
        reassign(i, a);
        if (gain > best_gain) {
          best_gain = gain;
          swap_i = i;
          swap_j = j;
          move_i = move_to = -1;
        }
      }
    if (move_i >= 0) {
      reassign(move_i, move_to);
    } else if (swap_i >= 0) {
      const int a = assign[swap_i], b = assign[swap_j];
      reassign(swap_i, b);
      reassign(swap_j, a);
    } else {
      break;
    }
  }
  return assign;
}

void write_splits(const std::string& path,
                  const std::map<std::string, std::vector<std::string>>& splits) {
  json j = json::object();
  for (const auto& [name, ids] : splits) j[name] = ids;
  std::ofstream out(path);
  if (!out) throw storage_error("cannot open for write: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw storage_error("write failed: " + path);
}

std::map<std::string, std::vector<std::string>> read_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw storage_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw format_error("invalid splits file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw format_error("splits file must hold an object: " + path);
  std::map<std::string, std::vector<std::string>> splits;
  for (const auto& [name, ids] : j.items()) {
    if (!ids.is_array()) throw format_error("split '" + name + "' must be a list: " + path);
    splits[name] = ids.get<std::vector<std::string>>();
  }
  return splits;
}

std::vector<DetectionRecord> load_detection_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw storage_error("cannot open: " + path);
  std::vector<DetectionRecord> records;
  std::set<std::tuple<std::string, int, int>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw format_error("detection manifest line " + std::to_string(line_no) +
                         ": invalid JSON: " + e.what());
    }
    const auto fail = [&](const std::string& what) -> format_error {
      return format_error("detection manifest line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) throw fail("expected an object");
    for (const char* key : {"episode_id", "view", "frame", "present"})
      if (!j.contains(key)) throw fail(std::string("missing field '") + key + "'");
    if (!j["episode_id"].is_string()) throw fail("'episode_id' must be a string");
    if (!j["view"].is_number_integer()) throw fail("'view' must be an integer");
    if (!j["frame"].is_number_integer()) throw fail("'frame' must be an integer");
    DetectionRecord r;
    r.episode_id = j["episode_id"].get<std::string>();
    r.view = j["view"].get<int>();
    r.frame = j["frame"].get<int>();
    if (j["present"].is_boolean())
      r.present = j["present"].get<bool>() ? 1 : 0;
    else if (j["present"].is_number_integer()) {
      const int p = j["present"].get<int>();
      if (p != 0 && p != 1) throw fail("'present' must be 0 or 1");
      r.present = static_cast<uint8_t>(p);
    } else {
      throw fail("'present' must be 0/1 or a boolean");
    }
    if (r.view < 1) throw fail("'view' must be >= 1");
    if (r.frame < 0) throw fail("'frame' must be >= 0");
    if (!seen.insert({r.episode_id, r.view, r.frame}).second)
      throw fail("duplicate entry for (" + r.episode_id + ", view " + std::to_string(r.view) +
                 ", frame " + std::to_string(r.frame) + ")");
    records.push_back(std::move(r));
  }
  return records;
}

void apply_detections(Episode& ep, const std::vector<DetectionRecord>& records) {
  for (const auto& r : records) {
    if (r.episode_id != ep.id) continue;
    if (r.view > ep.n_views)
      throw format_error("detection for " + ep.id + ": view " + std::to_string(r.view) +
                         " exceeds view count " + std::to_string(ep.n_views));
    if (r.frame >= ep.t_raw)
      throw format_error("detection for " + ep.id + ": frame " + std::to_string(r.frame) +
                         " exceeds length " + std::to_string(ep.t_raw));
    ep.human_mask(r.view - 1, r.frame) = r.present;
  }
}

SampledEpisode sample_episode(const Episode& ep, int t, bool jitter, Rng* rng) {
  SampledEpisode out;
  out.id = ep.id;
  out.frame_idx = sample_frame_indices(ep.t_raw, t, jitter, rng);
  out.frame_labels = Mat<uint8_t>(t, ep.n_classes);
  out.human = Mat<uint8_t>(ep.n_views, t);
  out.seq_label = ep.seq_label;
  for (int i = 0; i < t; ++i) {
    const int f = out.frame_idx[i];
    for (int c = 0; c < ep.n_classes; ++c) out.frame_labels(i, c) = ep.frame_labels(f, c);
    for (int v = 0; v < ep.n_views; ++v) out.human(v, i) = ep.human_mask(v, f);
  }
  return out;
}

}  // namespace mtsf
