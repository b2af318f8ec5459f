#include "mtsf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtsf {

double average_precision(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: size mismatch");
  const size_t n = scores.size();
  size_t positives = 0;
  for (uint8_t y : labels) positives += (y != 0);
  if (positives == 0) throw undefined_metric_error("average_precision: no positive labels");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double sum = 0.0;
  size_t hits = 0;
  for (size_t rank = 0; rank < n; ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(positives);
}

double map_classwise(const Mat<double>& scores, const Mat<uint8_t>& labels,
                     std::vector<double>* per_class) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("map_classwise: shape mismatch");
  const int s = scores.rows(), c = scores.cols();
  if (per_class) per_class->assign(c, std::numeric_limits<double>::quiet_NaN());
  double total = 0.0;
  int counted = 0;
  std::vector<double> col_scores(s);
  std::vector<uint8_t> col_labels(s);
  for (int j = 0; j < c; ++j) {
    bool any = false;
    for (int i = 0; i < s; ++i) {
      col_scores[i] = scores(i, j);
      col_labels[i] = labels(i, j);
      any = any || labels(i, j);
    }
    if (!any) continue;
    const double ap = average_precision(col_scores, col_labels);
    if (per_class) (*per_class)[j] = ap;
    total += ap;
    ++counted;
  }
  if (counted == 0) throw undefined_metric_error("map_classwise: no class has positives");
  return total / counted;
}

std::string to_string(MapSampleMode m) {
  return m == MapSampleMode::kExample ? "example" : "flattened";
}

MapSampleMode map_sample_mode_from_string(const std::string& s) {
  if (s == "example") return MapSampleMode::kExample;
  if (s == "flattened") return MapSampleMode::kFlattened;
  throw std::invalid_argument("unknown sample-mAP mode: " + s);
}

double map_samplewise(const Mat<double>& scores, const Mat<uint8_t>& labels, MapSampleMode mode) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("map_samplewise: shape mismatch");
  const int s = scores.rows(), c = scores.cols();
  if (mode == MapSampleMode::kFlattened) {
    std::vector<double> flat_scores(scores.vec().begin(), scores.vec().end());
    std::vector<uint8_t> flat_labels(labels.vec().begin(), labels.vec().end());
    return average_precision(flat_scores, flat_labels);
  }
  double total = 0.0;
  int counted = 0;
  std::vector<double> row_scores(c);
  std::vector<uint8_t> row_labels(c);
  for (int i = 0; i < s; ++i) {
    bool any = false;
    for (int j = 0; j < c; ++j) {
      row_scores[j] = scores(i, j);
      row_labels[j] = labels(i, j);
      any = any || labels(i, j);
    }
    if (!any) continue;
    total += average_precision(row_scores, row_labels);
    ++counted;
  }
  if (counted == 0) throw undefined_metric_error("map_samplewise: no row has positives");
  return total / counted;
}

}  // namespace mtsf
