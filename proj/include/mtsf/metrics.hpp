#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtsf/common.hpp"
#include "mtsf/mat.hpp"

namespace mtsf {

// Non-interpolated average precision. Ranking is by descending score with
// ties broken by original index (ascending), so results are deterministic.
// Throws undefined_metric_error when there is no positive label.
double average_precision(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Macro average of per-class AP over the classes that have at least one
// positive example; classes without positives are skipped. per_class (if
// given) receives one entry per column: the AP, or NaN for skipped columns.
// Throws undefined_metric_error when no class has a positive.
double map_classwise(const Mat<double>& scores, const Mat<uint8_t>& labels,
                     std::vector<double>* per_class = nullptr);

enum class MapSampleMode { kExample, kFlattened };

std::string to_string(MapSampleMode m);
MapSampleMode map_sample_mode_from_string(const std::string& s);

// Example-based mode: mean over rows (each ranked across classes) that carry
// at least one positive. Flattened mode: one AP over all row-major pairs.
double map_samplewise(const Mat<double>& scores, const Mat<uint8_t>& labels,
                      MapSampleMode mode = MapSampleMode::kExample);

}  // namespace mtsf
