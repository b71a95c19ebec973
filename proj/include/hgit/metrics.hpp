#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgit/image.hpp"

namespace hgit {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

/// Micro-averaged counts over aligned lists of masks.
ConfusionCounts confusion(std::span<const BinaryMask> preds, std::span<const BinaryMask> truths);

/// (tp + tn) / total.
double segmentation_accuracy(const ConfusionCounts& c);

struct IoU {
  double value = 0.0;
  /// Both masks empty: value is defined as 1.0.
  bool both_empty = false;
};

/// tp / (tp + fp + fn).
IoU iou(const ConfusionCounts& c);

struct RunResult {
  std::string scenario;
  std::string dataset;
  std::uint64_t seed = 0;
  double sa = 0.0;
  double iou = 0.0;
  bool iou_both_empty = false;
  double wall_time = 0.0;
  ConfusionCounts counts;
  std::optional<std::string> error;

  bool ok() const noexcept { return !error.has_value(); }
  nlohmann::json to_json() const;
  static RunResult from_json(const nlohmann::json& j);
};

RunResult make_result(std::string scenario, std::string dataset, std::uint64_t seed, const ConfusionCounts& c);

struct CellMean {
  double sa = 0.0;
  double iou = 0.0;
  int runs = 0;
};

/// Scenario x dataset means plus an unweighted average across datasets.
/// Row and column order follow first appearance unless given explicitly.
struct AggregateTable {
  std::vector<std::string> scenarios;
  std::vector<std::string> datasets;
  std::vector<std::vector<std::optional<CellMean>>> cells;  // [scenario][dataset]
  std::vector<std::optional<CellMean>> averaged;            // per scenario

  const std::optional<CellMean>& cell(const std::string& scenario, const std::string& dataset) const;
  const std::optional<CellMean>& average(const std::string& scenario) const;

  std::string to_csv() const;
  static AggregateTable from_csv(const std::string& text);
};

AggregateTable aggregate(std::span<const RunResult> results, std::vector<std::string> scenario_order = {},
                         std::vector<std::string> dataset_order = {});

}  // namespace hgit
