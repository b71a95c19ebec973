#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hgit/image.hpp"

namespace hgit {

/// Sup-norm distance between the CDFs of two normalized histograms.
double ks_statistic(const Histogram& h1, const Histogram& h2);

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
/// Below lambda = 1.18 the equivalent theta-function form
/// 1 - sqrt(2 pi)/lambda sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lambda^2)) is summed
/// instead, since the alternating series converges too slowly there.
double kolmogorov_survival(double lambda);

/// Asymptotic two-sample p-value Q(D * sqrt(n1 n2 / (n1 + n2))), clipped to [0,1].
double ks_p_value(double d, std::int64_t n1, std::int64_t n2);

struct CurationConfig {
  double keep_percent = 70.0;
  /// Sample size fed to ks_p_value for both sides; unset = the transformed
  /// image's pixel count.
  std::optional<std::int64_t> effective_n;

  void validate() const;
};

/// ceil(keep_percent / 100 * total), computed without floating-point drift.
std::size_t selection_count(double keep_percent, std::size_t total);

struct CurationRecord {
  std::string id;
  double ks_statistic = 0.0;
  double p_value = 0.0;
  int rank = 0;  // 1 = most target-like
  bool selected = false;
};

struct CurationReport {
  double keep_percent = 70.0;
  std::int64_t effective_n = 0;  // 0 = per-image pixel count
  Histogram target_profile;
  /// Records in rank order.
  std::vector<CurationRecord> records;

  std::size_t selected_count() const;
  nlohmann::json to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Histogram gate: ranks every transformed image by KS p-value against the
/// target profile (ties: smaller D, then id) and keeps the top keep_percent.
/// The selected split is returned in rank order with masks carried through.
std::pair<DatasetSplit, CurationReport> gate(const DatasetSplit& transformed, const Histogram& target_profile,
                                             const CurationConfig& cfg);

/// Same, with the profile computed as the mean histogram of `target`.
/// Test-role splits are refused on either side.
std::pair<DatasetSplit, CurationReport> gate(const DatasetSplit& transformed, const DatasetSplit& target,
                                             const CurationConfig& cfg);

Histogram mean_profile(const DatasetSplit& split);

}  // namespace hgit
