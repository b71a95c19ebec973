#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hgit/curation.hpp"
#include "hgit/metrics.hpp"
#include "hgit/segmodel.hpp"
#include "hgit/synthgen.hpp"
#include "hgit/translate.hpp"

namespace hgit {

enum class Scenario { SourceOnly, HistMatch, Fda, CycleGan, Hgit, Supervised };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);
/// Report row order.
const std::vector<Scenario>& all_scenarios();

struct DatasetPreset {
  std::string name;
  DomainStyle source_style;
  DomainStyle target_style;
  int n_train = 200;
  int n_test = 50;
  int image_size = 64;
  double density = 0.3;
  /// Seed of the generated data; the run seed only drives training.
  std::uint64_t data_seed = 0;

  nlohmann::json to_json() const;
  static DatasetPreset from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  std::vector<Scenario> scenarios;
  std::vector<DatasetPreset> datasets;
  std::vector<std::uint64_t> seeds;
  TranslationConfig translation;  // backend is set per scenario
  CurationConfig curation;
  SegTrainConfig segmentation;
  /// Degenerate images appended to every translated training set.
  int poison_count = 0;
  /// Scale segmenter epochs by n_train / |training set| so that every
  /// scenario gets the optimizer-step budget of a source-sized set. Gating
  /// shrinks the set; without this it would also shrink the training run.
  bool matched_steps = true;
  std::filesystem::path out_dir = "hgit-out";

  void validate() const;
  nlohmann::json to_json() const;
  /// Relative out_dir values are resolved against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  /// 64x64, 200/50 per domain, 3 seeds, all scenarios, three target styles.
  static ExperimentConfig desk_preset();
  /// 128x128, 1200/300 per domain, 5 seeds.
  static ExperimentConfig paper_preset();
};

/// Configuration of a single scenario x dataset x seed cell; its hash names
/// the run directory.
nlohmann::json run_config(const ExperimentConfig& cfg, Scenario s, const DatasetPreset& d, std::uint64_t seed);
std::string config_hash(const nlohmann::json& j);

/// Constant-intensity images and images whose foreground is abnormally
/// brightened and bloated, each paired with a source mask. Stand-ins for
/// translator failures.
DatasetSplit make_poison_set(int count, const DatasetSplit& source, std::uint64_t seed);

/// Epochs run on a training set of `train_size` images.
int segmenter_epochs(const ExperimentConfig& cfg, const DatasetPreset& d, std::size_t train_size);

/// Everything run_scenario needs besides the config.
struct ScenarioContext {
  const DomainPair* data = nullptr;
  /// Where to write per-run artifacts; empty = write nothing.
  std::filesystem::path run_dir;
  /// Trained translator for the cyclegan/hgit scenarios. Trained on demand
  /// when null.
  std::shared_ptr<const TranslatorModel> translator;
};

RunResult run_scenario(Scenario s, const ExperimentConfig& cfg, const DatasetPreset& d, std::uint64_t seed,
                       const ScenarioContext& ctx);

struct ExperimentReport {
  AggregateTable table;
  std::vector<RunResult> runs;
  nlohmann::json environment;

  nlohmann::json to_json() const;
};

struct MatrixOptions {
  bool resume = false;
  int jobs = 1;
  std::function<void(const std::string&)> log;
};

/// Runs every cell (skipping completed ones when resuming), then writes
/// report.json, report.csv and plots/ under cfg.out_dir. Failed cells are
/// recorded with their error and do not stop the matrix.
ExperimentReport run_matrix(const ExperimentConfig& cfg, const MatrixOptions& opts = {});

/// Bar chart per dataset (SA and IoU by scenario) plus, when curation
/// reports exist in the run directories, a curation montage per hgit run.
std::vector<std::filesystem::path> emit_plots(const ExperimentReport& report, const std::filesystem::path& out_dir);

/// Montage row per record: image, its histogram over the target profile, D,
/// p and the selected/rejected flag.
void write_curation_montage(const DatasetSplit& transformed, const CurationReport& report,
                            const std::filesystem::path& path);

}  // namespace hgit
