#include "hgit/harness.hpp"

#include <Eigen/Core>
#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hgit/errors.hpp"
#include "hgit/io.hpp"
#include "plot.hpp"

namespace hgit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::SourceOnly: return "source-only";
    case Scenario::HistMatch: return "hist-match";
    case Scenario::Fda: return "fda";
    case Scenario::CycleGan: return "cyclegan";
    case Scenario::Hgit: return "hgit";
    case Scenario::Supervised: return "supervised";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  for (Scenario sc : all_scenarios())
    if (to_string(sc) == s) return sc;
  throw ConfigError("unknown scenario '" + s + "'");
}

const std::vector<Scenario>& all_scenarios() {
  static const std::vector<Scenario> order{Scenario::SourceOnly, Scenario::HistMatch, Scenario::Fda,
                                           Scenario::CycleGan,   Scenario::Hgit,      Scenario::Supervised};
  return order;
}

namespace {

bool uses_translation(Scenario s) {
  return s == Scenario::HistMatch || s == Scenario::Fda || s == Scenario::CycleGan || s == Scenario::Hgit;
}

Backend backend_of(Scenario s) {
  switch (s) {
    case Scenario::HistMatch: return Backend::HistMatch;
    case Scenario::Fda: return Backend::Fda;
    default: return Backend::CycleGan;
  }
}

// Seeds derived from the run seed. The translator and segmenter streams do
// not depend on the scenario, so cyclegan and hgit share one translator and
// every scenario starts its segmenter from the same initialization.
std::uint64_t translator_seed(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t segmenter_seed(std::uint64_t seed) { return derive_seed(seed, 2); }
std::uint64_t poison_seed(std::uint64_t seed) { return derive_seed(seed, 4); }

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

json strip_seed(json j) {
  j.erase("seed");
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

json DatasetPreset::to_json() const {
  return {{"name", name},
          {"source_style", source_style.to_json()},
          {"target_style", target_style.to_json()},
          {"n_train", n_train},
          {"n_test", n_test},
          {"image_size", image_size},
          {"density", density},
          {"data_seed", data_seed}};
}

DatasetPreset DatasetPreset::from_json(const json& j) {
  DatasetPreset d;
  try {
    d.target_style = DomainStyle::from_json(j.at("target_style"));
    d.source_style = DomainStyle::from_json(j.value("source_style", json("source")));
    d.name = j.value("name", d.target_style.name);
    d.n_train = j.value("n_train", d.n_train);
    d.n_test = j.value("n_test", d.n_test);
    d.image_size = j.value("image_size", d.image_size);
    d.density = j.value("density", d.density);
    d.data_seed = j.value("data_seed", d.data_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset entry: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("dataset entry: ") + e.what());
  }
  if (d.name.empty()) throw ConfigError("dataset entry needs a name");
  if (d.n_train < 1 || d.n_test < 1) throw ConfigError("dataset '" + d.name + "': n_train and n_test must be positive");
  if (d.image_size < 32 || d.image_size % 4 != 0) {
    throw ConfigError("dataset '" + d.name + "': image_size must be a multiple of 4 and at least 32");
  }
  return d;
}

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("no scenarios given");
  if (datasets.empty()) throw ConfigError("no datasets given");
  if (seeds.empty()) throw ConfigError("no seeds given");
  std::set<std::uint64_t> s(seeds.begin(), seeds.end());
  if (s.size() != seeds.size()) throw ConfigError("seeds must be distinct");
  std::set<Scenario> sc(scenarios.begin(), scenarios.end());
  if (sc.size() != scenarios.size()) throw ConfigError("scenarios must be distinct");
  std::set<std::string> names;
  for (const auto& d : datasets)
    if (!names.insert(d.name).second) throw ConfigError("duplicate dataset name '" + d.name + "'");
  if (poison_count < 0) throw ConfigError("poison count must be >= 0");
  TranslationConfig t = translation;
  for (Scenario x : scenarios) {
    if (!uses_translation(x)) continue;
    t.backend = backend_of(x);
    t.validate();
  }
  try {
    curation.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("curation: ") + e.what());
  }
  segmentation.validate();
}

json ExperimentConfig::to_json() const {
  json sc = json::array();
  for (Scenario s : scenarios) sc.push_back(to_string(s));
  json ds = json::array();
  for (const auto& d : datasets) ds.push_back(d.to_json());
  json cur = {{"keep_percent", curation.keep_percent}};
  if (curation.effective_n) cur["effective_n"] = *curation.effective_n;
  json tr = translation.to_json();
  tr.erase("backend");
  return {{"scenarios", sc},
          {"datasets", ds},
          {"seeds", seeds},
          {"translation", tr},
          {"curation", cur},
          {"segmentation", segmentation.to_json()},
          {"poison", {{"count", poison_count}}},
          {"segmentation_budget", matched_steps ? "matched-steps" : "epochs"},
          {"out_dir", out_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("scenarios")) {
      for (const auto& s : j.at("scenarios")) c.scenarios.push_back(scenario_from_string(s.get<std::string>()));
    } else {
      c.scenarios = all_scenarios();
    }
    for (const auto& d : j.at("datasets")) c.datasets.push_back(DatasetPreset::from_json(d));
    if (j.contains("seeds")) {
      c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const int n = j.value("n_seeds", 5);
      for (int i = 0; i < n; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (j.contains("translation")) {
      json t = j.at("translation");
      t["backend"] = "cyclegan";
      c.translation = TranslationConfig::from_json(t);
    }
    if (j.contains("curation")) {
      const auto& cj = j.at("curation");
      c.curation.keep_percent = cj.value("keep_percent", c.curation.keep_percent);
      if (cj.contains("effective_n") && !cj.at("effective_n").is_null()) {
        c.curation.effective_n = cj.at("effective_n").get<std::int64_t>();
      }
    }
    if (j.contains("segmentation")) c.segmentation = SegTrainConfig::from_json(j.at("segmentation"));
    if (j.contains("poison")) c.poison_count = j.at("poison").value("count", 0);
    const std::string budget = j.value("segmentation_budget", std::string("matched-steps"));
    if (budget != "matched-steps" && budget != "epochs") {
      throw ConfigError("segmentation_budget must be 'matched-steps' or 'epochs'");
    }
    c.matched_steps = budget == "matched-steps";
    c.out_dir = j.value("out_dir", std::string("hgit-out"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (c.out_dir.is_relative() && !base_dir.empty()) c.out_dir = base_dir / c.out_dir;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

ExperimentConfig ExperimentConfig::desk_preset() {
  ExperimentConfig c;
  c.scenarios = all_scenarios();
  for (const char* t : {"shifted-bright", "shifted-dark-lowcontrast", "textured"}) {
    DatasetPreset d;
    d.name = t;
    d.source_style = style_preset("source");
    d.target_style = style_preset(t);
    c.datasets.push_back(d);
  }
  c.seeds = {0, 1, 2};
  c.translation.epochs = 10;
  c.translation.learning_rate = 1e-3;
  c.translation.train_crop = 32;
  c.translation.generator = {8, 2, true};
  c.translation.discriminator = {8};
  c.segmentation.epochs = 12;
  c.segmentation.arch.base_channels = 8;
  c.segmentation.train_crop = 32;
  return c;
}

ExperimentConfig ExperimentConfig::paper_preset() {
  ExperimentConfig c = desk_preset();
  const ProtocolSize p = paper_protocol_size();
  for (auto& d : c.datasets) {
    d.n_train = p.n_train;
    d.n_test = p.n_test;
    d.image_size = p.image_size;
  }
  c.seeds = {0, 1, 2, 3, 4};
  c.translation.train_crop = 64;
  c.translation.generator = {16, 3, true};
  c.translation.discriminator = {16};
  c.segmentation.arch.base_channels = 16;
  c.segmentation.train_crop = 64;
  return c;
}

json run_config(const ExperimentConfig& cfg, Scenario s, const DatasetPreset& d, std::uint64_t seed) {
  json j = {{"scenario", to_string(s)},
            {"dataset", d.to_json()},
            {"seed", seed},
            {"segmentation", strip_seed(cfg.segmentation.to_json())}};
  j["segmentation"]["budget"] = cfg.matched_steps ? "matched-steps" : "epochs";
  if (uses_translation(s)) {
    TranslationConfig t = cfg.translation;
    t.backend = backend_of(s);
    json tj = strip_seed(t.to_json());
    if (s == Scenario::HistMatch) {
      tj = {{"backend", "hist-match"}};
    } else if (s == Scenario::Fda) {
      tj = {{"backend", "fda"}, {"fda_beta", t.fda_beta}};
    } else {
      tj.erase("fda_beta");
    }
    j["translation"] = tj;
    j["poison_count"] = cfg.poison_count;
  }
  if (s == Scenario::Hgit) {
    json cur = {{"keep_percent", cfg.curation.keep_percent}};
    if (cfg.curation.effective_n) cur["effective_n"] = *cfg.curation.effective_n;
    j["curation"] = cur;
  }
  return j;
}

std::string config_hash(const json& j) {
  // FNV-1a over the canonical dump (object keys are kept sorted)
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int segmenter_epochs(const ExperimentConfig& cfg, const DatasetPreset& d, std::size_t train_size) {
  if (!cfg.matched_steps || train_size == 0) return cfg.segmentation.epochs;
  const std::size_t scaled =
      (static_cast<std::size_t>(cfg.segmentation.epochs) * static_cast<std::size_t>(d.n_train) + train_size - 1) /
      train_size;
  return static_cast<int>(std::max<std::size_t>(1, scaled));
}

// ---------------------------------------------------------------------------
// poison fixture

DatasetSplit make_poison_set(int count, const DatasetSplit& source, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("poison count must be >= 0");
  if (count > 0 && (source.empty() || !source.has_masks())) {
    throw ArgumentError("poison set needs a labeled source split");
  }
  DatasetSplit out;
  out.role = SplitRole::SourceTrain;
  out.masks.emplace();
  nn::Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, source.empty() ? 0 : source.size() - 1);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (int i = 0; i < count; ++i) {
    const std::size_t k = pick(rng);
    const BinaryMask& mask = (*source.masks)[k];
    const int h = mask.height(), w = mask.width();
    GrayImage img(h, w);
    if (i % 2 == 0) {
      // blank frame at a random level
      const float level = std::uniform_real_distribution<float>(0.05f, 0.95f)(rng);
      std::fill(img.pixels().begin(), img.pixels().end(), level);
    } else {
      // saturated, bloated foreground over a lifted background
      const int grow = 2 + static_cast<int>(rng() % 3);
      const double bg = std::uniform_real_distribution<double>(0.45, 0.6)(rng);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          bool fg = false;
          for (int dy = -grow; dy <= grow && !fg; ++dy)
            for (int dx = -grow; dx <= grow && !fg; ++dx) {
              const int yy = y + dy, xx = x + dx;
              fg = yy >= 0 && yy < h && xx >= 0 && xx < w && mask(yy, xx);
            }
          img(y, x) = static_cast<float>(std::clamp((fg ? 0.97 : bg) + noise(rng), 0.0, 1.0));
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "poison_%03d", i);
    out.ids.emplace_back(id);
    out.images.push_back(std::move(img));
    out.masks->push_back(mask);
  }
  return out;
}

// ---------------------------------------------------------------------------
// one cell

namespace {

DatasetSplit concat(const DatasetSplit& a, const DatasetSplit& b) {
  DatasetSplit out = a;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  out.images.insert(out.images.end(), b.images.begin(), b.images.end());
  if (out.masks && b.masks) out.masks->insert(out.masks->end(), b.masks->begin(), b.masks->end());
  return out;
}

void require_role(const DatasetSplit& s, SplitRole expected, const char* step) {
  if (s.role != expected) {
    throw ArgumentError(std::string(step) + " expected a " + std::string(to_string(expected)) + " split, got " +
                        std::string(to_string(s.role)));
  }
}

}  // namespace

RunResult run_scenario(Scenario s, const ExperimentConfig& cfg, const DatasetPreset& d, std::uint64_t seed,
                       const ScenarioContext& ctx) {
  if (!ctx.data) throw ArgumentError("run_scenario: no data");
  const DomainPair& data = *ctx.data;
  const auto t0 = std::chrono::steady_clock::now();
  const bool write = !ctx.run_dir.empty();
  json prov = {{"scenario", to_string(s)},
               {"dataset", d.name},
               {"seed", seed},
               {"data_seed", d.data_seed},
               {"segmenter_seed", segmenter_seed(seed)}};

  require_role(data.source_train, SplitRole::SourceTrain, "source training");
  require_role(data.target_train, SplitRole::TargetTrain, "target training");
  require_role(data.target_test, SplitRole::TargetTest, "evaluation");

  DatasetSplit train;
  if (s == Scenario::SourceOnly) {
    train = data.source_train;
  } else if (s == Scenario::Supervised) {
    train = data.target_train_labeled();
  } else {
    TranslationConfig tcfg = cfg.translation;
    tcfg.backend = backend_of(s);
    tcfg.seed = translator_seed(seed);
    prov["translator_seed"] = tcfg.seed;
    std::shared_ptr<const TranslatorModel> model = ctx.translator;
    if (tcfg.backend == Backend::CycleGan && !model) {
      model = std::make_shared<const TranslatorModel>(train_translator(data.source_train, data.target_train, tcfg));
    }
    auto translator = make_translator(tcfg, data.source_train, data.target_train, model);
    DatasetSplit transformed = translator->translate(data.source_train);
    if (cfg.poison_count > 0) {
      transformed = concat(transformed, make_poison_set(cfg.poison_count, data.source_train, poison_seed(seed)));
      prov["poison_seed"] = poison_seed(seed);
    }
    prov["transformed_size"] = transformed.size();
    if (s == Scenario::Hgit) {
      auto [selected, report] = gate(transformed, data.target_train, cfg.curation);
      if (write) {
        report.write_json(ctx.run_dir / "curation_report.json");
        report.write_csv(ctx.run_dir / "curation_report.csv");
        write_split(transformed, ctx.run_dir / "transformed", "manifest.json");
        prov["curation_report"] = "curation_report.json";
        prov["transformed_manifest"] = "transformed/manifest.json";
      }
      train = std::move(selected);
    } else {
      train = std::move(transformed);
    }
  }
  if (is_test_role(train.role)) throw ArgumentError("refusing to train on a test split");

  SegTrainConfig scfg = cfg.segmentation;
  scfg.seed = segmenter_seed(seed);
  scfg.epochs = segmenter_epochs(cfg, d, train.size());
  prov["segmenter_epochs"] = scfg.epochs;
  SegmenterModel seg = train_segmenter(train, scfg);
  auto pred = predict(data.target_test, seg, scfg.threshold);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunResult r = make_result(to_string(s), d.name, seed, confusion(pred, *data.target_test.masks));
  r.wall_time = wall;
  if (write) {
    seg.save(ctx.run_dir / "segmenter.ckpt");
    write_split(train, ctx.run_dir / "train", "manifest.json");
    prov["train_size"] = train.size();
    prov["train_manifest"] = "train/manifest.json";
    prov["segmenter_checkpoint"] = "segmenter.ckpt";
    prov["threshold"] = scfg.threshold;
    write_json_file(ctx.run_dir / "provenance.json", prov);
  }
  return r;
}

// ---------------------------------------------------------------------------
// matrix

json ExperimentReport::to_json() const {
  json table = json::object();
  json rows = json::array();
  for (std::size_t i = 0; i < this->table.scenarios.size(); ++i) {
    json row = {{"method", this->table.scenarios[i]}};
    for (std::size_t k = 0; k < this->table.datasets.size(); ++k) {
      const auto& c = this->table.cells[i][k];
      row[this->table.datasets[k]] = c ? json{{"sa", c->sa}, {"iou", c->iou}, {"runs", c->runs}} : json(nullptr);
    }
    const auto& a = this->table.averaged[i];
    row["averaged"] = a ? json{{"sa", a->sa}, {"iou", a->iou}} : json(nullptr);
    rows.push_back(row);
  }
  table["datasets"] = this->table.datasets;
  table["rows"] = rows;
  json r = json::array();
  for (const auto& x : runs) r.push_back(x.to_json());
  return {{"table", table},
          {"runs", r},
          {"environment", environment},
          {"metadata",
           {{"averaging", "micro (confusion counts summed over the test split), then mean over seeds"},
            {"iou_empty_convention", "both masks empty -> IoU 1.0, flagged per run"},
            {"binarization", "probability >= threshold"},
            {"not_compared", {"SUIT (no equations available)"}}}}};
}

namespace {

json environment_record(double wall) {
  char eigen[32];
  std::snprintf(eigen, sizeof eigen, "%d.%d.%d", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  return {{"compiler", __VERSION__},
          {"cxx_standard", static_cast<long>(__cplusplus)},
          {"eigen", std::string(eigen)},
          {"fftw", std::string(fftw_version)},
          {"libpng", PNG_LIBPNG_VER_STRING},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"wall_time_s", wall}};
}

struct Cell {
  Scenario scenario;
  std::size_t dataset;
  std::uint64_t seed;
};

class TranslatorCache {
 public:
  TranslatorCache(fs::path dir, const ExperimentConfig& cfg) : dir_(std::move(dir)), cfg_(cfg) {}

  std::shared_ptr<const TranslatorModel> get(const DatasetPreset& d, const DomainPair& data, std::uint64_t seed,
                                             const std::function<void(const std::string&)>& log) {
    TranslationConfig t = cfg_.translation;
    t.backend = Backend::CycleGan;
    t.seed = translator_seed(seed);
    const std::string key = config_hash({{"dataset", d.to_json()}, {"translation", t.to_json()}});
    std::shared_future<std::shared_ptr<const TranslatorModel>> fut;
    std::promise<std::shared_ptr<const TranslatorModel>> promise;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        const fs::path ckpt = dir_ / (key + ".ckpt");
        std::shared_ptr<const TranslatorModel> model;
        if (fs::exists(ckpt)) {
          model = std::make_shared<const TranslatorModel>(TranslatorModel::load(ckpt));
          if (log) log("translator " + key + " loaded from checkpoint");
        } else {
          if (log) log("training translator " + key + " (" + d.name + ", seed " + std::to_string(seed) + ")");
          auto m = train_translator(data.source_train, data.target_train, t);
          fs::create_directories(dir_);
          const fs::path tmp = dir_ / (key + ".ckpt.tmp");
          m.save(tmp);
          fs::rename(tmp, ckpt);
          write_json_file(dir_ / (key + ".json"), {{"dataset", d.to_json()}, {"translation", t.to_json()}});
          model = std::make_shared<const TranslatorModel>(std::move(m));
        }
        promise.set_value(model);
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  std::string checkpoint_for(const DatasetPreset& d, std::uint64_t seed) const {
    TranslationConfig t = cfg_.translation;
    t.backend = Backend::CycleGan;
    t.seed = translator_seed(seed);
    return (dir_ / (config_hash({{"dataset", d.to_json()}, {"translation", t.to_json()}}) + ".ckpt")).string();
  }

 private:
  fs::path dir_;
  const ExperimentConfig& cfg_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const TranslatorModel>>> entries_;
};

}  // namespace

ExperimentReport run_matrix(const ExperimentConfig& cfg, const MatrixOptions& opts) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "runs");
  write_json_file(out / "experiment.json", cfg.to_json());
  auto log = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };

  std::vector<DomainPair> data;
  for (const auto& d : cfg.datasets) {
    LayoutSpec spec;
    spec.image_size = d.image_size;
    spec.density = d.density;
    spec.seed = d.data_seed;
    data.push_back(generate_domain_pair(d.source_style, d.target_style, d.n_train, d.n_test, spec));
    const fs::path ddir = out / "data" / d.name;
    if (!fs::exists(ddir / "style.json")) write_domain_pair(data.back(), ddir);
  }

  std::vector<Cell> cells;
  for (std::size_t di = 0; di < cfg.datasets.size(); ++di)
    for (std::uint64_t seed : cfg.seeds)
      for (Scenario s : cfg.scenarios) cells.push_back({s, di, seed});

  TranslatorCache translators(out / "translators", cfg);
  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      const DatasetPreset& d = cfg.datasets[c.dataset];
      const json rc = run_config(cfg, c.scenario, d, c.seed);
      const std::string hash = config_hash(rc);
      const fs::path run_dir = out / "runs" / hash;
      const std::string label = to_string(c.scenario) + " / " + d.name + " / seed " + std::to_string(c.seed);
      if (opts.resume && fs::exists(run_dir / "result.json")) {
        try {
          RunResult prev = RunResult::from_json(read_json_file(run_dir / "result.json"));
          if (prev.ok()) {
            results[i] = prev;
            std::lock_guard lock(log_mu);
            log("skip " + label + " (" + hash + " complete)");
            continue;
          }
        } catch (const Error&) {
          // unreadable result: rerun the cell
        }
      }
      {
        std::lock_guard lock(log_mu);
        log("run  " + label + " -> runs/" + hash);
      }
      fs::create_directories(run_dir);
      write_json_file(run_dir / "config.json", rc);
      RunResult r;
      try {
        ScenarioContext ctx;
        ctx.data = &data[c.dataset];
        ctx.run_dir = run_dir;
        if (c.scenario == Scenario::CycleGan || c.scenario == Scenario::Hgit) {
          ctx.translator = translators.get(d, data[c.dataset], c.seed, [&](const std::string& m) {
            std::lock_guard lock(log_mu);
            log(m);
          });
        }
        r = run_scenario(c.scenario, cfg, d, c.seed, ctx);
        if (ctx.translator) {
          json prov = read_json_file(run_dir / "provenance.json");
          prov["translator_checkpoint"] = fs::relative(translators.checkpoint_for(d, c.seed), run_dir).string();
          write_json_file(run_dir / "provenance.json", prov);
        }
      } catch (const std::exception& e) {
        r = RunResult{};
        r.scenario = to_string(c.scenario);
        r.dataset = d.name;
        r.seed = c.seed;
        r.error = label + ": " + e.what();
      }
      write_json_file(run_dir / "result.json", r.to_json());
      {
        std::lock_guard lock(log_mu);
        if (r.ok()) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "done %s SA %.4f IoU %.4f (%.1fs)", label.c_str(), r.sa, r.iou, r.wall_time);
          log(buf);
        } else {
          log("FAIL " + *r.error);
        }
      }
      results[i] = std::move(r);
    }
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  report.runs = results;
  std::vector<RunResult> ok;
  for (const auto& r : results)
    if (r.ok()) ok.push_back(r);
  std::vector<std::string> sc, ds;
  for (Scenario s : cfg.scenarios) sc.push_back(to_string(s));
  for (const auto& d : cfg.datasets) ds.push_back(d.name);
  if (ok.empty()) {
    report.table.scenarios = sc;
    report.table.datasets = ds;
    report.table.cells.assign(sc.size(), std::vector<std::optional<CellMean>>(ds.size()));
    report.table.averaged.assign(sc.size(), std::nullopt);
  } else {
    report.table = aggregate(ok, sc, ds);
  }
  report.environment = environment_record(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

  write_json_file(out / "report.json", report.to_json());
  {
    std::ofstream csv(out / "report.csv");
    if (!csv) throw IoError("cannot write report.csv");
    csv << report.table.to_csv();
  }
  emit_plots(report, out);
  return report;
}

// ---------------------------------------------------------------------------
// plots

namespace {

void draw_bar_chart(const AggregateTable& t, std::size_t dataset, const fs::path& path) {
  const int n = static_cast<int>(t.scenarios.size());
  const int group_w = 70, bar_w = 24, left = 50, top = 30, plot_h = 200;
  const std::string title = t.datasets[dataset] + "  SA / IOU";
  const int width = std::max(left + n * group_w + 20, left + plot::Canvas::text_width(title) + 10);
  const int height = top + plot_h + 50;
  plot::Canvas cv(width, height);
  cv.text(left, 8, title, plot::kBlack);
  // axes and gridlines at 0, 0.25, ... 1
  for (int k = 0; k <= 4; ++k) {
    const int y = top + plot_h - k * plot_h / 4;
    cv.hline(left, width - 10, y, k == 0 ? plot::kBlack : plot::Rgb{225, 225, 225});
    char lbl[8];
    std::snprintf(lbl, sizeof lbl, "%.2f", k * 0.25);
    cv.text(4, y - 3, lbl, plot::kBlack);
  }
  cv.vline(left, top, top + plot_h, plot::kBlack);
  for (int i = 0; i < n; ++i) {
    const int gx = left + i * group_w + 8;
    const auto& c = t.cells[static_cast<std::size_t>(i)][dataset];
    if (c) {
      const int hs = static_cast<int>(std::lround(std::clamp(c->sa, 0.0, 1.0) * plot_h));
      const int hi = static_cast<int>(std::lround(std::clamp(c->iou, 0.0, 1.0) * plot_h));
      cv.fill_rect(gx, top + plot_h - hs, bar_w, hs, plot::kBlue);
      cv.fill_rect(gx + bar_w + 2, top + plot_h - hi, bar_w, hi, plot::kOrange);
    }
    std::string name = t.scenarios[static_cast<std::size_t>(i)];
    if (name.size() > 11) name = name.substr(0, 11);
    cv.text(gx, top + plot_h + 8, name, plot::kBlack);
  }
  cv.fill_rect(left, height - 16, 8, 8, plot::kBlue);
  cv.text(left + 12, height - 16, "SA", plot::kBlack);
  cv.fill_rect(left + 40, height - 16, 8, 8, plot::kOrange);
  cv.text(left + 52, height - 16, "IOU", plot::kBlack);
  cv.save(path);
}

std::string sanitize(const std::string& s) {
  std::string o = s;
  for (char& c : o)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return o;
}

}  // namespace

void write_curation_montage(const DatasetSplit& transformed, const CurationReport& report, const fs::path& path) {
  const int row_h = 64, img_w = 64, hist_w = 160, text_w = 300, pad = 4;
  const int rows = static_cast<int>(report.records.size());
  const int width = pad + img_w + pad + hist_w + pad + text_w;
  plot::Canvas cv(width, std::max(1, rows) * (row_h + pad) + pad);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < transformed.size(); ++i) index[transformed.ids[i]] = i;

  const auto& prof = report.target_profile.bins();
  auto column_max = [](const Histogram::Bins& b) {
    double m = 0;
    for (double v : b) m = std::max(m, v);
    return m > 0 ? m : 1.0;
  };
  for (int r = 0; r < rows; ++r) {
    const CurationRecord& rec = report.records[static_cast<std::size_t>(r)];
    const int y = pad + r * (row_h + pad);
    const plot::Rgb flag = rec.selected ? plot::kGreen : plot::kRed;
    cv.fill_rect(0, y, 3, row_h, flag);
    auto it = index.find(rec.id);
    if (it != index.end()) {
      const GrayImage& img = transformed.images[it->second];
      cv.blit_gray(pad, y, img_w, row_h, img.pixels().data(), img.height(), img.width());
      // histogram overlay: target profile grey, image blue; each scaled to its own peak
      const Histogram h = compute_histogram(img);
      const int hx = pad + img_w + pad;
      cv.frame(hx, y, hist_w, row_h, plot::kGrey);
      const double pm = column_max(prof), im = column_max(h.bins());
      for (int b = 0; b < kHistogramBins; ++b) {
        const int x = hx + 1 + b * (hist_w - 2) / kHistogramBins;
        const int tp = static_cast<int>(prof[static_cast<std::size_t>(b)] / pm * (row_h - 2));
        const int ip = static_cast<int>(h[b] / im * (row_h - 2));
        if (tp > 0) cv.vline(x, y + row_h - 1 - tp, y + row_h - 2, plot::Rgb{200, 200, 200});
        if (ip > 0) cv.vline(x, y + row_h - 1 - ip, y + row_h - 2, plot::kBlue);
      }
    }
    const int tx = pad + img_w + pad + hist_w + pad + 4;
    char line1[64], line2[64];
    std::snprintf(line1, sizeof line1, "#%d  D=%.4f", rec.rank, rec.ks_statistic);
    std::snprintf(line2, sizeof line2, "P=%.3e", rec.p_value);
    std::string id = rec.id.size() > 40 ? rec.id.substr(0, 40) : rec.id;
    cv.text(tx, y + 4, id, plot::kBlack);
    cv.text(tx, y + 18, line1, plot::kBlack);
    cv.text(tx, y + 32, line2, plot::kBlack);
    cv.text(tx, y + 46, rec.selected ? "SELECTED" : "REJECTED", flag);
  }
  cv.save(path);
}

std::vector<fs::path> emit_plots(const ExperimentReport& report, const fs::path& out_dir) {
  std::vector<fs::path> written;
  const fs::path dir = out_dir / "plots";
  fs::create_directories(dir);
  for (std::size_t k = 0; k < report.table.datasets.size(); ++k) {
    const fs::path p = dir / ("bars_" + sanitize(report.table.datasets[k]) + ".png");
    draw_bar_chart(report.table, k, p);
    written.push_back(p);
  }
  // curation montages from hgit run directories
  const fs::path runs = out_dir / "runs";
  if (fs::exists(runs)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(runs))
      if (e.is_directory() && fs::exists(e.path() / "curation_report.json") &&
          fs::exists(e.path() / "transformed" / "manifest.json"))
        dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      const json cfg = read_json_file(d / "config.json");
      const json rep = read_json_file(d / "curation_report.json");
      CurationReport cr;
      cr.keep_percent = rep.at("keep_percent").get<double>();
      Histogram::Bins bins{};
      const auto prof = rep.at("target_profile").get<std::vector<double>>();
      std::copy_n(prof.begin(), std::min<std::size_t>(prof.size(), bins.size()), bins.begin());
      cr.target_profile = Histogram(bins, 1);
      for (const auto& r : rep.at("records")) {
        cr.records.push_back({r.at("id").get<std::string>(), r.at("D").get<double>(), r.at("p").get<double>(),
                              r.at("rank").get<int>(), r.at("selected").get<bool>()});
      }
      const DatasetSplit transformed = read_manifest(d / "transformed" / "manifest.json");
      const std::string name = "curation_" + sanitize(cfg.at("dataset").at("name").get<std::string>()) + "_seed" +
                               std::to_string(cfg.at("seed").get<std::uint64_t>()) + ".png";
      write_curation_montage(transformed, cr, dir / name);
      written.push_back(dir / name);
    }
  }
  return written;
}

}  // namespace hgit
