// hgit command-line driver: one subcommand per pipeline stage plus the
// experiment matrix.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hgit/curation.hpp"
#include "hgit/errors.hpp"
#include "hgit/harness.hpp"
#include "hgit/io.hpp"
#include "hgit/metrics.hpp"
#include "hgit/segmodel.hpp"
#include "hgit/synthgen.hpp"
#include "hgit/translate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw hgit::IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

struct SynthArgs {
  fs::path out;
  std::string preset = "shifted-dark-lowcontrast";
  std::string source = "source";
  int n_train = 200, n_test = 50, size = 64;
  double density = 0.3;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  hgit::LayoutSpec spec;
  spec.image_size = a.size;
  spec.density = a.density;
  spec.seed = a.seed;
  const auto pair = hgit::generate_domain_pair(hgit::style_preset(a.source), hgit::style_preset(a.preset), a.n_train,
                                               a.n_test, spec);
  hgit::write_domain_pair(pair, a.out);
  std::printf("wrote %d+%d images per domain to %s\n", a.n_train, a.n_test, a.out.string().c_str());
}

struct TranslateArgs {
  std::string backend = "cyclegan";
  fs::path source, target, out, checkpoint, pretrained;
  hgit::TranslationConfig cfg;
};

void run_translate(TranslateArgs a) {
  a.cfg.backend = hgit::backend_from_string(a.backend);
  a.cfg.validate();
  const auto source = hgit::read_manifest(a.source);
  const auto target = hgit::read_manifest(a.target);
  std::shared_ptr<const hgit::TranslatorModel> model;
  if (a.cfg.backend == hgit::Backend::CycleGan) {
    if (!a.pretrained.empty()) {
      model = std::make_shared<const hgit::TranslatorModel>(hgit::TranslatorModel::load(a.pretrained));
    } else {
      auto m = hgit::train_translator(source, target, a.cfg, [](const hgit::TranslatorEpoch& e) {
        std::printf("epoch %d  G %.4f  D %.4f  cyc %.4f\n", e.epoch, e.generator_loss, e.discriminator_loss,
                    e.cycle_loss);
        std::fflush(stdout);
      });
      if (!a.checkpoint.empty()) m.save(a.checkpoint);
      model = std::make_shared<const hgit::TranslatorModel>(std::move(m));
    }
  }
  const auto translator = hgit::make_translator(a.cfg, source, target, model);
  const auto transformed = translator->translate(source);
  const auto manifest = hgit::write_split(transformed, a.out, "manifest.json");
  std::printf("%zu transformed images -> %s\n", transformed.size(), manifest.string().c_str());
}

struct GateArgs {
  fs::path transformed, target, out;
  double keep_percent = 70.0;
  std::int64_t effective_n = 0;
};

void run_gate(const GateArgs& a) {
  hgit::CurationConfig cfg;
  cfg.keep_percent = a.keep_percent;
  if (a.effective_n > 0) cfg.effective_n = a.effective_n;
  const auto transformed = hgit::read_manifest(a.transformed);
  const auto target = hgit::read_manifest(a.target);
  auto [selected, report] = hgit::gate(transformed, target, cfg);
  fs::create_directories(a.out);
  hgit::write_split(selected, a.out, "manifest.json");
  report.write_json(a.out / "curation_report.json");
  report.write_csv(a.out / "curation_report.csv");
  std::printf("kept %zu of %zu\n", report.selected_count(), report.records.size());
}

struct TrainSegArgs {
  fs::path data, out, validation;
  hgit::SegTrainConfig cfg;
};

void run_train_seg(const TrainSegArgs& a) {
  const auto data = hgit::read_manifest(a.data);
  std::optional<hgit::DatasetSplit> val;
  if (!a.validation.empty()) val = hgit::read_manifest(a.validation);
  const auto model = hgit::train_segmenter(data, a.cfg, val ? &*val : nullptr, [](const hgit::SegEpoch& e) {
    std::printf("epoch %d  loss %.5f  %s SA %.4f\n", e.epoch, e.loss, e.validation_on_train ? "train" : "val",
                e.validation_sa);
    std::fflush(stdout);
  });
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  model.save(a.out);
}

struct PredictArgs {
  fs::path data, model, out;
  double threshold = 0.5;
};

void run_predict(const PredictArgs& a) {
  const auto data = hgit::read_manifest(a.data);
  const auto model = hgit::SegmenterModel::load(a.model);
  const auto masks = hgit::predict(data, model, a.threshold);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < masks.size(); ++i) hgit::save_mask(masks[i], a.out / (data.ids[i] + ".png"));
  std::printf("%zu masks -> %s\n", masks.size(), a.out.string().c_str());
}

struct EvalArgs {
  fs::path pred, truth, out;
  std::string scenario = "unknown", dataset = "unknown";
  std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& a) {
  const auto truth = hgit::read_manifest(a.truth);
  if (!truth.has_masks()) throw hgit::ArgumentError("truth manifest '" + a.truth.string() + "' has no masks");
  std::vector<hgit::BinaryMask> preds;
  for (const auto& id : truth.ids) preds.push_back(hgit::load_mask(a.pred / (id + ".png")));
  const auto r = hgit::make_result(a.scenario, a.dataset, a.seed, hgit::confusion(preds, *truth.masks));
  write_json(a.out, r.to_json());
  std::printf("SA %.4f  IoU %.4f%s\n", r.sa, r.iou, r.iou_both_empty ? "  (both empty)" : "");
}

struct ExperimentArgs {
  fs::path config;
  std::string preset;
  fs::path out;
  bool resume = false;
  int jobs = 1;
};

void run_experiment(const ExperimentArgs& a) {
  hgit::ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = hgit::ExperimentConfig::load(a.config);
  } else if (a.preset == "desk") {
    cfg = hgit::ExperimentConfig::desk_preset();
  } else if (a.preset == "paper") {
    cfg = hgit::ExperimentConfig::paper_preset();
  } else {
    throw hgit::ConfigError("give --config or --preset desk|paper");
  }
  if (!a.out.empty()) cfg.out_dir = a.out;
  hgit::MatrixOptions opts;
  opts.resume = a.resume;
  opts.jobs = a.jobs;
  opts.log = [](const std::string& s) {
    std::cout << s << std::endl;
  };
  const auto report = hgit::run_matrix(cfg, opts);
  std::cout << '\n' << report.table.to_csv();
  std::size_t failed = 0;
  for (const auto& r : report.runs) failed += r.ok() ? 0 : 1;
  if (failed) std::cout << failed << " run(s) failed, see report.json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Histogram-gated image translation for unsupervised domain adaptation"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic source/target domain pair");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--preset", sa.preset, "Target style preset")
      ->check(CLI::IsMember(hgit::style_preset_names()));
  synth->add_option("--source-preset", sa.source, "Source style preset")
      ->check(CLI::IsMember(hgit::style_preset_names()));
  synth->add_option("--n-train", sa.n_train, "Training images per domain");
  synth->add_option("--n-test", sa.n_test, "Test images per domain");
  synth->add_option("--size", sa.size, "Image side in pixels");
  synth->add_option("--density", sa.density, "Target foreground fraction");
  synth->add_option("--seed", sa.seed);

  TranslateArgs ta;
  auto* tr = app.add_subcommand("translate", "Translate source images toward the target domain");
  tr->add_option("--backend", ta.backend)->check(CLI::IsMember({"cyclegan", "hist-match", "fda"}));
  tr->add_option("--source", ta.source, "Source-train manifest")->required();
  tr->add_option("--target", ta.target, "Target-train manifest")->required();
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--epochs", ta.cfg.epochs);
  tr->add_option("--lambda-cyc", ta.cfg.lambda_cyc);
  tr->add_option("--lr", ta.cfg.learning_rate);
  tr->add_option("--beta", ta.cfg.fda_beta, "FDA window fraction");
  tr->add_option("--crop", ta.cfg.train_crop, "Random training crop side (0 = full image)");
  tr->add_option("--gen-channels", ta.cfg.generator.base_channels);
  tr->add_option("--res-blocks", ta.cfg.generator.residual_blocks);
  tr->add_option("--disc-channels", ta.cfg.discriminator.base_channels);
  tr->add_option("--seed", ta.cfg.seed);
  tr->add_option("--checkpoint", ta.checkpoint, "Save the trained translator here");
  tr->add_option("--pretrained", ta.pretrained, "Use this translator checkpoint instead of training")
      ->check(CLI::ExistingFile);

  GateArgs ga;
  auto* gt = app.add_subcommand("gate", "Keep the most target-like transformed images");
  gt->add_option("--transformed", ga.transformed, "Transformed-set manifest")->required();
  gt->add_option("--target", ga.target, "Target-train manifest")->required();
  gt->add_option("--keep-percent", ga.keep_percent);
  gt->add_option("--effective-n", ga.effective_n, "Sample size for the p-value (default: pixel count)");
  gt->add_option("--out", ga.out, "Output directory")->required();

  TrainSegArgs sg;
  auto* ts = app.add_subcommand("train-seg", "Train the segmenter");
  ts->add_option("--data", sg.data, "Labeled training manifest")->required();
  ts->add_option("--out", sg.out, "Checkpoint path")->required();
  ts->add_option("--validation", sg.validation, "Labeled validation manifest");
  ts->add_option("--epochs", sg.cfg.epochs);
  ts->add_option("--lr", sg.cfg.learning_rate);
  ts->add_option("--batch-size", sg.cfg.batch_size);
  ts->add_option("--crop", sg.cfg.train_crop);
  ts->add_option("--base-channels", sg.cfg.arch.base_channels);
  ts->add_flag("!--no-augment", sg.cfg.augment, "Disable flips and transposes");
  ts->add_option("--seed", sg.cfg.seed);

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Binarize segmenter output");
  pr->add_option("--data", pa.data, "Manifest of images")->required();
  pr->add_option("--model", pa.model, "Segmenter checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pa.out, "Directory for <id>.png masks")->required();
  pr->add_option("--threshold", pa.threshold);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predicted masks");
  ev->add_option("--pred", ea.pred, "Directory of <id>.png masks")->required();
  ev->add_option("--truth", ea.truth, "Manifest with ground-truth masks")->required();
  ev->add_option("--out", ea.out, "results.json path")->required();
  ev->add_option("--scenario", ea.scenario);
  ev->add_option("--dataset", ea.dataset);
  ev->add_option("--seed", ea.seed);

  ExperimentArgs xa;
  auto* rx = app.add_subcommand("run-experiment", "Run the scenario x dataset x seed matrix");
  auto* cfg_opt = rx->add_option("--config", xa.config, "experiment.json")->check(CLI::ExistingFile);
  rx->add_option("--preset", xa.preset, "Built-in matrix instead of a config file")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->excludes(cfg_opt);
  rx->add_option("--out", xa.out, "Override out_dir");
  rx->add_flag("--resume", xa.resume, "Skip cells whose result already exists");
  rx->add_option("--jobs", xa.jobs, "Cells run concurrently")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) run_synth(sa);
    if (*tr) run_translate(ta);
    if (*gt) run_gate(ga);
    if (*ts) run_train_seg(sg);
    if (*pr) run_predict(pa);
    if (*ev) run_eval(ea);
    if (*rx) run_experiment(xa);
  } catch (const hgit::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const hgit::ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const hgit::TrainingError& e) {
    std::fprintf(stderr, "training failed (epoch %d): %s\n", e.epoch(), e.what());
    return 3;
  } catch (const hgit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
