#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hgit/image.hpp"
#include "hgit/nn/layers.hpp"

namespace hgit {

enum class Backend { CycleGan, HistMatch, Fda };

std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

/// Residual encoder-decoder: 7x7 stem, two stride-2 downsamples, residual
/// blocks, two upsample+conv stages, 7x7 head with sigmoid output.
/// With input_skip the head adds logit(x) before the sigmoid, so a zero
/// decoder output is the identity map and full-resolution detail does not
/// have to pass through the bottleneck.
struct GeneratorArch {
  int base_channels = 8;
  int residual_blocks = 2;
  bool input_skip = true;
};

/// Small patch classifier emitting unbounded least-squares scores.
struct DiscriminatorArch {
  int base_channels = 8;
};

struct TranslationConfig {
  Backend backend = Backend::CycleGan;
  int epochs = 10;
  int batch_size = 1;
  double lambda_cyc = 10.0;
  double learning_rate = 2e-4;
  /// Low-frequency window half-width as a fraction of min(H, W).
  double fda_beta = 0.05;
  /// Random square crop used for CycleGAN updates; 0 = full image.
  int train_crop = 0;
  std::uint64_t seed = 0;
  GeneratorArch generator;
  DiscriminatorArch discriminator;

  void validate() const;
  nlohmann::json to_json() const;
  static TranslationConfig from_json(const nlohmann::json& j);
};

struct TranslatorEpoch {
  int epoch = 0;
  double generator_loss = 0.0;      // adversarial part, both directions
  double discriminator_loss = 0.0;  // both discriminators
  double cycle_loss = 0.0;          // unweighted L_cyc
};

/// The paired generators G_{S->T}, G_{T->S} and their discriminators.
class TranslatorModel {
 public:
  /// Freshly initialized CycleGAN networks.
  TranslatorModel(const GeneratorArch& g, const DiscriminatorArch& d, std::uint64_t seed);
  /// Arbitrary generator pair (used for fixed maps such as the identity).
  TranslatorModel(std::unique_ptr<nn::Module> s2t, std::unique_ptr<nn::Module> t2s);

  TranslatorModel(TranslatorModel&&) noexcept = default;
  TranslatorModel& operator=(TranslatorModel&&) noexcept = default;

  static TranslatorModel identity();

  nn::Module& g_s2t() { return *g_s2t_; }
  nn::Module& g_t2s() { return *g_t2s_; }
  nn::Module& d_s() { return *d_s_; }
  nn::Module& d_t() { return *d_t_; }
  const nn::Module& g_s2t() const { return *g_s2t_; }
  const nn::Module& g_t2s() const { return *g_t2s_; }

  bool trainable() const noexcept { return kind_ == "cyclegan"; }
  const std::string& kind() const noexcept { return kind_; }
  const GeneratorArch& generator_arch() const noexcept { return garch_; }

  GrayImage source_to_target(const GrayImage& img) const;
  GrayImage target_to_source(const GrayImage& img) const;

  std::vector<TranslatorEpoch>& training_log() { return log_; }
  const std::vector<TranslatorEpoch>& training_log() const { return log_; }

  void save(const std::filesystem::path& path) const;
  static TranslatorModel load(const std::filesystem::path& path);

 private:
  TranslatorModel() = default;

  std::string kind_;
  GeneratorArch garch_;
  DiscriminatorArch darch_;
  std::unique_ptr<nn::Module> g_s2t_, g_t2s_, d_s_, d_t_;
  std::vector<TranslatorEpoch> log_;
};

/// Generator stacks, exposed for tests and for building custom pairs.
std::unique_ptr<nn::Module> make_generator(const GeneratorArch& arch, nn::Rng& rng);
std::unique_ptr<nn::Module> make_discriminator(const DiscriminatorArch& arch, nn::Rng& rng);

/// Images as a (N,1,H,W) tensor; all must share one shape.
nn::Tensor to_batch(std::span<const GrayImage> images);
std::vector<GrayImage> from_batch(const nn::Tensor& t, bool clip = true);

/// L_cyc = mean|xs - G_ts(G_st(xs))| + mean|xt - G_st(G_ts(xt))|, per-pixel
/// L1 averaged over samples.
double cycle_loss(const nn::Tensor& xs, const nn::Tensor& xt, const nn::Module& g_s2t, const nn::Module& g_t2s);
double cycle_loss(std::span<const GrayImage> xs, std::span<const GrayImage> xt, const TranslatorModel& model);

/// Unsupervised CycleGAN training (LSGAN adversarial + lambda_cyc * L_cyc).
/// Masks are ignored. Throws TrainingError on a non-finite loss.
TranslatorModel train_translator(const DatasetSplit& source, const DatasetSplit& target, const TranslationConfig& cfg,
                                 const std::function<void(const TranslatorEpoch&)>& on_epoch = {});

/// X^{T'} = G_{S->T}(X^S); ids, role and masks carried through.
DatasetSplit apply_translator(const DatasetSplit& xs, const TranslatorModel& model);

/// Monotone remap v -> CDF_target^{-1}(CDF_img(v)); output levels are target
/// bin centres.
GrayImage hist_match(const GrayImage& img, const Histogram& target_hist);

/// Swaps the centred low-frequency square (|ky|, |kx| <= floor(beta * min(H,W)))
/// of the source amplitude for the target's, keeps the source phase.
GrayImage fda_translate(const GrayImage& src, const GrayImage& tgt, double beta);
/// Same, before clipping to [0,1].
std::vector<double> fda_translate_unclipped(const GrayImage& src, const GrayImage& tgt, double beta);
int fda_window_half_width(int h, int w, double beta);

/// One backend contract for the three translation methods.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual Backend backend() const = 0;
  virtual DatasetSplit translate(const DatasetSplit& source) const = 0;
};

/// hist-match: target mean histogram; fda: random target partner per image;
/// cyclegan: trains a TranslatorModel (or uses `pretrained`).
std::unique_ptr<Translator> make_translator(const TranslationConfig& cfg, const DatasetSplit& source_train,
                                            const DatasetSplit& target_train,
                                            std::shared_ptr<const TranslatorModel> pretrained = nullptr);

class CycleGanTranslator final : public Translator {
 public:
  explicit CycleGanTranslator(std::shared_ptr<const TranslatorModel> model) : model_(std::move(model)) {}
  Backend backend() const override { return Backend::CycleGan; }
  DatasetSplit translate(const DatasetSplit& source) const override { return apply_translator(source, *model_); }
  const TranslatorModel& model() const { return *model_; }

 private:
  std::shared_ptr<const TranslatorModel> model_;
};

}  // namespace hgit
