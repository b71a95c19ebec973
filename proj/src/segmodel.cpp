#include "hgit/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hgit/errors.hpp"
#include "hgit/metrics.hpp"
#include "hgit/nn/checkpoint.hpp"
#include "hgit/synthgen.hpp"

namespace hgit {

using nn::Tensor;

void SegTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("segmentation epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("segmentation batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("segmentation learning_rate must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (train_crop != 0 && (train_crop < 16 || train_crop % 4 != 0)) {
    throw ConfigError("segmentation train_crop must be 0 or a multiple of 4 that is at least 16");
  }
  if (arch.base_channels < 1) throw ConfigError("base_channels must be positive");
}

nlohmann::json SegTrainConfig::to_json() const {
  return {{"epochs", epochs},         {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"threshold", threshold},   {"train_crop", train_crop}, {"augment", augment},
          {"seed", seed},             {"base_channels", arch.base_channels}};
}

SegTrainConfig SegTrainConfig::from_json(const nlohmann::json& j) {
  SegTrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.threshold = j.value("threshold", c.threshold);
    c.train_crop = j.value("train_crop", c.train_crop);
    c.augment = j.value("augment", c.augment);
    c.seed = j.value("seed", c.seed);
    c.arch.base_channels = j.value("base_channels", c.arch.base_channels);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("segmentation config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// network

namespace {

nn::Sequential double_conv(int in, int out, nn::Rng& rng) {
  nn::Sequential s;
  s.add<nn::Conv2d>(in, out, 3, 1, 1, rng);
  s.add<nn::ReLU>();
  s.add<nn::Conv2d>(out, out, 3, 1, 1, rng);
  s.add<nn::ReLU>();
  return s;
}

nn::Sequential up_conv(int in, int out, nn::Rng& rng) {
  nn::Sequential s;
  s.add<nn::Upsample2>();
  s.add<nn::Conv2d>(in, out, 3, 1, 1, rng);
  s.add<nn::ReLU>();
  return s;
}

class UNet final : public nn::Module {
 public:
  UNet(int c, nn::Rng& rng)
      : c_(c),
        enc1_(double_conv(1, c, rng)),
        enc2_(double_conv(c, 2 * c, rng)),
        enc3_(double_conv(2 * c, 4 * c, rng)),
        up2_(up_conv(4 * c, 2 * c, rng)),
        dec2_(double_conv(4 * c, 2 * c, rng)),
        up1_(up_conv(2 * c, c, rng)),
        dec1_(double_conv(2 * c, c, rng)),
        head_(c, 1, 1, 1, 0, rng, 1.0f) {}

  Tensor forward(const Tensor& x, nn::Tape* tape) const override {
    if (x.h() % 4 != 0 || x.w() % 4 != 0) {
      throw ArgumentError("segmenter input sides must be multiples of 4, got " + x.shape_string());
    }
    Tensor e1 = enc1_.forward(x, tape);
    Tensor e2 = enc2_.forward(pool1_.forward(e1, tape), tape);
    Tensor e3 = enc3_.forward(pool2_.forward(e2, tape), tape);
    Tensor d2 = dec2_.forward(concat_channels(up2_.forward(e3, tape), e2), tape);
    Tensor d1 = dec1_.forward(concat_channels(up1_.forward(d2, tape), e1), tape);
    return head_.forward(d1, tape);
  }

  Tensor backward(const Tensor& dy, nn::Tape& tape) override {
    Tensor dd1 = head_.backward(dy, tape);
    Tensor du1, de1_skip, du2, de2_skip;
    split_channels(dec1_.backward(dd1, tape), c_, du1, de1_skip);
    Tensor dd2 = up1_.backward(du1, tape);
    split_channels(dec2_.backward(dd2, tape), 2 * c_, du2, de2_skip);
    Tensor de3 = up2_.backward(du2, tape);
    Tensor de2 = pool2_.backward(enc3_.backward(de3, tape), tape);
    de2 += de2_skip;
    Tensor de1 = pool1_.backward(enc2_.backward(de2, tape), tape);
    de1 += de1_skip;
    return enc1_.backward(de1, tape);
  }

  void collect(std::vector<nn::Param*>& out) override {
    for (nn::Module* m : std::initializer_list<nn::Module*>{&enc1_, &enc2_, &enc3_, &up2_, &dec2_, &up1_, &dec1_,
                                                           &head_})
      m->collect(out);
  }

 private:
  int c_;
  nn::Sequential enc1_, enc2_, enc3_, up2_, dec2_, up1_, dec1_;
  nn::MaxPool2 pool1_, pool2_;
  nn::Conv2d head_;
};

float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

}  // namespace

SegmenterModel::SegmenterModel(const SegmenterArch& arch, std::uint64_t seed) : arch_(arch) {
  if (arch.base_channels < 1) throw ArgumentError("base_channels must be positive");
  nn::Rng rng(seed);
  net_ = std::make_unique<UNet>(arch.base_channels, rng);
}

SegmenterModel::SegmenterModel(std::unique_ptr<nn::Module> logits_net) : custom_(true), net_(std::move(logits_net)) {
  if (!net_) throw ArgumentError("segmenter network must be non-null");
}

std::vector<float> SegmenterModel::probabilities(const GrayImage& img) const {
  Tensor x(1, 1, img.height(), img.width());
  std::copy(img.pixels().begin(), img.pixels().end(), x.data());
  Tensor z = net_->forward(x, nullptr);
  if (z.size() != img.size()) throw ArgumentError("segmenter output shape " + z.shape_string() + " differs from input");
  std::vector<float> p(z.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(z.data()[i]);
  return p;
}

void SegmenterModel::save(const std::filesystem::path& path) const {
  if (custom_) throw ArgumentError("custom segmenter networks cannot be serialized");
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_) {
    log.push_back({{"epoch", e.epoch},
                   {"loss", e.loss},
                   {"validation_sa", e.validation_sa},
                   {"validation_on_train", e.validation_on_train}});
  }
  nlohmann::json header = {{"model", "segmenter"},
                           {"arch", "unet3"},
                           {"base_channels", arch_.base_channels},
                           {"training_log", log}};
  const nn::Module& net = *net_;
  nn::save_checkpoint(path, header, net.parameters());
}

SegmenterModel SegmenterModel::load(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.header.value("model", std::string()) != "segmenter") {
    throw FormatError(path.string() + ": not a segmenter checkpoint");
  }
  SegmenterArch arch;
  arch.base_channels = ckpt.header.at("base_channels").get<int>();
  SegmenterModel m(arch, 0);
  auto params = m.net_->parameters();
  if (params.size() != ckpt.tensors.size()) throw FormatError(path.string() + ": unexpected tensor count");
  nn::assign_parameters(params, ckpt);
  for (const auto& e : ckpt.header.value("training_log", nlohmann::json::array())) {
    m.log_.push_back({e.at("epoch").get<int>(), e.at("loss").get<double>(), e.at("validation_sa").get<double>(),
                      e.at("validation_on_train").get<bool>()});
  }
  return m;
}

// ---------------------------------------------------------------------------
// loss

namespace {

void check_aligned(std::size_t n_probs, std::span<const BinaryMask> masks) {
  std::size_t n = 0;
  for (const auto& m : masks) n += m.size();
  if (n != n_probs || n == 0) {
    throw ArgumentError("bce: " + std::to_string(n_probs) + " probabilities for " + std::to_string(n) + " labels");
  }
}

}  // namespace

double bce_loss(std::span<const float> probs, std::span<const BinaryMask> masks) {
  check_aligned(probs.size(), masks);
  double s = 0.0;
  std::size_t i = 0;
  for (const auto& m : masks) {
    for (std::uint8_t y : m.labels()) {
      const double p = std::clamp(static_cast<double>(probs[i++]), kBceEps, 1.0 - kBceEps);
      s -= y ? std::log(p) : std::log1p(-p);
    }
  }
  return s / static_cast<double>(probs.size());
}

double bce_loss(const Tensor& probs, std::span<const BinaryMask> masks) {
  if (probs.c() != 1) throw ArgumentError("bce: expected single-channel probabilities");
  return bce_loss(probs.values(), masks);
}

Tensor bce_grad(const Tensor& probs, std::span<const BinaryMask> masks) {
  check_aligned(probs.size(), masks);
  Tensor g(probs.n(), probs.c(), probs.h(), probs.w());
  const double n = static_cast<double>(probs.size());
  std::size_t i = 0;
  for (const auto& m : masks) {
    for (std::uint8_t y : m.labels()) {
      const double p = probs.data()[i];
      double d = 0.0;
      if (p > kBceEps && p < 1.0 - kBceEps) d = y ? -1.0 / p : 1.0 / (1.0 - p);
      g.data()[i++] = static_cast<float>(d / n);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// training

namespace {

struct Batch {
  Tensor x;
  std::vector<BinaryMask> y;
};

// Random crop plus one of the 8 square symmetries (flips/transposes) when
// augmenting; transposes are only used when the window is square.
Batch make_batch(const DatasetSplit& data, std::span<const std::size_t> idx, const SegTrainConfig& cfg,
                 nn::Rng& rng) {
  const GrayImage& first = data.images[idx[0]];
  const int h = cfg.train_crop > 0 ? cfg.train_crop : first.height();
  const int w = cfg.train_crop > 0 ? cfg.train_crop : first.width();
  Batch b{Tensor(static_cast<int>(idx.size()), 1, h, w), {}};
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const GrayImage& img = data.images[idx[k]];
    const BinaryMask& mask = (*data.masks)[idx[k]];
    if (cfg.train_crop > 0) {
      if (img.height() < h || img.width() < w) throw ArgumentError("train_crop exceeds image size");
    } else if (!img.same_shape(first)) {
      throw ArgumentError("training images differ in shape; set train_crop");
    }
    int oy = 0, ox = 0;
    if (cfg.train_crop > 0) {
      oy = std::uniform_int_distribution<int>(0, img.height() - h)(rng);
      ox = std::uniform_int_distribution<int>(0, img.width() - w)(rng);
    }
    int code = 0;
    if (cfg.augment) code = std::uniform_int_distribution<int>(0, h == w ? 7 : 3)(rng);
    float* dst = b.x.sample(static_cast<int>(k));
    BinaryMask m(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int sy = y, sx = x;
        if (code & 4) std::swap(sy, sx);
        if (code & 1) sx = w - 1 - sx;
        if (code & 2) sy = h - 1 - sy;
        dst[y * w + x] = img(oy + sy, ox + sx);
        m(y, x) = mask(oy + sy, ox + sx);
      }
    }
    b.y.push_back(std::move(m));
  }
  return b;
}

double split_sa(const DatasetSplit& split, const SegmenterModel& model, double threshold, std::size_t limit) {
  const std::size_t n = std::min(limit, split.size());
  ConfusionCounts c;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = model.probabilities(split.images[i]);
    const BinaryMask& truth = (*split.masks)[i];
    BinaryMask pred(truth.height(), truth.width());
    for (std::size_t k = 0; k < p.size(); ++k) pred.labels()[k] = p[k] >= threshold ? 1 : 0;
    c += confusion(pred, truth);
  }
  return segmentation_accuracy(c);
}

void check_training_split(const DatasetSplit& data, const char* what) {
  if (data.empty()) throw ArgumentError(std::string(what) + " split is empty");
  if (!data.has_masks()) throw ArgumentError(std::string(what) + " split has no masks");
  if (is_test_role(data.role)) {
    throw ArgumentError(std::string(what) + " split has role " + std::string(to_string(data.role)) +
                        "; test splits may not be used for training");
  }
  data.validate();
}

}  // namespace

SegmenterModel train_segmenter(const DatasetSplit& data, const SegTrainConfig& cfg, const DatasetSplit* validation,
                               const std::function<void(const SegEpoch&)>& on_epoch) {
  cfg.validate();
  check_training_split(data, "training");
  if (validation) check_training_split(*validation, "validation");

  SegmenterModel model(cfg.arch, derive_seed(cfg.seed, 0x736567));
  nn::Module& net = model.network();
  nn::Adam opt(net.parameters(), static_cast<float>(cfg.learning_rate));
  nn::Rng rng(derive_seed(cfg.seed, 0x736567, 1));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t end = std::min(order.size(), start + bsz);
      Batch b = make_batch(data, std::span(order).subspan(start, end - start), cfg, rng);
      nn::Tape tape;
      Tensor z = net.forward(b.x, &tape);
      Tensor p = z;
      for (float& v : p.values()) v = sigmoid(v);
      const double loss = bce_loss(p, b.y);
      if (!std::isfinite(loss)) {
        throw TrainingError("segmenter training diverged (non-finite loss) in epoch " + std::to_string(epoch), epoch);
      }
      // sigmoid and BCE fused: dL/dz = (p - y) / N
      Tensor dz(z.n(), z.c(), z.h(), z.w());
      const float inv_n = 1.0f / static_cast<float>(z.size());
      std::size_t i = 0;
      for (const auto& m : b.y)
        for (std::uint8_t y : m.labels()) {
          dz.data()[i] = (p.data()[i] - static_cast<float>(y)) * inv_n;
          ++i;
        }
      net.backward(dz, tape);
      opt.step();
      opt.zero_grad();
      loss_sum += loss;
      ++batches;
    }
    SegEpoch rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.validation_on_train = validation == nullptr;
    rec.validation_sa = validation ? split_sa(*validation, model, cfg.threshold, validation->size())
                                   : split_sa(data, model, cfg.threshold, 32);
    model.training_log().push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return model;
}

std::vector<BinaryMask> predict(const DatasetSplit& xt, const SegmenterModel& model, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
  std::vector<BinaryMask> out;
  out.reserve(xt.size());
  for (const auto& img : xt.images) {
    auto p = model.probabilities(img);
    BinaryMask m(img.height(), img.width());
    for (std::size_t k = 0; k < p.size(); ++k) m.labels()[k] = p[k] >= threshold ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace hgit
