#include "hgit/translate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hgit/curation.hpp"
#include "hgit/errors.hpp"
#include "hgit/fft.hpp"
#include "hgit/nn/checkpoint.hpp"
#include "hgit/synthgen.hpp"

namespace hgit {

using nn::Tensor;

std::string to_string(Backend b) {
  switch (b) {
    case Backend::CycleGan: return "cyclegan";
    case Backend::HistMatch: return "hist-match";
    case Backend::Fda: return "fda";
  }
  return "?";
}

Backend backend_from_string(const std::string& s) {
  if (s == "cyclegan") return Backend::CycleGan;
  if (s == "hist-match") return Backend::HistMatch;
  if (s == "fda") return Backend::Fda;
  throw ArgumentError("unknown translation backend '" + s + "'");
}

void TranslationConfig::validate() const {
  if (backend == Backend::CycleGan && epochs < 1) throw ConfigError("cyclegan requires epochs >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lambda_cyc >= 0.0)) throw ConfigError("lambda_cyc must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(fda_beta > 0.0 && fda_beta <= 0.5)) throw ConfigError("fda_beta must lie in (0, 0.5]");
  if (train_crop != 0 && (train_crop < 16 || train_crop % 4 != 0)) {
    throw ConfigError("train_crop must be 0 or a multiple of 4 that is at least 16");
  }
  if (generator.base_channels < 1 || generator.residual_blocks < 0 || discriminator.base_channels < 1) {
    throw ConfigError("network widths must be positive");
  }
}

nlohmann::json TranslationConfig::to_json() const {
  return {{"backend", to_string(backend)},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lambda_cyc", lambda_cyc},
          {"learning_rate", learning_rate},
          {"fda_beta", fda_beta},
          {"train_crop", train_crop},
          {"seed", seed},
          {"generator",
           {{"base_channels", generator.base_channels},
            {"residual_blocks", generator.residual_blocks},
            {"input_skip", generator.input_skip}}},
          {"discriminator", {{"base_channels", discriminator.base_channels}}}};
}

TranslationConfig TranslationConfig::from_json(const nlohmann::json& j) {
  TranslationConfig c;
  try {
    if (j.contains("backend")) c.backend = backend_from_string(j.at("backend").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda_cyc = j.value("lambda_cyc", c.lambda_cyc);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.fda_beta = j.value("fda_beta", c.fda_beta);
    c.train_crop = j.value("train_crop", c.train_crop);
    c.seed = j.value("seed", c.seed);
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      c.generator.base_channels = g.value("base_channels", c.generator.base_channels);
      c.generator.residual_blocks = g.value("residual_blocks", c.generator.residual_blocks);
      c.generator.input_skip = g.value("input_skip", c.generator.input_skip);
    }
    if (j.contains("discriminator")) {
      c.discriminator.base_channels = j.at("discriminator").value("base_channels", c.discriminator.base_channels);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("translation config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// networks

namespace {

class IdentityMap final : public nn::Module {
 public:
  Tensor forward(const Tensor& x, nn::Tape*) const override { return x; }
  Tensor backward(const Tensor& dy, nn::Tape&) override { return dy; }
};

// y = sigmoid(body(x) + logit(x)); x is clamped away from {0,1} for the skip
class LogitSkip final : public nn::Module {
 public:
  static constexpr float kEps = 0.02f;
  explicit LogitSkip(std::unique_ptr<nn::Module> body) : body_(std::move(body)) {}

  Tensor forward(const Tensor& x, nn::Tape* tape) const override {
    Tensor z = body_->forward(x, tape);
    if (!z.same_shape(x)) throw ArgumentError("generator body changed the shape to " + z.shape_string());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const float v = std::clamp(x.data()[i], kEps, 1.0f - kEps);
      const float s = z.data()[i] + std::log(v / (1.0f - v));
      z.data()[i] = 1.0f / (1.0f + std::exp(-s));
    }
    if (tape) {
      tape->push(x);
      tape->push(z);
    }
    return z;
  }

  Tensor backward(const Tensor& dy, nn::Tape& tape) override {
    const Tensor y = tape.pop();
    const Tensor x = tape.pop();
    Tensor dz(dy.n(), dy.c(), dy.h(), dy.w());
    for (std::size_t i = 0; i < dz.size(); ++i) dz.data()[i] = dy.data()[i] * y.data()[i] * (1.0f - y.data()[i]);
    Tensor dx = body_->backward(dz, tape);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const float v = x.data()[i];
      if (v > kEps && v < 1.0f - kEps) dx.data()[i] += dz.data()[i] / (v * (1.0f - v));
    }
    return dx;
  }

  void collect(std::vector<nn::Param*>& out) override { body_->collect(out); }

 private:
  std::unique_ptr<nn::Module> body_;
};

nn::Sequential conv_block(int in, int out, int k, int stride, nn::Rng& rng) {
  nn::Sequential s;
  s.add<nn::Conv2d>(in, out, k, stride, k / 2, rng);
  s.add<nn::InstanceNorm>(out);
  s.add<nn::ReLU>();
  return s;
}

}  // namespace

std::unique_ptr<nn::Module> make_generator(const GeneratorArch& arch, nn::Rng& rng) {
  const int c = arch.base_channels;
  auto g = std::make_unique<nn::Sequential>();
  g->add(std::make_unique<nn::Sequential>(conv_block(1, c, 7, 1, rng)));
  g->add(std::make_unique<nn::Sequential>(conv_block(c, 2 * c, 3, 2, rng)));
  g->add(std::make_unique<nn::Sequential>(conv_block(2 * c, 4 * c, 3, 2, rng)));
  for (int r = 0; r < arch.residual_blocks; ++r) {
    nn::Sequential body = conv_block(4 * c, 4 * c, 3, 1, rng);
    body.add<nn::Conv2d>(4 * c, 4 * c, 3, 1, 1, rng, 1.0f);
    body.add<nn::InstanceNorm>(4 * c);
    g->add<nn::Residual>(std::move(body));
  }
  g->add<nn::Upsample2>();
  g->add(std::make_unique<nn::Sequential>(conv_block(4 * c, 2 * c, 3, 1, rng)));
  g->add<nn::Upsample2>();
  g->add(std::make_unique<nn::Sequential>(conv_block(2 * c, c, 3, 1, rng)));
  if (arch.input_skip) {
    g->add<nn::Conv2d>(c, 1, 7, 1, 3, rng, 1.0f);
    return std::make_unique<LogitSkip>(std::move(g));
  }
  g->add<nn::Conv2d>(c, 1, 7, 1, 3, rng, 1.0f);
  g->add<nn::Sigmoid>();
  return g;
}

std::unique_ptr<nn::Module> make_discriminator(const DiscriminatorArch& arch, nn::Rng& rng) {
  const int c = arch.base_channels;
  auto d = std::make_unique<nn::Sequential>();
  d->add<nn::Conv2d>(1, c, 4, 2, 1, rng);
  d->add<nn::LeakyReLU>(0.2f);
  d->add<nn::Conv2d>(c, 2 * c, 4, 2, 1, rng);
  d->add<nn::InstanceNorm>(2 * c);
  d->add<nn::LeakyReLU>(0.2f);
  d->add<nn::Conv2d>(2 * c, 1, 3, 1, 1, rng, 1.0f);
  return d;
}

TranslatorModel::TranslatorModel(const GeneratorArch& g, const DiscriminatorArch& d, std::uint64_t seed)
    : kind_("cyclegan"), garch_(g), darch_(d) {
  nn::Rng rng(seed);
  g_s2t_ = make_generator(g, rng);
  g_t2s_ = make_generator(g, rng);
  d_s_ = make_discriminator(d, rng);
  d_t_ = make_discriminator(d, rng);
}

TranslatorModel::TranslatorModel(std::unique_ptr<nn::Module> s2t, std::unique_ptr<nn::Module> t2s)
    : kind_("custom"), g_s2t_(std::move(s2t)), g_t2s_(std::move(t2s)) {
  if (!g_s2t_ || !g_t2s_) throw ArgumentError("generator pair must be non-null");
  d_s_ = std::make_unique<IdentityMap>();
  d_t_ = std::make_unique<IdentityMap>();
}

TranslatorModel TranslatorModel::identity() {
  TranslatorModel m(std::make_unique<IdentityMap>(), std::make_unique<IdentityMap>());
  m.kind_ = "identity";
  return m;
}

namespace {

GrayImage run_single(const nn::Module& g, const GrayImage& img) {
  if (img.height() % 4 != 0 || img.width() % 4 != 0) {
    throw ArgumentError("translator input sides must be multiples of 4, got " + std::to_string(img.height()) + "x" +
                        std::to_string(img.width()));
  }
  const GrayImage* one = &img;
  Tensor y = g.forward(to_batch(std::span<const GrayImage>(one, 1)), nullptr);
  if (y.n() != 1 || y.c() != 1 || y.h() != img.height() || y.w() != img.width()) {
    throw ArgumentError("generator changed the image shape to " + y.shape_string());
  }
  return from_batch(y).front();
}

}  // namespace

GrayImage TranslatorModel::source_to_target(const GrayImage& img) const { return run_single(*g_s2t_, img); }
GrayImage TranslatorModel::target_to_source(const GrayImage& img) const { return run_single(*g_t2s_, img); }

void TranslatorModel::save(const std::filesystem::path& path) const {
  if (kind_ == "custom") throw ArgumentError("custom generator pairs cannot be serialized");
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_) {
    log.push_back({{"epoch", e.epoch},
                   {"generator_loss", e.generator_loss},
                   {"discriminator_loss", e.discriminator_loss},
                   {"cycle_loss", e.cycle_loss}});
  }
  nlohmann::json header = {
      {"model", "translator"},
      {"kind", kind_},
      {"generator",
       {{"base_channels", garch_.base_channels},
        {"residual_blocks", garch_.residual_blocks},
        {"input_skip", garch_.input_skip}}},
      {"discriminator", {{"base_channels", darch_.base_channels}}},
      {"training_log", log}};
  std::vector<const nn::Param*> params;
  for (const nn::Module* m : {g_s2t_.get(), g_t2s_.get(), d_s_.get(), d_t_.get()}) {
    auto p = m->parameters();
    params.insert(params.end(), p.begin(), p.end());
  }
  nn::save_checkpoint(path, header, params);
}

TranslatorModel TranslatorModel::load(const std::filesystem::path& path) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  const auto& h = ckpt.header;
  if (h.value("model", std::string()) != "translator") {
    throw FormatError(path.string() + ": not a translator checkpoint");
  }
  const std::string kind = h.value("kind", std::string());
  TranslatorModel m;
  if (kind == "identity") {
    m = identity();
  } else if (kind == "cyclegan") {
    GeneratorArch g;
    DiscriminatorArch d;
    g.base_channels = h.at("generator").at("base_channels").get<int>();
    g.residual_blocks = h.at("generator").at("residual_blocks").get<int>();
    g.input_skip = h.at("generator").value("input_skip", false);
    d.base_channels = h.at("discriminator").at("base_channels").get<int>();
    m = TranslatorModel(g, d, 0);
    std::size_t offset = 0;
    for (nn::Module* mod : {m.g_s2t_.get(), m.g_t2s_.get(), m.d_s_.get(), m.d_t_.get()}) {
      auto p = mod->parameters();
      nn::assign_parameters(p, ckpt, offset, p.size());
      offset += p.size();
    }
    if (offset != ckpt.tensors.size()) throw FormatError(path.string() + ": unexpected tensor count");
  } else {
    throw FormatError(path.string() + ": unknown translator kind '" + kind + "'");
  }
  for (const auto& e : h.value("training_log", nlohmann::json::array())) {
    m.log_.push_back({e.at("epoch").get<int>(), e.at("generator_loss").get<double>(),
                      e.at("discriminator_loss").get<double>(), e.at("cycle_loss").get<double>()});
  }
  return m;
}

// ---------------------------------------------------------------------------
// tensors <-> images

Tensor to_batch(std::span<const GrayImage> images) {
  if (images.empty()) throw ArgumentError("empty image batch");
  const int h = images[0].height(), w = images[0].width();
  Tensor t(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) throw ArgumentError("batch images differ in shape");
    std::copy(images[i].pixels().begin(), images[i].pixels().end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

std::vector<GrayImage> from_batch(const Tensor& t, bool clip) {
  if (t.c() != 1) throw ArgumentError("expected a single-channel batch, got " + t.shape_string());
  std::vector<GrayImage> out;
  out.reserve(static_cast<std::size_t>(t.n()));
  for (int i = 0; i < t.n(); ++i) {
    const float* p = t.sample(i);
    GrayImage img(t.h(), t.w(), std::vector<float>(p, p + t.plane()));
    if (clip) img.clip();
    out.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// cycle consistency

namespace {

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(pa[i]) - pb[i]);
  return s / static_cast<double>(a.size());
}

// d/d(rec) of scale * mean|rec - x|
Tensor l1_grad(const Tensor& rec, const Tensor& x, double scale) {
  Tensor g(rec.n(), rec.c(), rec.h(), rec.w());
  const float k = static_cast<float>(scale / static_cast<double>(rec.size()));
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const float d = rec.data()[i] - x.data()[i];
    g.data()[i] = d > 0 ? k : (d < 0 ? -k : 0.0f);
  }
  return g;
}

// mean (d - target)^2 and its gradient
double lsgan(const Tensor& d, float target, Tensor* grad, double scale = 1.0) {
  double s = 0.0;
  const double n = static_cast<double>(d.size());
  if (grad) *grad = Tensor(d.n(), d.c(), d.h(), d.w());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = static_cast<double>(d.data()[i]) - target;
    s += r * r;
    if (grad) grad->data()[i] = static_cast<float>(scale * 2.0 * r / n);
  }
  return s / n;
}

void require_shape(const Tensor& in, const Tensor& out, const char* what) {
  if (!in.same_shape(out)) {
    throw ArgumentError(std::string(what) + " maps " + in.shape_string() + " to " + out.shape_string());
  }
}

}  // namespace

double cycle_loss(const Tensor& xs, const Tensor& xt, const nn::Module& g_s2t, const nn::Module& g_t2s) {
  if (xs.size() == 0 || xt.size() == 0) throw ArgumentError("cycle_loss: empty batch");
  if (xs.c() != 1 || xt.c() != 1) throw ArgumentError("cycle_loss: expected single-channel batches");
  Tensor fake_t = g_s2t.forward(xs, nullptr);
  require_shape(xs, fake_t, "G_s2t");
  Tensor rec_s = g_t2s.forward(fake_t, nullptr);
  require_shape(xs, rec_s, "G_t2s");
  Tensor fake_s = g_t2s.forward(xt, nullptr);
  require_shape(xt, fake_s, "G_t2s");
  Tensor rec_t = g_s2t.forward(fake_s, nullptr);
  require_shape(xt, rec_t, "G_s2t");
  return mean_abs_diff(xs, rec_s) + mean_abs_diff(xt, rec_t);
}

double cycle_loss(std::span<const GrayImage> xs, std::span<const GrayImage> xt, const TranslatorModel& model) {
  return cycle_loss(to_batch(xs), to_batch(xt), model.g_s2t(), model.g_t2s());
}

// ---------------------------------------------------------------------------
// training

namespace {

Tensor gather(const DatasetSplit& split, std::span<const std::size_t> idx, int crop, nn::Rng& rng) {
  const GrayImage& first = split.images[idx[0]];
  const int h = crop > 0 ? crop : first.height();
  const int w = crop > 0 ? crop : first.width();
  Tensor t(static_cast<int>(idx.size()), 1, h, w);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const GrayImage& img = split.images[idx[b]];
    if (crop > 0 && (img.height() < crop || img.width() < crop)) {
      throw ArgumentError("train_crop exceeds image size");
    }
    if (crop == 0 && !img.same_shape(first)) throw ArgumentError("training images differ in shape; set train_crop");
    int oy = 0, ox = 0;
    if (crop > 0) {
      oy = std::uniform_int_distribution<int>(0, img.height() - crop)(rng);
      ox = std::uniform_int_distribution<int>(0, img.width() - crop)(rng);
    }
    float* dst = t.sample(static_cast<int>(b));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) dst[y * w + x] = img(oy + y, ox + x);
  }
  return t;
}

void check_training_input(const DatasetSplit& s, const char* what) {
  if (s.empty()) throw ArgumentError(std::string(what) + " split is empty");
  if (is_test_role(s.role)) {
    throw ArgumentError(std::string(what) + " split has role " + std::string(to_string(s.role)) +
                        "; test splits may not be used for training");
  }
  for (const auto& img : s.images) {
    if (img.height() % 4 != 0 || img.width() % 4 != 0) throw ArgumentError("image sides must be multiples of 4");
  }
}

}  // namespace

TranslatorModel train_translator(const DatasetSplit& source, const DatasetSplit& target, const TranslationConfig& cfg,
                                 const std::function<void(const TranslatorEpoch&)>& on_epoch) {
  cfg.validate();
  if (cfg.backend != Backend::CycleGan) throw ArgumentError("train_translator requires the cyclegan backend");
  check_training_input(source, "source");
  check_training_input(target, "target");

  TranslatorModel model(cfg.generator, cfg.discriminator, derive_seed(cfg.seed, 0x6e6574));
  nn::Module& gst = model.g_s2t();
  nn::Module& gts = model.g_t2s();
  nn::Module& ds = model.d_s();
  nn::Module& dt = model.d_t();

  std::vector<nn::Param*> gparams = gst.parameters();
  for (auto* p : gts.parameters()) gparams.push_back(p);
  std::vector<nn::Param*> dparams = ds.parameters();
  for (auto* p : dt.parameters()) dparams.push_back(p);
  const float lr = static_cast<float>(cfg.learning_rate);
  nn::Adam opt_g(gparams, lr, 0.5f, 0.999f);
  nn::Adam opt_d(dparams, lr, 0.5f, 0.999f);

  nn::Rng rng(cfg.seed ^ 0x7472616e736c6174ULL);
  const std::size_t ns = source.size(), nt = target.size();
  const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (std::max(ns, nt) + bsz - 1) / bsz;
  std::vector<std::size_t> ps(ns), pt(nt);
  std::iota(ps.begin(), ps.end(), 0);
  std::iota(pt.begin(), pt.end(), 0);
  const int decay_start = cfg.epochs / 2;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch > decay_start) {
      const double frac = static_cast<double>(epoch - decay_start) / (cfg.epochs - decay_start + 1);
      opt_g.set_learning_rate(static_cast<float>(cfg.learning_rate * (1.0 - frac)));
      opt_d.set_learning_rate(static_cast<float>(cfg.learning_rate * (1.0 - frac)));
    }
    std::shuffle(ps.begin(), ps.end(), rng);
    std::shuffle(pt.begin(), pt.end(), rng);
    double sum_g = 0, sum_d = 0, sum_c = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::size_t> is, it;
      for (std::size_t b = 0; b < bsz; ++b) {
        is.push_back(ps[(step * bsz + b) % ns]);
        it.push_back(pt[(step * bsz + b) % nt]);
      }
      const Tensor xs = gather(source, is, cfg.train_crop, rng);
      const Tensor xt = gather(target, it, cfg.train_crop, rng);

      // generator update
      nn::Tape ta, tb, tc, td, te, tf;
      Tensor fake_t = gst.forward(xs, &ta);
      Tensor rec_s = gts.forward(fake_t, &tb);
      Tensor fake_s = gts.forward(xt, &tc);
      Tensor rec_t = gst.forward(fake_s, &td);
      Tensor dt_fake = dt.forward(fake_t, &te);
      Tensor ds_fake = ds.forward(fake_s, &tf);

      Tensor g_dt, g_ds;
      const double adv = lsgan(dt_fake, 1.0f, &g_dt) + lsgan(ds_fake, 1.0f, &g_ds);
      const double cyc = mean_abs_diff(xs, rec_s) + mean_abs_diff(xt, rec_t);

      Tensor d_fake_t = gts.backward(l1_grad(rec_s, xs, cfg.lambda_cyc), tb);
      d_fake_t += dt.backward(g_dt, te);
      gst.backward(d_fake_t, ta);
      Tensor d_fake_s = gst.backward(l1_grad(rec_t, xt, cfg.lambda_cyc), td);
      d_fake_s += ds.backward(g_ds, tf);
      gts.backward(d_fake_s, tc);
      opt_g.step();
      opt_g.zero_grad();
      opt_d.zero_grad();

      // discriminator update on the same fakes
      double dloss = 0.0;
      for (auto [d, real, fake] : {std::tuple<nn::Module*, const Tensor*, const Tensor*>{&dt, &xt, &fake_t},
                                   std::tuple<nn::Module*, const Tensor*, const Tensor*>{&ds, &xs, &fake_s}}) {
        nn::Tape tr, tk;
        Tensor out_r = d->forward(*real, &tr);
        Tensor out_f = d->forward(*fake, &tk);
        Tensor gr, gf;
        dloss += 0.5 * (lsgan(out_r, 1.0f, &gr, 0.5) + lsgan(out_f, 0.0f, &gf, 0.5));
        d->backward(gf, tk);
        d->backward(gr, tr);
      }
      opt_d.step();
      opt_d.zero_grad();

      if (!std::isfinite(adv) || !std::isfinite(cyc) || !std::isfinite(dloss)) {
        throw TrainingError("translator training diverged (non-finite loss) in epoch " + std::to_string(epoch),
                            epoch);
      }
      sum_g += adv;
      sum_d += dloss;
      sum_c += cyc;
    }
    TranslatorEpoch rec{epoch, sum_g / steps, sum_d / steps, sum_c / steps};
    model.training_log().push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return model;
}

DatasetSplit apply_translator(const DatasetSplit& xs, const TranslatorModel& model) {
  DatasetSplit out;
  out.role = xs.role;
  out.ids = xs.ids;
  out.masks = xs.masks;
  out.images.reserve(xs.size());
  for (const auto& img : xs.images) out.images.push_back(model.source_to_target(img));
  return out;
}

// ---------------------------------------------------------------------------
// histogram matching

GrayImage hist_match(const GrayImage& img, const Histogram& target_hist) {
  img.validate();
  if (!target_hist.is_normalized()) throw ArgumentError("hist_match: target histogram is not normalized");
  const auto src_cdf = compute_histogram(img).cdf();
  const auto tgt_cdf = target_hist.cdf();
  std::array<float, kHistogramBins> lut{};
  int t = 0;
  for (int b = 0; b < kHistogramBins; ++b) {
    // smallest target bin whose CDF reaches the source CDF; the source CDF is
    // non-decreasing so t only moves forward
    while (t < kHistogramBins - 1 && tgt_cdf[static_cast<std::size_t>(t)] < src_cdf[static_cast<std::size_t>(b)] - 1e-12)
      ++t;
    lut[static_cast<std::size_t>(b)] = (static_cast<float>(t) + 0.5f) / kHistogramBins;
  }
  GrayImage out(img.height(), img.width());
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[static_cast<std::size_t>(Histogram::bin_of(src[i]))];
  return out;
}

// ---------------------------------------------------------------------------
// Fourier domain adaptation

int fda_window_half_width(int h, int w, double beta) {
  if (!(beta > 0.0 && beta <= 0.5)) throw ArgumentError("fda beta must lie in (0, 0.5]");
  return static_cast<int>(std::floor(beta * std::min(h, w)));
}

std::vector<double> fda_translate_unclipped(const GrayImage& src, const GrayImage& tgt, double beta) {
  if (!src.same_shape(tgt)) throw ArgumentError("fda_translate: source and target shapes differ");
  const int h = src.height(), w = src.width();
  const int b = fda_window_half_width(h, w, beta);
  std::vector<double> fs(src.pixels().begin(), src.pixels().end());
  std::vector<double> ft(tgt.pixels().begin(), tgt.pixels().end());
  Spectrum s = fft2(fs, h, w);
  const Spectrum t = fft2(ft, h, w);
  for (int dy = -b; dy <= b; ++dy) {
    const int y = ((dy % h) + h) % h;
    for (int dx = -b; dx <= b; ++dx) {
      const int x = ((dx % w) + w) % w;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      s[i] = std::polar(std::abs(t[i]), std::arg(s[i]));
    }
  }
  return ifft2_real(s, h, w);
}

GrayImage fda_translate(const GrayImage& src, const GrayImage& tgt, double beta) {
  auto v = fda_translate_unclipped(src, tgt, beta);
  std::vector<float> px(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) px[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
  return GrayImage(src.height(), src.width(), std::move(px));
}

// ---------------------------------------------------------------------------
// backends

namespace {

DatasetSplit map_images(const DatasetSplit& in, const std::function<GrayImage(std::size_t)>& f) {
  DatasetSplit out;
  out.role = in.role;
  out.ids = in.ids;
  out.masks = in.masks;
  out.images.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out.images.push_back(f(i));
  return out;
}

class HistMatchTranslator final : public Translator {
 public:
  explicit HistMatchTranslator(Histogram profile) : profile_(profile) {}
  Backend backend() const override { return Backend::HistMatch; }
  DatasetSplit translate(const DatasetSplit& source) const override {
    return map_images(source, [&](std::size_t i) { return hist_match(source.images[i], profile_); });
  }

 private:
  Histogram profile_;
};

class FdaTranslator final : public Translator {
 public:
  FdaTranslator(std::vector<GrayImage> targets, double beta, std::uint64_t seed)
      : targets_(std::move(targets)), beta_(beta), seed_(seed) {}
  Backend backend() const override { return Backend::Fda; }
  DatasetSplit translate(const DatasetSplit& source) const override {
    nn::Rng rng(seed_);
    std::uniform_int_distribution<std::size_t> pick(0, targets_.size() - 1);
    return map_images(source, [&](std::size_t i) { return fda_translate(source.images[i], targets_[pick(rng)], beta_); });
  }

 private:
  std::vector<GrayImage> targets_;
  double beta_;
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<Translator> make_translator(const TranslationConfig& cfg, const DatasetSplit& source_train,
                                            const DatasetSplit& target_train,
                                            std::shared_ptr<const TranslatorModel> pretrained) {
  cfg.validate();
  if (target_train.empty()) throw ArgumentError("target split is empty");
  if (is_test_role(target_train.role)) throw ArgumentError("translators may not be fitted on a test split");
  switch (cfg.backend) {
    case Backend::HistMatch:
      return std::make_unique<HistMatchTranslator>(mean_profile(target_train));
    case Backend::Fda:
      return std::make_unique<FdaTranslator>(target_train.images, cfg.fda_beta, cfg.seed);
    case Backend::CycleGan:
      if (!pretrained) {
        pretrained = std::make_shared<const TranslatorModel>(train_translator(source_train, target_train, cfg));
      }
      return std::make_unique<CycleGanTranslator>(std::move(pretrained));
  }
  throw ArgumentError("unknown backend");
}

}  // namespace hgit
