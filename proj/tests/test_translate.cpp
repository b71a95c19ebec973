#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "hgit/curation.hpp"
#include "hgit/errors.hpp"
#include "hgit/fft.hpp"
#include "hgit/synthgen.hpp"
#include "hgit/translate.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hgit;
using nn::Tensor;

namespace {

// y = x + c, no clipping
class Offset final : public nn::Module {
 public:
  explicit Offset(float c) : c_(c) {}
  Tensor forward(const Tensor& x, nn::Tape*) const override {
    Tensor y = x;
    for (float& v : y.values()) v += c_;
    return y;
  }
  Tensor backward(const Tensor& dy, nn::Tape&) override { return dy; }

 private:
  float c_;
};

class Identity final : public nn::Module {
 public:
  Tensor forward(const Tensor& x, nn::Tape*) const override { return x; }
  Tensor backward(const Tensor& dy, nn::Tape&) override { return dy; }
};

std::vector<GrayImage> constant_images(int n, float v, int side = 16) {
  return std::vector<GrayImage>(static_cast<std::size_t>(n), GrayImage(side, side, v));
}

std::vector<double> as_double(const GrayImage& img) { return {img.pixels().begin(), img.pixels().end()}; }

GrayImage random_image(int h, int w, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  GrayImage img(h, w);
  for (float& v : img.pixels()) v = u(rng);
  return img;
}

std::vector<GrayImage> random_images(int n, std::uint64_t seed, int side = 16) {
  std::vector<GrayImage> v;
  for (int i = 0; i < n; ++i) v.push_back(random_image(side, side, seed * 100 + static_cast<std::uint64_t>(i)));
  return v;
}

bool in_window(int k, int n, int b) {
  const int s = k <= n / 2 ? k : k - n;  // signed frequency
  return std::abs(s) <= b || (n - std::abs(s)) <= b;
}

DomainPair small_pair(const std::string& tgt, int n, int side, std::uint64_t seed) {
  LayoutSpec spec;
  spec.image_size = side;
  spec.seed = seed;
  return generate_domain_pair(style_preset("source"), style_preset(tgt), n, 4, spec);
}

double mean_of(const DatasetSplit& s) {
  double m = 0;
  for (const auto& img : s.images) m += img.mean();
  return m / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("cycle_loss closed forms") {
  auto xs = constant_images(3, 0.4f);
  auto xt = constant_images(2, 0.6f);
  CHECK(cycle_loss(xs, xt, TranslatorModel::identity()) == 0.0);

  const float c = 0.125f;
  TranslatorModel shifted(std::make_unique<Offset>(c), std::make_unique<Identity>());
  // each term sees exactly one +c application
  CHECK(cycle_loss(xs, xt, shifted) == doctest::Approx(2 * c).epsilon(1e-6));

  Tensor a = to_batch(random_images(3, 1));
  Tensor b = to_batch(random_images(2, 2));
  Offset g1(0.05f);
  Offset g2(-0.2f);
  CHECK(cycle_loss(a, b, g1, g2) == doctest::Approx(cycle_loss(b, a, g2, g1)).epsilon(1e-12));
  CHECK(cycle_loss(a, b, g1, g2) >= 0.0);

  nn::MaxPool2 shrink;
  CHECK_THROWS_AS(cycle_loss(a, b, shrink, g2), ArgumentError);
  CHECK_THROWS_AS(cycle_loss(Tensor(), b, g1, g2), ArgumentError);
}

TEST_CASE("generator and discriminator shapes") {
  nn::Rng rng(1);
  auto g = make_generator({4, 1}, rng);
  auto d = make_discriminator({4}, rng);
  Tensor x = to_batch(random_images(2, 3, 32));
  Tensor y = g->forward(x, nullptr);
  CHECK(y.same_shape(x));
  for (float v : y.values()) CHECK((v > 0.0f && v < 1.0f));
  Tensor s = d->forward(x, nullptr);
  CHECK(s.n() == 2);
  CHECK(s.c() == 1);
  CHECK(s.h() == 8);
}

TEST_CASE("generator gradient matches finite differences") {
  nn::Rng rng(5);
  auto g = make_generator({2, 1}, rng);
  Tensor x = to_batch(random_images(1, 9, 16));
  auto loss = [&](const Tensor& in) {
    Tensor y = g->forward(in, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * std::sin(0.37 * static_cast<double>(i));
    return s;
  };
  nn::Tape tape;
  Tensor y = g->forward(x, &tape);
  Tensor dy(y.n(), y.c(), y.h(), y.w());
  for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] = static_cast<float>(std::sin(0.37 * static_cast<double>(i)));
  g->zero_grad();
  Tensor dx = g->backward(dy, tape);
  CHECK(tape.empty());
  for (std::size_t i : {0u, 17u, 100u, 255u}) {
    Tensor p = x, m = x;
    const float h = 1e-3f;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd = (loss(p) - loss(m)) / (2 * h);
    CHECK(dx.data()[i] == doctest::Approx(fd).epsilon(0.05).scale(1e-3));
  }
}

TEST_CASE("train_translator bookkeeping and guards") {
  auto pair = small_pair("shifted-bright", 4, 32, 2);
  TranslationConfig cfg;
  cfg.epochs = 1;
  cfg.generator = {4, 1};
  cfg.discriminator = {4};
  std::vector<TranslatorEpoch> seen;
  auto model = train_translator(pair.source_train, pair.target_train, cfg,
                                [&](const TranslatorEpoch& e) { seen.push_back(e); });
  REQUIRE(model.training_log().size() == 1);
  CHECK(seen.size() == 1);
  CHECK(model.training_log()[0].epoch == 1);
  CHECK(model.training_log()[0].cycle_loss > 0.0);

  auto again = train_translator(pair.source_train, pair.target_train, cfg);
  CHECK(again.training_log()[0].cycle_loss == model.training_log()[0].cycle_loss);

  CHECK_THROWS_AS(train_translator(pair.source_train, pair.target_test, cfg), ArgumentError);
  CHECK_THROWS_AS(train_translator(pair.source_train, DatasetSplit{SplitRole::TargetTrain, {}, {}, {}}, cfg),
                  ArgumentError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_translator(pair.source_train, pair.target_train, cfg), ConfigError);
  cfg.epochs = 1;
  cfg.learning_rate = 1e30;
  bool diverged = false;
  try {
    train_translator(pair.source_train, pair.target_train, cfg);
  } catch (const TrainingError& e) {
    diverged = true;
    CHECK(e.epoch() == 1);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
  CHECK(diverged);
}

TEST_CASE("apply_translator and serialization") {
  auto pair = small_pair("textured", 4, 32, 4);
  auto same = apply_translator(pair.source_test, TranslatorModel::identity());
  CHECK(same.ids == pair.source_test.ids);
  for (std::size_t i = 0; i < same.size(); ++i) {
    CHECK(std::equal(same.images[i].pixels().begin(), same.images[i].pixels().end(),
                     pair.source_test.images[i].pixels().begin()));
    CHECK((*same.masks)[i] == (*pair.source_test.masks)[i]);
  }

  TranslationConfig cfg;
  cfg.epochs = 1;
  cfg.generator = {4, 1};
  cfg.discriminator = {4};
  auto model = train_translator(pair.source_train, pair.target_train, cfg);
  hgit::testing::TempDir tmp("translator");
  model.save(tmp / "t.ckpt");
  auto back = TranslatorModel::load(tmp / "t.ckpt");
  CHECK(back.training_log().size() == 1);
  auto a = apply_translator(pair.source_test, model);
  auto b = apply_translator(pair.source_test, back);
  CHECK(a.size() == pair.source_test.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a.images[i].pixels().begin(), a.images[i].pixels().end(), b.images[i].pixels().begin()));
  }

  TranslatorModel::identity().save(tmp / "id.ckpt");
  CHECK(TranslatorModel::load(tmp / "id.ckpt").kind() == "identity");
  CHECK_THROWS_AS(TranslatorModel::load(tmp / "missing.ckpt"), IoError);
  CHECK_THROWS_AS(model.source_to_target(GrayImage(30, 30)), ArgumentError);
}

TEST_CASE("cyclegan on identical domains stays near identity") {
  LayoutSpec spec;
  spec.image_size = 32;
  spec.seed = 8;
  auto pair = generate_domain_pair(style_preset("source"), style_preset("source"), 24, 6, spec);
  TranslationConfig cfg;
  cfg.epochs = 6;
  cfg.generator = {6, 1};
  cfg.discriminator = {6};
  cfg.seed = 3;
  auto model = train_translator(pair.source_train, pair.target_train, cfg);
  auto log = model.training_log();
  CHECK(log.back().cycle_loss < log.front().cycle_loss);
  auto out = apply_translator(pair.source_test, model);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(std::abs(out.images[i].mean() - pair.source_test.images[i].mean()) < 0.05);
  }
}

TEST_CASE("hist_match") {
  SUBCASE("self-matching is lossless up to quantization") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 5; ++rep) {
      auto img = hgit::testing::random_byte_image(24, 20, rng);
      auto out = hist_match(img, compute_histogram(img));
      for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(out.pixels()[i] - img.pixels()[i]) <= 1.0f / 255);
    }
  }
  SUBCASE("two-valued image onto a delta") {
    GrayImage img(8, 8, 0.2f);
    for (int x = 0; x < 8; ++x) img(3, x) = 0.8f;
    auto out = hist_match(img, Histogram::delta(Histogram::bin_of(0.5f)));
    for (float v : out.pixels()) CHECK(v == doctest::Approx(0.5).epsilon(1.0 / 256));
    for (float v : out.pixels()) CHECK(v == out.pixels()[0]);
  }
  SUBCASE("monotone and non-worsening") {
    auto pair = small_pair("shifted-bright", 10, 32, 6);
    const Histogram target = mean_profile(pair.target_train);
    for (const auto& img : pair.source_train.images) {
      auto out = hist_match(img, target);
      for (std::size_t p = 0; p < img.size(); p += 7)
        for (std::size_t q = 0; q < img.size(); q += 13)
          if (img.pixels()[p] <= img.pixels()[q]) CHECK(out.pixels()[p] <= out.pixels()[q]);
      CHECK(ks_statistic(compute_histogram(out), target) <= ks_statistic(compute_histogram(img), target));
      // a source bin is moved as a whole, so the output CDF trails the target
      // CDF by at most the heaviest source bin and never leads it
      const auto oc = compute_histogram(out).cdf();
      const auto tc = target.cdf();
      const auto& sb = compute_histogram(img).bins();
      const double atom = *std::max_element(sb.begin(), sb.end());
      for (int b = 0; b < kHistogramBins; ++b) {
        CHECK(tc[b] - oc[b] <= atom + 1e-12);
        CHECK(oc[b] - tc[b] <= 1e-12);
      }
    }
  }
  SUBCASE("fine-grained input tracks the target CDF within 2/256") {
    // 64x64 uniform bytes: every source bin holds about 1/256 of the mass
    std::mt19937_64 rng(4);
    auto img = hgit::testing::random_byte_image(64, 64, rng);
    auto pair = small_pair("textured", 10, 32, 3);
    const Histogram target = mean_profile(pair.target_train);
    const auto oc = compute_histogram(hist_match(img, target)).cdf();
    const auto tc = target.cdf();
    for (int b = 0; b < kHistogramBins; ++b) CHECK(std::abs(tc[b] - oc[b]) <= 2.0 / 256);
  }
  CHECK_THROWS_AS(hist_match(GrayImage(8, 8), Histogram()), ArgumentError);
}

TEST_CASE("fft matches a naive DFT") {
  auto img = random_image(8, 10, 77);
  auto f = as_double(img);
  auto fast = fft2(f, 8, 10);
  auto slow = oracle::naive_dft(f, 8, 10);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-9);
  auto back = ifft2_real(fast, 8, 10);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(back[i] == doctest::Approx(f[i]).epsilon(1e-12));
}

TEST_CASE("fda_translate") {
  const int h = 16, w = 12;
  auto src = random_image(h, w, 1);
  auto tgt = random_image(h, w, 2);
  for (float& v : tgt.pixels()) v = 0.3f + 0.4f * v;

  SUBCASE("self swap") {
    for (double beta : {0.01, 0.1, 0.5}) {
      auto out = fda_translate(src, src, beta);
      for (std::size_t i = 0; i < src.size(); ++i) CHECK(std::abs(out.pixels()[i] - src.pixels()[i]) < 1e-6);
    }
  }
  SUBCASE("window amplitude and phase against the naive DFT") {
    for (double beta : {0.05, 0.1, 0.25, 0.5}) {
      const int b = fda_window_half_width(h, w, beta);
      CHECK(b == static_cast<int>(std::floor(beta * 12)));
      auto pre = fda_translate_unclipped(src, tgt, beta);
      auto fo = oracle::naive_dft(pre, h, w);
      auto fs = oracle::naive_dft(as_double(src), h, w);
      auto ft = oracle::naive_dft(as_double(tgt), h, w);
      for (int ky = 0; ky < h; ++ky)
        for (int kx = 0; kx < w; ++kx) {
          const std::size_t i = static_cast<std::size_t>(ky) * w + kx;
          if (in_window(ky, h, b) && in_window(kx, w, b)) {
            CHECK(std::abs(std::abs(fo[i]) - std::abs(ft[i])) < 1e-6);
          } else {
            CHECK(std::abs(fo[i] - fs[i]) < 1e-6);
          }
          if (std::abs(fs[i]) > 1e-9 && std::abs(fo[i]) > 1e-9) {
            const double dphi = std::remainder(std::arg(fo[i]) - std::arg(fs[i]), 2 * std::numbers::pi);
            CHECK(std::abs(dphi) < 1e-6);
          }
        }
    }
  }
  SUBCASE("DC-only window transfers the mean") {
    auto out = fda_translate_unclipped(src, tgt, 0.05);  // floor(0.6) = 0
    double m = 0;
    for (double v : out) m += v;
    m /= static_cast<double>(out.size());
    CHECK(m == doctest::Approx(tgt.mean()).epsilon(1e-9));
    // away from DC the source spectrum is untouched, so the structure is the
    // source's shifted by a constant
    const double shift = out[0] - src.pixels()[0];
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] - src.pixels()[i] == doctest::Approx(shift).epsilon(1e-6));
  }
  CHECK_THROWS_AS(fda_translate(src, GrayImage(8, 8), 0.1), ArgumentError);
  CHECK_THROWS_AS(fda_translate(src, tgt, 0.0), ArgumentError);
  CHECK_THROWS_AS(fda_translate(src, tgt, 0.6), ArgumentError);
}

TEST_CASE("translator backends preserve ids and masks") {
  auto pair = small_pair("shifted-dark-lowcontrast", 6, 32, 9);
  TranslationConfig cfg;
  cfg.generator = {4, 1};
  cfg.discriminator = {4};
  cfg.epochs = 1;
  for (Backend b : {Backend::HistMatch, Backend::Fda, Backend::CycleGan}) {
    cfg.backend = b;
    auto tr = make_translator(cfg, pair.source_train, pair.target_train);
    CHECK(tr->backend() == b);
    auto out = tr->translate(pair.source_train);
    CHECK(out.ids == pair.source_train.ids);
    CHECK(out.role == pair.source_train.role);
    REQUIRE(out.has_masks());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.images[i].same_shape(pair.source_train.images[i]));
      CHECK((*out.masks)[i] == (*pair.source_train.masks)[i]);
    }
  }
  CHECK_THROWS_AS(make_translator(cfg, pair.source_train, pair.target_test), ArgumentError);
  CHECK(backend_from_string(to_string(Backend::Fda)) == Backend::Fda);
  CHECK_THROWS_AS(backend_from_string("suit"), ArgumentError);
  auto j = cfg.to_json();
  auto back = TranslationConfig::from_json(j);
  CHECK(back.to_json() == j);
  j["fda_beta"] = 0.9;
  CHECK_THROWS_AS(TranslationConfig::from_json(j), ConfigError);
}
