#include <cmath>

#include "doctest.h"
#include "hgit/errors.hpp"
#include "hgit/metrics.hpp"
#include "hgit/segmodel.hpp"
#include "hgit/synthgen.hpp"
#include "test_support.hpp"

using namespace hgit;
using nn::Tensor;

namespace {

// emits a fixed logit everywhere
class ConstantLogit final : public nn::Module {
 public:
  explicit ConstantLogit(float z) : z_(z) {}
  Tensor forward(const Tensor& x, nn::Tape*) const override { return Tensor(x.n(), 1, x.h(), x.w(), z_); }
  Tensor backward(const Tensor& dy, nn::Tape&) override { return Tensor(dy.n(), 1, dy.h(), dy.w()); }

 private:
  float z_;
};

float logit(double p) { return static_cast<float>(std::log(p / (1 - p))); }

DatasetSplit noiseless_set(int n, int side, std::uint64_t seed) {
  DomainStyle s;
  s.name = "flat";
  s.bg_level = 0.2;
  s.fg_level = 0.7;
  s.noise_sigma = 0;
  s.blur_radius = 0;
  s.texture_amp = 0;
  LayoutSpec spec;
  spec.image_size = side;
  spec.seed = seed;
  return generate_domain_pair(s, s, n, 2, spec).source_train;
}

Tensor probs_tensor(std::span<const float> p, int n, int h, int w) {
  Tensor t(n, 1, h, w);
  std::copy(p.begin(), p.end(), t.data());
  return t;
}

}  // namespace

TEST_CASE("bce_loss closed forms") {
  std::mt19937_64 rng(3);
  std::vector<BinaryMask> masks{hgit::testing::random_mask(8, 8, rng), hgit::testing::random_mask(8, 8, rng)};
  std::vector<float> exact, half, wrong;
  for (const auto& m : masks)
    for (auto y : m.labels()) {
      exact.push_back(static_cast<float>(y));
      half.push_back(0.5f);
      wrong.push_back(static_cast<float>(1 - y));
    }
  CHECK(bce_loss(exact, masks) <= -std::log(1 - kBceEps) + 1e-15);
  CHECK(bce_loss(half, masks) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(wrong, masks) == doctest::Approx(-std::log(kBceEps)).epsilon(1e-9));
  CHECK_THROWS_AS(bce_loss(std::span(half).first(10), masks), ArgumentError);
}

TEST_CASE("bce gradient matches central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.02f, 0.98f);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<BinaryMask> masks{hgit::testing::random_mask(8, 8, rng), hgit::testing::random_mask(8, 8, rng),
                                  hgit::testing::random_mask(8, 8, rng)};
    Tensor p(3, 1, 8, 8);
    for (float& v : p.values()) v = u(rng);
    Tensor g = bce_grad(p, masks);
    for (std::size_t i = 0; i < p.size(); ++i) {
      Tensor hi = p, lo = p;
      hi.data()[i] += 1e-5f;
      lo.data()[i] -= 1e-5f;
      const double step = static_cast<double>(hi.data()[i]) - lo.data()[i];  // exact float spacing
      const double fd = (bce_loss(hi, masks) - bce_loss(lo, masks)) / step;
      CHECK(std::abs(g.data()[i] - fd) <= 1e-4 * std::abs(fd));
    }
  }
}

TEST_CASE("segmenter shapes and parameter budget") {
  SegmenterModel m({16}, 1);
  CHECK(m.parameter_count() > 80000);
  CHECK(m.parameter_count() < 160000);
  GrayImage img(32, 24, 0.4f);
  auto p = m.probabilities(img);
  CHECK(p.size() == img.size());
  for (float v : p) CHECK((v > 0.0f && v < 1.0f));
  CHECK_THROWS_AS(m.probabilities(GrayImage(30, 30)), ArgumentError);
}

TEST_CASE("train_segmenter") {
  SUBCASE("bookkeeping") {
    auto data = noiseless_set(4, 32, 1);
    SegTrainConfig cfg;
    cfg.epochs = 1;
    cfg.arch.base_channels = 4;
    auto m = train_segmenter(data, cfg);
    REQUIRE(m.training_log().size() == 1);
    CHECK(m.training_log()[0].validation_on_train);
  }
  SUBCASE("learns a threshold-separable set") {
    auto data = noiseless_set(24, 32, 2);
    SegTrainConfig cfg;
    cfg.epochs = 20;
    cfg.arch.base_channels = 6;
    cfg.seed = 4;
    auto m = train_segmenter(data, cfg);
    const auto& log = m.training_log();
    CHECK(log.back().loss < log.front().loss);
    auto pred = predict(data, m, cfg.threshold);
    CHECK(segmentation_accuracy(confusion(pred, *data.masks)) > 0.95);
  }
  SUBCASE("guards") {
    auto data = noiseless_set(4, 32, 3);
    SegTrainConfig cfg;
    cfg.epochs = 1;
    cfg.arch.base_channels = 4;
    DatasetSplit unlabeled = data;
    unlabeled.masks.reset();
    CHECK_THROWS_AS(train_segmenter(unlabeled, cfg), ArgumentError);
    DatasetSplit test = data;
    test.role = SplitRole::TargetTest;
    CHECK_THROWS_AS(train_segmenter(test, cfg), ArgumentError);
    CHECK_THROWS_AS(train_segmenter(data, cfg, &test), ArgumentError);
    cfg.threshold = 1.0;
    CHECK_THROWS_AS(train_segmenter(data, cfg), ConfigError);
    cfg.threshold = 0.5;
    cfg.learning_rate = 1e30;
    cfg.epochs = 3;
    bool diverged = false;
    try {
      train_segmenter(data, cfg);
    } catch (const TrainingError& e) {
      diverged = true;
      CHECK(e.epoch() >= 1);
    }
    CHECK(diverged);
  }
}

TEST_CASE("predict") {
  auto data = noiseless_set(3, 32, 5);
  SegmenterModel sure(std::make_unique<ConstantLogit>(logit(0.9)));
  for (const auto& m : predict(data, sure, 0.5)) CHECK(m.foreground_count() == m.size());
  for (const auto& m : predict(data, sure, 1.0 - kBceEps)) CHECK(m.foreground_count() == 0);

  SegmenterModel net({4}, 9);
  auto a = predict(data, net, 0.5);
  auto b = predict(data, net, 0.5);
  CHECK(a == b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].matches(data.images[i]));
  }
  // lowering the threshold never removes foreground
  auto hi = predict(data, net, 0.6);
  auto lo = predict(data, net, 0.4);
  for (std::size_t i = 0; i < hi.size(); ++i)
    for (std::size_t k = 0; k < hi[i].size(); ++k)
      if (hi[i].labels()[k]) CHECK(lo[i].labels()[k] == 1);
}

TEST_CASE("segmenter serialization") {
  auto data = noiseless_set(4, 32, 6);
  SegTrainConfig cfg;
  cfg.epochs = 2;
  cfg.arch.base_channels = 4;
  auto m = train_segmenter(data, cfg);
  hgit::testing::TempDir tmp("seg");
  m.save(tmp / "seg.ckpt");
  auto back = SegmenterModel::load(tmp / "seg.ckpt");
  CHECK(back.training_log().size() == 2);
  const nn::Module& n1 = m.network();
  const nn::Module& n2 = back.network();
  auto p1 = n1.parameters();
  auto p2 = n2.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(std::equal(p1[i]->value.values().begin(), p1[i]->value.values().end(), p2[i]->value.values().begin()));
  }
  auto pa = m.probabilities(data.images[0]);
  auto pb = back.probabilities(data.images[0]);
  CHECK(pa == pb);
  SegmenterModel custom(std::make_unique<ConstantLogit>(0.f));
  CHECK_THROWS_AS(custom.save(tmp / "x.ckpt"), ArgumentError);

  auto j = cfg.to_json();
  CHECK(SegTrainConfig::from_json(j).to_json() == j);
}
