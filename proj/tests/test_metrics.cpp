#include <algorithm>

#include "doctest.h"
#include "hgit/errors.hpp"
#include "hgit/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace hgit;

TEST_CASE("confusion counts") {
  BinaryMask ones(4 + 4, 8, 1);
  auto c = confusion(ones, ones);
  CHECK(c.tp == 64);
  CHECK(c.fp + c.tn + c.fn == 0);

  std::mt19937_64 rng(4);
  auto t = hgit::testing::random_mask(16, 16, rng);
  auto comp = confusion(t.complement(), t);
  CHECK(comp.tp == 0);
  CHECK(comp.tn == 0);

  for (int trial = 0; trial < 20; ++trial) {
    auto p = hgit::testing::random_mask(16, 16, rng, 0.3);
    auto q = hgit::testing::random_mask(16, 16, rng, 0.6);
    auto got = confusion(p, q);
    auto want = oracle::confusion_loop(p, q);
    CHECK(got.tp == want.tp);
    CHECK(got.fp == want.fp);
    CHECK(got.tn == want.tn);
    CHECK(got.fn == want.fn);
    auto sym = confusion(p.complement(), q.complement());
    CHECK(sym.tp == got.tn);
    CHECK(sym.fp == got.fn);
  }
  CHECK_THROWS_AS(confusion(BinaryMask(8, 8), BinaryMask(8, 9)), ArgumentError);
}

TEST_CASE("segmentation accuracy and IoU") {
  CHECK(segmentation_accuracy({5, 0, 11, 0}) == 1.0);
  CHECK(segmentation_accuracy({1, 1, 1, 1}) == 0.5);
  CHECK(segmentation_accuracy({0, 3, 0, 4}) == 0.0);
  CHECK_THROWS_AS(segmentation_accuracy({}), ArgumentError);

  CHECK(iou({7, 0, 3, 0}).value == 1.0);
  CHECK(iou({1, 1, 0, 2}).value == 0.25);
  CHECK(iou({0, 0, 10, 6}).value == 0.0);
  auto empty = iou({0, 0, 16, 0});
  CHECK(empty.value == 1.0);
  CHECK(empty.both_empty);
}

TEST_CASE("SA dominates IoU") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> d(0, 50);
  for (int i = 0; i < 500; ++i) {
    ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    if (c.total() == 0) continue;
    const double sa = segmentation_accuracy(c), j = iou(c).value;
    CHECK(sa >= j);
    if (c.tn > 0 && c.fp + c.fn > 0) CHECK(sa > j);
  }
}

TEST_CASE("aggregate") {
  auto r = make_result("hgit", "d1", 1, {10, 2, 20, 3});
  std::vector<RunResult> single{r};
  auto t = aggregate(single);
  CHECK(t.cell("hgit", "d1")->sa == r.sa);
  CHECK(t.average("hgit")->iou == r.iou);

  RunResult a = r, b = r;
  a.sa = 0.9;
  b.sa = 1.0;
  std::vector<RunResult> two{a, b};
  CHECK(aggregate(two).cell("hgit", "d1")->sa == doctest::Approx(0.95));

  // Report layout fixture: the averaged column is the unweighted mean over
  // the three device columns.
  std::vector<RunResult> table;
  const double sa[] = {0.9867, 0.8066, 0.9512};
  const double io[] = {0.9646, 0.7124, 0.9187};
  const char* names[] = {"Device-1 M1", "Device-2 M6", "Device-3 M3"};
  for (int k = 0; k < 3; ++k) {
    RunResult x;
    x.scenario = "hgit";
    x.dataset = names[k];
    x.sa = sa[k];
    x.iou = io[k];
    table.push_back(x);
  }
  auto tab = aggregate(table);
  CHECK(tab.average("hgit")->sa == doctest::Approx(0.9148).epsilon(5e-5));
  CHECK(tab.average("hgit")->iou == doctest::Approx(0.8652).epsilon(5e-5));
  const std::string csv = tab.to_csv();
  CHECK(csv.find("hgit,0.9867,0.9646,0.8066,0.7124,0.9512,0.9187,0.9148,0.8652") != std::string::npos);
  auto parsed = AggregateTable::from_csv(csv);
  CHECK(parsed.datasets.size() == 3);
  CHECK(parsed.average("hgit")->sa == 0.9148);

  std::vector<RunResult> shuffled = table;
  std::reverse(shuffled.begin(), shuffled.end());
  auto tab2 = aggregate(shuffled, {}, {names[0], names[1], names[2]});
  CHECK(tab2.average("hgit")->iou == doctest::Approx(tab.average("hgit")->iou).epsilon(1e-15));
}
