#include "hgit/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "hgit/errors.hpp"

namespace hgit {

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (!pred.same_shape(truth)) throw ArgumentError("confusion: prediction and truth shapes differ");
  ConfusionCounts c;
  auto p = pred.labels();
  auto t = truth.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    // index = 2*pred + truth: 0 tn, 1 fn, 2 fp, 3 tp
    switch (2 * p[i] + t[i]) {
      case 0: ++c.tn; break;
      case 1: ++c.fn; break;
      case 2: ++c.fp; break;
      default: ++c.tp; break;
    }
  }
  return c;
}

ConfusionCounts confusion(std::span<const BinaryMask> preds, std::span<const BinaryMask> truths) {
  if (preds.size() != truths.size()) throw ArgumentError("confusion: prediction and truth lists differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) c += confusion(preds[i], truths[i]);
  return c;
}

double segmentation_accuracy(const ConfusionCounts& c) {
  if (c.total() <= 0) throw ArgumentError("segmentation_accuracy: no pixels evaluated");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

IoU iou(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return {1.0, true};
  return {static_cast<double>(c.tp) / static_cast<double>(denom), false};
}

RunResult make_result(std::string scenario, std::string dataset, std::uint64_t seed, const ConfusionCounts& c) {
  RunResult r;
  r.scenario = std::move(scenario);
  r.dataset = std::move(dataset);
  r.seed = seed;
  r.counts = c;
  r.sa = segmentation_accuracy(c);
  const IoU j = iou(c);
  r.iou = j.value;
  r.iou_both_empty = j.both_empty;
  return r;
}

nlohmann::json RunResult::to_json() const {
  nlohmann::json j{{"scenario", scenario},
                   {"dataset", dataset},
                   {"seed", seed},
                   {"sa", sa},
                   {"iou", iou},
                   {"iou_both_empty", iou_both_empty},
                   {"wall_time", wall_time},
                   {"averaging", "micro"},
                   {"counts", {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}}}};
  if (error) j["error"] = *error;
  return j;
}

RunResult RunResult::from_json(const nlohmann::json& j) {
  RunResult r;
  r.scenario = j.at("scenario").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sa = j.value("sa", 0.0);
  r.iou = j.value("iou", 0.0);
  r.iou_both_empty = j.value("iou_both_empty", false);
  r.wall_time = j.value("wall_time", 0.0);
  if (j.contains("counts")) {
    const auto& c = j["counts"];
    r.counts = {c.value("tp", std::int64_t{0}), c.value("fp", std::int64_t{0}), c.value("tn", std::int64_t{0}),
                c.value("fn", std::int64_t{0})};
  }
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  return r;
}

namespace {

std::size_t index_of(const std::vector<std::string>& v, const std::string& s) {
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), s) - v.begin());
}

const std::optional<CellMean> kNoCell;

}  // namespace

AggregateTable aggregate(std::span<const RunResult> results, std::vector<std::string> scenario_order,
                         std::vector<std::string> dataset_order) {
  if (results.empty()) throw ArgumentError("aggregate: no results");
  AggregateTable t;
  t.scenarios = std::move(scenario_order);
  t.datasets = std::move(dataset_order);
  for (const auto& r : results) {
    if (index_of(t.scenarios, r.scenario) == t.scenarios.size()) t.scenarios.push_back(r.scenario);
    if (index_of(t.datasets, r.dataset) == t.datasets.size()) t.datasets.push_back(r.dataset);
  }

  struct Acc {
    double sa = 0, iou = 0;
    int n = 0;
  };
  std::vector<std::vector<Acc>> acc(t.scenarios.size(), std::vector<Acc>(t.datasets.size()));
  for (const auto& r : results) {
    if (!r.ok()) continue;
    auto& a = acc[index_of(t.scenarios, r.scenario)][index_of(t.datasets, r.dataset)];
    a.sa += r.sa;
    a.iou += r.iou;
    ++a.n;
  }

  t.cells.assign(t.scenarios.size(), std::vector<std::optional<CellMean>>(t.datasets.size()));
  t.averaged.assign(t.scenarios.size(), std::nullopt);
  for (std::size_t s = 0; s < t.scenarios.size(); ++s) {
    double sa = 0, io = 0;
    int filled = 0;
    for (std::size_t d = 0; d < t.datasets.size(); ++d) {
      const Acc& a = acc[s][d];
      if (a.n == 0) continue;
      t.cells[s][d] = CellMean{a.sa / a.n, a.iou / a.n, a.n};
      sa += a.sa / a.n;
      io += a.iou / a.n;
      ++filled;
    }
    // The averaged column is only meaningful when every dataset has runs.
    if (filled == static_cast<int>(t.datasets.size()) && filled > 0) {
      t.averaged[s] = CellMean{sa / filled, io / filled, filled};
    }
  }
  return t;
}

const std::optional<CellMean>& AggregateTable::cell(const std::string& scenario, const std::string& dataset) const {
  const auto s = index_of(scenarios, scenario), d = index_of(datasets, dataset);
  if (s == scenarios.size() || d == datasets.size()) return kNoCell;
  return cells[s][d];
}

const std::optional<CellMean>& AggregateTable::average(const std::string& scenario) const {
  const auto s = index_of(scenarios, scenario);
  return s == scenarios.size() ? kNoCell : averaged[s];
}

std::string AggregateTable::to_csv() const {
  std::ostringstream out;
  out << "method";
  for (const auto& d : datasets) out << ',' << d << " SA," << d << " IoU";
  out << ",Averaged SA,Averaged IoU\n";
  auto put = [&](const std::optional<CellMean>& c) {
    if (!c) {
      out << ",,";
      return;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", c->sa, c->iou);
    out << buf;
  };
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    out << scenarios[s];
    for (std::size_t d = 0; d < datasets.size(); ++d) put(cells[s][d]);
    put(averaged[s]);
    out << '\n';
  }
  return out.str();
}

AggregateTable AggregateTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : l) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    f.push_back(cur);
    return f;
  };
  if (!std::getline(in, line)) throw FormatError("report csv is empty");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "method" || (header.size() - 1) % 2 != 0) {
    throw FormatError("report csv header malformed");
  }
  AggregateTable t;
  const std::size_t ncols = (header.size() - 1) / 2;
  for (std::size_t c = 0; c + 1 < ncols; ++c) {
    const std::string& h = header[1 + 2 * c];
    t.datasets.push_back(h.substr(0, h.size() - 3));  // strip " SA"
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw FormatError("report csv row has wrong field count");
    t.scenarios.push_back(f[0]);
    std::vector<std::optional<CellMean>> row;
    auto parse = [&](std::size_t c) -> std::optional<CellMean> {
      const auto& a = f[1 + 2 * c];
      const auto& b = f[2 + 2 * c];
      if (a.empty() || b.empty()) return std::nullopt;
      return CellMean{std::stod(a), std::stod(b), 0};
    };
    for (std::size_t c = 0; c + 1 < ncols; ++c) row.push_back(parse(c));
    t.cells.push_back(std::move(row));
    t.averaged.push_back(parse(ncols - 1));
  }
  return t;
}

}  // namespace hgit
