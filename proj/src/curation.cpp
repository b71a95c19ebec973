#include "hgit/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "hgit/errors.hpp"

namespace hgit {

namespace {

constexpr double kSeriesTol = 1e-12;
constexpr double kSmallLambda = 1.18;

void require_normalized(const Histogram& h, const char* which) {
  if (!h.is_normalized(1e-9)) throw ArgumentError(std::string("ks_statistic: ") + which + " is not normalized");
}

}  // namespace

double ks_statistic(const Histogram& h1, const Histogram& h2) {
  require_normalized(h1, "first histogram");
  require_normalized(h2, "second histogram");
  double c1 = 0.0, c2 = 0.0, d = 0.0;
  for (int b = 0; b < kHistogramBins; ++b) {
    c1 += h1[b];
    c2 += h2[b];
    d = std::max(d, std::abs(c1 - c2));
  }
  return std::min(d, 1.0);
}

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < kSmallLambda) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double sum = 0.0;
    for (int k = 1;; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * pi2 / (8.0 * lambda * lambda));
      sum += term;
      if (term < kSeriesTol * sum || term == 0.0) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1;; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1) ? term : -term;
    if (term < kSeriesTol * std::abs(sum) || term == 0.0) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double d, std::int64_t n1, std::int64_t n2) {
  if (n1 < 1 || n2 < 1) throw ArgumentError("ks_p_value needs positive sample sizes");
  if (!(d >= 0.0 && d <= 1.0)) throw ArgumentError("ks statistic must lie in [0,1]");
  const double a = static_cast<double>(n1), b = static_cast<double>(n2);
  const double n_eff = a * b / (a + b);
  return kolmogorov_survival(d * std::sqrt(n_eff));
}

void CurationConfig::validate() const {
  if (!(keep_percent > 0.0 && keep_percent <= 100.0)) {
    throw ArgumentError("keep_percent must lie in (0, 100], got " + std::to_string(keep_percent));
  }
  if (effective_n && *effective_n < 1) throw ArgumentError("effective_n must be positive");
}

std::size_t selection_count(double keep_percent, std::size_t total) {
  // Round the product to 1e-9 first so that e.g. 70% of 10 is exactly 7.
  const double raw = keep_percent / 100.0 * static_cast<double>(total);
  const double snapped = std::round(raw * 1e9) / 1e9;
  return std::min(total, static_cast<std::size_t>(std::ceil(snapped)));
}

std::size_t CurationReport::selected_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.selected; }));
}

nlohmann::json CurationReport::to_json() const {
  nlohmann::json j;
  j["test"] = "two-sample Kolmogorov-Smirnov, asymptotic distribution";
  j["effective_n"] = effective_n == 0 ? nlohmann::json("per-image pixel count") : nlohmann::json(effective_n);
  j["keep_percent"] = keep_percent;
  j["total"] = records.size();
  j["selected"] = selected_count();
  j["target_profile"] = std::vector<double>(target_profile.bins().begin(), target_profile.bins().end());
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    recs.push_back({{"id", r.id}, {"D", r.ks_statistic}, {"p", r.p_value}, {"rank", r.rank}, {"selected", r.selected}});
  }
  return j;
}

void CurationReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

void CurationReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "# two-sample asymptotic KS test vs mean target histogram; keep_percent=" << keep_percent << '\n';
  out << "id,D,p,rank,selected\n";
  for (const auto& r : records) {
    out << r.id << ',' << r.ks_statistic << ',' << r.p_value << ',' << r.rank << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

Histogram mean_profile(const DatasetSplit& split) {
  std::vector<Histogram> hists;
  hists.reserve(split.size());
  for (const auto& img : split.images) hists.push_back(compute_histogram(img));
  return mean_histogram(hists);
}

std::pair<DatasetSplit, CurationReport> gate(const DatasetSplit& transformed, const Histogram& target_profile,
                                             const CurationConfig& cfg) {
  cfg.validate();
  if (transformed.empty()) throw ArgumentError("gate: transformed split is empty");
  if (is_test_role(transformed.role)) throw ArgumentError("gate: refusing to curate a test split");
  transformed.validate();

  const std::size_t m = transformed.size();
  std::vector<CurationRecord> recs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto n = cfg.effective_n.value_or(static_cast<std::int64_t>(transformed.images[i].size()));
    recs[i].id = transformed.ids[i];
    recs[i].ks_statistic = ks_statistic(compute_histogram(transformed.images[i]), target_profile);
    recs[i].p_value = ks_p_value(recs[i].ks_statistic, n, n);
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = recs[a];
    const auto& rb = recs[b];
    if (ra.p_value != rb.p_value) return ra.p_value > rb.p_value;
    if (ra.ks_statistic != rb.ks_statistic) return ra.ks_statistic < rb.ks_statistic;
    return ra.id < rb.id;
  });

  const std::size_t keep = selection_count(cfg.keep_percent, m);
  CurationReport report;
  report.keep_percent = cfg.keep_percent;
  report.effective_n = cfg.effective_n.value_or(0);
  report.target_profile = target_profile;
  report.records.reserve(m);
  for (std::size_t r = 0; r < m; ++r) {
    CurationRecord rec = recs[order[r]];
    rec.rank = static_cast<int>(r + 1);
    rec.selected = r < keep;
    report.records.push_back(std::move(rec));
  }

  const std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  return {transformed.select(kept), std::move(report)};
}

std::pair<DatasetSplit, CurationReport> gate(const DatasetSplit& transformed, const DatasetSplit& target,
                                             const CurationConfig& cfg) {
  if (target.empty()) throw ArgumentError("gate: target split is empty");
  if (is_test_role(target.role)) throw ArgumentError("gate: the target profile must not come from a test split");
  return gate(transformed, mean_profile(target), cfg);
}

}  // namespace hgit
