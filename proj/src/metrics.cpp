#include "pad/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace pad {

double auroc(const RocInput& input) {
  if (input.scores.size() != input.labels.size()) throw PadError("auroc: length mismatch");
  const size_t n = input.scores.size();
  size_t n_pos = 0;
  for (int l : input.labels) n_pos += l != 0;
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw PadError("auroc: both classes required");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return input.scores[a] < input.scores[b]; });

  // midranks over tie groups; sum positive ranks
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && input.scores[order[j + 1]] == input.scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (input.labels[order[k]] != 0) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * n_pos * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * n_neg);
}

ObjectRow evaluate_object(const DatasetManifest& manifest, const std::vector<AnomalyResult>& results) {
  auto test_entries = manifest.split_entries(Split::Test);
  if (results.size() != test_entries.size()) {
    std::string missing;
    for (size_t i = results.size(); i < test_entries.size(); ++i)
      missing += (missing.empty() ? "" : ", ") + test_entries[i]->image;
    throw PadError("evaluate: missing results for: " + missing);
  }

  RocInput image_in, pixel_in;
  for (size_t i = 0; i < test_entries.size(); ++i) {
    const ManifestEntry& e = *test_entries[i];
    const AnomalyResult& r = results[i];
    image_in.scores.push_back(r.image_score);
    image_in.labels.push_back(e.label == Label::Anomalous ? 1 : 0);

    Image mask;
    if (e.mask) mask = load_png_gray(manifest.resolve(*e.mask));
    for (int y = 0; y < r.score_map.h; ++y)
      for (int x = 0; x < r.score_map.w; ++x) {
        pixel_in.scores.push_back(r.score_map.at(x, y, 0));
        const bool positive = !mask.empty() && mask.at(x, y, 0) > 0.5f;
        pixel_in.labels.push_back(positive ? 1 : 0);
      }
  }

  ObjectRow row;
  row.object_id = manifest.object_id;
  row.image_auroc = auroc(image_in);
  row.pixel_auroc = auroc(pixel_in);
  return row;
}

BenchmarkReport make_report(const std::vector<ObjectRow>& rows, const std::string& fingerprint,
                            uint64_t seed) {
  BenchmarkReport report;
  report.rows = rows;
  report.config_fingerprint = fingerprint;
  report.seed = seed;
  report.mean.object_id = "mean";
  for (const auto& r : rows) {
    report.mean.pixel_auroc += r.pixel_auroc;
    report.mean.image_auroc += r.image_auroc;
  }
  if (!rows.empty()) {
    report.mean.pixel_auroc /= rows.size();
    report.mean.image_auroc /= rows.size();
  }
  return report;
}

void write_report_csv(const BenchmarkReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw PadError("write_report_csv: cannot open " + path);
  os << "# pixel AUROC pooled across all test images per object\n";
  os << "object,pixel_auroc,image_auroc\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", r.object_id.c_str(), r.pixel_auroc, r.image_auroc);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f\n", report.mean.pixel_auroc, report.mean.image_auroc);
  os << buf;
}

void write_report_json(const BenchmarkReport& report, const std::string& path,
                       const nlohmann::json& extra) {
  nlohmann::json j;
  j["config_fingerprint"] = report.config_fingerprint;
  j["seed"] = report.seed;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"object", r.object_id}, {"pixel_auroc", r.pixel_auroc}, {"image_auroc", r.image_auroc}});
  j["rows"] = rows;
  j["mean"] = {{"pixel_auroc", report.mean.pixel_auroc}, {"image_auroc", report.mean.image_auroc}};
  if (!extra.is_null() && !extra.empty()) j["detail"] = extra;
  std::ofstream os(path);
  if (!os) throw PadError("write_report_json: cannot open " + path);
  os << j.dump(2) << "\n";
}

namespace {

std::vector<double> midranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw PadError("spearman: need matched samples, n >= 2");
  auto ra = midranks(a), rb = midranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0.0 || vb <= 0.0) return std::nullopt;  // zero variance: undefined
  return cov / std::sqrt(va * vb);
}

AttributeCorrelation attribute_correlation(const std::vector<ObjectAttributeSample>& samples) {
  if (samples.size() < 5) throw PadError("attribute_correlation: need at least 5 objects");
  std::vector<double> contrast, complexity, image_m, pixel_m;
  for (const auto& s : samples) {
    contrast.push_back(s.color_contrast);
    complexity.push_back(s.shape_complexity);
    image_m.push_back(s.image_auroc);
    pixel_m.push_back(s.pixel_auroc);
  }
  AttributeCorrelation c;
  c.n = static_cast<int>(samples.size());
  c.image_vs_contrast = spearman(image_m, contrast);
  c.image_vs_complexity = spearman(image_m, complexity);
  c.pixel_vs_contrast = spearman(pixel_m, contrast);
  c.pixel_vs_complexity = spearman(pixel_m, complexity);
  return c;
}

}  // namespace pad
