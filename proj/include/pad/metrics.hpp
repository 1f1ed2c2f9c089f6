#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pad/anomaly.hpp"
#include "pad/dataset.hpp"

namespace pad {

struct RocInput {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 / 1
};

// Rank-based AUROC, P(score+ > score-) + 0.5 P(score+ = score-), midrank ties.
// Throws on single-class input.
double auroc(const RocInput& input);

struct ObjectRow {
  std::string object_id;
  double pixel_auroc = 0.0;
  double image_auroc = 0.0;
};

struct BenchmarkReport {
  std::vector<ObjectRow> rows;
  ObjectRow mean;  // object_id = "mean"
  std::string config_fingerprint;
  uint64_t seed = 0;
};

// Image AUROC from image scores vs labels; pixel AUROC pooled over all test
// pixels of the object (mask pixels positive, everything else negative).
ObjectRow evaluate_object(const DatasetManifest& manifest, const std::vector<AnomalyResult>& results);

BenchmarkReport make_report(const std::vector<ObjectRow>& rows, const std::string& fingerprint,
                            uint64_t seed);
void write_report_csv(const BenchmarkReport& report, const std::string& path);
void write_report_json(const BenchmarkReport& report, const std::string& path,
                       const nlohmann::json& extra = {});

// Spearman rank correlation with midranks; nullopt when either variable has
// zero variance.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

struct AttributeCorrelation {
  std::optional<double> image_vs_contrast;
  std::optional<double> image_vs_complexity;
  std::optional<double> pixel_vs_contrast;
  std::optional<double> pixel_vs_complexity;
  int n = 0;
};

struct ObjectAttributeSample {
  double shape_complexity = 0.0;
  double color_contrast = 0.0;
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
};

AttributeCorrelation attribute_correlation(const std::vector<ObjectAttributeSample>& samples);

struct SparseStudyRow {
  int size = 0;
  double image_auroc = 0.0;  // mean over seeds
  double pixel_auroc = 0.0;
};

}  // namespace pad
