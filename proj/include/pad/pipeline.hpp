#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pad/anomaly.hpp"
#include "pad/dataset.hpp"
#include "pad/field.hpp"
#include "pad/metrics.hpp"

namespace pad {

struct ObjectConfig {
  std::string id;
  uint64_t seed = 1;
  double complexity = 0.5;
  int palette = 4;
};

struct StudyConfig {
  std::vector<int> sizes;       // descending train-view budgets
  std::vector<uint64_t> seeds;  // subsample seeds
  int iterations = 0;           // 0: inherit train.iterations
};

struct RunConfig {
  std::string output_dir = "out";
  uint64_t seed = 1;
  int resolution = 64;
  int grid = 32;
  std::vector<ObjectConfig> objects;
  int train_views = 32;
  int test_normal = 6;
  int test_anomalous = 9;
  double anomaly_magnitude = 0.02;
  TrainConfig train;
  AnomalyConfig anomaly;
  StudyConfig study;
};

// Strict parse: unknown keys are rejected.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& config);

// Stable fingerprint of the canonical (key-sorted) config serialization.
std::string config_fingerprint(const nlohmann::json& j);

enum class Stage { Generate, Train, Detect, Evaluate, Study, Heatmaps, All };
Stage stage_from_name(const std::string& name);

// Thrown when a prerequisite stage output is missing (CLI exit code 2).
struct MissingPrerequisite : PadError {
  using PadError::PadError;
};

struct PipelineLog {
  bool verbose = true;
  void note(const std::string& msg) const;
};

// Executes the requested stage (and nothing else; `All` chains them).
// Stage outputs are keyed by config fingerprint: unchanged fingerprint skips
// the stage; a failed stage removes its partial outputs and leaves a
// .failed sentinel.
void run_pipeline(const RunConfig& config, Stage stage, const PipelineLog& log = {});

// Per-query triptych PNGs: query | rendered reference | score heatmap with
// mask contour overlay. Returns the number of skipped (corrupt) results.
int export_heatmaps(const std::string& results_dir, const std::string& out_dir,
                    const PipelineLog& log = {});

// Helpers shared with tests and the study stage.
std::string object_data_dir(const RunConfig& config, const std::string& object_id);
std::string object_field_path(const RunConfig& config, const std::string& object_id);
std::string object_results_dir(const RunConfig& config, const std::string& object_id);

DatasetManifest subsample_train(const DatasetManifest& manifest, int size, uint64_t seed);

struct DetectionArtifacts {
  std::vector<AnomalyResult> results;  // one per test entry, manifest order
};
DetectionArtifacts run_detection(const DatasetManifest& manifest, const RadianceField& field,
                                 const DescriptorDb& db, const AnomalyConfig& config,
                                 uint64_t seed_base);

std::vector<SparseStudyRow> run_sparse_study(const RunConfig& config, const PipelineLog& log = {});

}  // namespace pad
