#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pad/camera.hpp"
#include "pad/voxel.hpp"

namespace pad {

enum class Split { Train, Test };
enum class Label { Normal, Anomalous };

struct ManifestEntry {
  std::string image;  // path relative to the manifest
  CameraPose pose;
  Split split = Split::Train;
  Label label = Label::Normal;
  std::optional<std::string> mask;
  std::optional<AnomalyKind> kind;
};

struct DatasetManifest {
  std::string object_id;
  std::vector<ManifestEntry> entries;
  std::string root;  // directory of the manifest file, set on load/save

  std::vector<const ManifestEntry*> split_entries(Split s) const;
  std::string resolve(const std::string& rel) const;
};

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Checks the manifest contracts: anomaly-free train split, masks present and
// matching dimensions for anomalous test entries, valid rotations.
void validate_manifest(const DatasetManifest& m);

struct DatasetParams {
  uint64_t seed = 1;
  ObjectParams object;
  std::string object_id = "object";
  int image_size = 64;
  int n_train_views = 32;
  int n_test_normal = 8;
  int n_test_anomalous = 8;
  double anomaly_magnitude = 0.02;
  double camera_radius = 3.0;
  double fill_fraction = 0.6;  // object diameter as a fraction of frame width
};

struct GeneratedDataset {
  DatasetManifest manifest;
  VoxelObject object;  // the anomaly-free object
};

// Renders train/test views with the oracle renderer, injects defects into the
// anomalous test views, projects masks, and writes everything plus
// manifest.json under out_dir.
GeneratedDataset generate_dataset(const DatasetParams& params, const std::string& out_dir);

struct ObjectAttributes {
  double shape_complexity = 0.0;
  double color_contrast = 0.0;
  int empty_view_warnings = 0;
};

// shape_complexity: mean silhouette boundary density across views.
// color_contrast: mean per-view std of hue and luminance over foreground.
// Use flat (unshaded) renders so a single-color object scores exactly zero.
ObjectAttributes quantify_attributes(const std::vector<Image>& views);

float focal_for_fill(double bound, double camera_radius, int image_width, double fill_fraction);

nlohmann::json pose_to_json(const CameraPose& pose);
CameraPose pose_from_json(const nlohmann::json& j);

}  // namespace pad
