#pragma once

#include <string>
#include <vector>

#include "pad/camera.hpp"
#include "pad/dataset.hpp"
#include "pad/field.hpp"
#include "pad/image.hpp"

namespace pad {

constexpr int kDescriptorDim = 64;

struct Descriptor {
  std::array<float, kDescriptorDim> values{};
  std::string source_id;
};

// Deterministic global descriptor: 4x4x3 mean-pooled color blocks (48) ++
// 16-bin foreground relative-luminance histogram, each half l2-normalized.
Descriptor compute_descriptor(const Image& image, const std::string& source_id = "");

double descriptor_distance_sq(const Descriptor& a, const Descriptor& b);

struct DescriptorDb {
  std::vector<Descriptor> descriptors;
  std::vector<CameraPose> poses;
};

DescriptorDb build_descriptor_db(const DatasetManifest& manifest);
void save_descriptor_db(const DescriptorDb& db, const std::string& path);  // CSV
DescriptorDb load_descriptor_db(const std::string& path, const DatasetManifest& manifest);

// Linear scan argmin of squared l2 distance; ties break to the lowest index.
struct RetrievalResult {
  int index = -1;
  CameraPose pose;
  double distance_sq = 0.0;
};
RetrievalResult retrieve(const Image& query, const DescriptorDb& db);

enum class PoseStage { Coarse, Fine };

struct PoseEstimate {
  CameraPose pose;
  PoseStage stage = PoseStage::Coarse;
  double residual = 0.0;  // final photometric loss (fine only)
  int steps_used = 0;
  bool diverged = false;
};

struct RefineConfig {
  int steps = 300;
  int rays_per_step = 3072;
  int samples_per_ray = 64;
  float lr_start = 1e-2f;
  float lr_end = 5.8e-5f;
  uint64_t seed = 0;
  int reorthonormalize_every = 50;
  double divergence_factor = 10.0;
  int divergence_window = 50;
};

// se(3) exponential map, twist = (rho, omega).
void se3_exp(const Eigen::Matrix<float, 6, 1>& twist, Matrix3f& rotation, Vector3f& translation);

// iNeRF-style photometric refinement: gradient descent on a left-multiplied
// twist against the frozen field. Falls back to the coarse pose (flagged)
// on divergence.
PoseEstimate refine_pose(const RadianceField& field, const Image& query, const CameraPose& coarse,
                         const RefineConfig& config);

}  // namespace pad
