#pragma once

#include <vector>

#include "pad/camera.hpp"
#include "pad/common.hpp"
#include "pad/image.hpp"

namespace pad {

// Occupancy + per-voxel color on an N^3 grid mapped to the world cube
// [-1,1]^3. Occupied voxels form a single 6-connected component.
struct VoxelObject {
  int n = 0;
  std::vector<uint8_t> occ;     // n^3 flags
  std::vector<float> colors;    // 3 * n^3, defined where occupied
  uint64_t seed = 0;
  float bound = 0.f;            // bounding-sphere radius, world units

  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * n + y) * n + x;
  }
  bool occupied(int x, int y, int z) const {
    if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) return false;
    return occ[index(x, y, z)] != 0;
  }
  float voxel_size() const { return 2.f / n; }
  Vector3f voxel_center(int x, int y, int z) const {
    const float s = voxel_size();
    return Vector3f(-1.f + (x + 0.5f) * s, -1.f + (y + 0.5f) * s, -1.f + (z + 0.5f) * s);
  }
  Vector3f color_at(size_t idx) const {
    return Vector3f(colors[3 * idx], colors[3 * idx + 1], colors[3 * idx + 2]);
  }
  size_t occupied_count() const;
};

enum class AnomalyKind { Burr, Stain, Missing };

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::Stain;
  uint64_t seed = 0;
  double magnitude = 0.02;  // fraction of surface voxels, (0, 0.1]
};

const char* anomaly_kind_name(AnomalyKind kind);
AnomalyKind anomaly_kind_from_name(const std::string& name);

struct ObjectParams {
  int grid = 32;
  double complexity = 0.5;  // in [0, 1]
  int palette_size = 4;     // <= 16
};

VoxelObject build_object(uint64_t seed, const ObjectParams& params);

// Occupied voxels with at least one empty 6-neighbor.
std::vector<size_t> surface_voxels(const VoxelObject& obj);
bool is_connected(const VoxelObject& obj);

struct InjectionResult {
  VoxelObject object;
  std::vector<uint8_t> mask;  // n^3, marks exactly the changed voxels
};

// Burr adds a surface cluster, stain recolors one, missing removes one while
// keeping the remainder connected (resampled up to 100 times, then throws).
InjectionResult inject_anomaly(const VoxelObject& obj, const AnomalySpec& spec);

enum class Shading { Headlight, Flat };

// Independent ray-trace oracle: per-pixel DDA traversal, first-hit shading,
// black background. Deterministic.
Image render_reference(const VoxelObject& obj, const CameraPose& pose,
                       Shading shading = Shading::Headlight);

// Binary image: pixel set iff the first voxel hit along its ray is masked.
Image project_mask(const std::vector<uint8_t>& mask3d, const VoxelObject& obj,
                   const CameraPose& pose);

}  // namespace pad
