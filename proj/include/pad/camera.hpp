#pragma once

#include <optional>

#include "pad/common.hpp"

namespace pad {

struct SphericalCoord {
  double theta = 0.0;  // polar angle from +z
  double phi = 0.0;    // azimuth
  double radius = 1.0;
};

// Rigid camera-to-world transform plus pinhole intrinsics.
// x_world = R * x_cam + t; camera frame: +z forward, +x right, +y down.
struct CameraPose {
  Matrix3f rotation = Matrix3f::Identity();
  Vector3f translation = Vector3f::Zero();
  float focal = 1.f;
  float cx = 0.f, cy = 0.f;
  int width = 0, height = 0;
  std::optional<SphericalCoord> spherical;

  Vector3f center() const { return translation; }
  Vector3f optical_axis() const { return rotation.col(2); }
  // Unit world-space direction through the center of pixel (x, y).
  Vector3f pixel_direction(float x, float y) const {
    Vector3f d_cam((x + 0.5f - cx) / focal, (y + 0.5f - cy) / focal, 1.f);
    return (rotation * d_cam).normalized();
  }
};

// Camera on the sphere (theta, phi, radius) looking at the world origin.
CameraPose spherical_pose(const SphericalCoord& coord, float focal, int width, int height);

// ||R^T R - I||_inf and det checks. The default tolerance reflects float32
// storage: a rotation built in double carries ~1e-7 rounding after the cast.
bool pose_is_valid(const CameraPose& pose, double tol = 1e-6);

// Geodesic angle between two rotations, radians.
double rotation_geodesic(const Matrix3f& a, const Matrix3f& b);

// Nearest rotation matrix (polar decomposition via SVD).
Matrix3f orthonormalize(const Matrix3f& m);

}  // namespace pad
