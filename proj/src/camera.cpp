#include "pad/camera.hpp"

#include <Eigen/SVD>

namespace pad {

CameraPose spherical_pose(const SphericalCoord& coord, float focal, int width, int height) {
  const double st = std::sin(coord.theta), ct = std::cos(coord.theta);
  const double sp = std::sin(coord.phi), cp = std::cos(coord.phi);
  Eigen::Vector3d center = coord.radius * Eigen::Vector3d(st * cp, st * sp, ct);

  Eigen::Vector3d forward = (-center).normalized();  // optical axis, toward origin
  Eigen::Vector3d up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Eigen::Vector3d(1, 0, 0);  // polar fallback
  Eigen::Vector3d right = forward.cross(up).normalized();
  Eigen::Vector3d down = forward.cross(right).normalized();

  CameraPose pose;
  pose.rotation.col(0) = right.cast<float>();
  pose.rotation.col(1) = down.cast<float>();
  pose.rotation.col(2) = forward.cast<float>();
  pose.translation = center.cast<float>();
  pose.focal = focal;
  pose.cx = width * 0.5f;
  pose.cy = height * 0.5f;
  pose.width = width;
  pose.height = height;
  pose.spherical = coord;
  return pose;
}

bool pose_is_valid(const CameraPose& pose, double tol) {
  Eigen::Matrix3d r = pose.rotation.cast<double>();
  Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  return true;
}

double rotation_geodesic(const Matrix3f& a, const Matrix3f& b) {
  Eigen::Matrix3d rel = a.cast<double>().transpose() * b.cast<double>();
  double c = (rel.trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Matrix3f orthonormalize(const Matrix3f& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m.cast<double>(),
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1;
    r = u * svd.matrixV().transpose();
  }
  return r.cast<float>();
}

}  // namespace pad
