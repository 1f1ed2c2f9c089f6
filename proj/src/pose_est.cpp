#include "pad/pose_est.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace pad {

Descriptor compute_descriptor(const Image& image, const std::string& source_id) {
  if (image.w < 16 || image.h < 16) throw PadError("descriptor: image must be at least 16x16");
  Descriptor d;
  d.source_id = source_id;

  // 4x4 grid of mean-pooled RGB blocks
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx) {
      const int x0 = bx * image.w / 4, x1 = (bx + 1) * image.w / 4;
      const int y0 = by * image.h / 4, y1 = (by + 1) * image.h / 4;
      double acc[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c) acc[c] += image.at(x, y, c);
      const double count = static_cast<double>(x1 - x0) * (y1 - y0);
      for (int c = 0; c < 3; ++c)
        d.values[(by * 4 + bx) * 3 + c] = static_cast<float>(acc[c] / count);
    }

  // 16-bin histogram of luminance relative to the per-image maximum, over
  // foreground pixels; relative binning makes the half brightness-invariant
  float max_lum = 0.f;
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) max_lum = std::max(max_lum, image.luminance(x, y));
  if (max_lum > 0.f) {
    const float fg_thresh = 0.02f * max_lum;
    for (int y = 0; y < image.h; ++y)
      for (int x = 0; x < image.w; ++x) {
        const float l = image.luminance(x, y);
        if (l <= fg_thresh) continue;
        int bin = std::min(15, static_cast<int>(l / max_lum * 16.f));
        d.values[48 + bin] += 1.f;
      }
  }

  auto normalize_half = [&](int begin, int len) {
    double norm = 0.0;
    for (int i = begin; i < begin + len; ++i) norm += static_cast<double>(d.values[i]) * d.values[i];
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (int i = begin; i < begin + len; ++i) d.values[i] = static_cast<float>(d.values[i] / norm);
  };
  normalize_half(0, 48);
  normalize_half(48, 16);
  return d;
}

double descriptor_distance_sq(const Descriptor& a, const Descriptor& b) {
  double acc = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) {
    const double diff = static_cast<double>(a.values[i]) - b.values[i];
    acc += diff * diff;
  }
  return acc;
}

DescriptorDb build_descriptor_db(const DatasetManifest& manifest) {
  DescriptorDb db;
  for (const auto& e : manifest.entries) {
    if (e.split != Split::Train) continue;
    db.descriptors.push_back(compute_descriptor(load_png(manifest.resolve(e.image)), e.image));
    db.poses.push_back(e.pose);
  }
  return db;
}

void save_descriptor_db(const DescriptorDb& db, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw PadError("save_descriptor_db: cannot open " + path);
  for (const auto& d : db.descriptors) {
    os << d.source_id;
    for (float v : d.values) os << "," << v;
    os << "\n";
  }
}

DescriptorDb load_descriptor_db(const std::string& path, const DatasetManifest& manifest) {
  std::ifstream is(path);
  if (!is) throw PadError("load_descriptor_db: cannot open " + path);
  std::unordered_map<std::string, const ManifestEntry*> by_image;
  for (const auto& e : manifest.entries) by_image[e.image] = &e;
  DescriptorDb db;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    Descriptor d;
    std::getline(ss, d.source_id, ',');
    std::string tok;
    for (int i = 0; i < kDescriptorDim; ++i) {
      if (!std::getline(ss, tok, ',')) throw PadError("descriptor db: short row in " + path);
      d.values[i] = std::stof(tok);
    }
    auto it = by_image.find(d.source_id);
    if (it == by_image.end()) throw PadError("descriptor db: unknown image id " + d.source_id);
    db.descriptors.push_back(std::move(d));
    db.poses.push_back(it->second->pose);
  }
  return db;
}

RetrievalResult retrieve(const Image& query, const DescriptorDb& db) {
  if (db.descriptors.empty()) throw PadError("retrieve: empty database");
  const Descriptor q = compute_descriptor(query);
  RetrievalResult res;
  double best = std::numeric_limits<double>::max();
  for (size_t i = 0; i < db.descriptors.size(); ++i) {
    const double dist = descriptor_distance_sq(q, db.descriptors[i]);
    if (dist < best) {
      best = dist;
      res.index = static_cast<int>(i);
    }
  }
  res.pose = db.poses[res.index];
  res.distance_sq = best;
  return res;
}

void se3_exp(const Eigen::Matrix<float, 6, 1>& twist, Matrix3f& rotation, Vector3f& translation) {
  const Vector3f rho = twist.head<3>();
  const Vector3f omega = twist.tail<3>();
  const float theta = omega.norm();
  Matrix3f hat;
  hat << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
  Matrix3f v;
  if (theta < 1e-6f) {
    rotation = Matrix3f::Identity() + hat + 0.5f * hat * hat;
    v = Matrix3f::Identity() + 0.5f * hat;
  } else {
    const float s = std::sin(theta), c = std::cos(theta);
    rotation = Matrix3f::Identity() + (s / theta) * hat + ((1 - c) / (theta * theta)) * hat * hat;
    v = Matrix3f::Identity() + ((1 - c) / (theta * theta)) * hat +
        ((theta - s) / (theta * theta * theta)) * hat * hat;
  }
  translation = v * rho;
}

PoseEstimate refine_pose(const RadianceField& field, const Image& query, const CameraPose& coarse,
                         const RefineConfig& config) {
  if (!pose_is_valid(coarse, 1e-5)) throw PadError("refine_pose: invalid coarse pose");
  if (query.w != coarse.width || query.h != coarse.height)
    throw PadError("refine_pose: query dimensions do not match intrinsics");

  PoseEstimate est;
  est.pose = coarse;
  est.stage = PoseStage::Fine;
  if (config.steps <= 0) return est;  // keep the coarse pose bit-exact

  CameraPose current = coarse;
  AdamVec optimizer(6, {config.lr_start});
  Rng rng(config.seed ^ 0xf19eULL);

  double initial_loss = -1.0;
  int divergent_streak = 0;

  for (int step = 0; step < config.steps; ++step) {
    // pixels whose rays hit the scene bounds from the current pose
    std::vector<int> candidates;
    for (int p = 0; p < query.w * query.h; ++p) {
      Ray r = pixel_ray(field, current, static_cast<float>(p % query.w),
                        static_cast<float>(p / query.w));
      if (r.far > r.near) candidates.push_back(p);
    }
    if (candidates.empty()) break;

    std::vector<int> pixels;
    pixels.reserve(config.rays_per_step);
    for (int i = 0; i < config.rays_per_step; ++i)
      pixels.push_back(candidates[rng.uniform_index(candidates.size())]);

    auto rays = generate_rays(field, current, pixels);
    auto fwd = render_ray_batch(field, rays, config.samples_per_ray, true, rng);

    std::vector<Vector3f> targets;
    targets.reserve(pixels.size());
    for (int p : pixels)
      targets.emplace_back(query.at(p % query.w, p / query.w, 0), query.at(p % query.w, p / query.w, 1),
                           query.at(p % query.w, p / query.w, 2));
    const double loss = photometric_loss(fwd.pixel_color, targets);
    if (!std::isfinite(loss)) throw PadError("refine_pose: non-finite loss at step " + std::to_string(step));
    if (initial_loss < 0.0) initial_loss = loss;
    est.residual = loss;
    est.steps_used = step + 1;

    if (loss > config.divergence_factor * initial_loss) {
      if (++divergent_streak >= config.divergence_window) {
        est.pose = coarse;
        est.diverged = true;
        est.steps_used = step + 1;
        return est;
      }
    } else {
      divergent_streak = 0;
    }

    MatrixXf dpixel(3, rays.size());
    const float inv = 2.f / (3.f * rays.size());
    for (size_t r = 0; r < rays.size(); ++r) dpixel.col(r) = inv * (fwd.pixel_color[r] - targets[r]);

    MatrixXf d_position;
    ray_batch_backward(field, rays, fwd, dpixel, &d_position);

    // accumulate gradient w.r.t. the left-multiplied twist at the current pose
    Eigen::Matrix<float, 6, 1> grad = Eigen::Matrix<float, 6, 1>::Zero();
    for (size_t r = 0; r < rays.size(); ++r) {
      const int begin = fwd.offsets[r], end = fwd.offsets[r + 1];
      if (begin == end) continue;
      Vector3f d_origin = Vector3f::Zero();
      Vector3f d_dir = Vector3f::Zero();  // w.r.t. the unit direction
      for (int s = begin; s < end; ++s) {
        const Vector3f dp = d_position.col(s);
        d_origin += dp;
        d_dir += fwd.depths[s] * dp;
      }
      const Vector3f& dir = rays[r].direction;
      grad.head<3>() += d_origin;
      grad.tail<3>() += rays[r].origin.cross(d_origin);
      // direction rotates with omega; through the normalization the chain
      // collapses to dir x d_dir
      grad.tail<3>() += dir.cross(d_dir);
    }

    const float frac = config.steps > 1 ? static_cast<float>(step) / (config.steps - 1) : 0.f;
    const float lr = config.lr_start * std::pow(config.lr_end / config.lr_start, frac);
    VectorXf twist = VectorXf::Zero(6);
    optimizer.step(twist, grad, lr);

    Matrix3f delta_r;
    Vector3f delta_t;
    Eigen::Matrix<float, 6, 1> tw = twist;
    se3_exp(tw, delta_r, delta_t);
    current.rotation = delta_r * current.rotation;
    current.translation = delta_r * current.translation + delta_t;

    if ((step + 1) % config.reorthonormalize_every == 0)
      current.rotation = orthonormalize(current.rotation);
  }

  current.rotation = orthonormalize(current.rotation);
  current.spherical.reset();
  est.pose = current;
  return est;
}

}  // namespace pad
