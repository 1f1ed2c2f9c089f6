#include "pad/voxel.hpp"

#include <algorithm>
#include <queue>

namespace pad {

namespace {
constexpr int kNeighbors[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
}

size_t VoxelObject::occupied_count() const {
  return static_cast<size_t>(std::count(occ.begin(), occ.end(), uint8_t{1}));
}

const char* anomaly_kind_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::Burr: return "burr";
    case AnomalyKind::Stain: return "stain";
    case AnomalyKind::Missing: return "missing";
  }
  return "?";
}

AnomalyKind anomaly_kind_from_name(const std::string& name) {
  if (name == "burr") return AnomalyKind::Burr;
  if (name == "stain") return AnomalyKind::Stain;
  if (name == "missing") return AnomalyKind::Missing;
  throw PadError("unknown anomaly kind: " + name);
}

std::vector<size_t> surface_voxels(const VoxelObject& obj) {
  std::vector<size_t> out;
  for (int z = 0; z < obj.n; ++z)
    for (int y = 0; y < obj.n; ++y)
      for (int x = 0; x < obj.n; ++x) {
        if (!obj.occupied(x, y, z)) continue;
        for (const auto& d : kNeighbors) {
          if (!obj.occupied(x + d[0], y + d[1], z + d[2])) {
            out.push_back(obj.index(x, y, z));
            break;
          }
        }
      }
  return out;
}

bool is_connected(const VoxelObject& obj) {
  const size_t total = obj.occupied_count();
  if (total == 0) return false;
  std::vector<uint8_t> seen(obj.occ.size(), 0);
  std::queue<std::array<int, 3>> q;
  for (int z = 0; z < obj.n && q.empty(); ++z)
    for (int y = 0; y < obj.n && q.empty(); ++y)
      for (int x = 0; x < obj.n && q.empty(); ++x)
        if (obj.occupied(x, y, z)) {
          q.push({x, y, z});
          seen[obj.index(x, y, z)] = 1;
        }
  size_t count = 0;
  while (!q.empty()) {
    auto [x, y, z] = q.front();
    q.pop();
    ++count;
    for (const auto& d : kNeighbors) {
      int nx = x + d[0], ny = y + d[1], nz = z + d[2];
      if (obj.occupied(nx, ny, nz) && !seen[obj.index(nx, ny, nz)]) {
        seen[obj.index(nx, ny, nz)] = 1;
        q.push({nx, ny, nz});
      }
    }
  }
  return count == total;
}

namespace {

void carve_ball(VoxelObject& obj, double cx, double cy, double cz, double radius, double limit) {
  const int r = static_cast<int>(std::ceil(radius));
  const double c = (obj.n - 1) / 2.0;
  for (int z = static_cast<int>(cz) - r; z <= static_cast<int>(cz) + r; ++z)
    for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y)
      for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
        if (x < 1 || y < 1 || z < 1 || x >= obj.n - 1 || y >= obj.n - 1 || z >= obj.n - 1) continue;
        double dx = x - cx, dy = y - cy, dz = z - cz;
        if (dx * dx + dy * dy + dz * dz > radius * radius) continue;
        double ox = x - c, oy = y - c, oz = z - c;
        if (ox * ox + oy * oy + oz * oz > limit * limit) continue;  // stay in the bounding sphere
        obj.occ[obj.index(x, y, z)] = 1;
      }
}

void recompute_bound(VoxelObject& obj) {
  float best = 0.f;
  for (int z = 0; z < obj.n; ++z)
    for (int y = 0; y < obj.n; ++y)
      for (int x = 0; x < obj.n; ++x)
        if (obj.occupied(x, y, z)) best = std::max(best, obj.voxel_center(x, y, z).norm());
  obj.bound = best + obj.voxel_size() * std::sqrt(3.f) * 0.5f;
}

}  // namespace

VoxelObject build_object(uint64_t seed, const ObjectParams& params) {
  if (params.palette_size < 1 || params.palette_size > 16)
    throw PadError("build_object: palette_size must be in [1, 16]");
  const double complexity = std::clamp(params.complexity, 0.0, 1.0);
  const int n = params.grid;

  VoxelObject obj;
  obj.n = n;
  obj.seed = seed;
  obj.occ.assign(static_cast<size_t>(n) * n * n, 0);
  obj.colors.assign(static_cast<size_t>(n) * n * n * 3, 0.f);

  Rng rng(seed);
  const double c = (n - 1) / 2.0;
  const double limit = n / 2.0 - 1.5;

  // Core blob: a sphere at complexity 0, increasingly ellipsoidal with
  // complexity.
  double base_r = n * 0.17;
  double rx = base_r * (1.0 + complexity * 0.5 * (rng.uniform() - 0.5));
  double ry = base_r * (1.0 + complexity * 0.5 * (rng.uniform() - 0.5));
  double rz = base_r * (1.0 + complexity * 0.5 * (rng.uniform() - 0.5));
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double dx = (x - c) / rx, dy = (y - c) / ry, dz = (z - c) / rz;
        if (dx * dx + dy * dy + dz * dz <= 1.0) obj.occ[obj.index(x, y, z)] = 1;
      }

  // Random-walk limbs grown from the surface; the count scales with
  // complexity and drives surface detail.
  const int limbs = static_cast<int>(std::lround(complexity * 14.0));
  for (int i = 0; i < limbs; ++i) {
    auto surf = surface_voxels(obj);
    size_t start = surf[rng.uniform_index(surf.size())];
    int sx = static_cast<int>(start % n);
    int sy = static_cast<int>((start / n) % n);
    int sz = static_cast<int>(start / (static_cast<size_t>(n) * n));
    double px = sx, py = sy, pz = sz;
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    if (dir.norm() < 1e-9) dir = Eigen::Vector3d(1, 0, 0);
    dir.normalize();
    const int steps = 4 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(n / 2)));
    const double thickness = 1.2 + 0.8 * rng.uniform();
    for (int s = 0; s < steps; ++s) {
      carve_ball(obj, px, py, pz, thickness, limit);
      Eigen::Vector3d jitter(rng.normal(), rng.normal(), rng.normal());
      dir = (dir + 0.35 * jitter).normalized();
      px += dir.x();
      py += dir.y();
      pz += dir.z();
      double ox = px - c, oy = py - c, oz = pz - c;
      if (ox * ox + oy * oy + oz * oz > limit * limit) break;
    }
  }

  // Palette regions: multi-source nearest-seed coloring gives contiguous
  // color patches.
  std::vector<Vector3f> palette;
  for (int i = 0; i < params.palette_size; ++i) {
    // bright, saturated colors
    Vector3f col(rng.uniformf(), rng.uniformf(), rng.uniformf());
    int hi = static_cast<int>(rng.uniform_index(3));
    col[hi] = 0.7f + 0.3f * rng.uniformf();
    palette.push_back(col);
  }
  std::vector<Eigen::Vector3d> sources;
  {
    auto surf = surface_voxels(obj);
    for (int i = 0; i < params.palette_size; ++i) {
      size_t s = surf[rng.uniform_index(surf.size())];
      int sx = static_cast<int>(s % n);
      int sy = static_cast<int>((s / n) % n);
      int sz = static_cast<int>(s / (static_cast<size_t>(n) * n));
      sources.emplace_back(sx, sy, sz);
    }
  }
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (!obj.occupied(x, y, z)) continue;
        int best = 0;
        double best_d = 1e30;
        for (int i = 0; i < params.palette_size; ++i) {
          double d = (Eigen::Vector3d(x, y, z) - sources[i]).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = i;
          }
        }
        size_t idx = obj.index(x, y, z);
        obj.colors[3 * idx] = palette[best][0];
        obj.colors[3 * idx + 1] = palette[best][1];
        obj.colors[3 * idx + 2] = palette[best][2];
      }

  recompute_bound(obj);
  return obj;
}

namespace {

// BFS over surface voxels, random expansion order; returns a connected patch.
std::vector<size_t> surface_patch(const VoxelObject& obj, const std::vector<size_t>& surf,
                                  size_t start, size_t count, Rng& rng) {
  std::vector<uint8_t> on_surface(obj.occ.size(), 0);
  for (size_t s : surf) on_surface[s] = 1;
  std::vector<size_t> patch;
  std::vector<uint8_t> in_patch(obj.occ.size(), 0);
  std::vector<size_t> frontier{start};
  in_patch[start] = 1;
  const size_t n = obj.n;
  while (!frontier.empty() && patch.size() < count) {
    size_t pick = rng.uniform_index(frontier.size());
    std::swap(frontier[pick], frontier.back());
    size_t cur = frontier.back();
    frontier.pop_back();
    patch.push_back(cur);
    int x = static_cast<int>(cur % n);
    int y = static_cast<int>((cur / n) % n);
    int z = static_cast<int>(cur / (n * n));
    for (const auto& d : kNeighbors) {
      int nx = x + d[0], ny = y + d[1], nz = z + d[2];
      if (nx < 0 || ny < 0 || nz < 0 || nx >= obj.n || ny >= obj.n || nz >= obj.n) continue;
      size_t ni = obj.index(nx, ny, nz);
      if (on_surface[ni] && !in_patch[ni]) {
        in_patch[ni] = 1;
        frontier.push_back(ni);
      }
    }
  }
  return patch;
}

}  // namespace

InjectionResult inject_anomaly(const VoxelObject& obj, const AnomalySpec& spec) {
  if (spec.magnitude <= 0.0 || spec.magnitude > 0.1)
    throw PadError("inject_anomaly: magnitude must be in (0, 0.1]");
  Rng rng(spec.seed);
  auto surf = surface_voxels(obj);
  if (surf.empty()) throw PadError("inject_anomaly: empty object");
  const size_t count = std::max<size_t>(1, static_cast<size_t>(std::lround(spec.magnitude * surf.size())));

  InjectionResult res;
  res.object = obj;
  res.mask.assign(obj.occ.size(), 0);
  const size_t n = obj.n;

  switch (spec.kind) {
    case AnomalyKind::Stain: {
      size_t start = surf[rng.uniform_index(surf.size())];
      auto patch = surface_patch(obj, surf, start, count, rng);
      // recolor far from the patch's current color
      Vector3f base = obj.color_at(patch.front());
      Vector3f stain = Vector3f::Ones() - base;
      if ((stain - base).norm() < 0.3f) {
        stain = Vector3f(rng.uniformf(), rng.uniformf(), rng.uniformf());
        stain[rng.uniform_index(3)] = base.maxCoeff() > 0.5f ? 0.05f : 0.95f;
      }
      for (size_t idx : patch) {
        res.object.colors[3 * idx] = stain[0];
        res.object.colors[3 * idx + 1] = stain[1];
        res.object.colors[3 * idx + 2] = stain[2];
        res.mask[idx] = 1;
      }
      break;
    }
    case AnomalyKind::Burr: {
      // grow a cluster of new voxels attached to the surface
      size_t attach = surf[rng.uniform_index(surf.size())];
      int ax = static_cast<int>(attach % n);
      int ay = static_cast<int>((attach / n) % n);
      int az = static_cast<int>(attach / (n * n));
      Vector3f col = obj.color_at(attach);
      std::vector<size_t> added;
      std::vector<std::array<int, 3>> frontier;
      for (const auto& d : kNeighbors) {
        int nx = ax + d[0], ny = ay + d[1], nz = az + d[2];
        if (nx < 1 || ny < 1 || nz < 1 || nx >= obj.n - 1 || ny >= obj.n - 1 || nz >= obj.n - 1) continue;
        if (!obj.occupied(nx, ny, nz)) frontier.push_back({nx, ny, nz});
      }
      while (!frontier.empty() && added.size() < count) {
        size_t pick = rng.uniform_index(frontier.size());
        std::swap(frontier[pick], frontier.back());
        auto [x, y, z] = frontier.back();
        frontier.pop_back();
        size_t idx = res.object.index(x, y, z);
        if (res.object.occ[idx]) continue;
        res.object.occ[idx] = 1;
        res.object.colors[3 * idx] = col[0];
        res.object.colors[3 * idx + 1] = col[1];
        res.object.colors[3 * idx + 2] = col[2];
        res.mask[idx] = 1;
        added.push_back(idx);
        for (const auto& d : kNeighbors) {
          int nx = x + d[0], ny = y + d[1], nz = z + d[2];
          if (nx < 1 || ny < 1 || nz < 1 || nx >= obj.n - 1 || ny >= obj.n - 1 || nz >= obj.n - 1)
            continue;
          if (!res.object.occupied(nx, ny, nz)) frontier.push_back({nx, ny, nz});
        }
      }
      break;
    }
    case AnomalyKind::Missing: {
      bool done = false;
      for (int attempt = 0; attempt < 100 && !done; ++attempt) {
        size_t start = surf[rng.uniform_index(surf.size())];
        auto patch = surface_patch(obj, surf, start, count, rng);
        VoxelObject candidate = obj;
        for (size_t idx : patch) candidate.occ[idx] = 0;
        if (candidate.occupied_count() > 0 && is_connected(candidate)) {
          res.object = candidate;
          std::fill(res.mask.begin(), res.mask.end(), uint8_t{0});
          for (size_t idx : patch) res.mask[idx] = 1;
          done = true;
        }
      }
      if (!done)
        throw PadError("inject_anomaly: removal would disconnect the object "
                       "(object too small for this magnitude)");
      break;
    }
  }
  return res;
}

namespace {

struct Hit {
  bool hit = false;
  size_t voxel = 0;
  int face_axis = 0;  // axis of the entry face
  float face_sign = 1.f;
};

// Amanatides–Woo traversal; first occupied voxel along the ray.
Hit traverse(const VoxelObject& obj, const Vector3f& origin, const Vector3f& dir) {
  Hit miss;
  // grid AABB [-1,1]^3
  float t0 = 0.f, t1 = std::numeric_limits<float>::max();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-12f) {
      if (origin[a] < -1.f || origin[a] > 1.f) return miss;
    } else {
      float ta = (-1.f - origin[a]) / dir[a];
      float tb = (1.f - origin[a]) / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
  }
  if (t0 > t1) return miss;

  const float vs = obj.voxel_size();
  Vector3f p = origin + (t0 + 1e-6f) * dir;
  int ix[3];
  for (int a = 0; a < 3; ++a) ix[a] = std::clamp(static_cast<int>((p[a] + 1.f) / vs), 0, obj.n - 1);

  int step[3];
  float t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 1e-12f) {
      step[a] = 1;
      float boundary = -1.f + (ix[a] + 1) * vs;
      t_max[a] = (boundary - origin[a]) / dir[a];
      t_delta[a] = vs / dir[a];
    } else if (dir[a] < -1e-12f) {
      step[a] = -1;
      float boundary = -1.f + ix[a] * vs;
      t_max[a] = (boundary - origin[a]) / dir[a];
      t_delta[a] = -vs / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<float>::max();
      t_delta[a] = std::numeric_limits<float>::max();
    }
  }

  // entry face of the first voxel comes from the dominant ray direction
  int last_axis = 0;
  float best = -1.f;
  for (int a = 0; a < 3; ++a)
    if (std::abs(dir[a]) > best) {
      best = std::abs(dir[a]);
      last_axis = a;
    }

  while (true) {
    if (obj.occ[obj.index(ix[0], ix[1], ix[2])]) {
      Hit h;
      h.hit = true;
      h.voxel = obj.index(ix[0], ix[1], ix[2]);
      h.face_axis = last_axis;
      h.face_sign = dir[last_axis] > 0 ? -1.f : 1.f;
      return h;
    }
    int axis = 0;
    if (t_max[1] < t_max[0]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    ix[axis] += step[axis];
    if (ix[axis] < 0 || ix[axis] >= obj.n) return miss;
    t_max[axis] += t_delta[axis];
    last_axis = axis;
  }
}

}  // namespace

Image render_reference(const VoxelObject& obj, const CameraPose& pose, Shading shading) {
  if (pose.width < 16 || pose.height < 16)
    throw PadError("render_reference: image dimensions must be >= 16x16");
  Image img(pose.width, pose.height, 3);
  const Vector3f origin = pose.center();
  for (int y = 0; y < pose.height; ++y)
    for (int x = 0; x < pose.width; ++x) {
      Vector3f dir = pose.pixel_direction(static_cast<float>(x), static_cast<float>(y));
      Hit h = traverse(obj, origin, dir);
      if (!h.hit) continue;
      Vector3f col = obj.color_at(h.voxel);
      if (shading == Shading::Headlight) {
        Vector3f normal = Vector3f::Zero();
        normal[h.face_axis] = h.face_sign;
        float lambert = std::max(0.f, -dir.dot(normal));
        col *= 0.25f + 0.75f * lambert;
      }
      img.at(x, y, 0) = col[0];
      img.at(x, y, 1) = col[1];
      img.at(x, y, 2) = col[2];
    }
  return img;
}

Image project_mask(const std::vector<uint8_t>& mask3d, const VoxelObject& obj,
                   const CameraPose& pose) {
  if (mask3d.size() != obj.occ.size()) throw PadError("project_mask: mask shape mismatch");
  Image img(pose.width, pose.height, 1);
  const Vector3f origin = pose.center();
  for (int y = 0; y < pose.height; ++y)
    for (int x = 0; x < pose.width; ++x) {
      Hit h = traverse(obj, origin, pose.pixel_direction(static_cast<float>(x), static_cast<float>(y)));
      if (h.hit && mask3d[h.voxel]) img.at(x, y, 0) = 1.f;
    }
  return img;
}

}  // namespace pad
