#include "pad/field.hpp"

#include <fstream>

namespace pad {

namespace {

constexpr float kBoundScale = 1.2f;
constexpr float kMaxSigmaDelta = 30.f;  // keeps 1-alpha away from zero

float softplus(float x) { return x > 20.f ? x : std::log1p(std::exp(x)); }
float sigmoidf(float x) { return 1.f / (1.f + std::exp(-x)); }

// ray/sphere intersection, sphere centered at origin with radius r
bool intersect_sphere(const Vector3f& o, const Vector3f& d, float r, float& t0, float& t1) {
  const float b = o.dot(d);
  const float c = o.squaredNorm() - r * r;
  const float disc = b * b - c;
  if (disc <= 0.f) return false;
  const float s = std::sqrt(disc);
  t0 = std::max(1e-4f, -b - s);
  t1 = -b + s;
  return t1 > t0;
}

}  // namespace

RadianceField make_field(uint64_t seed, float bound, const std::vector<int>& hidden, int l_pos,
                         int l_dir) {
  RadianceField f;
  f.l_pos = l_pos;
  f.l_dir = l_dir;
  f.bound = bound;
  std::vector<int> dims;
  dims.push_back(f.input_dim());
  for (int h : hidden) dims.push_back(h);
  dims.push_back(4);
  Rng rng(seed ^ 0xf1e1dULL);
  f.mlp = make_mlp(dims, Activation::Relu, rng);
  return f;
}

namespace {
constexpr uint32_t kFieldMagic = 0x50414446u;  // "PADF"
constexpr uint32_t kFieldVersion = 1;
}  // namespace

void save_field(const RadianceField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PadError("save_field: cannot open " + path);
  auto w32 = [&](uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto wf = [&](float v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  w32(kFieldMagic);
  w32(kFieldVersion);
  w32(static_cast<uint32_t>(field.l_pos));
  w32(static_cast<uint32_t>(field.l_dir));
  wf(field.bound);
  for (int i = 0; i < 3; ++i) wf(field.background[i]);
  write_mlp(os, field.mlp);
  if (!os) throw PadError("save_field: write failed " + path);
}

RadianceField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PadError("load_field: cannot open " + path);
  auto r32 = [&]() {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw PadError("load_field: truncated " + path);
    return v;
  };
  auto rf = [&]() {
    float v;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (r32() != kFieldMagic) throw PadError("load_field: bad magic in " + path);
  if (r32() != kFieldVersion) throw PadError("load_field: unsupported version in " + path);
  RadianceField f;
  f.l_pos = static_cast<int>(r32());
  f.l_dir = static_cast<int>(r32());
  f.bound = rf();
  for (int i = 0; i < 3; ++i) f.background[i] = rf();
  f.mlp = read_mlp(is);
  return f;
}

Ray pixel_ray(const RadianceField& field, const CameraPose& pose, float px, float py) {
  Ray ray;
  ray.origin = pose.center();
  ray.direction = pose.pixel_direction(px, py);
  float t0, t1;
  if (intersect_sphere(ray.origin, ray.direction, field.bound * kBoundScale, t0, t1)) {
    ray.near = t0;
    ray.far = t1;
  } else {
    ray.near = ray.far = 0.f;  // miss: background
  }
  return ray;
}

std::vector<Ray> generate_rays(const RadianceField& field, const CameraPose& pose,
                               const std::vector<int>& pixels) {
  if (!pose_is_valid(pose, 1e-5)) throw PadError("generate_rays: invalid pose");
  std::vector<Ray> rays;
  if (pixels.empty()) {
    rays.reserve(static_cast<size_t>(pose.width) * pose.height);
    for (int y = 0; y < pose.height; ++y)
      for (int x = 0; x < pose.width; ++x)
        rays.push_back(pixel_ray(field, pose, static_cast<float>(x), static_cast<float>(y)));
  } else {
    rays.reserve(pixels.size());
    for (int p : pixels)
      rays.push_back(pixel_ray(field, pose, static_cast<float>(p % pose.width),
                               static_cast<float>(p / pose.width)));
  }
  return rays;
}

void sample_along_ray(const Ray& ray, int n, bool stratified, Rng& rng, std::vector<float>& depths,
                      std::vector<float>& deltas) {
  if (n < 2) throw PadError("sample_along_ray: need n >= 2");
  depths.resize(n);
  deltas.resize(n);
  const float span = ray.far - ray.near;
  for (int i = 0; i < n; ++i) {
    const float u = stratified ? rng.uniformf() : 0.5f;
    depths[i] = ray.near + (i + u) / n * span;
  }
  for (int i = 0; i + 1 < n; ++i) deltas[i] = depths[i + 1] - depths[i];
  deltas[n - 1] = ray.far - depths[n - 1];
}

std::pair<float, Vector3f> field_eval(const RadianceField& field, const Vector3f& position,
                                      const Vector3f& direction) {
  MatrixXf p(3, 1);
  p.col(0) = position;
  MatrixXf enc = positional_encoding_batch(p, field.l_pos, true);
  MatrixXf input(field.input_dim(), 1);
  input.topRows(enc.rows()) = enc;
  if (field.l_dir > 0) {
    MatrixXf d(3, 1);
    d.col(0) = direction;
    input.bottomRows(encoded_dim(3, field.l_dir, true)) =
        positional_encoding_batch(d, field.l_dir, true);
  }
  MatrixXf raw = mlp_forward(field.mlp, input, nullptr);
  if (!raw.allFinite()) throw PadError("field_eval: non-finite output");
  Vector3f c(sigmoidf(raw(1, 0)), sigmoidf(raw(2, 0)), sigmoidf(raw(3, 0)));
  return {softplus(raw(0, 0)), c};
}

CompositeResult composite(const std::vector<float>& sigma, const std::vector<Vector3f>& color,
                          const std::vector<float>& delta, const Vector3f& background) {
  CompositeResult res;
  float transmittance = 1.f;
  for (size_t i = 0; i < sigma.size(); ++i) {
    if (delta[i] < 0.f) throw PadError("composite: negative interval width");
    const float a = 1.f - std::exp(-std::min(sigma[i] * delta[i], kMaxSigmaDelta));
    res.color += transmittance * a * color[i];
    transmittance *= 1.f - a;
  }
  res.color += transmittance * background;
  res.opacity = 1.f - transmittance;
  return res;
}

double photometric_loss(const std::vector<Vector3f>& rendered, const std::vector<Vector3f>& target) {
  if (rendered.size() != target.size()) throw PadError("photometric_loss: batch shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < rendered.size(); ++i)
    acc += (rendered[i] - target[i]).cast<double>().squaredNorm();
  return rendered.empty() ? 0.0 : acc / (3.0 * rendered.size());
}

RayBatchForward render_ray_batch(const RadianceField& field, const std::vector<Ray>& rays,
                                 int samples_per_ray, bool stratified, Rng& rng) {
  RayBatchForward fwd;
  fwd.offsets.resize(rays.size() + 1);
  int total = 0;
  for (size_t r = 0; r < rays.size(); ++r) {
    fwd.offsets[r] = total;
    if (rays[r].far > rays[r].near) total += samples_per_ray;
  }
  fwd.offsets[rays.size()] = total;

  fwd.positions.resize(3, total);
  fwd.depths.resize(total);
  fwd.deltas.resize(total);
  std::vector<float> depths, deltas;
  for (size_t r = 0; r < rays.size(); ++r) {
    const int off = fwd.offsets[r];
    if (fwd.offsets[r + 1] == off) continue;
    sample_along_ray(rays[r], samples_per_ray, stratified, rng, depths, deltas);
    for (int i = 0; i < samples_per_ray; ++i) {
      fwd.depths[off + i] = depths[i];
      fwd.deltas[off + i] = deltas[i];
      fwd.positions.col(off + i) = rays[r].origin + depths[i] * rays[r].direction;
    }
  }

  MatrixXf input(field.input_dim(), total);
  input.topRows(encoded_dim(3, field.l_pos, true)) =
      positional_encoding_batch(fwd.positions, field.l_pos, true);
  if (field.l_dir > 0) {
    MatrixXf dirs(3, total);
    for (size_t r = 0; r < rays.size(); ++r)
      for (int i = fwd.offsets[r]; i < fwd.offsets[r + 1]; ++i) dirs.col(i) = rays[r].direction;
    input.bottomRows(encoded_dim(3, field.l_dir, true)) =
        positional_encoding_batch(dirs, field.l_dir, true);
  }
  fwd.raw = mlp_forward(field.mlp, input, &fwd.tape);

  fwd.sigma.resize(total);
  fwd.color.resize(3, total);
  for (int i = 0; i < total; ++i) {
    fwd.sigma[i] = softplus(fwd.raw(0, i));
    for (int c = 0; c < 3; ++c) fwd.color(c, i) = sigmoidf(fwd.raw(c + 1, i));
  }

  fwd.pixel_color.resize(rays.size());
  fwd.opacity.resize(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    float transmittance = 1.f;
    Vector3f acc = Vector3f::Zero();
    for (int i = fwd.offsets[r]; i < fwd.offsets[r + 1]; ++i) {
      const float a = 1.f - std::exp(-std::min(fwd.sigma[i] * fwd.deltas[i], kMaxSigmaDelta));
      acc += transmittance * a * fwd.color.col(i);
      transmittance *= 1.f - a;
    }
    fwd.pixel_color[r] = acc + transmittance * field.background;
    fwd.opacity[r] = 1.f - transmittance;
  }
  return fwd;
}

Gradients ray_batch_backward(const RadianceField& field, const std::vector<Ray>& rays,
                             const RayBatchForward& fwd, const MatrixXf& dpixel,
                             MatrixXf* d_position) {
  const int total = static_cast<int>(fwd.depths.size());
  MatrixXf draw = MatrixXf::Zero(4, total);

  for (size_t r = 0; r < rays.size(); ++r) {
    const int begin = fwd.offsets[r], end = fwd.offsets[r + 1];
    if (begin == end) continue;
    const Vector3f dC = dpixel.col(r);

    // forward transmittances
    const int n = end - begin;
    std::vector<float> alpha(n), trans(n);
    float t = 1.f;
    for (int i = 0; i < n; ++i) {
      trans[i] = t;
      alpha[i] = 1.f - std::exp(-std::min(fwd.sigma[begin + i] * fwd.deltas[begin + i], kMaxSigmaDelta));
      t *= 1.f - alpha[i];
    }
    // suffix = sum_{k>i} T_k a_k (c_k . dC) + T_final (bg . dC)
    float suffix = t * field.background.dot(dC);
    for (int i = n - 1; i >= 0; --i) {
      const int s = begin + i;
      const float cdot = fwd.color.col(s).dot(dC);
      const float dalpha = trans[i] * cdot - suffix / (1.f - alpha[i]);
      const float dsigma = dalpha * fwd.deltas[s] * (1.f - alpha[i]);
      // softplus' = sigmoid
      draw(0, s) = dsigma * sigmoidf(fwd.raw(0, s));
      for (int c = 0; c < 3; ++c) {
        const float col = fwd.color(c, s);
        draw(c + 1, s) = trans[i] * alpha[i] * dC[c] * col * (1.f - col);
      }
      suffix += trans[i] * alpha[i] * cdot;
    }
  }

  MatrixXf dinput;
  Gradients grads = mlp_backward(field.mlp, fwd.tape, draw, d_position ? &dinput : nullptr);
  if (d_position) {
    const int pos_rows = encoded_dim(3, field.l_pos, true);
    *d_position = positional_encoding_backward(fwd.positions, field.l_pos, true, dinput.topRows(pos_rows));
  }
  return grads;
}

Image render_view(const RadianceField& field, const CameraPose& pose, int samples_per_ray,
                  uint64_t sampling_seed) {
  Image img(pose.width, pose.height, 3);
  Rng rng(sampling_seed);
  const int chunk = 4096;
  const int n_pixels = pose.width * pose.height;
  std::vector<int> pixels;
  for (int start = 0; start < n_pixels; start += chunk) {
    pixels.clear();
    for (int p = start; p < std::min(start + chunk, n_pixels); ++p) pixels.push_back(p);
    auto rays = generate_rays(field, pose, pixels);
    auto fwd = render_ray_batch(field, rays, samples_per_ray, true, rng);
    for (size_t i = 0; i < pixels.size(); ++i) {
      const int p = pixels[i];
      Vector3f col = (fwd.offsets[i + 1] > fwd.offsets[i]) ? fwd.pixel_color[i] : field.background;
      img.at(p % pose.width, p / pose.width, 0) = col[0];
      img.at(p % pose.width, p / pose.width, 1) = col[1];
      img.at(p % pose.width, p / pose.width, 2) = col[2];
    }
  }
  return img;
}

TrainResult train_field(const std::vector<TrainView>& views, float bound, const TrainConfig& config,
                        const std::function<void(int, float)>& progress) {
  if (views.empty()) throw PadError("train_field: empty train split");
  for (const auto& v : views)
    if (v.image.w != v.pose.width || v.image.h != v.pose.height)
      throw PadError("train_field: image/pose dimension mismatch");

  TrainResult result;
  result.field = make_field(config.seed, bound, config.hidden, config.l_pos, config.l_dir);
  RadianceField& field = result.field;
  if (config.iterations == 0) return result;

  // Precompute, per view, the pixels whose rays hit the bound sphere; the
  // remaining pixels are exactly background in both target and render.
  struct ViewRays {
    std::vector<int> pixels;
    std::vector<Ray> rays;
  };
  std::vector<ViewRays> view_rays(views.size());
  size_t total_rays = 0;
  for (size_t v = 0; v < views.size(); ++v) {
    const CameraPose& pose = views[v].pose;
    for (int p = 0; p < pose.width * pose.height; ++p) {
      Ray ray = pixel_ray(field, pose, static_cast<float>(p % pose.width),
                          static_cast<float>(p / pose.width));
      if (ray.far > ray.near) {
        view_rays[v].pixels.push_back(p);
        view_rays[v].rays.push_back(ray);
      }
    }
    total_rays += view_rays[v].rays.size();
  }
  if (total_rays == 0) throw PadError("train_field: no rays intersect the scene bounds");

  std::vector<size_t> cumulative(views.size());
  size_t acc = 0;
  for (size_t v = 0; v < views.size(); ++v) {
    acc += view_rays[v].rays.size();
    cumulative[v] = acc;
  }

  Adam optimizer(field.mlp, {config.lr_start});
  Rng rng(config.seed ^ 0x7aa15ULL);
  std::vector<Ray> batch;
  std::vector<Vector3f> targets;
  for (int it = 0; it < config.iterations; ++it) {
    batch.clear();
    targets.clear();
    for (int b = 0; b < config.rays_per_batch; ++b) {
      size_t g = rng.uniform_index(total_rays);
      size_t v = std::lower_bound(cumulative.begin(), cumulative.end(), g + 1) - cumulative.begin();
      size_t local = g - (v == 0 ? 0 : cumulative[v - 1]);
      batch.push_back(view_rays[v].rays[local]);
      const int p = view_rays[v].pixels[local];
      const Image& img = views[v].image;
      targets.emplace_back(img.at(p % img.w, p / img.w, 0), img.at(p % img.w, p / img.w, 1),
                           img.at(p % img.w, p / img.w, 2));
    }

    auto fwd = render_ray_batch(field, batch, config.samples_per_ray, true, rng);
    const double loss = photometric_loss(fwd.pixel_color, targets);
    if (!std::isfinite(loss))
      throw PadError("train_field: non-finite loss at iteration " + std::to_string(it));
    result.loss_curve.push_back(static_cast<float>(loss));

    MatrixXf dpixel(3, batch.size());
    const float inv = 2.f / (3.f * batch.size());
    for (size_t r = 0; r < batch.size(); ++r)
      dpixel.col(r) = inv * (fwd.pixel_color[r] - targets[r]);
    Gradients grads = ray_batch_backward(field, batch, fwd, dpixel, nullptr);

    const float frac = config.iterations > 1 ? static_cast<float>(it) / (config.iterations - 1) : 0.f;
    const float lr = config.lr_start * std::pow(config.lr_end / config.lr_start, frac);
    optimizer.step(field.mlp, grads, lr);

    if (progress && (it % 100 == 0 || it + 1 == config.iterations))
      progress(it, static_cast<float>(loss));
  }
  return result;
}

TrainResult train_field(const DatasetManifest& manifest, float bound, const TrainConfig& config,
                        const std::function<void(int, float)>& progress) {
  std::vector<TrainView> views;
  for (const auto& e : manifest.entries) {
    if (e.split != Split::Train) continue;
    if (e.label != Label::Normal) throw PadError("train_field: train split must be anomaly-free");
    views.push_back({load_png(manifest.resolve(e.image)), e.pose});
  }
  if (views.empty()) throw PadError("train_field: empty train split");
  return train_field(views, bound, config, progress);
}

void write_loss_csv(const std::vector<float>& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw PadError("write_loss_csv: cannot open " + path);
  os << "iteration,loss\n";
  for (size_t i = 0; i < curve.size(); ++i) os << i << "," << curve[i] << "\n";
}

}  // namespace pad
