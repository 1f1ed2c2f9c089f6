#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pad/camera.hpp"
#include "pad/dataset.hpp"
#include "pad/image.hpp"
#include "pad/tensor.hpp"

namespace pad {

struct Ray {
  Vector3f origin = Vector3f::Zero();
  Vector3f direction = Vector3f::UnitZ();  // unit
  float near = 0.f, far = 1.f;
};

// Implicit anomaly-free object model. Density through softplus, color through
// sigmoid; sampling confined to the bounding sphere scaled by 1.2.
struct RadianceField {
  Mlp mlp;
  int l_pos = 6;
  int l_dir = 0;  // 0: view-independent color
  float bound = 1.f;
  Vector3f background = Vector3f::Zero();

  int input_dim() const {
    return encoded_dim(3, l_pos, true) + (l_dir > 0 ? encoded_dim(3, l_dir, true) : 0);
  }
};

RadianceField make_field(uint64_t seed, float bound, const std::vector<int>& hidden = {128, 128, 128, 128},
                         int l_pos = 6, int l_dir = 0);

void save_field(const RadianceField& field, const std::string& path);
RadianceField load_field(const std::string& path);

// Pinhole rays through pixel centers. `pixels` indexes row-major pixels; empty
// means all. near/far come from the 1.2x bounding-sphere intersection; rays
// that miss it are flagged with near == far == 0 and composite to background.
std::vector<Ray> generate_rays(const RadianceField& field, const CameraPose& pose,
                               const std::vector<int>& pixels = {});
Ray pixel_ray(const RadianceField& field, const CameraPose& pose, float px, float py);

// Depths strictly increasing in [near, far]; midpoints when not stratified,
// one uniform jitter per equal bin otherwise. deltas[i] = t[i+1]-t[i], last
// delta = far - t[n-1].
void sample_along_ray(const Ray& ray, int n, bool stratified, Rng& rng,
                      std::vector<float>& depths, std::vector<float>& deltas);

// (density, color) at a point; direction is ignored when l_dir == 0.
std::pair<float, Vector3f> field_eval(const RadianceField& field, const Vector3f& position,
                                      const Vector3f& direction);

// Emission-absorption quadrature over one ray.
struct CompositeResult {
  Vector3f color = Vector3f::Zero();
  float opacity = 0.f;
};
CompositeResult composite(const std::vector<float>& sigma, const std::vector<Vector3f>& color,
                          const std::vector<float>& delta, const Vector3f& background);

// Mean squared error over all color channels, 64-bit accumulation.
double photometric_loss(const std::vector<Vector3f>& rendered, const std::vector<Vector3f>& target);

Image render_view(const RadianceField& field, const CameraPose& pose, int samples_per_ray = 64,
                  uint64_t sampling_seed = 0);

struct TrainConfig {
  int iterations = 20000;
  int rays_per_batch = 4096;
  int samples_per_ray = 64;
  float lr_start = 1e-3f;
  float lr_end = 1e-4f;
  uint64_t seed = 0;
  std::vector<int> hidden = {128, 128, 128, 128};
  int l_pos = 6;
  int l_dir = 0;
};

struct TrainView {
  Image image;
  CameraPose pose;
};

struct TrainResult {
  RadianceField field;
  std::vector<float> loss_curve;  // one entry per iteration
};

TrainResult train_field(const std::vector<TrainView>& views, float bound, const TrainConfig& config,
                        const std::function<void(int, float)>& progress = {});
// Loads the train split images from disk first; train split must be nonempty
// and anomaly-free.
TrainResult train_field(const DatasetManifest& manifest, float bound, const TrainConfig& config,
                        const std::function<void(int, float)>& progress = {});

void write_loss_csv(const std::vector<float>& curve, const std::string& path);

// --- batched internals, shared with the pose refiner ---

// Forward rendering of a ray batch with everything needed for the reverse
// pass. Rays flagged as missing the bound sphere get zero samples.
struct RayBatchForward {
  std::vector<int> offsets;          // per-ray start into the sample arrays, size rays+1
  MatrixXf positions;                // 3 x total_samples
  std::vector<float> depths, deltas; // total_samples
  MatrixXf raw;                      // 4 x total_samples (pre-activation)
  std::vector<float> sigma;          // softplus(raw0)
  MatrixXf color;                    // 3 x total_samples, sigmoid
  Tape tape;
  std::vector<Vector3f> pixel_color; // per ray
  std::vector<float> opacity;        // per ray
};

RayBatchForward render_ray_batch(const RadianceField& field, const std::vector<Ray>& rays,
                                 int samples_per_ray, bool stratified, Rng& rng);

// dpixel: 3 x rays upstream gradient. Returns MLP parameter gradients;
// if d_position != nullptr, also the gradient w.r.t. each sample position
// (3 x total_samples), for backprop into ray origins/directions.
Gradients ray_batch_backward(const RadianceField& field, const std::vector<Ray>& rays,
                             const RayBatchForward& fwd, const MatrixXf& dpixel,
                             MatrixXf* d_position = nullptr);

}  // namespace pad
