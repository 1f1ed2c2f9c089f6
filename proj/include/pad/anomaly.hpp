#pragma once

#include <string>
#include <vector>

#include "pad/field.hpp"
#include "pad/image.hpp"
#include "pad/pose_est.hpp"

namespace pad {

struct ChannelSemantics {
  int scale_level = 0;  // 0 = raw image
  std::string kind;     // "rgb", "blur", "gradmag"
};

// C x H x W feature stack; H, W match the source image.
struct FeatureMap {
  int c = 0, h = 0, w = 0;
  std::vector<float> values;  // channel-major
  std::vector<ChannelSemantics> semantics;

  float& at(int ch, int x, int y) { return values[(static_cast<size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int x, int y) const { return values[(static_cast<size_t>(ch) * h + y) * w + x]; }
};

// Channels: raw RGB (3), then per dyadic level k = 1..levels Gaussian-blurred
// RGB (sigma = 2^(k-1)) and the gradient magnitude of the blurred luminance.
// C = 3 + 4 * levels.
FeatureMap feature_pyramid(const Image& image, int levels);

// Per-level blur scale, shared with the footprint reasoning in tests.
inline float pyramid_sigma(int level) { return std::pow(2.f, static_cast<float>(level - 1)); }

// Elementwise f_q - f_hat.
FeatureMap difference_map(const FeatureMap& f_q, const FeatureMap& f_hat);

// Channel-axis l2 norm at each spatial position.
Image score_map(const FeatureMap& d);

// Max of the pool x pool stride-1 average-pooled map (edge-clamped window).
float image_score(const Image& s, int pool);

struct AnomalyConfig {
  int levels = 3;
  int pool = 8;  // H/8 at 64x64
  RefineConfig refine;
  int render_samples = 64;
  uint64_t render_seed = 0;
};

struct AnomalyResult {
  Image score_map;
  float image_score = 0.f;
  Image reference;
  PoseEstimate pose_estimate;
  int retrieval_index = -1;
};

// Full query path: retrieve -> refine -> render reference -> features on both
// -> difference -> score map -> image score.
AnomalyResult detect(const Image& query, const RadianceField& field, const DescriptorDb& db,
                     const AnomalyConfig& config);

}  // namespace pad
