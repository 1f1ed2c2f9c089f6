#include "pad/anomaly.hpp"

namespace pad {

FeatureMap feature_pyramid(const Image& image, int levels) {
  if (levels < 1) throw PadError("feature_pyramid: levels must be >= 1");
  FeatureMap f;
  f.w = image.w;
  f.h = image.h;
  f.c = 3 + 4 * levels;
  f.values.resize(static_cast<size_t>(f.c) * f.h * f.w);

  int ch = 0;
  for (int c = 0; c < 3; ++c, ++ch) {
    f.semantics.push_back({0, "rgb"});
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) f.at(ch, x, y) = image.at(x, y, c);
  }
  for (int level = 1; level <= levels; ++level) {
    Image blurred = gaussian_blur(image, pyramid_sigma(level));
    for (int c = 0; c < 3; ++c, ++ch) {
      f.semantics.push_back({level, "blur"});
      for (int y = 0; y < f.h; ++y)
        for (int x = 0; x < f.w; ++x) f.at(ch, x, y) = blurred.at(x, y, c);
    }
    Image grad = gradient_magnitude(blurred);
    f.semantics.push_back({level, "gradmag"});
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) f.at(ch, x, y) = grad.at(x, y, 0);
    ++ch;
  }
  return f;
}

FeatureMap difference_map(const FeatureMap& f_q, const FeatureMap& f_hat) {
  if (f_q.c != f_hat.c || f_q.h != f_hat.h || f_q.w != f_hat.w)
    throw PadError("difference_map: shape mismatch");
  for (size_t i = 0; i < f_q.semantics.size(); ++i)
    if (f_q.semantics[i].kind != f_hat.semantics[i].kind ||
        f_q.semantics[i].scale_level != f_hat.semantics[i].scale_level)
      throw PadError("difference_map: channel semantics mismatch");
  FeatureMap d = f_q;
  for (size_t i = 0; i < d.values.size(); ++i) d.values[i] = f_q.values[i] - f_hat.values[i];
  return d;
}

Image score_map(const FeatureMap& d) {
  Image s(d.w, d.h, 1);
  for (int y = 0; y < d.h; ++y)
    for (int x = 0; x < d.w; ++x) {
      double acc = 0.0;
      for (int c = 0; c < d.c; ++c) {
        const double v = d.at(c, x, y);
        acc += v * v;
      }
      s.at(x, y, 0) = static_cast<float>(std::sqrt(acc));
    }
  return s;
}

float image_score(const Image& s, int pool) {
  if (pool < 1 || pool > std::min(s.w, s.h)) throw PadError("image_score: invalid pool size");
  // integral image for the stride-1 average pooling
  std::vector<double> integral(static_cast<size_t>(s.w + 1) * (s.h + 1), 0.0);
  auto I = [&](int x, int y) -> double& { return integral[static_cast<size_t>(y) * (s.w + 1) + x]; };
  for (int y = 1; y <= s.h; ++y)
    for (int x = 1; x <= s.w; ++x)
      I(x, y) = s.at(x - 1, y - 1, 0) + I(x - 1, y) + I(x, y - 1) - I(x - 1, y - 1);
  float best = 0.f;
  const double area = static_cast<double>(pool) * pool;
  for (int y = 0; y + pool <= s.h; ++y)
    for (int x = 0; x + pool <= s.w; ++x) {
      const double sum = I(x + pool, y + pool) - I(x, y + pool) - I(x + pool, y) + I(x, y);
      best = std::max(best, static_cast<float>(sum / area));
    }
  return best;
}

AnomalyResult detect(const Image& query, const RadianceField& field, const DescriptorDb& db,
                     const AnomalyConfig& config) {
  AnomalyResult res;
  RetrievalResult coarse = retrieve(query, db);
  res.retrieval_index = coarse.index;
  res.pose_estimate = refine_pose(field, query, coarse.pose, config.refine);
  res.reference = render_view(field, res.pose_estimate.pose, config.render_samples, config.render_seed);
  FeatureMap f_q = feature_pyramid(query, config.levels);
  FeatureMap f_hat = feature_pyramid(res.reference, config.levels);
  res.score_map = score_map(difference_map(f_q, f_hat));
  res.image_score = image_score(res.score_map, config.pool);
  return res;
}

}  // namespace pad
