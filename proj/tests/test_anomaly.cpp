#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pad/anomaly.hpp"
#include "pad/voxel.hpp"

using namespace pad;

namespace {

CameraPose look_at_origin(double theta, double phi, double radius, int size) {
  return spherical_pose({theta, phi, radius}, 1.5f * size, size, size);
}

Image noise_image(int size, uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 3);
  for (float& v : img.data) v = rng.uniformf();
  return img;
}

// Single short-trained field shared by the detect-level tests.
struct DetectFixture {
  VoxelObject object;
  RadianceField field;
  DescriptorDb db;
  int size = 32;

  DetectFixture() : object(build_object(29, {})) {
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.rays_per_batch = 512;
    cfg.samples_per_ray = 32;
    cfg.hidden = {48, 48};
    cfg.l_pos = 5;
    cfg.lr_start = 5e-3f;
    cfg.lr_end = 5e-4f;
    cfg.seed = 4;
    std::vector<TrainView> views;
    for (int i = 0; i < 10; ++i) {
      TrainView v;
      v.pose = look_at_origin(0.7 + 0.9 * (i % 3) / 3.0, 2.0 * M_PI * i / 10.0, 3.0, size);
      v.image = render_reference(object, v.pose);
      views.push_back(v);
    }
    field = train_field(views, object.bound, cfg).field;
    db.descriptors.push_back(compute_descriptor(views[0].image, "v0"));
    db.poses.push_back(views[0].pose);
  }

  static const DetectFixture& get() {
    static DetectFixture fixture;
    return fixture;
  }
};

}  // namespace

TEST_CASE("feature pyramid channel count follows 3 + 4 * levels") {
  Image img = noise_image(32, 1);
  for (int levels : {1, 3, 5}) {
    FeatureMap f = feature_pyramid(img, levels);
    CHECK(f.c == 3 + 4 * levels);
    CHECK(f.h == 32);
    CHECK(f.w == 32);
    REQUIRE(static_cast<int>(f.semantics.size()) == f.c);
  }
  FeatureMap f5 = feature_pyramid(img, 5);
  CHECK(f5.c == 23);
}

TEST_CASE("feature pyramid semantics: raw rgb first, then blur+gradmag per level") {
  FeatureMap f = feature_pyramid(noise_image(32, 2), 2);
  for (int i = 0; i < 3; ++i) {
    CHECK(f.semantics[i].kind == "rgb");
    CHECK(f.semantics[i].scale_level == 0);
  }
  for (int level = 1; level <= 2; ++level) {
    int base = 3 + 4 * (level - 1);
    for (int i = 0; i < 3; ++i) {
      CHECK(f.semantics[base + i].kind == "blur");
      CHECK(f.semantics[base + i].scale_level == level);
    }
    CHECK(f.semantics[base + 3].kind == "gradmag");
    CHECK(f.semantics[base + 3].scale_level == level);
  }
}

TEST_CASE("constant image has zero gradient-magnitude channels") {
  Image img(48, 48, 3, 0.37f);
  FeatureMap f = feature_pyramid(img, 3);
  for (int ch = 0; ch < f.c; ++ch) {
    if (f.semantics[ch].kind != "gradmag") continue;
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) CHECK(f.at(ch, x, y) == 0.f);
  }
}

TEST_CASE("blur channels match a dense 2-D convolution oracle in the interior") {
  Image img = noise_image(48, 3);
  const int levels = 2;
  FeatureMap f = feature_pyramid(img, levels);
  for (int level = 1; level <= levels; ++level) {
    const float sigma = pyramid_sigma(level);
    const int radius = static_cast<int>(std::ceil(3.f * sigma));
    // normalized dense kernel, same truncation as the separable pass
    std::vector<double> k1(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      k1[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
      sum += k1[i + radius];
    }
    for (auto& v : k1) v /= sum;

    int base = 3 + 4 * (level - 1);
    for (int c = 0; c < 3; ++c)
      for (int y = radius; y < img.h - radius; ++y)
        for (int x = radius; x < img.w - radius; ++x) {
          double acc = 0.0;
          for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
              acc += k1[dx + radius] * k1[dy + radius] * img.at(x + dx, y + dy, c);
          CHECK(f.at(base + c, x, y) == doctest::Approx(acc).epsilon(1e-4));
        }
  }
}

TEST_CASE("difference map of a pyramid with itself is zero") {
  Image img = noise_image(32, 4);
  FeatureMap f = feature_pyramid(img, 3);
  FeatureMap d = difference_map(f, f);
  for (float v : d.values) CHECK(v == 0.f);
}

TEST_CASE("difference map is antisymmetric") {
  FeatureMap a = feature_pyramid(noise_image(32, 5), 2);
  FeatureMap b = feature_pyramid(noise_image(32, 6), 2);
  FeatureMap ab = difference_map(a, b);
  FeatureMap ba = difference_map(b, a);
  for (size_t i = 0; i < ab.values.size(); ++i) CHECK(ab.values[i] == -ba.values[i]);
}

TEST_CASE("difference map rejects mismatched shapes") {
  FeatureMap a = feature_pyramid(noise_image(32, 7), 2);
  FeatureMap b = feature_pyramid(noise_image(16, 7), 2);
  CHECK_THROWS_AS(difference_map(a, b), PadError);
  FeatureMap c = feature_pyramid(noise_image(32, 7), 3);
  CHECK_THROWS_AS(difference_map(a, c), PadError);
}

TEST_CASE("single perturbed pixel stays inside the blur footprint per level") {
  const int size = 64, levels = 3;
  Image base(size, size, 3, 0.5f);
  Image poked = base;
  const int px = 32, py = 32;
  poked.at(px, py, 0) = 1.f;

  FeatureMap d = difference_map(feature_pyramid(poked, levels), feature_pyramid(base, levels));
  for (int ch = 0; ch < d.c; ++ch) {
    const auto& sem = d.semantics[ch];
    // gradient magnitude extends the blur support by one pixel
    int radius = sem.scale_level == 0
                     ? 0
                     : static_cast<int>(std::ceil(3.f * pyramid_sigma(sem.scale_level)));
    if (sem.kind == "gradmag") radius += 1;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (std::max(std::abs(x - px), std::abs(y - py)) > radius)
          CHECK(d.at(ch, x, y) == 0.f);
  }
}

TEST_CASE("score map of zero difference is zero") {
  FeatureMap f = feature_pyramid(noise_image(32, 8), 2);
  Image s = score_map(difference_map(f, f));
  for (float v : s.data) CHECK(v == 0.f);
}

TEST_CASE("score map computes the channel-axis l2 norm") {
  FeatureMap d;
  d.c = 2;
  d.h = 1;
  d.w = 1;
  d.values = {3.f, 4.f};
  d.semantics.resize(2);
  Image s = score_map(d);
  CHECK(s.at(0, 0) == doctest::Approx(5.f).epsilon(1e-7));
}

TEST_CASE("enlarging any channel magnitude strictly increases the score") {
  FeatureMap d;
  d.c = 3;
  d.h = 1;
  d.w = 1;
  d.values = {0.5f, -1.f, 2.f};
  d.semantics.resize(3);
  float before = score_map(d).at(0, 0);
  for (int ch = 0; ch < 3; ++ch) {
    FeatureMap e = d;
    e.values[ch] *= 2.f;
    CHECK(score_map(e).at(0, 0) > before);
  }
}

TEST_CASE("image score of the zero map is zero") {
  Image s(32, 32, 1, 0.f);
  CHECK(image_score(s, 8) == 0.f);
}

TEST_CASE("interior spike pools to v over k squared") {
  Image s(32, 32, 1, 0.f);
  s.at(16, 16) = 2.f;
  for (int pool : {2, 4, 8}) CHECK(image_score(s, pool) == doctest::Approx(2.f / (pool * pool)));
}

TEST_CASE("pool of one degenerates to the plain maximum") {
  Image s = noise_image(16, 9);
  Image gray(16, 16, 1);
  for (size_t p = 0; p < gray.pixel_count(); ++p) gray.data[p] = s.data[3 * p];
  float maxv = *std::max_element(gray.data.begin(), gray.data.end());
  CHECK(image_score(gray, 1) == maxv);
}

TEST_CASE("image score is nonnegative and bounded by the max") {
  Image s(24, 24, 1, 0.f);
  Rng rng(10);
  for (float& v : s.data) v = rng.uniformf();
  float maxv = *std::max_element(s.data.begin(), s.data.end());
  float score = image_score(s, 6);
  CHECK(score >= 0.f);
  CHECK(score <= maxv + 1e-6f);
}

TEST_CASE("detect on the field's own render scores exactly zero") {
  const auto& fx = DetectFixture::get();
  AnomalyConfig cfg;
  cfg.levels = 2;
  cfg.pool = 4;
  cfg.refine.steps = 0;  // keep the coarse pose so the reference equals the query
  cfg.render_samples = 32;
  cfg.render_seed = 1;
  Image query = render_view(fx.field, fx.db.poses[0], cfg.render_samples, cfg.render_seed);
  AnomalyResult res = detect(query, fx.field, fx.db, cfg);
  CHECK(res.retrieval_index == 0);
  for (float v : res.score_map.data) CHECK(v == 0.f);
  CHECK(res.image_score == 0.f);
}

TEST_CASE("detect is deterministic with fixed seeds") {
  const auto& fx = DetectFixture::get();
  AnomalyConfig cfg;
  cfg.levels = 2;
  cfg.pool = 4;
  cfg.refine.steps = 10;
  cfg.refine.rays_per_step = 256;
  cfg.refine.samples_per_ray = 24;
  cfg.refine.seed = 3;
  cfg.render_samples = 32;
  Image query = render_reference(fx.object, look_at_origin(0.8, 0.2, 3.0, fx.size));
  AnomalyResult a = detect(query, fx.field, fx.db, cfg);
  AnomalyResult b = detect(query, fx.field, fx.db, cfg);
  CHECK(a.score_map.data == b.score_map.data);
  CHECK(a.image_score == b.image_score);
  CHECK((a.pose_estimate.pose.rotation - b.pose_estimate.pose.rotation).cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("detect result is self-consistent and nonnegative") {
  const auto& fx = DetectFixture::get();
  AnomalyConfig cfg;
  cfg.levels = 2;
  cfg.pool = 4;
  cfg.refine.steps = 5;
  cfg.refine.rays_per_step = 256;
  cfg.refine.samples_per_ray = 24;
  cfg.render_samples = 32;
  Image query = render_reference(fx.object, look_at_origin(1.0, 4.0, 3.0, fx.size));
  AnomalyResult res = detect(query, fx.field, fx.db, cfg);
  for (float v : res.score_map.data) CHECK(v >= 0.f);
  CHECK(res.image_score == doctest::Approx(image_score(res.score_map, cfg.pool)).epsilon(1e-9));
  CHECK(res.reference.w == fx.size);
  CHECK(res.reference.h == fx.size);
}
