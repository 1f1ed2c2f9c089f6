#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "pad/pose_est.hpp"
#include "pad/voxel.hpp"

using namespace pad;
namespace fs = std::filesystem;

namespace {

CameraPose look_at_origin(double theta, double phi, double radius, int size) {
  return spherical_pose({theta, phi, radius}, 1.5f * size, size, size);
}

Image gray_image(int size, float value) { return Image(size, size, 3, value); }

// Shared tiny trained field for the refinement tests; built once.
struct RefineFixture {
  VoxelObject object;
  RadianceField field;
  int size = 32;

  RefineFixture() : object(build_object(13, {})) {
    TrainConfig cfg;
    cfg.iterations = 600;
    cfg.rays_per_batch = 512;
    cfg.samples_per_ray = 32;
    cfg.hidden = {48, 48};
    cfg.l_pos = 5;
    cfg.lr_start = 5e-3f;
    cfg.lr_end = 5e-4f;
    cfg.seed = 3;
    std::vector<TrainView> views;
    for (int i = 0; i < 12; ++i) {
      double theta = 0.6 + 1.9 * (i % 4) / 4.0;
      double phi = 2.0 * M_PI * i / 12.0;
      TrainView v;
      v.pose = look_at_origin(theta, phi, 3.0, size);
      v.image = render_reference(object, v.pose);
      views.push_back(v);
    }
    field = train_field(views, object.bound, cfg).field;
  }

  static const RefineFixture& get() {
    static RefineFixture fixture;
    return fixture;
  }
};

}  // namespace

TEST_CASE("descriptor has 64 entries and is finite") {
  Image img = gray_image(32, 0.3f);
  Descriptor d = compute_descriptor(img, "x");
  CHECK(d.values.size() == 64);
  for (float v : d.values) CHECK(std::isfinite(v));
}

TEST_CASE("constant mid-gray image: equal pooled blocks, one-bin histogram") {
  Descriptor d = compute_descriptor(gray_image(64, 0.5f));
  for (int i = 1; i < 48; ++i) CHECK(d.values[i] == doctest::Approx(d.values[0]).epsilon(1e-6));
  int nonzero_bins = 0;
  for (int i = 48; i < 64; ++i)
    if (d.values[i] != 0.f) ++nonzero_bins;
  CHECK(nonzero_bins == 1);
}

TEST_CASE("descriptor halves are l2-normalized") {
  VoxelObject obj = build_object(19, {});
  Image img = render_reference(obj, look_at_origin(1.1, 0.8, 3.0, 48));
  Descriptor d = compute_descriptor(img);
  double color = 0.0, hist = 0.0;
  for (int i = 0; i < 48; ++i) color += static_cast<double>(d.values[i]) * d.values[i];
  for (int i = 48; i < 64; ++i) hist += static_cast<double>(d.values[i]) * d.values[i];
  CHECK(color == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(hist == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("descriptor is invariant to uniform brightness scaling") {
  VoxelObject obj = build_object(23, {});
  Image img = render_reference(obj, look_at_origin(1.2, 2.3, 3.0, 48));
  Image scaled = img;
  for (float& v : scaled.data) v *= 0.5f;
  Descriptor a = compute_descriptor(img);
  Descriptor b = compute_descriptor(scaled);
  double worst = 0.0;
  for (int i = 0; i < 64; ++i) worst = std::max(worst, std::abs(static_cast<double>(a.values[i]) - b.values[i]));
  CHECK(worst < 1e-4);
}

TEST_CASE("nearby poses are closer in descriptor space than opposite poses") {
  int ok = 0;
  const int trials = 50;
  for (uint64_t seed = 1; seed <= trials; ++seed) {
    ObjectParams params;
    params.complexity = 0.3 + 0.5 * (seed % 5) / 5.0;
    VoxelObject obj = build_object(seed, params);
    double phi = 2.0 * M_PI * (seed % 7) / 7.0;
    Image base = render_reference(obj, look_at_origin(1.2, phi, 3.0, 48));
    Image near = render_reference(obj, look_at_origin(1.2, phi + 10.0 * M_PI / 180.0, 3.0, 48));
    Image far = render_reference(obj, look_at_origin(1.2, phi + 170.0 * M_PI / 180.0, 3.0, 48));
    Descriptor db = compute_descriptor(base);
    if (descriptor_distance_sq(db, compute_descriptor(near)) <
        descriptor_distance_sq(db, compute_descriptor(far)))
      ++ok;
  }
  CHECK(ok >= 45);  // >= 90% of 50
}

TEST_CASE("retrieve returns an exact match at distance zero") {
  VoxelObject obj = build_object(31, {});
  DescriptorDb db;
  std::vector<Image> images;
  for (int i = 0; i < 8; ++i) {
    CameraPose pose = look_at_origin(0.9 + 0.1 * i, 0.7 * i, 3.0, 48);
    Image img = render_reference(obj, pose);
    db.descriptors.push_back(compute_descriptor(img, "v" + std::to_string(i)));
    db.poses.push_back(pose);
    images.push_back(std::move(img));
  }
  RetrievalResult r = retrieve(images[5], db);
  CHECK(r.index == 5);
  CHECK(r.distance_sq == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("retrieve breaks ties toward the lower index") {
  Image img = gray_image(32, 0.4f);
  Descriptor d = compute_descriptor(img);
  DescriptorDb db;
  db.descriptors = {d, d, d};
  db.poses.resize(3);
  db.poses[0].focal = 1.f;
  db.poses[1].focal = 2.f;
  db.poses[2].focal = 3.f;
  RetrievalResult r = retrieve(img, db);
  CHECK(r.index == 0);
  CHECK(r.pose.focal == 1.f);
}

TEST_CASE("retrieve on an empty database is an error") {
  DescriptorDb db;
  CHECK_THROWS_AS(retrieve(gray_image(32, 0.1f), db), PadError);
}

TEST_CASE("retrieve equals a brute-force linear scan") {
  Rng rng(41);
  DescriptorDb db;
  for (int i = 0; i < 20; ++i) {
    Descriptor d;
    for (auto& v : d.values) v = rng.uniformf();
    db.descriptors.push_back(d);
    db.poses.emplace_back();
  }
  VoxelObject obj = build_object(31, {});
  Image query = render_reference(obj, look_at_origin(1.0, 1.0, 3.0, 48));
  Descriptor qd = compute_descriptor(query);
  int best = 0;
  double best_d = descriptor_distance_sq(qd, db.descriptors[0]);
  for (int i = 1; i < 20; ++i) {
    double dist = descriptor_distance_sq(qd, db.descriptors[i]);
    if (dist < best_d) {
      best_d = dist;
      best = i;
    }
  }
  RetrievalResult r = retrieve(query, db);
  CHECK(r.index == best);
  CHECK(r.distance_sq == doctest::Approx(best_d).epsilon(1e-12));
}

TEST_CASE("retrieval index is stable under uniform brightness scaling") {
  VoxelObject obj = build_object(47, {});
  DescriptorDb db;
  std::vector<Image> images;
  for (int i = 0; i < 10; ++i) {
    CameraPose pose = look_at_origin(0.8 + 0.15 * i, 0.6 * i, 3.0, 48);
    Image img = render_reference(obj, pose);
    db.descriptors.push_back(compute_descriptor(img));
    db.poses.push_back(pose);
    images.push_back(std::move(img));
  }
  Image query = render_reference(obj, look_at_origin(1.15, 1.9, 3.0, 48));
  int base_index = retrieve(query, db).index;

  Image query_scaled = query;
  for (float& v : query_scaled.data) v *= 0.6f;
  DescriptorDb db_scaled = db;
  for (size_t i = 0; i < images.size(); ++i) {
    Image scaled = images[i];
    for (float& v : scaled.data) v *= 0.6f;
    db_scaled.descriptors[i] = compute_descriptor(scaled);
  }
  CHECK(retrieve(query_scaled, db_scaled).index == base_index);
}

TEST_CASE("descriptor db csv round-trips through disk") {
  fs::path dir = fs::temp_directory_path() / "pad_db_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "images");

  VoxelObject obj = build_object(53, {});
  DatasetManifest manifest;
  manifest.object_id = "t";
  manifest.root = dir.string();
  for (int i = 0; i < 5; ++i) {
    ManifestEntry e;
    e.image = "images/v" + std::to_string(i) + ".png";
    e.pose = look_at_origin(1.0 + 0.1 * i, 0.9 * i, 3.0, 48);
    e.split = Split::Train;
    save_png(render_reference(obj, e.pose), manifest.resolve(e.image));
    manifest.entries.push_back(e);
  }

  DescriptorDb db = build_descriptor_db(manifest);
  REQUIRE(db.descriptors.size() == 5);
  std::string csv = (dir / "db.csv").string();
  save_descriptor_db(db, csv);
  DescriptorDb back = load_descriptor_db(csv, manifest);
  REQUIRE(back.descriptors.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(back.descriptors[i].source_id == db.descriptors[i].source_id);
    for (int k = 0; k < 64; ++k)
      CHECK(back.descriptors[i].values[k] == doctest::Approx(db.descriptors[i].values[k]).epsilon(1e-6));
    CHECK((back.poses[i].rotation - db.poses[i].rotation).cwiseAbs().maxCoeff() < 1e-6f);
  }
  fs::remove_all(dir);
}

TEST_CASE("se3 exponential map basics") {
  Eigen::Matrix<float, 6, 1> twist = Eigen::Matrix<float, 6, 1>::Zero();
  Matrix3f r;
  Vector3f t;
  se3_exp(twist, r, t);
  CHECK((r - Matrix3f::Identity()).cwiseAbs().maxCoeff() < 1e-7f);
  CHECK(t.norm() < 1e-7f);

  // pure translation
  twist.head<3>() = Vector3f(0.3f, -0.2f, 0.5f);
  se3_exp(twist, r, t);
  CHECK((r - Matrix3f::Identity()).cwiseAbs().maxCoeff() < 1e-7f);
  CHECK((t - Vector3f(0.3f, -0.2f, 0.5f)).norm() < 1e-7f);

  // pure rotation matches angle-axis
  twist.setZero();
  Vector3f axis = Vector3f(1, 2, -1).normalized();
  twist.tail<3>() = 0.8f * axis;
  se3_exp(twist, r, t);
  Matrix3f expect = Eigen::AngleAxisf(0.8f, axis).toRotationMatrix();
  CHECK((r - expect).cwiseAbs().maxCoeff() < 1e-6f);
  CHECK(t.norm() < 1e-7f);
}

TEST_CASE("se3 exponential map is a rotation for random twists") {
  Rng rng(71);
  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix<float, 6, 1> twist;
    for (int k = 0; k < 6; ++k) twist[k] = rng.uniformf() * 2.f - 1.f;
    Matrix3f r;
    Vector3f t;
    se3_exp(twist, r, t);
    CHECK((r.transpose() * r - Matrix3f::Identity()).cwiseAbs().maxCoeff() < 1e-5f);
    CHECK(r.determinant() == doctest::Approx(1.f).epsilon(1e-5));
  }
}

TEST_CASE("refinement at the ground-truth pose stays put") {
  const auto& fx = RefineFixture::get();
  CameraPose truth = look_at_origin(1.05, 2.6, 3.0, fx.size);
  // query = the field's own render, so the photometric optimum is exactly at
  // the truth pose regardless of residual field error vs the oracle renderer
  Image query = render_view(fx.field, truth, 32, 0);

  RefineConfig cfg;
  cfg.steps = 60;
  cfg.rays_per_step = 384;
  cfg.samples_per_ray = 32;
  cfg.lr_start = 1e-3f;
  cfg.lr_end = 1e-4f;
  cfg.seed = 5;
  PoseEstimate est = refine_pose(fx.field, query, truth, cfg);
  CHECK(est.stage == PoseStage::Fine);
  double change_deg = rotation_geodesic(est.pose.rotation, truth.rotation) * 180.0 / M_PI;
  CHECK(change_deg < 0.5);
  CHECK(pose_is_valid(est.pose, 1e-5));
}

TEST_CASE("refinement reduces photometric residual from a perturbed pose") {
  const auto& fx = RefineFixture::get();
  CameraPose truth = look_at_origin(1.15, 0.9, 3.0, fx.size);
  Image query = render_reference(fx.object, truth);
  CameraPose start = look_at_origin(1.15 + 5.0 * M_PI / 180.0, 0.9, 3.0, fx.size);

  RefineConfig cfg;
  cfg.steps = 120;
  cfg.rays_per_step = 512;
  cfg.samples_per_ray = 32;
  cfg.lr_start = 5e-3f;
  cfg.lr_end = 1e-4f;
  cfg.seed = 6;
  PoseEstimate est = refine_pose(fx.field, query, start, cfg);
  CHECK(est.stage == PoseStage::Fine);
  CHECK_FALSE(est.diverged);
  double start_err = rotation_geodesic(start.rotation, truth.rotation);
  double end_err = rotation_geodesic(est.pose.rotation, truth.rotation);
  CHECK(end_err < start_err);
  CHECK(pose_is_valid(est.pose, 1e-5));
}

TEST_CASE("refinement is deterministic given the seed") {
  const auto& fx = RefineFixture::get();
  CameraPose truth = look_at_origin(1.0, 1.5, 3.0, fx.size);
  Image query = render_reference(fx.object, truth);
  CameraPose start = look_at_origin(1.05, 1.55, 3.0, fx.size);

  RefineConfig cfg;
  cfg.steps = 30;
  cfg.rays_per_step = 256;
  cfg.samples_per_ray = 24;
  cfg.seed = 7;
  PoseEstimate a = refine_pose(fx.field, query, start, cfg);
  PoseEstimate b = refine_pose(fx.field, query, start, cfg);
  CHECK((a.pose.rotation - b.pose.rotation).cwiseAbs().maxCoeff() == 0.f);
  CHECK((a.pose.translation - b.pose.translation).cwiseAbs().maxCoeff() == 0.f);
  CHECK(a.residual == b.residual);
}
