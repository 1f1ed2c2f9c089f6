#include "pad/dataset.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace pad {

std::vector<const ManifestEntry*> DatasetManifest::split_entries(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

std::string DatasetManifest::resolve(const std::string& rel) const {
  if (root.empty()) return rel;
  return (fs::path(root) / rel).string();
}

nlohmann::json pose_to_json(const CameraPose& pose) {
  nlohmann::json j;
  std::vector<double> r(9);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r[row * 3 + col] = pose.rotation(row, col);
  j["R"] = r;
  j["t"] = {pose.translation[0], pose.translation[1], pose.translation[2]};
  j["focal"] = pose.focal;
  j["cx"] = pose.cx;
  j["cy"] = pose.cy;
  j["w"] = pose.width;
  j["h"] = pose.height;
  if (pose.spherical) {
    j["theta"] = pose.spherical->theta;
    j["phi"] = pose.spherical->phi;
    j["radius"] = pose.spherical->radius;
  }
  return j;
}

CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose pose;
  auto r = j.at("R").get<std::vector<double>>();
  if (r.size() != 9) throw PadError("pose: R must have 9 entries");
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) pose.rotation(row, col) = static_cast<float>(r[row * 3 + col]);
  auto t = j.at("t").get<std::vector<double>>();
  if (t.size() != 3) throw PadError("pose: t must have 3 entries");
  pose.translation = Vector3f(static_cast<float>(t[0]), static_cast<float>(t[1]), static_cast<float>(t[2]));
  pose.focal = j.at("focal").get<float>();
  pose.cx = j.at("cx").get<float>();
  pose.cy = j.at("cy").get<float>();
  pose.width = j.at("w").get<int>();
  pose.height = j.at("h").get<int>();
  if (j.contains("theta")) {
    SphericalCoord s;
    s.theta = j.at("theta").get<double>();
    s.phi = j.at("phi").get<double>();
    s.radius = j.at("radius").get<double>();
    pose.spherical = s;
  }
  return pose;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  nlohmann::json j;
  j["object_id"] = m.object_id;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["image"] = e.image;
    je["pose"] = pose_to_json(e.pose);
    je["split"] = e.split == Split::Train ? "train" : "test";
    je["label"] = e.label == Label::Normal ? "normal" : "anomalous";
    if (e.mask) je["mask"] = *e.mask;
    if (e.kind) je["kind"] = anomaly_kind_name(*e.kind);
    entries.push_back(je);
  }
  j["entries"] = entries;
  std::ofstream os(path);
  if (!os) throw PadError("save_manifest: cannot open " + path);
  os << j.dump(2) << "\n";
  if (!os) throw PadError("save_manifest: write failed for " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PadError("load_manifest: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  DatasetManifest m;
  m.object_id = j.at("object_id").get<std::string>();
  m.root = fs::path(path).parent_path().string();
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.image = je.at("image").get<std::string>();
    e.pose = pose_from_json(je.at("pose"));
    e.split = je.at("split").get<std::string>() == "train" ? Split::Train : Split::Test;
    e.label = je.at("label").get<std::string>() == "normal" ? Label::Normal : Label::Anomalous;
    if (je.contains("mask")) e.mask = je.at("mask").get<std::string>();
    if (je.contains("kind")) e.kind = anomaly_kind_from_name(je.at("kind").get<std::string>());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  for (const auto& e : m.entries) {
    if (e.split == Split::Train && e.label != Label::Normal)
      throw PadError("manifest: train entry not labeled normal: " + e.image);
    if (!pose_is_valid(e.pose)) throw PadError("manifest: invalid rotation for " + e.image);
    if (e.split == Split::Test && e.label == Label::Anomalous) {
      if (!e.mask) throw PadError("manifest: anomalous test entry without mask: " + e.image);
      Image mask = load_png_gray(m.resolve(*e.mask));
      if (mask.w != e.pose.width || mask.h != e.pose.height)
        throw PadError("manifest: mask dimensions mismatch for " + e.image);
    }
  }
}

float focal_for_fill(double bound, double camera_radius, int image_width, double fill_fraction) {
  // projected silhouette radius of the bounding sphere = f * b / sqrt(d^2 - b^2)
  const double proj = std::sqrt(camera_radius * camera_radius - bound * bound);
  return static_cast<float>(0.5 * fill_fraction * image_width * proj / bound);
}

namespace {

std::vector<SphericalCoord> stratified_sphere_grid(int count, double radius, double half_offset) {
  // theta in (margin, pi - margin), phi in [0, 2pi); cell centers, optionally
  // offset by half a cell in both coordinates (held-out test protocol)
  const double margin = 0.3;
  int n_theta = std::max(2, static_cast<int>(std::lround(std::sqrt(count / 2.0))));
  int n_phi = (count + n_theta - 1) / n_theta;
  const double dt = (M_PI - 2 * margin) / n_theta;
  const double dp = 2 * M_PI / n_phi;
  std::vector<SphericalCoord> coords;
  for (int i = 0; i < n_theta && static_cast<int>(coords.size()) < count; ++i)
    for (int k = 0; k < n_phi && static_cast<int>(coords.size()) < count; ++k) {
      SphericalCoord c;
      c.theta = margin + (i + 0.5 + half_offset) * dt;
      c.phi = std::fmod((k + 0.5 + half_offset) * dp, 2 * M_PI);
      c.theta = std::clamp(c.theta, 0.05, M_PI - 0.05);
      c.radius = radius;
      coords.push_back(c);
    }
  return coords;
}

}  // namespace

GeneratedDataset generate_dataset(const DatasetParams& params, const std::string& out_dir) {
  if (params.n_train_views < 8) throw PadError("generate_dataset: need at least 8 train views");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw PadError("generate_dataset: cannot create " + out_dir + ": " + ec.message());
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "masks", ec);

  GeneratedDataset out;
  out.object = build_object(params.seed, params.object);
  const float focal =
      focal_for_fill(out.object.bound, params.camera_radius, params.image_size, params.fill_fraction);

  DatasetManifest& m = out.manifest;
  m.object_id = params.object_id;
  m.root = out_dir;

  Rng rng(params.seed ^ 0x5eedda7aULL);

  auto render_entry = [&](const SphericalCoord& coord, const VoxelObject& obj, const std::string& name) {
    CameraPose pose = spherical_pose(coord, focal, params.image_size, params.image_size);
    Image img = render_reference(obj, pose);
    std::string rel = "images/" + name + ".png";
    save_png(img, (fs::path(out_dir) / rel).string());
    ManifestEntry e;
    e.image = rel;
    e.pose = pose;
    return e;
  };

  auto train_coords = stratified_sphere_grid(params.n_train_views, params.camera_radius, 0.0);
  for (size_t i = 0; i < train_coords.size(); ++i) {
    ManifestEntry e = render_entry(train_coords[i], out.object, "train_" + std::to_string(i));
    e.split = Split::Train;
    e.label = Label::Normal;
    m.entries.push_back(std::move(e));
  }

  // held-out protocol: the same stratification as the train grid, offset by a
  // fraction of a cell, so a test pose can never coincide with a train pose
  const int n_test = params.n_test_normal + params.n_test_anomalous;
  std::vector<SphericalCoord> test_coords;
  for (double offset : {0.5, 0.25, 0.75}) {
    if (static_cast<int>(test_coords.size()) >= n_test) break;
    auto layer = stratified_sphere_grid(params.n_train_views, params.camera_radius, offset);
    for (const auto& c : layer) {
      if (static_cast<int>(test_coords.size()) >= n_test) break;
      test_coords.push_back(c);
    }
  }
  if (static_cast<int>(test_coords.size()) < n_test)
    throw PadError("generate_dataset: not enough held-out pose cells for the test split");

  for (int i = 0; i < params.n_test_normal; ++i) {
    ManifestEntry e = render_entry(test_coords[i], out.object, "test_normal_" + std::to_string(i));
    e.split = Split::Test;
    e.label = Label::Normal;
    m.entries.push_back(std::move(e));
  }

  const AnomalyKind kinds[3] = {AnomalyKind::Stain, AnomalyKind::Burr, AnomalyKind::Missing};
  for (int i = 0; i < params.n_test_anomalous; ++i) {
    const SphericalCoord& coord = test_coords[params.n_test_normal + i];
    CameraPose pose = spherical_pose(coord, focal, params.image_size, params.image_size);
    // resample the defect until it is visible from this pose (the paper's
    // protocol keeps only views that show the anomaly)
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      AnomalySpec spec;
      spec.kind = kinds[i % 3];
      spec.seed = rng.next_u64();
      spec.magnitude = params.anomaly_magnitude;
      InjectionResult inj = inject_anomaly(out.object, spec);
      // removed voxels exist only in the pristine object, so project the mask
      // of a missing-part defect against that; burrs and stains live in the
      // defective object
      const VoxelObject& mask_host = spec.kind == AnomalyKind::Missing ? out.object : inj.object;
      Image mask_img = project_mask(inj.mask, mask_host, pose);
      int visible = 0;
      for (float v : mask_img.data) visible += v > 0.5f;
      if (visible < 4) continue;

      std::string name = "test_anom_" + std::to_string(i);
      Image img = render_reference(inj.object, pose);
      std::string rel_img = "images/" + name + ".png";
      std::string rel_mask = "masks/" + name + ".png";
      save_png(img, (fs::path(out_dir) / rel_img).string());
      save_png(mask_img, (fs::path(out_dir) / rel_mask).string());
      ManifestEntry e;
      e.image = rel_img;
      e.pose = pose;
      e.split = Split::Test;
      e.label = Label::Anomalous;
      e.mask = rel_mask;
      e.kind = spec.kind;
      m.entries.push_back(std::move(e));
      placed = true;
    }
    if (!placed)
      throw PadError("generate_dataset: could not place a visible defect for test view " +
                     std::to_string(i));
  }

  save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return out;
}

ObjectAttributes quantify_attributes(const std::vector<Image>& views) {
  if (views.empty()) throw PadError("quantify_attributes: need at least one view");
  ObjectAttributes attrs;
  double complexity_sum = 0.0, contrast_sum = 0.0;
  const float fg_thresh = 1.f / 512.f;
  for (const Image& v : views) {
    std::vector<uint8_t> fg(v.pixel_count(), 0);
    size_t fg_count = 0;
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x)
        if (v.luminance(x, y) > fg_thresh) {
          fg[static_cast<size_t>(y) * v.w + x] = 1;
          ++fg_count;
        }
    if (fg_count == 0) {
      ++attrs.empty_view_warnings;
      continue;  // contributes zero to both sums
    }
    size_t boundary = 0;
    auto is_fg = [&](int x, int y) {
      if (x < 0 || y < 0 || x >= v.w || y >= v.h) return false;
      return fg[static_cast<size_t>(y) * v.w + x] != 0;
    };
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x) {
        if (!is_fg(x, y)) continue;
        if (!is_fg(x - 1, y) || !is_fg(x + 1, y) || !is_fg(x, y - 1) || !is_fg(x, y + 1)) ++boundary;
      }
    complexity_sum += static_cast<double>(boundary) / fg_count;

    // std of hue and luminance over foreground pixels; two-pass variance so a
    // single-color view scores exactly zero
    std::vector<double> lums, hues;
    lums.reserve(fg_count);
    hues.reserve(fg_count);
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x) {
        if (!is_fg(x, y)) continue;
        double r = v.at(x, y, 0), g = v.at(x, y, 1), b = v.at(x, y, 2);
        double mx = std::max({r, g, b}), mn = std::min({r, g, b});
        double hue = 0.0;
        if (mx - mn > 1e-9) {
          if (mx == r) hue = std::fmod((g - b) / (mx - mn) + 6.0, 6.0);
          else if (mx == g) hue = (b - r) / (mx - mn) + 2.0;
          else hue = (r - g) / (mx - mn) + 4.0;
          hue /= 6.0;
        }
        lums.push_back(v.luminance(x, y));
        hues.push_back(hue);
      }
    auto stddev = [](const std::vector<double>& vals) {
      double mean = 0.0;
      for (double x : vals) mean += x;
      mean /= vals.size();
      double acc = 0.0;
      for (double x : vals) acc += (x - mean) * (x - mean);
      return std::sqrt(acc / vals.size());
    };
    contrast_sum += stddev(lums) + stddev(hues);
  }
  attrs.shape_complexity = complexity_sum / views.size();
  attrs.color_contrast = contrast_sum / views.size();
  return attrs;
}

}  // namespace pad
