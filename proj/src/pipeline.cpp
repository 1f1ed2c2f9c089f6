#include "pad/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;

namespace pad {

void PipelineLog::note(const std::string& msg) const {
  if (verbose) std::cout << "[pad] " << msg << "\n";
}

namespace {

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw PadError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  require_keys(j, {"output_dir", "seed", "resolution", "grid", "objects", "dataset", "train",
                   "refine", "anomaly", "study"},
               "config root");
  get_if(j, "output_dir", c.output_dir);
  get_if(j, "seed", c.seed);
  get_if(j, "resolution", c.resolution);
  get_if(j, "grid", c.grid);

  if (j.contains("objects")) {
    for (const auto& jo : j.at("objects")) {
      require_keys(jo, {"id", "seed", "complexity", "palette"}, "objects[]");
      ObjectConfig oc;
      get_if(jo, "id", oc.id);
      get_if(jo, "seed", oc.seed);
      get_if(jo, "complexity", oc.complexity);
      get_if(jo, "palette", oc.palette);
      if (oc.id.empty()) throw PadError("config: object id must not be empty");
      c.objects.push_back(oc);
    }
  }
  if (j.contains("dataset")) {
    const auto& jd = j.at("dataset");
    require_keys(jd, {"train_views", "test_normal", "test_anomalous", "anomaly_magnitude"}, "dataset");
    get_if(jd, "train_views", c.train_views);
    get_if(jd, "test_normal", c.test_normal);
    get_if(jd, "test_anomalous", c.test_anomalous);
    get_if(jd, "anomaly_magnitude", c.anomaly_magnitude);
  }
  if (j.contains("train")) {
    const auto& jt = j.at("train");
    require_keys(jt, {"iterations", "rays_per_batch", "samples_per_ray", "lr_start", "lr_end",
                      "hidden", "l_pos", "l_dir"},
                 "train");
    get_if(jt, "iterations", c.train.iterations);
    get_if(jt, "rays_per_batch", c.train.rays_per_batch);
    get_if(jt, "samples_per_ray", c.train.samples_per_ray);
    get_if(jt, "lr_start", c.train.lr_start);
    get_if(jt, "lr_end", c.train.lr_end);
    get_if(jt, "hidden", c.train.hidden);
    get_if(jt, "l_pos", c.train.l_pos);
    get_if(jt, "l_dir", c.train.l_dir);
  }
  if (j.contains("refine")) {
    const auto& jr = j.at("refine");
    require_keys(jr, {"steps", "rays_per_step", "samples_per_ray", "lr_start", "lr_end"}, "refine");
    get_if(jr, "steps", c.anomaly.refine.steps);
    get_if(jr, "rays_per_step", c.anomaly.refine.rays_per_step);
    get_if(jr, "samples_per_ray", c.anomaly.refine.samples_per_ray);
    get_if(jr, "lr_start", c.anomaly.refine.lr_start);
    get_if(jr, "lr_end", c.anomaly.refine.lr_end);
  }
  if (j.contains("anomaly")) {
    const auto& ja = j.at("anomaly");
    require_keys(ja, {"levels", "pool", "render_samples"}, "anomaly");
    get_if(ja, "levels", c.anomaly.levels);
    get_if(ja, "pool", c.anomaly.pool);
    get_if(ja, "render_samples", c.anomaly.render_samples);
  }
  if (j.contains("study")) {
    const auto& js = j.at("study");
    require_keys(js, {"sizes", "seeds", "iterations"}, "study");
    get_if(js, "sizes", c.study.sizes);
    get_if(js, "seeds", c.study.seeds);
    get_if(js, "iterations", c.study.iterations);
  }

  if (c.objects.empty()) throw PadError("config: at least one object required");
  for (size_t i = 1; i < c.study.sizes.size(); ++i)
    if (c.study.sizes[i] >= c.study.sizes[i - 1])
      throw PadError("config: study sizes must be strictly descending");

  // env override for the output root
  if (const char* root = std::getenv("PAD_OUTPUT_ROOT"))
    c.output_dir = (fs::path(root) / fs::path(c.output_dir).filename()).string();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PadError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const std::exception& e) {
    throw PadError(std::string("config: parse error: ") + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["resolution"] = c.resolution;
  j["grid"] = c.grid;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : c.objects)
    j["objects"].push_back(
        {{"id", o.id}, {"seed", o.seed}, {"complexity", o.complexity}, {"palette", o.palette}});
  j["dataset"] = {{"train_views", c.train_views},
                  {"test_normal", c.test_normal},
                  {"test_anomalous", c.test_anomalous},
                  {"anomaly_magnitude", c.anomaly_magnitude}};
  j["train"] = {{"iterations", c.train.iterations},
                {"rays_per_batch", c.train.rays_per_batch},
                {"samples_per_ray", c.train.samples_per_ray},
                {"lr_start", c.train.lr_start},
                {"lr_end", c.train.lr_end},
                {"hidden", c.train.hidden},
                {"l_pos", c.train.l_pos},
                {"l_dir", c.train.l_dir}};
  j["refine"] = {{"steps", c.anomaly.refine.steps},
                 {"rays_per_step", c.anomaly.refine.rays_per_step},
                 {"samples_per_ray", c.anomaly.refine.samples_per_ray},
                 {"lr_start", c.anomaly.refine.lr_start},
                 {"lr_end", c.anomaly.refine.lr_end}};
  j["anomaly"] = {{"levels", c.anomaly.levels},
                  {"pool", c.anomaly.pool},
                  {"render_samples", c.anomaly.render_samples}};
  j["study"] = {{"sizes", c.study.sizes}, {"seeds", c.study.seeds}, {"iterations", c.study.iterations}};
  return j;
}

std::string config_fingerprint(const nlohmann::json& j) {
  // nlohmann objects are key-sorted, so dump() is canonical
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

Stage stage_from_name(const std::string& name) {
  if (name == "generate") return Stage::Generate;
  if (name == "train") return Stage::Train;
  if (name == "detect") return Stage::Detect;
  if (name == "evaluate") return Stage::Evaluate;
  if (name == "study") return Stage::Study;
  if (name == "heatmaps") return Stage::Heatmaps;
  if (name == "all") return Stage::All;
  throw PadError("unknown stage: " + name);
}

std::string object_data_dir(const RunConfig& c, const std::string& id) {
  return (fs::path(c.output_dir) / "data" / id).string();
}
std::string object_field_path(const RunConfig& c, const std::string& id) {
  return (fs::path(c.output_dir) / "fields" / (id + ".field")).string();
}
std::string object_results_dir(const RunConfig& c, const std::string& id) {
  return (fs::path(c.output_dir) / "results" / id).string();
}

namespace {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Generate: return "generate";
    case Stage::Train: return "train";
    case Stage::Detect: return "detect";
    case Stage::Evaluate: return "evaluate";
    case Stage::Study: return "study";
    case Stage::Heatmaps: return "heatmaps";
    case Stage::All: return "all";
  }
  return "?";
}

fs::path sentinel_path(const RunConfig& c, Stage s, const char* suffix) {
  return fs::path(c.output_dir) / (".stage_" + stage_name(s) + suffix);
}

// Fingerprint of the config subtree a stage depends on (plus everything
// upstream of it, since stage outputs feed forward).
std::string stage_fingerprint(const RunConfig& c, Stage s) {
  nlohmann::json full = run_config_to_json(c);
  nlohmann::json j;
  j["objects"] = full["objects"];
  j["resolution"] = full["resolution"];
  j["grid"] = full["grid"];
  j["dataset"] = full["dataset"];
  j["seed"] = full["seed"];
  if (s == Stage::Train || s == Stage::Detect || s == Stage::Evaluate || s == Stage::Study ||
      s == Stage::Heatmaps)
    j["train"] = full["train"];
  if (s == Stage::Detect || s == Stage::Evaluate || s == Stage::Study || s == Stage::Heatmaps) {
    j["refine"] = full["refine"];
    j["anomaly"] = full["anomaly"];
  }
  if (s == Stage::Study) j["study"] = full["study"];
  return config_fingerprint(j);
}

bool stage_current(const RunConfig& c, Stage s) {
  std::ifstream is(sentinel_path(c, s, ".fp"));
  if (!is) return false;
  std::string stored;
  std::getline(is, stored);
  return stored == stage_fingerprint(c, s);
}

void mark_stage_done(const RunConfig& c, Stage s) {
  std::ofstream os(sentinel_path(c, s, ".fp"));
  os << stage_fingerprint(c, s) << "\n";
  fs::remove(sentinel_path(c, s, ".failed"));
}

// Runs `body`; on failure removes the listed output paths, writes a .failed
// sentinel, and rethrows.
template <typename F>
void guarded_stage(const RunConfig& c, Stage s, const std::vector<std::string>& outputs,
                   const PipelineLog& log, F&& body) {
  if (stage_current(c, s)) {
    log.note("stage " + stage_name(s) + ": up to date, skipping");
    return;
  }
  fs::remove(sentinel_path(c, s, ".fp"));
  try {
    body();
  } catch (...) {
    for (const auto& p : outputs) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
    fs::create_directories(c.output_dir);
    std::ofstream os(sentinel_path(c, s, ".failed"));
    os << "stage " << stage_name(s) << " failed; partial outputs removed\n";
    throw;
  }
  mark_stage_done(c, s);
}

uint64_t object_dataset_seed(const RunConfig& c, const ObjectConfig& oc) {
  return c.seed * 0x9e3779b9ULL + oc.seed;
}

void stage_generate(const RunConfig& c, const PipelineLog& log) {
  for (const auto& oc : c.objects) {
    DatasetParams params;
    params.seed = object_dataset_seed(c, oc);
    params.object.grid = c.grid;
    params.object.complexity = oc.complexity;
    params.object.palette_size = oc.palette;
    params.object_id = oc.id;
    params.image_size = c.resolution;
    params.n_train_views = c.train_views;
    params.n_test_normal = c.test_normal;
    params.n_test_anomalous = c.test_anomalous;
    params.anomaly_magnitude = c.anomaly_magnitude;
    log.note("generate: object " + oc.id);
    GeneratedDataset ds = generate_dataset(params, object_data_dir(c, oc.id));

    // attributes from flat (unshaded) renders of the train poses
    std::vector<Image> flat_views;
    for (const auto& e : ds.manifest.entries)
      if (e.split == Split::Train) flat_views.push_back(render_reference(ds.object, e.pose, Shading::Flat));
    ObjectAttributes attrs = quantify_attributes(flat_views);
    nlohmann::json ja = {{"shape_complexity", attrs.shape_complexity},
                         {"color_contrast", attrs.color_contrast},
                         {"bound", ds.object.bound},
                         {"empty_view_warnings", attrs.empty_view_warnings}};
    std::ofstream os(fs::path(object_data_dir(c, oc.id)) / "attributes.json");
    os << ja.dump(2) << "\n";
  }
}

DatasetManifest load_object_manifest(const RunConfig& c, const std::string& id) {
  const std::string path = (fs::path(object_data_dir(c, id)) / "manifest.json").string();
  if (!fs::exists(path))
    throw MissingPrerequisite("missing dataset manifest " + path + "; run the generate stage first");
  return load_manifest(path);
}

float load_object_bound(const RunConfig& c, const std::string& id) {
  std::ifstream is(fs::path(object_data_dir(c, id)) / "attributes.json");
  if (!is) throw MissingPrerequisite("missing attributes.json for object " + id);
  nlohmann::json j = nlohmann::json::parse(is);
  return j.at("bound").get<float>();
}

void stage_train(const RunConfig& c, const PipelineLog& log) {
  fs::create_directories(fs::path(c.output_dir) / "fields");
  for (const auto& oc : c.objects) {
    DatasetManifest manifest = load_object_manifest(c, oc.id);
    TrainConfig tc = c.train;
    tc.seed = object_dataset_seed(c, oc) ^ 0x11adULL;
    log.note("train: object " + oc.id + " (" + std::to_string(tc.iterations) + " iterations)");
    TrainResult result = train_field(manifest, load_object_bound(c, oc.id), tc,
                                     [&](int it, float loss) {
                                       if (it % 500 == 0)
                                         log.note("  iter " + std::to_string(it) + " loss " +
                                                  std::to_string(loss));
                                     });
    save_field(result.field, object_field_path(c, oc.id));
    write_loss_csv(result.loss_curve,
                   (fs::path(c.output_dir) / "fields" / ("loss_" + oc.id + ".csv")).string());
  }
}

void save_result(const AnomalyResult& r, const ManifestEntry& entry, const fs::path& dir,
                 const std::string& stem) {
  const float max_score = *std::max_element(r.score_map.data.begin(), r.score_map.data.end());
  const float scale = max_score > 0.f ? 60000.f / max_score : 1.f;
  save_png16(r.score_map, (dir / (stem + "_score.png")).string(), scale);
  save_png(r.reference, (dir / (stem + "_reference.png")).string());

  nlohmann::json j;
  j["image"] = entry.image;
  j["label"] = entry.label == Label::Anomalous ? "anomalous" : "normal";
  if (entry.mask) j["mask"] = *entry.mask;
  j["image_score"] = r.image_score;
  j["score_map"] = stem + "_score.png";
  j["score_scale"] = scale;
  j["reference"] = stem + "_reference.png";
  j["retrieval_index"] = r.retrieval_index;
  j["pose"] = pose_to_json(r.pose_estimate.pose);
  j["pose_stage"] = r.pose_estimate.stage == PoseStage::Fine ? "fine" : "coarse";
  j["residual"] = r.pose_estimate.residual;
  j["steps_used"] = r.pose_estimate.steps_used;
  j["diverged"] = r.pose_estimate.diverged;
  std::ofstream os(dir / (stem + ".json"));
  os << j.dump(2) << "\n";
}

DetectionArtifacts detection_pass(const DatasetManifest& manifest, const RadianceField& field,
                                  const DescriptorDb& db, AnomalyConfig config, uint64_t seed_base) {
  DetectionArtifacts out;
  auto test_entries = manifest.split_entries(Split::Test);
  for (size_t i = 0; i < test_entries.size(); ++i) {
    Image query = load_png(manifest.resolve(test_entries[i]->image));
    config.refine.seed = seed_base + i;
    out.results.push_back(detect(query, field, db, config));
  }
  return out;
}

void stage_detect(const RunConfig& c, const PipelineLog& log) {
  for (const auto& oc : c.objects) {
    DatasetManifest manifest = load_object_manifest(c, oc.id);
    if (!fs::exists(object_field_path(c, oc.id)))
      throw MissingPrerequisite("missing field checkpoint " + object_field_path(c, oc.id) +
                                "; run the train stage first");
    RadianceField field = load_field(object_field_path(c, oc.id));
    DescriptorDb db = build_descriptor_db(manifest);
    fs::create_directories(fs::path(c.output_dir) / "db");
    save_descriptor_db(db, (fs::path(c.output_dir) / "db" / (oc.id + ".csv")).string());

    fs::path rdir = object_results_dir(c, oc.id);
    fs::create_directories(rdir);
    auto test_entries = manifest.split_entries(Split::Test);
    log.note("detect: object " + oc.id + " (" + std::to_string(test_entries.size()) + " queries)");
    AnomalyConfig ac = c.anomaly;
    for (size_t i = 0; i < test_entries.size(); ++i) {
      Image query = load_png(manifest.resolve(test_entries[i]->image));
      ac.refine.seed = object_dataset_seed(c, oc) + i;
      AnomalyResult r = detect(query, field, db, ac);
      save_result(r, *test_entries[i], rdir, "result_" + std::to_string(i));
    }
  }
}

std::vector<AnomalyResult> load_results(const RunConfig& c, const std::string& id, size_t expected) {
  fs::path rdir = object_results_dir(c, id);
  std::vector<AnomalyResult> results;
  for (size_t i = 0; i < expected; ++i) {
    fs::path jp = rdir / ("result_" + std::to_string(i) + ".json");
    if (!fs::exists(jp))
      throw MissingPrerequisite("missing detection result " + jp.string() +
                                "; run the detect stage first");
    std::ifstream is(jp);
    nlohmann::json j = nlohmann::json::parse(is);
    AnomalyResult r;
    r.image_score = j.at("image_score").get<float>();
    r.score_map = load_score_map((rdir / j.at("score_map").get<std::string>()).string(),
                                 j.at("score_scale").get<float>());
    results.push_back(std::move(r));
  }
  return results;
}

void stage_evaluate(const RunConfig& c, const PipelineLog& log) {
  std::vector<ObjectRow> rows;
  std::vector<ObjectAttributeSample> samples;
  nlohmann::json detail;
  for (const auto& oc : c.objects) {
    DatasetManifest manifest = load_object_manifest(c, oc.id);
    auto test_entries = manifest.split_entries(Split::Test);
    std::vector<AnomalyResult> results = load_results(c, oc.id, test_entries.size());
    ObjectRow row = evaluate_object(manifest, results);
    rows.push_back(row);
    log.note("evaluate: " + oc.id + " pixel " + std::to_string(row.pixel_auroc) + " image " +
             std::to_string(row.image_auroc));

    std::ifstream is(fs::path(object_data_dir(c, oc.id)) / "attributes.json");
    if (is) {
      nlohmann::json ja = nlohmann::json::parse(is);
      ObjectAttributeSample s;
      s.shape_complexity = ja.at("shape_complexity").get<double>();
      s.color_contrast = ja.at("color_contrast").get<double>();
      s.image_auroc = row.image_auroc;
      s.pixel_auroc = row.pixel_auroc;
      samples.push_back(s);
      detail["attributes"][oc.id] = ja;
    }
    nlohmann::json scores = nlohmann::json::array();
    for (size_t i = 0; i < results.size(); ++i)
      scores.push_back({{"image", test_entries[i]->image},
                        {"label", test_entries[i]->label == Label::Anomalous ? 1 : 0},
                        {"score", results[i].image_score}});
    detail["image_scores"][oc.id] = scores;
  }
  BenchmarkReport report = make_report(rows, stage_fingerprint(c, Stage::Evaluate), c.seed);
  if (samples.size() >= 5) {
    AttributeCorrelation corr = attribute_correlation(samples);
    auto enc = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json("undefined");
    };
    detail["correlation"] = {{"image_vs_contrast", enc(corr.image_vs_contrast)},
                             {"image_vs_complexity", enc(corr.image_vs_complexity)},
                             {"pixel_vs_contrast", enc(corr.pixel_vs_contrast)},
                             {"pixel_vs_complexity", enc(corr.pixel_vs_complexity)},
                             {"n", corr.n}};
  }
  write_report_csv(report, (fs::path(c.output_dir) / "report.csv").string());
  write_report_json(report, (fs::path(c.output_dir) / "report.json").string(), detail);
}

}  // namespace

DatasetManifest subsample_train(const DatasetManifest& manifest, int size, uint64_t seed) {
  auto train = manifest.split_entries(Split::Train);
  if (size > static_cast<int>(train.size()))
    throw PadError("subsample_train: requested " + std::to_string(size) + " of " +
                   std::to_string(train.size()) + " train views");
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_index(i + 1)]);
  DatasetManifest out;
  out.object_id = manifest.object_id;
  out.root = manifest.root;
  for (int i = 0; i < size; ++i) out.entries.push_back(*train[order[i]]);
  for (const auto& e : manifest.entries)
    if (e.split == Split::Test) out.entries.push_back(e);
  return out;
}

DetectionArtifacts run_detection(const DatasetManifest& manifest, const RadianceField& field,
                                 const DescriptorDb& db, const AnomalyConfig& config,
                                 uint64_t seed_base) {
  return detection_pass(manifest, field, db, config, seed_base);
}

std::vector<SparseStudyRow> run_sparse_study(const RunConfig& c, const PipelineLog& log) {
  if (c.study.sizes.empty() || c.study.seeds.empty())
    throw PadError("study: sizes and seeds must be nonempty");
  std::vector<SparseStudyRow> rows;
  for (int size : c.study.sizes) {
    SparseStudyRow row;
    row.size = size;
    for (uint64_t seed : c.study.seeds) {
      double img_acc = 0.0, pix_acc = 0.0;
      for (const auto& oc : c.objects) {
        DatasetManifest manifest = load_object_manifest(c, oc.id);
        DatasetManifest sub = subsample_train(manifest, size, seed * 7919 + size);
        TrainConfig tc = c.train;
        if (c.study.iterations > 0) tc.iterations = c.study.iterations;
        tc.seed = seed ^ object_dataset_seed(c, oc);
        TrainResult tr = train_field(sub, load_object_bound(c, oc.id), tc);
        DescriptorDb db = build_descriptor_db(sub);
        DetectionArtifacts det = detection_pass(sub, tr.field, db, c.anomaly, seed * 131 + size);
        ObjectRow r = evaluate_object(sub, det.results);
        img_acc += r.image_auroc;
        pix_acc += r.pixel_auroc;
      }
      row.image_auroc += img_acc / c.objects.size();
      row.pixel_auroc += pix_acc / c.objects.size();
      log.note("study: size " + std::to_string(size) + " seed " + std::to_string(seed) + " done");
    }
    row.image_auroc /= c.study.seeds.size();
    row.pixel_auroc /= c.study.seeds.size();
    rows.push_back(row);
  }
  return rows;
}

namespace {

void stage_study(const RunConfig& c, const PipelineLog& log) {
  for (const auto& oc : c.objects)
    load_object_manifest(c, oc.id);  // prerequisite check before any work
  auto rows = run_sparse_study(c, log);
  fs::create_directories(fs::path(c.output_dir) / "study");
  std::ofstream os(fs::path(c.output_dir) / "study" / "study.csv");
  os << "size,image_auroc,pixel_auroc\n";
  for (const auto& r : rows)
    os << r.size << "," << r.image_auroc << "," << r.pixel_auroc << "\n";
}

void stage_heatmaps(const RunConfig& c, const PipelineLog& log) {
  for (const auto& oc : c.objects) {
    if (!fs::exists(object_results_dir(c, oc.id)))
      throw MissingPrerequisite("missing results for object " + oc.id +
                                "; run the detect stage first");
    export_heatmaps(object_results_dir(c, oc.id),
                    (fs::path(c.output_dir) / "heatmaps" / oc.id).string(), log);
  }
}

}  // namespace

void run_pipeline(const RunConfig& c, Stage stage, const PipelineLog& log) {
  fs::create_directories(c.output_dir);
  auto run_one = [&](Stage s) {
    switch (s) {
      case Stage::Generate: {
        std::vector<std::string> outputs;
        for (const auto& oc : c.objects) outputs.push_back(object_data_dir(c, oc.id));
        guarded_stage(c, s, outputs, log, [&] { stage_generate(c, log); });
        break;
      }
      case Stage::Train:
        guarded_stage(c, s, {(fs::path(c.output_dir) / "fields").string()}, log,
                      [&] { stage_train(c, log); });
        break;
      case Stage::Detect: {
        std::vector<std::string> outputs{(fs::path(c.output_dir) / "db").string()};
        for (const auto& oc : c.objects) outputs.push_back(object_results_dir(c, oc.id));
        guarded_stage(c, s, outputs, log, [&] { stage_detect(c, log); });
        break;
      }
      case Stage::Evaluate:
        guarded_stage(c, s,
                      {(fs::path(c.output_dir) / "report.csv").string(),
                       (fs::path(c.output_dir) / "report.json").string()},
                      log, [&] { stage_evaluate(c, log); });
        break;
      case Stage::Study:
        guarded_stage(c, s, {(fs::path(c.output_dir) / "study").string()}, log,
                      [&] { stage_study(c, log); });
        break;
      case Stage::Heatmaps:
        guarded_stage(c, s, {(fs::path(c.output_dir) / "heatmaps").string()}, log,
                      [&] { stage_heatmaps(c, log); });
        break;
      case Stage::All:
        break;
    }
  };
  if (stage == Stage::All) {
    for (Stage s : {Stage::Generate, Stage::Train, Stage::Detect, Stage::Evaluate, Stage::Heatmaps})
      run_one(s);
  } else {
    run_one(stage);
  }
}

namespace {

Vector3f heat_color(float v) {
  // hot map: black -> red -> yellow -> white, zero score maps to black
  v = clampf(v, 0.f, 1.f);
  return Vector3f(std::min(1.f, 3.f * v), clampf(3.f * v - 1.f, 0.f, 1.f),
                  clampf(3.f * v - 2.f, 0.f, 1.f));
}

}  // namespace

int export_heatmaps(const std::string& results_dir, const std::string& out_dir,
                    const PipelineLog& log) {
  if (!fs::exists(results_dir)) throw MissingPrerequisite("missing results dir " + results_dir);
  fs::create_directories(out_dir);

  struct Entry {
    nlohmann::json meta;
    std::string stem;
  };
  std::vector<Entry> entries;
  int skipped = 0;
  for (const auto& de : fs::directory_iterator(results_dir)) {
    if (de.path().extension() != ".json") continue;
    try {
      std::ifstream is(de.path());
      Entry e;
      e.meta = nlohmann::json::parse(is);
      e.meta.at("image_score").get<float>();  // minimal shape check
      e.stem = de.path().stem().string();
      entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      log.note("heatmaps: skipping corrupt result " + de.path().string() + ": " + ex.what());
      ++skipped;
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.stem < b.stem; });

  // shared scaling across the whole result set
  float global_max = 0.f;
  std::vector<Image> score_maps;
  for (const auto& e : entries) {
    Image s = load_score_map((fs::path(results_dir) / e.meta.at("score_map").get<std::string>()).string(),
                             e.meta.at("score_scale").get<float>());
    for (float v : s.data) global_max = std::max(global_max, v);
    score_maps.push_back(std::move(s));
  }
  if (global_max <= 0.f) global_max = 1.f;

  fs::path manifest_root = fs::path(results_dir).parent_path().parent_path();
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    // results live under <out>/results/<id>; the dataset under <out>/data/<id>
    fs::path data_root = manifest_root / "data" / fs::path(results_dir).filename();
    Image query = load_png((data_root / e.meta.at("image").get<std::string>()).string());
    Image reference = load_png((fs::path(results_dir) / e.meta.at("reference").get<std::string>()).string());
    const Image& score = score_maps[i];

    Image mask;
    if (e.meta.contains("mask"))
      mask = load_png_gray((data_root / e.meta.at("mask").get<std::string>()).string());

    Image trip(query.w * 3, query.h, 3);
    for (int y = 0; y < query.h; ++y)
      for (int x = 0; x < query.w; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          trip.at(x, y, ch) = query.at(x, y, ch);
          trip.at(query.w + x, y, ch) = reference.at(x, y, ch);
        }
        Vector3f hc = heat_color(score.at(x, y, 0) / global_max);
        bool contour = false;
        if (!mask.empty() && mask.at(x, y, 0) > 0.5f) {
          auto m = [&](int xx, int yy) {
            if (xx < 0 || yy < 0 || xx >= mask.w || yy >= mask.h) return false;
            return mask.at(xx, yy, 0) > 0.5f;
          };
          contour = !m(x - 1, y) || !m(x + 1, y) || !m(x, y - 1) || !m(x, y + 1);
        }
        for (int ch = 0; ch < 3; ++ch)
          trip.at(2 * query.w + x, y, ch) = contour ? 1.f : hc[ch];
      }
    save_png(trip, (fs::path(out_dir) / (e.stem + "_triptych.png")).string());
  }
  return skipped;
}

}  // namespace pad
