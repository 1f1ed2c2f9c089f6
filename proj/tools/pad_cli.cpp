#include <iostream>

#include <CLI11.hpp>

#include "pad/pipeline.hpp"

// exit codes: 0 ok, 1 usage, 2 missing prerequisite, 3 runtime failure
int main(int argc, char** argv) {
  CLI::App app{"pose-agnostic anomaly detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "run configuration (JSON)")->required();
  app.add_flag("-q,--quiet", quiet, "suppress progress notes");

  const std::vector<std::string> stages = {"generate", "train",    "detect", "evaluate",
                                           "study",    "heatmaps", "all"};
  for (const auto& s : stages) app.add_subcommand(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    pad::RunConfig config = pad::load_run_config(config_path);
    pad::PipelineLog log{!quiet};
    for (const auto& s : stages)
      if (app.got_subcommand(s)) pad::run_pipeline(config, pad::stage_from_name(s), log);
    return 0;
  } catch (const pad::MissingPrerequisite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
