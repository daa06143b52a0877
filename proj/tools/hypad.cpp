// hypad: command-line driver for synthesis, training, evaluation and the
// experiment harnesses.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "hypad/gradcheck.hpp"
#include "hypad/image_io.hpp"
#include "hypad/synthesis.hpp"
#include "hypad/toy.hpp"
#include "hypad/train.hpp"

namespace fs = std::filesystem;
using namespace hypad;

namespace {

// Exit codes: 1 runtime/data error, 2 usage (from CLI11), 3 undefined metric,
// 4 gradient check failure.
constexpr int kRuntimeError = 1;
constexpr int kUndefinedMetric = 3;
constexpr int kGradcheckFailed = 4;

void configure_logging() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("hypad"));
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("HYPAD_LOG_LEVEL")) {
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && std::string(level) != "off") {
      spdlog::warn("HYPAD_LOG_LEVEL={} not recognised; using info", level);
    } else {
      spdlog::set_level(parsed);
    }
  }
}

struct TrainOptions {
  TrainConfig config;
  std::string curvature_mode = "learnable";

  void add(CLI::App* app) {
    app->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", config.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", config.batch_size, "Images per optimizer step")->capture_default_str();
    app->add_option("--seed", config.seed, "Seed for every random choice")->capture_default_str();
    app->add_option("--patch", config.patch, "Neighbourhood pooling size")->capture_default_str();
    app->add_option("--levels", config.levels, "Feature levels to use (default: all)")->delimiter(',');
    app->add_option("--d-out", config.d_out, "Hyperbolic embedding dimension")->capture_default_str();
    app->add_option("--curvature-mode", curvature_mode, "learnable or fixed")
        ->check(CLI::IsMember({"learnable", "fixed"}))
        ->capture_default_str();
    app->add_option("--curvature", config.curvature, "Initial (learnable) or fixed curvature c")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--adam-beta1", config.adam.beta1)->capture_default_str();
    app->add_option("--adam-beta2", config.adam.beta2)->capture_default_str();
    app->add_option("--adam-epsilon", config.adam.epsilon)->capture_default_str();
    app->add_option("--validate-every", config.validate_every, "Validation interval in epochs (0: never)")
        ->capture_default_str();
    app->add_option("--chunk", config.chunk, "Pixels per autodiff tape")->capture_default_str();
    app->add_option("--threads", config.threads, "Evaluation threads (0: all cores)")->capture_default_str();
  }

  TrainConfig resolved() const {
    TrainConfig c = config;
    c.curvature_mode = curvature_mode == "fixed" ? CurvatureMode::Fixed : CurvatureMode::Learnable;
    c.validate();
    return c;
  }
};

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["image_auroc"] = r.image_auroc ? nlohmann::json(*r.image_auroc) : nlohmann::json();
  j["pixel_auroc"] = r.pixel_auroc ? nlohmann::json(*r.pixel_auroc) : nlohmann::json();
  if (!r.image_error.empty()) j["image_error"] = r.image_error;
  if (!r.pixel_error.empty()) j["pixel_error"] = r.pixel_error;
  j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(path, text);
  }
}

// --- synthesize -------------------------------------------------------------

struct SynthesizeCommand {
  std::string input, output;
  std::uint64_t seed = 0;
  SynthesisConfig config;
  std::string blend = "poisson";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("synthesize", "Create synthetic anomalies for a folder of PNG images");
    app->add_option("--input", input, "Directory of normal PNG images")->required()->check(CLI::ExistingDirectory);
    app->add_option("--output", output, "Output directory")->required();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--area-min", config.area_min)->capture_default_str();
    app->add_option("--area-max", config.area_max)->capture_default_str();
    app->add_option("--patch-min", config.patch_min, "CutPaste side range (0: from area)")->capture_default_str();
    app->add_option("--patch-max", config.patch_max)->capture_default_str();
    app->add_option("--blend", blend)->check(CLI::IsMember({"poisson", "direct"}))->capture_default_str();
    app->add_option("--mix", config.mix, "Weights for cutpaste,gaussian,deformation")->delimiter(',');
    app->add_option("--sigma-min", config.sigma_min)->capture_default_str();
    app->add_option("--sigma-max", config.sigma_max)->capture_default_str();
    app->add_option("--amplitude-min", config.amplitude_min)->capture_default_str();
    app->add_option("--amplitude-max", config.amplitude_max)->capture_default_str();
    app->add_option("--scale-min", config.scale_min)->capture_default_str();
    app->add_option("--scale-max", config.scale_max)->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    config.blend = blend == "direct" ? BlendMode::Direct : BlendMode::Poisson;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no PNG images in " + input);
    std::vector<Tensor> images;
    for (const auto& f : files) images.push_back(read_png(f));
    const auto results = synthesize_batch(images, seed, config);
    const fs::path out(output);
    fs::create_directories(out / "images");
    fs::create_directories(out / "masks");
    fs::create_directories(out / "recipes");
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::string stem = files[i].stem().string();
      write_png(results[i].image, out / "images" / (stem + ".png"));
      write_mask_png(results[i].mask, out / "masks" / (stem + ".png"));
      write_text_atomic(out / "recipes" / (stem + ".json"), recipe_to_json(results[i].recipe) + "\n");
    }
    spdlog::info("wrote {} synthetic anomalies to {}", files.size(), output);
  }
};

// --- train ------------------------------------------------------------------

struct TrainCommand {
  TrainOptions options;
  std::string manifest, validation, output, resume;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "Train the hyperbolic head on a feature manifest");
    app->add_option("--manifest", manifest, "Training manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--val-manifest", validation, "Validation manifest for model selection")
        ->check(CLI::ExistingFile);
    app->add_option("--output", output, "Output directory")->required();
    app->add_option("--resume", resume, "Checkpoint directory to continue from")->check(CLI::ExistingDirectory);
    options.add(app);
    app->callback([this] { run(); });
  }

  void run() {
    const TrainConfig config = options.resolved();
    const PreparedSet train_set = prepare(load_dataset(fs::path(manifest)), config.patch, config.levels);
    std::optional<PreparedSet> val_set;
    if (!validation.empty()) val_set = prepare(load_dataset(fs::path(validation)), config.patch, config.levels);
    std::optional<ResumeState> start;
    if (!resume.empty()) {
      ResumeState r;
      r.state = read_checkpoint(resume, &r.optim);
      start = std::move(r);
      spdlog::info("resuming from {} at step {}", resume, start->optim.step);
    }

    const fs::path out(output);
    fs::create_directories(out);
    std::string log;
    const TrainResult result =
        train(train_set, config, val_set ? &*val_set : nullptr, start, [&](const EpochLog& e) {
          log += to_json(e) + "\n";
          spdlog::info("epoch {} step {} loss {:.6f} c {:.4f}", e.epoch, e.step, e.loss, e.curvature);
        });
    write_text_atomic(out / "train_log.jsonl", log);
    write_checkpoint(out / "checkpoint", result.state, &result.optim);
    if (result.best) {
      write_checkpoint(out / "best", *result.best);
      spdlog::info("best validation image AUROC at epoch {}", *result.best_epoch);
    }
    spdlog::info("checkpoint written to {}", (out / "checkpoint").string());
  }
};

// --- eval -------------------------------------------------------------------

struct EvalCommand {
  std::string checkpoint, manifest, output;
  std::size_t threads = 0;
  int* exit_code = nullptr;

  void add(CLI::App& root, int* code) {
    exit_code = code;
    auto* app = root.add_subcommand("eval", "Evaluate a checkpoint on a test manifest");
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--manifest", manifest, "Test manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--output", output, "Report JSON path (default: stdout)");
    app->add_option("--threads", threads)->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    const ModelState state = read_checkpoint(checkpoint);
    const PreparedSet set = prepare(load_dataset(fs::path(manifest)), state.patch, state.levels);
    const EvalReport report = evaluate(state, set, threads);
    nlohmann::json j = report_json(report);
    for (std::size_t i = 0; i < set.images.size(); ++i) {
      j["images"].push_back({{"id", set.images[i].id}, {"label", set.images[i].label},
                             {"score", report.image_scores[i]}});
    }
    write_output(output, j.dump(2) + "\n");
    if (!report.complete()) {
      if (!report.image_error.empty()) spdlog::error("image AUROC undefined: {}", report.image_error);
      if (!report.pixel_error.empty()) spdlog::error("pixel AUROC undefined: {}", report.pixel_error);
      *exit_code = kUndefinedMetric;
    }
  }
};

// --- ablate / fewshot ---------------------------------------------------------

std::vector<std::uint64_t> seeds_for(const TrainConfig& config, std::size_t count) {
  return run_seeds(config.seed, count);
}

struct AblateCommand {
  TrainOptions options;
  std::string manifest, test_manifest, output, axis;
  std::vector<double> values;
  std::size_t seeds = 5;
  int* exit_code = nullptr;

  void add(CLI::App& root, int* code) {
    exit_code = code;
    auto* app = root.add_subcommand("ablate", "Sweep one hyperparameter and tabulate AUROC");
    app->add_option("--manifest", manifest, "Training manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--test-manifest", test_manifest, "Test manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--axis", axis, "curvature, patch or dim")
        ->required()
        ->check(CLI::IsMember({"curvature", "patch", "dim"}));
    app->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
    app->add_option("--seeds", seeds, "Runs per value")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--output", output, "CSV path (default: stdout)");
    options.add(app);
    app->callback([this] { run(); });
  }

  void run() {
    const TrainConfig config = options.resolved();
    const auto rows = ablation_harness(load_dataset(fs::path(manifest)), load_dataset(fs::path(test_manifest)),
                                       ablation_axis_from_string(axis), values, seeds_for(config, seeds), config);
    write_output(output, ablation_csv(rows));
    for (const auto& row : rows) {
      if (!row.report.image || !row.report.pixel) *exit_code = kUndefinedMetric;
    }
  }
};

struct FewShotCommand {
  TrainOptions options;
  std::string manifest, test_manifest, output;
  std::vector<std::size_t> ks = {1, 3, 5, 10, 25};
  std::size_t seeds = 5;
  int* exit_code = nullptr;

  void add(CLI::App& root, int* code) {
    exit_code = code;
    auto* app = root.add_subcommand("fewshot", "Train on the first K normal sources for several K");
    app->add_option("--manifest", manifest, "Training manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--test-manifest", test_manifest, "Test manifest")->required()->check(CLI::ExistingFile);
    app->add_option("--k", ks, "Comma-separated K values")->delimiter(',')->capture_default_str();
    app->add_option("--seeds", seeds, "Runs per K")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--output", output, "CSV path (default: stdout)");
    options.add(app);
    app->callback([this] { run(); });
  }

  void run() {
    const TrainConfig config = options.resolved();
    const PreparedSet train_set = prepare(load_dataset(fs::path(manifest)), config.patch, config.levels);
    const PreparedSet test_set = prepare(load_dataset(fs::path(test_manifest)), config.patch, config.levels);
    const auto rows = few_shot_harness(train_set, test_set, ks, seeds_for(config, seeds), config);
    write_output(output, few_shot_csv(rows));
    for (const auto& row : rows) {
      if (!row.report.image || !row.report.pixel) *exit_code = kUndefinedMetric;
    }
  }
};

// --- gradcheck / toy ------------------------------------------------------------

struct GradcheckCommand {
  GradcheckOptions options;
  int* exit_code = nullptr;

  void add(CLI::App& root, int* code) {
    exit_code = code;
    auto* app = root.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    app->add_option("--seed", options.seed)->capture_default_str();
    app->add_option("--d-in", options.d_in)->capture_default_str();
    app->add_option("--d-out", options.d_out)->capture_default_str();
    app->add_option("--levels", options.levels)->capture_default_str();
    app->add_option("--batch", options.batch)->capture_default_str();
    app->add_option("--step", options.step)->capture_default_str();
    app->add_option("--tolerance", options.tolerance)->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    const GradcheckResult r = run_gradcheck(options);
    std::cout << (r.passed ? "PASS" : "FAIL") << " gradcheck: " << r.checked
              << " parameters, max relative error " << r.max_relative_error << " at " << r.worst << "\n";
    if (!r.passed) *exit_code = kGradcheckFailed;
  }
};

struct ToyCommand {
  ToyConfig config;
  std::string output;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("toy", "Write a synthetic two-level feature dataset");
    app->add_option("--output", output, "Output directory (train/ and test/ are created)")->required();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--height", config.height)->capture_default_str();
    app->add_option("--width", config.width)->capture_default_str();
    app->add_option("--channels", config.channels)->capture_default_str();
    app->add_option("--sigma", config.sigma)->capture_default_str();
    app->add_option("--offset", config.offset, "Anomaly shift in units of sigma")->capture_default_str();
    app->add_option("--train-sources", config.train_sources)->capture_default_str();
    app->add_option("--test-normal", config.test_normal)->capture_default_str();
    app->add_option("--test-anomalous", config.test_anomalous)->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    const ToyData data = make_toy(config, seed);
    save_dataset(data.train, fs::path(output) / "train");
    save_dataset(data.test, fs::path(output) / "test");
    spdlog::info("wrote {} training and {} test images to {}", data.train.samples.size(), data.test.samples.size(),
                 output);
  }
};

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Hyperbolic anomaly detection on pretrained feature maps"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "INI/TOML file; keys of a [subcommand] section set its flags, flags win");
  app.set_version_flag("--version", "hypad 1.0");

  int exit_code = 0;
  SynthesizeCommand synthesize;
  TrainCommand train_cmd;
  EvalCommand eval;
  AblateCommand ablate;
  FewShotCommand fewshot;
  GradcheckCommand gradcheck;
  ToyCommand toy;
  synthesize.add(app);
  train_cmd.add(app);
  eval.add(app, &exit_code);
  ablate.add(app, &exit_code);
  fewshot.add(app, &exit_code);
  gradcheck.add(app, &exit_code);
  toy.add(app);
  for (auto* sub : app.get_subcommands({})) sub->allow_config_extras(CLI::config_extras_mode::error);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntimeError;
  }
  return exit_code;
}
