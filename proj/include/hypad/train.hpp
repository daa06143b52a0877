// Training loop, evaluation and the few-shot / ablation harnesses.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hypad/manifest.hpp"
#include "hypad/metrics.hpp"
#include "hypad/model.hpp"
#include "hypad/optim.hpp"

namespace hypad {

enum class CurvatureMode { Learnable, Fixed };

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t batch_size = 32;  // images per step; every pixel of each image is used
  std::uint64_t seed = 0;
  std::size_t patch = 3;
  std::vector<std::string> levels;  // empty: every level in the dataset
  std::size_t d_out = 128;
  CurvatureMode curvature_mode = CurvatureMode::Learnable;
  double curvature = 1.0;  // initial value, or the fixed value
  AdamConfig adam;
  std::size_t validate_every = 5;
  std::size_t chunk = 512;   // pixels per autodiff tape
  std::size_t threads = 0;   // evaluation workers; 0 = hardware concurrency

  void validate() const;
};

/// One image with its levels aligned on the finest grid.
struct PreparedImage {
  std::string id;
  std::string source;
  int label = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Tensor> levels;
  std::optional<Tensor> pixel_labels;
};

struct PreparedSet {
  std::vector<std::string> levels;
  std::vector<std::size_t> channels;
  std::vector<PreparedImage> images;
};

/// Selects the configured levels and aligns every sample.
PreparedSet prepare(const Dataset& dataset, std::size_t patch, const std::vector<std::string>& levels = {});

/// Pixels of the given images. Images without a mask contribute all-normal
/// pixels when labelled normal; an anomalous image without a mask is an error.
PixelBatch make_batch(const PreparedSet& set, std::span<const std::size_t> images);

struct EvalReport {
  std::optional<double> image_auroc;
  std::optional<double> pixel_auroc;
  std::string image_error;
  std::string pixel_error;
  std::vector<double> image_scores;  // per image, in dataset order
  double runtime_seconds = 0.0;

  bool complete() const { return image_auroc && pixel_auroc; }
};

/// Scores every image in parallel. Pixel AUROC pools the pixels of all images
/// that carry a mask.
EvalReport evaluate(const ModelState& state, const PreparedSet& set, std::size_t threads = 0);

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double curvature = 0.0;
  std::optional<double> val_image_auroc;
  std::optional<double> val_pixel_auroc;
};

std::string to_json(const EpochLog& entry);

struct TrainResult {
  ModelState state;            // after the last epoch
  OptimState optim;
  std::vector<EpochLog> log;
  std::optional<ModelState> best;  // best validation image AUROC
  std::optional<std::size_t> best_epoch;

  const ModelState& selected() const { return best ? *best : state; }
};

struct ResumeState {
  ModelState state;
  OptimState optim;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch training over images with a per-epoch shuffle. Deterministic
/// for a fixed seed and config.
TrainResult train(const PreparedSet& train_set, const TrainConfig& config, const PreparedSet* validation = nullptr,
                  const std::optional<ResumeState>& resume = std::nullopt, const EpochCallback& on_epoch = {});

/// Seeds spaced from a base seed; run k uses derive_seed(base, "run", k).
std::vector<std::uint64_t> run_seeds(std::uint64_t base, std::size_t count);

struct MultiSeedReport {
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> runs;
  std::vector<double> final_losses;
  std::optional<Summary> image;
  std::optional<Summary> pixel;
  double runtime_seconds = 0.0;

  bool finite_losses() const;
};

MultiSeedReport train_and_evaluate(const PreparedSet& train_set, const PreparedSet& test_set, const TrainConfig& config,
                                   std::span<const std::uint64_t> seeds);

/// Images whose source is among the first k distinct sources, in set order.
PreparedSet first_sources(const PreparedSet& set, std::size_t k);
std::size_t count_sources(const PreparedSet& set);

struct FewShotRow {
  std::size_t k = 0;
  MultiSeedReport report;
};

/// One row per k; the training subset depends only on k, never on the seed.
std::vector<FewShotRow> few_shot_harness(const PreparedSet& train_set, const PreparedSet& test_set,
                                         std::span<const std::size_t> ks, std::span<const std::uint64_t> seeds,
                                         const TrainConfig& config);

enum class AblationAxis { Curvature, Patch, Dim };
AblationAxis ablation_axis_from_string(const std::string& name);
std::string to_string(AblationAxis axis);

struct AblationRow {
  std::string axis;
  std::string value;
  MultiSeedReport report;
};

/// Patch-size rows re-align the raw datasets, so the harness takes them
/// unprepared. The curvature axis appends a learnable-curvature row.
std::vector<AblationRow> ablation_harness(const Dataset& train_data, const Dataset& test_data, AblationAxis axis,
                                          std::span<const double> values, std::span<const std::uint64_t> seeds,
                                          const TrainConfig& config);

std::string ablation_csv(std::span<const AblationRow> rows);
std::string few_shot_csv(std::span<const FewShotRow> rows);

}  // namespace hypad
