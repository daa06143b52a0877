#include "hypad/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "hypad/random.hpp"

namespace hypad {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

template <typename Fn>
void parallel_for(std::size_t jobs, std::size_t threads, Fn&& fn) {
  const std::size_t workers = worker_count(threads, jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double training_loss(const ModelState& state, const PreparedSet& set) {
  std::vector<std::size_t> all(set.images.size());
  std::iota(all.begin(), all.end(), 0);
  const PixelBatch batch = make_batch(set, all);
  return bce_loss_from_logits(forward_logits(batch, state), batch.labels);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be positive");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  if (patch == 0) throw ParameterError("patch size must be positive");
  if (d_out == 0) throw ParameterError("d_out must be positive");
  if (!(curvature > 0.0) || !std::isfinite(curvature)) throw ParameterError("curvature must be positive");
  if (chunk == 0) throw ParameterError("chunk must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
    throw ParameterError("invalid Adam hyperparameters");
  }
}

PreparedSet prepare(const Dataset& dataset, std::size_t patch, const std::vector<std::string>& levels) {
  if (dataset.samples.empty()) throw ParameterError("dataset has no images");
  std::vector<std::size_t> picked;
  PreparedSet out;
  if (levels.empty()) {
    picked.resize(dataset.levels.size());
    std::iota(picked.begin(), picked.end(), 0);
  } else {
    for (const auto& name : levels) {
      const auto it = std::find(dataset.levels.begin(), dataset.levels.end(), name);
      if (it == dataset.levels.end()) throw ParameterError("dataset has no level named " + name);
      picked.push_back(static_cast<std::size_t>(it - dataset.levels.begin()));
    }
  }
  const auto channels = dataset.channels();
  for (std::size_t i : picked) {
    out.levels.push_back(dataset.levels[i]);
    out.channels.push_back(channels[i]);
  }
  out.images.reserve(dataset.samples.size());
  for (const Sample& s : dataset.samples) {
    FeatureStack stack;
    stack.source_id = s.source;
    for (std::size_t i : picked) {
      stack.levels.push_back(s.features.levels[i]);
      stack.level_names.push_back(dataset.levels[i]);
    }
    AlignedFeatures aligned = align_features(stack, patch, s.mask);
    PreparedImage img;
    img.id = s.id;
    img.source = s.source;
    img.label = s.label;
    img.height = aligned.height;
    img.width = aligned.width;
    img.levels = std::move(aligned.levels);
    img.pixel_labels = std::move(aligned.labels);
    out.images.push_back(std::move(img));
  }
  return out;
}

PixelBatch make_batch(const PreparedSet& set, std::span<const std::size_t> images) {
  PixelBatch batch;
  batch.num_levels = set.levels.size();
  for (std::size_t index : images) {
    const PreparedImage& img = set.images.at(index);
    if (!img.pixel_labels && img.label != 0) {
      throw ParameterError("image " + img.id + " is anomalous but has no mask");
    }
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        for (const Tensor& level : img.levels) batch.features.push_back(level.pixel(y, x));
        batch.labels.push_back(img.pixel_labels && img.pixel_labels->at(y, x) >= 0.5 ? 1 : 0);
      }
    }
  }
  return batch;
}

EvalReport evaluate(const ModelState& state, const PreparedSet& set, std::size_t threads) {
  const auto start = Clock::now();
  state.validate();
  if (set.channels != state.d_in) {
    throw DimensionError("model expects " + std::to_string(state.d_in.size()) +
                         " levels with its own channel counts; the dataset does not match");
  }
  const std::size_t n = set.images.size();
  std::vector<std::vector<double>> probabilities(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const std::size_t one[] = {i};
    probabilities[i] = forward(make_batch(set, one), state);
  });

  EvalReport report;
  std::vector<int> image_labels;
  std::vector<double> pixel_scores;
  std::vector<int> pixel_labels;
  for (std::size_t i = 0; i < n; ++i) {
    const PreparedImage& img = set.images[i];
    report.image_scores.push_back(image_score(probabilities[i]));
    image_labels.push_back(img.label);
    if (img.pixel_labels) {
      pixel_scores.insert(pixel_scores.end(), probabilities[i].begin(), probabilities[i].end());
      for (double v : img.pixel_labels->values()) pixel_labels.push_back(v >= 0.5 ? 1 : 0);
    }
  }
  try {
    report.image_auroc = auroc(report.image_scores, image_labels);
  } catch (const UndefinedMetricError& e) {
    report.image_error = e.what();
  }
  try {
    if (pixel_scores.empty()) throw UndefinedMetricError("auroc: no image carries a mask");
    report.pixel_auroc = auroc(pixel_scores, pixel_labels);
  } catch (const UndefinedMetricError& e) {
    report.pixel_error = e.what();
  }
  report.runtime_seconds = seconds_since(start);
  return report;
}

std::string to_json(const EpochLog& entry) {
  nlohmann::json j;
  j["epoch"] = entry.epoch;
  j["step"] = entry.step;
  j["loss"] = entry.loss;
  j["c"] = entry.curvature;
  j["val_image_auroc"] = entry.val_image_auroc ? nlohmann::json(*entry.val_image_auroc) : nlohmann::json();
  j["val_pixel_auroc"] = entry.val_pixel_auroc ? nlohmann::json(*entry.val_pixel_auroc) : nlohmann::json();
  return j.dump();
}

TrainResult train(const PreparedSet& train_set, const TrainConfig& config, const PreparedSet* validation,
                  const std::optional<ResumeState>& resume, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.images.empty()) throw ParameterError("training set has no images");
  const bool learn_c = config.curvature_mode == CurvatureMode::Learnable;

  TrainResult result;
  if (resume) {
    result.state = resume->state;
    result.optim = resume->optim;
    if (result.state.d_in != train_set.channels || result.state.levels != train_set.levels) {
      throw DimensionError("checkpoint levels or channels do not match the training data");
    }
    result.state.learn_curvature = learn_c;
    if (!learn_c) result.state.log_c = std::log(config.curvature);
  } else {
    result.state = init_model(train_set.levels, train_set.channels, config.d_out, config.seed, config.curvature, learn_c);
    result.optim.config = config.adam;
  }
  result.state.patch = config.patch;
  ModelState& state = result.state;
  OptimState& optim = result.optim;

  const std::size_t n = train_set.images.size();
  std::vector<std::size_t> order(n);
  std::optional<double> best_auroc;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(config.seed, "shuffle", optim.step));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const PixelBatch batch = make_batch(train_set, std::span(order).subspan(begin, end - begin));
      LossAndGradient g = loss_and_gradient(batch, state, config.chunk);
      if (!std::isfinite(g.loss)) {
        throw std::runtime_error("non-finite loss at step " + std::to_string(optim.step + 1));
      }

      std::vector<Vector*> params;
      std::vector<Vector> grads;
      for (std::size_t l = 0; l < state.projections.size(); ++l) {
        params.push_back(&state.projections[l]);
        grads.push_back(std::move(g.projection_grads[l]));
      }
      params.push_back(&state.hyperplane);
      grads.push_back(std::move(g.hyperplane_grad));
      Vector log_c{state.log_c};
      if (learn_c) {
        params.push_back(&log_c);
        grads.push_back(Vector{g.log_c_grad});
      }
      adam_step(params, grads, optim, config.lr);
      state.log_c = log_c[0];
      if (revalidate_hyperplane(state.hyperplane, derive_seed(config.seed, "hyperplane", optim.step))) {
        spdlog::warn("hyperplane normal left the spacelike region at step {}; re-drawn", optim.step);
      }
      loss_sum += g.loss;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.step = optim.step;
    entry.loss = loss_sum / static_cast<double>(batches);
    entry.curvature = state.curvature().value();
    const bool validate_now =
        validation && config.validate_every > 0 && (epoch % config.validate_every == 0 || epoch == config.epochs);
    if (validate_now) {
      const EvalReport report = evaluate(state, *validation, config.threads);
      entry.val_image_auroc = report.image_auroc;
      entry.val_pixel_auroc = report.pixel_auroc;
      if (report.image_auroc && (!best_auroc || *report.image_auroc > *best_auroc)) {
        best_auroc = report.image_auroc;
        result.best = state;
        result.best_epoch = epoch;
      }
    }
    spdlog::debug("epoch {} step {} loss {:.6f} c {:.4f}", epoch, entry.step, entry.loss, entry.curvature);
    if (on_epoch) on_epoch(entry);
    result.log.push_back(entry);
  }
  return result;
}

std::vector<std::uint64_t> run_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < count; ++k) seeds.push_back(derive_seed(base, "run", k));
  return seeds;
}

bool MultiSeedReport::finite_losses() const {
  return !final_losses.empty() &&
         std::all_of(final_losses.begin(), final_losses.end(), [](double v) { return std::isfinite(v); });
}

MultiSeedReport train_and_evaluate(const PreparedSet& train_set, const PreparedSet& test_set, const TrainConfig& config,
                                   std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ParameterError("at least one seed is required");
  const auto start = Clock::now();
  MultiSeedReport out;
  std::vector<double> image, pixel;
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = config;
    cfg.seed = seed;
    out.seeds.push_back(seed);
    try {
      const TrainResult r = train(train_set, cfg);
      out.final_losses.push_back(r.log.empty() ? training_loss(r.state, train_set) : r.log.back().loss);
      out.runs.push_back(evaluate(r.state, test_set, cfg.threads));
    } catch (const std::runtime_error& e) {
      spdlog::error("seed {}: {}", seed, e.what());
      out.final_losses.push_back(std::numeric_limits<double>::quiet_NaN());
      EvalReport failed;
      failed.image_error = failed.pixel_error = e.what();
      out.runs.push_back(failed);
    }
    if (out.runs.back().image_auroc) image.push_back(*out.runs.back().image_auroc);
    if (out.runs.back().pixel_auroc) pixel.push_back(*out.runs.back().pixel_auroc);
  }
  if (image.size() == seeds.size()) out.image = summarize(image);
  if (pixel.size() == seeds.size()) out.pixel = summarize(pixel);
  out.runtime_seconds = seconds_since(start);
  return out;
}

std::size_t count_sources(const PreparedSet& set) {
  std::set<std::string> sources;
  for (const auto& img : set.images) sources.insert(img.source);
  return sources.size();
}

PreparedSet first_sources(const PreparedSet& set, std::size_t k) {
  if (k == 0) throw ParameterError("k must be positive");
  std::vector<std::string> chosen;
  for (const auto& img : set.images) {
    if (chosen.size() == k) break;
    if (std::find(chosen.begin(), chosen.end(), img.source) == chosen.end()) chosen.push_back(img.source);
  }
  if (chosen.size() < k) {
    throw ParameterError("requested " + std::to_string(k) + " normal images but only " +
                         std::to_string(chosen.size()) + " are available");
  }
  PreparedSet out;
  out.levels = set.levels;
  out.channels = set.channels;
  for (const auto& img : set.images) {
    if (std::find(chosen.begin(), chosen.end(), img.source) != chosen.end()) out.images.push_back(img);
  }
  return out;
}

std::vector<FewShotRow> few_shot_harness(const PreparedSet& train_set, const PreparedSet& test_set,
                                         std::span<const std::size_t> ks, std::span<const std::uint64_t> seeds,
                                         const TrainConfig& config) {
  const std::size_t available = count_sources(train_set);
  for (std::size_t k : ks) {
    if (k == 0 || k > available) {
      throw ParameterError("few-shot k=" + std::to_string(k) + " outside [1, " + std::to_string(available) + "]");
    }
  }
  std::vector<FewShotRow> rows;
  for (std::size_t k : ks) {
    spdlog::info("few-shot k={}", k);
    rows.push_back({k, train_and_evaluate(first_sources(train_set, k), test_set, config, seeds)});
  }
  return rows;
}

AblationAxis ablation_axis_from_string(const std::string& name) {
  if (name == "curvature") return AblationAxis::Curvature;
  if (name == "patch") return AblationAxis::Patch;
  if (name == "dim") return AblationAxis::Dim;
  throw ParameterError("unknown ablation axis '" + name + "' (expected curvature, patch or dim)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::Curvature: return "curvature";
    case AblationAxis::Patch: return "patch";
    case AblationAxis::Dim: return "dim";
  }
  return "?";
}

std::vector<AblationRow> ablation_harness(const Dataset& train_data, const Dataset& test_data, AblationAxis axis,
                                          std::span<const double> values, std::span<const std::uint64_t> seeds,
                                          const TrainConfig& config) {
  if (values.empty()) throw ParameterError("ablation needs at least one value");
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError("ablation values must be positive");
    if (axis != AblationAxis::Curvature && v != std::floor(v)) {
      throw ParameterError(to_string(axis) + " values must be integers");
    }
  }
  std::optional<PreparedSet> train_set, test_set;
  if (axis != AblationAxis::Patch) {
    train_set = prepare(train_data, config.patch, config.levels);
    test_set = prepare(test_data, config.patch, config.levels);
  }

  std::vector<AblationRow> rows;
  const auto run = [&](TrainConfig cfg, const std::string& value) {
    spdlog::info("ablation {}={}", to_string(axis), value);
    if (axis == AblationAxis::Patch) {
      rows.push_back({to_string(axis), value,
                      train_and_evaluate(prepare(train_data, cfg.patch, cfg.levels),
                                         prepare(test_data, cfg.patch, cfg.levels), cfg, seeds)});
    } else {
      rows.push_back({to_string(axis), value, train_and_evaluate(*train_set, *test_set, cfg, seeds)});
    }
  };
  for (double v : values) {
    TrainConfig cfg = config;
    switch (axis) {
      case AblationAxis::Curvature:
        cfg.curvature_mode = CurvatureMode::Fixed;
        cfg.curvature = v;
        break;
      case AblationAxis::Patch: cfg.patch = static_cast<std::size_t>(v); break;
      case AblationAxis::Dim: cfg.d_out = static_cast<std::size_t>(v); break;
    }
    run(cfg, format_value(v));
  }
  if (axis == AblationAxis::Curvature) {
    TrainConfig cfg = config;
    cfg.curvature_mode = CurvatureMode::Learnable;
    run(cfg, "learnable");
  }
  return rows;
}

namespace {

const char* kMetricColumns =
    "seeds,image_auroc_mean,image_auroc_min,image_auroc_max,pixel_auroc_mean,pixel_auroc_min,pixel_auroc_max,"
    "final_loss_mean,finite_losses,runtime_s";

std::string metric_cells(const MultiSeedReport& r) {
  std::ostringstream out;
  out << r.seeds.size();
  for (const auto& s : {r.image, r.pixel}) {
    if (s) {
      out << ',' << format_double(s->mean) << ',' << format_double(s->min) << ',' << format_double(s->max);
    } else {
      out << ",,,";
    }
  }
  const double loss = std::accumulate(r.final_losses.begin(), r.final_losses.end(), 0.0) /
                      static_cast<double>(std::max<std::size_t>(1, r.final_losses.size()));
  out << ',' << format_double(loss) << ',' << (r.finite_losses() ? "true" : "false") << ','
      << format_double(r.runtime_seconds);
  return out.str();
}

}  // namespace

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = std::string("axis,value,") + kMetricColumns + "\n";
  for (const auto& row : rows) out += row.axis + "," + row.value + "," + metric_cells(row.report) + "\n";
  return out;
}

std::string few_shot_csv(std::span<const FewShotRow> rows) {
  std::string out = std::string("k,") + kMetricColumns + "\n";
  for (const auto& row : rows) out += std::to_string(row.k) + "," + metric_cells(row.report) + "\n";
  return out;
}

}  // namespace hypad
