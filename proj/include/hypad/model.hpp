// Trainable hyperbolic head.
//
// Per pixel and level l, a Euclidean feature f_l is lifted onto the
// hyperboloid with exp_O, mapped to a d_out-dimensional hyperboloid by a
// hyperbolic linear layer, and the levels are fused by a Lorentzian centroid
// weighted with each point's Poincare-ball radius. A hyperplane w then gives
// the logit and p = 1 / (1 + exp(logit)) is the anomaly probability.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hypad/autodiff.hpp"
#include "hypad/geometry.hpp"

namespace hypad {

struct ModelState {
  std::vector<std::string> levels;
  std::vector<std::size_t> d_in;  // per level
  std::size_t d_out = 128;
  std::vector<Vector> projections;  // per level, row-major [d_out][d_in[l]]
  Vector hyperplane;                // d_out + 1
  double log_c = 0.0;
  bool learn_curvature = true;
  std::size_t patch = 3;  // neighbourhood size the features were pooled with

  Curvature curvature() const { return Curvature::from_log(log_c); }
  /// Throws when shapes disagree or any entry is non-finite.
  void validate() const;
};

/// W_l ~ U[-1/sqrt(d_in), 1/sqrt(d_in)]; w = (0, unit random space part).
ModelState init_model(std::vector<std::string> levels, std::vector<std::size_t> d_in, std::size_t d_out,
                      std::uint64_t seed, double initial_c = 1.0, bool learn_curvature = true);

/// Draws a fresh unit space part for w when <w,w>_L <= threshold. Returns
/// true if w was replaced.
bool revalidate_hyperplane(Vector& w, std::uint64_t seed, double threshold = 1e-9);

// Single-point building blocks (binary64, no tape).

LorentzPoint lift(std::span<const double> feature, Curvature c);
/// Space part W z_space, time component recomputed on the m-dimensional
/// hyperboloid.
LorentzPoint hyperbolic_linear(const LorentzPoint& z, std::span<const double> matrix, std::size_t rows,
                               std::size_t cols);
Vector confidence_weights(std::span<const LorentzPoint> points);
/// Centroid with confidence weights; all-zero weights fall back to uniform.
LorentzPoint fuse(std::span<const LorentzPoint> points, std::span<const double> weights);

/// Pixels to classify: B pixels x |L| levels, each a view into feature
/// storage owned elsewhere.
struct PixelBatch {
  std::size_t num_levels = 0;
  std::vector<std::span<const double>> features;  // row-major [B][|L|]
  std::vector<int> labels;                        // 1 = anomalous

  std::size_t size() const { return num_levels == 0 ? 0 : features.size() / num_levels; }
  std::span<const std::span<const double>> pixel(std::size_t b) const {
    return std::span<const std::span<const double>>(features).subspan(b * num_levels, num_levels);
  }
};

/// Fused point of one pixel.
LorentzPoint embed(std::span<const std::span<const double>> levels, const ModelState& state);
double pixel_logit(std::span<const std::span<const double>> levels, const ModelState& state);

std::vector<double> forward_logits(const PixelBatch& batch, const ModelState& state);
std::vector<double> forward(const PixelBatch& batch, const ModelState& state);

/// mean_{y=1} -log p + mean_{y=0} -log(1-p); an absent class contributes 0.
double bce_loss(std::span<const double> probabilities, std::span<const int> labels);
/// The same loss evaluated from logits with softplus.
double bce_loss_from_logits(std::span<const double> logits, std::span<const int> labels);

/// Image-level score from its pixel probabilities (maximum).
double image_score(std::span<const double> pixel_probabilities);

// Differentiable path.

struct ParameterVars {
  std::vector<ad::Var> projections;
  ad::Var hyperplane;
  ad::Var log_c;  // a constant node when the curvature is fixed
};

/// Registers the model parameters on `tape` (projections, hyperplane and,
/// when learnable, log_c, in that order).
ParameterVars register_parameters(ad::Tape& tape, const ModelState& state);

/// Logit node of one pixel.
ad::Var pixel_logit(ad::Tape& tape, const ParameterVars& params, const ModelState& state,
                    std::span<const std::span<const double>> levels);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<Vector> projection_grads;
  Vector hyperplane_grad;
  double log_c_grad = 0.0;
};

/// Loss of the batch and its gradient with respect to every parameter. Pixels
/// are processed in chunks with one tape each; the class means make the loss
/// a fixed linear combination of per-pixel terms, so chunk gradients add up.
LossAndGradient loss_and_gradient(const PixelBatch& batch, const ModelState& state, std::size_t chunk = 512);

// Checkpoints: a directory holding header.json and one FTNS file per tensor.

struct OptimState;

void write_checkpoint(const std::filesystem::path& dir, const ModelState& state, const OptimState* optim = nullptr);
ModelState read_checkpoint(const std::filesystem::path& dir, OptimState* optim = nullptr);

}  // namespace hypad
