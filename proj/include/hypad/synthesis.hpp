// Synthetic anomalies on normal images.
//
// Images are [H][W][C] tensors with values in [0,1]; masks are [H][W] tensors
// with values in {0,1} at full image resolution. Every operation is a pure
// function of (image, recipe); the recipe records the seed and all realised
// shape parameters so that a run can be replayed.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypad/tensor.hpp"

namespace hypad {

enum class SynthesisKind { CutPaste = 0, GaussianIntensity = 1, SourceDeformation = 2 };
enum class BlendMode { Poisson, Direct };

std::string to_string(SynthesisKind kind);
SynthesisKind synthesis_kind_from_string(const std::string& name);

struct Rect {
  std::size_t y = 0, x = 0, h = 0, w = 0;
  bool operator==(const Rect&) const = default;
};

struct Ellipse {
  double cy = 0, cx = 0;  // centre, pixel units
  double ry = 1, rx = 1;  // semi-axes
  double angle = 0;       // radians
};

struct SynthesisRecipe {
  SynthesisKind kind = SynthesisKind::CutPaste;
  std::uint64_t seed = 0;
  // cutpaste
  Rect source, destination;
  BlendMode blend = BlendMode::Poisson;
  // gaussian_intensity and the deformation mask
  Ellipse ellipse;
  double sigma = 0;
  double amplitude = 0;
  // source_deformation
  double scale = 0;
};

struct SynthesisConfig {
  // Anomaly area as a fraction of the image, sampled log-uniformly.
  double area_min = 0.0005;
  double area_max = 0.25;
  // cutpaste patch side length range in pixels; 0 derives it from the area
  // bounds.
  std::size_t patch_min = 0;
  std::size_t patch_max = 0;
  BlendMode blend = BlendMode::Poisson;
  double sigma_min = 1.0, sigma_max = 4.0;
  double amplitude_min = 0.2, amplitude_max = 0.5;
  double scale_min = 0.1, scale_max = 0.5;
  std::array<double, 3> mix = {1.0, 1.0, 1.0};  // cutpaste, gaussian, deformation
  double poisson_tolerance = 1e-5;
  std::size_t poisson_max_sweeps = 10000;
};

struct SynthesisResult {
  Tensor image;
  Tensor mask;
  SynthesisRecipe recipe;
};

struct PoissonStats {
  std::size_t sweeps = 0;
  double residual = 0;  // max |4 f_p - sum_q f_q - b_p| over interior pixels
};

/// Solves the discrete Poisson equation on an h x w single-channel region
/// with red-black Gauss-Seidel. `region` holds Dirichlet values on its border
/// ring and the initial guess inside; on return the interior holds the
/// solution whose Laplacian matches that of `guidance`.
PoissonStats poisson_solve(std::span<double> region, std::span<const double> guidance, std::size_t h,
                           std::size_t w, double tolerance = 1e-5, std::size_t max_sweeps = 10000);

/// Copies the `src` patch of `source` onto the `dst` patch of `target`,
/// Poisson-blended against the target's values on the dst border ring. The
/// result is not clamped.
Tensor poisson_blend(const Tensor& target, const Tensor& source, const Rect& src, const Rect& dst,
                     double tolerance = 1e-5, std::size_t max_sweeps = 10000, PoissonStats* stats = nullptr);

SynthesisResult cutpaste(const Tensor& image, std::uint64_t seed, std::size_t patch_min, std::size_t patch_max,
                         BlendMode blend);

/// a * (G_sigma * 1_E): a Gaussian-smoothed ellipse of amplitude a, computed
/// with a normalised kernel truncated at 3 sigma and zero padding.
Tensor gaussian_blob(std::size_t h, std::size_t w, const Ellipse& ellipse, double sigma, double amplitude);

SynthesisResult gaussian_intensity(const Tensor& image, std::uint64_t seed, double sigma_min, double sigma_max,
                                   double amplitude_min, double amplitude_max, double area_min = 0.0005,
                                   double area_max = 0.25);

/// Resamples the pixels inside `mask` at (y + dy, x + dx) with bilinear
/// interpolation and clamped coordinates; pixels outside stay untouched.
Tensor warp_inside_mask(const Tensor& image, const Tensor& mask, const Tensor& dy, const Tensor& dx);

/// Gaussian-smoothed random displacement with sigma = r/2 and peak magnitude
/// scale * r over the mask, r being the radius of a disc of the mask's area.
std::pair<Tensor, Tensor> deformation_field(const Tensor& mask, std::uint64_t seed, double scale);

SynthesisResult source_deformation(const Tensor& image, std::uint64_t seed, const Tensor& mask, double scale);

Tensor ellipse_mask(std::size_t h, std::size_t w, const Ellipse& ellipse);

/// Re-runs a recorded recipe on `image`.
SynthesisResult apply_recipe(const Tensor& image, const SynthesisRecipe& recipe, const SynthesisConfig& config = {});

/// One recipe per image, kind drawn from `config.mix`; image i uses a seed
/// derived from (seed, i).
std::vector<SynthesisResult> synthesize_batch(const std::vector<Tensor>& images, std::uint64_t seed,
                                              const SynthesisConfig& config = {});

std::string recipe_to_json(const SynthesisRecipe& recipe);
SynthesisRecipe recipe_from_json(const std::string& text);

}  // namespace hypad
