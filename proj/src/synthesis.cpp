#include "hypad/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "json.hpp"

#include "hypad/features.hpp"
#include "hypad/random.hpp"

namespace hypad {

namespace {

using Rng = std::mt19937_64;

void require_image(const Tensor& img) {
  if (img.ndim() != 3 || (img.dim(2) != 1 && img.dim(2) != 3)) {
    throw ParameterError("expected an [H][W][C] image with C in {1,3}");
  }
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(uniform(rng, std::log(lo), std::log(hi))); }

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable convolution of an [H][W] field with zero padding.
Tensor convolve(const Tensor& field, const std::vector<double>& kernel) {
  const std::size_t h = field.dim(0), w = field.dim(1);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  Tensor tmp({h, w}, DType::F64), out({h, w}, DType::F64);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto xx = static_cast<std::ptrdiff_t>(x) + k;
        if (xx >= 0 && xx < static_cast<std::ptrdiff_t>(w)) {
          s += kernel[static_cast<std::size_t>(k + radius)] * field.at(y, static_cast<std::size_t>(xx));
        }
      }
      tmp.at(y, x) = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const auto yy = static_cast<std::ptrdiff_t>(y) + k;
        if (yy >= 0 && yy < static_cast<std::ptrdiff_t>(h)) {
          s += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(static_cast<std::size_t>(yy), x);
        }
      }
      out.at(y, x) = s;
    }
  }
  return out;
}

Ellipse random_ellipse(Rng& rng, std::size_t h, std::size_t w, double area_min, double area_max) {
  const double area = log_uniform(rng, area_min, area_max) * static_cast<double>(h * w);
  const double aspect = log_uniform(rng, 0.5, 2.0);
  Ellipse e;
  e.ry = std::max(0.5, std::sqrt(area / (std::numbers::pi * aspect)));
  e.rx = std::max(0.5, e.ry * aspect);
  e.angle = uniform(rng, 0.0, std::numbers::pi);
  const double reach = std::max(e.ry, e.rx);
  const auto centre = [&](std::size_t n) {
    const double lo = reach, hi = static_cast<double>(n) - 1.0 - reach;
    return hi > lo ? uniform(rng, lo, hi) : 0.5 * (static_cast<double>(n) - 1.0);
  };
  e.cy = centre(h);
  e.cx = centre(w);
  return e;
}

Rect random_patch(Rng& rng, std::size_t h, std::size_t w, std::size_t side_min, std::size_t side_max) {
  Rect r;
  r.h = uniform_index(rng, side_min, side_max);
  r.w = uniform_index(rng, side_min, side_max);
  r.y = uniform_index(rng, 0, h - r.h);
  r.x = uniform_index(rng, 0, w - r.w);
  return r;
}

SynthesisResult cutpaste_with(const Tensor& image, const Rect& src, const Rect& dst, BlendMode blend,
                              double tolerance, std::size_t max_sweeps) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (src.h != dst.h || src.w != dst.w) throw ParameterError("cutpaste: source and destination sizes differ");
  if (src.y + src.h > h || src.x + src.w > w || dst.y + dst.h > h || dst.x + dst.w > w) {
    throw ParameterError("cutpaste: patch does not fit inside the image");
  }
  Tensor out;
  if (blend == BlendMode::Poisson) {
    out = poisson_blend(image, image, src, dst, tolerance, max_sweeps);
  } else {
    out = image;
    for (std::size_t y = 0; y < dst.h; ++y)
      for (std::size_t x = 0; x < dst.w; ++x)
        for (std::size_t k = 0; k < c; ++k) out.at(dst.y + y, dst.x + x, k) = image.at(src.y + y, src.x + x, k);
  }
  for (std::size_t y = dst.y; y < dst.y + dst.h; ++y)
    for (std::size_t x = dst.x; x < dst.x + dst.w; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = std::clamp(out.at(y, x, k), 0.0, 1.0);

  Tensor mask({h, w}, DType::U8);
  for (std::size_t y = dst.y; y < dst.y + dst.h; ++y)
    for (std::size_t x = dst.x; x < dst.x + dst.w; ++x) mask.at(y, x) = 1.0;

  SynthesisRecipe recipe;
  recipe.kind = SynthesisKind::CutPaste;
  recipe.source = src;
  recipe.destination = dst;
  recipe.blend = blend;
  return {std::move(out), std::move(mask), recipe};
}

SynthesisResult gaussian_with(const Tensor& image, const Ellipse& ellipse, double sigma, double amplitude) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const Tensor delta = gaussian_blob(h, w, ellipse, sigma, amplitude);
  Tensor out = image;
  Tensor mask({h, w}, DType::U8);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d = delta.at(y, x);
      if (std::abs(d) <= 0.01) continue;
      mask.at(y, x) = 1.0;
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = std::clamp(image.at(y, x, k) + d, 0.0, 1.0);
    }
  }
  SynthesisRecipe recipe;
  recipe.kind = SynthesisKind::GaussianIntensity;
  recipe.ellipse = ellipse;
  recipe.sigma = sigma;
  recipe.amplitude = amplitude;
  return {std::move(out), std::move(mask), recipe};
}

std::pair<std::size_t, std::size_t> patch_range(const SynthesisConfig& cfg, std::size_t h, std::size_t w) {
  const std::size_t limit = std::min(h, w);
  std::size_t lo = cfg.patch_min, hi = cfg.patch_max;
  if (lo == 0) lo = static_cast<std::size_t>(std::ceil(std::sqrt(cfg.area_min * static_cast<double>(h * w))));
  if (hi == 0) hi = static_cast<std::size_t>(std::floor(std::sqrt(cfg.area_max * static_cast<double>(h * w))));
  lo = std::clamp<std::size_t>(lo, 3, limit);
  hi = std::clamp<std::size_t>(hi, lo, limit);
  return {lo, hi};
}

}  // namespace

std::string to_string(SynthesisKind kind) {
  switch (kind) {
    case SynthesisKind::CutPaste: return "cutpaste";
    case SynthesisKind::GaussianIntensity: return "gaussian_intensity";
    case SynthesisKind::SourceDeformation: return "source_deformation";
  }
  return "?";
}

SynthesisKind synthesis_kind_from_string(const std::string& name) {
  if (name == "cutpaste") return SynthesisKind::CutPaste;
  if (name == "gaussian_intensity") return SynthesisKind::GaussianIntensity;
  if (name == "source_deformation") return SynthesisKind::SourceDeformation;
  throw ParameterError("unknown synthesis kind '" + name + "'");
}

PoissonStats poisson_solve(std::span<double> region, std::span<const double> guidance, std::size_t h,
                           std::size_t w, double tolerance, std::size_t max_sweeps) {
  if (region.size() != h * w || guidance.size() != h * w) throw ParameterError("poisson_solve: size mismatch");
  PoissonStats stats;
  if (h < 3 || w < 3) return stats;  // no interior

  std::vector<double> rhs(h * w, 0.0);
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const std::size_t i = y * w + x;
      rhs[i] = 4.0 * guidance[i] - guidance[i - 1] - guidance[i + 1] - guidance[i - w] - guidance[i + w];
    }
  }
  const auto residual = [&] {
    double r = 0.0;
    for (std::size_t y = 1; y + 1 < h; ++y) {
      for (std::size_t x = 1; x + 1 < w; ++x) {
        const std::size_t i = y * w + x;
        r = std::max(r, std::abs(4.0 * region[i] - region[i - 1] - region[i + 1] - region[i - w] - region[i + w] -
                                 rhs[i]));
      }
    }
    return r;
  };

  stats.residual = residual();
  while (stats.residual >= tolerance && stats.sweeps < max_sweeps) {
    for (std::size_t colour = 0; colour < 2; ++colour) {
      for (std::size_t y = 1; y + 1 < h; ++y) {
        for (std::size_t x = 1 + ((y + colour) & 1U); x + 1 < w; x += 2) {
          const std::size_t i = y * w + x;
          region[i] = 0.25 * (region[i - 1] + region[i + 1] + region[i - w] + region[i + w] + rhs[i]);
        }
      }
    }
    ++stats.sweeps;
    stats.residual = residual();
  }
  return stats;
}

Tensor poisson_blend(const Tensor& target, const Tensor& source, const Rect& src, const Rect& dst, double tolerance,
                     std::size_t max_sweeps, PoissonStats* stats) {
  require_image(target);
  require_image(source);
  const std::size_t c = target.dim(2);
  if (source.dim(2) != c) throw ParameterError("poisson_blend: channel mismatch");
  if (src.h != dst.h || src.w != dst.w) throw ParameterError("poisson_blend: source and destination sizes differ");
  if (src.y + src.h > source.dim(0) || src.x + src.w > source.dim(1) || dst.y + dst.h > target.dim(0) ||
      dst.x + dst.w > target.dim(1)) {
    throw ParameterError("poisson_blend: patch does not fit inside the image");
  }
  Tensor out = target;
  std::vector<double> region(dst.h * dst.w), guide(dst.h * dst.w);
  PoissonStats worst;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < dst.h; ++y) {
      for (std::size_t x = 0; x < dst.w; ++x) {
        const bool border = y == 0 || x == 0 || y + 1 == dst.h || x + 1 == dst.w;
        const double s = source.at(src.y + y, src.x + x, k);
        guide[y * dst.w + x] = s;
        region[y * dst.w + x] = border ? target.at(dst.y + y, dst.x + x, k) : s;
      }
    }
    const PoissonStats st = poisson_solve(region, guide, dst.h, dst.w, tolerance, max_sweeps);
    worst.sweeps = std::max(worst.sweeps, st.sweeps);
    worst.residual = std::max(worst.residual, st.residual);
    for (std::size_t y = 0; y < dst.h; ++y)
      for (std::size_t x = 0; x < dst.w; ++x) out.at(dst.y + y, dst.x + x, k) = region[y * dst.w + x];
  }
  if (stats) *stats = worst;
  return out;
}

SynthesisResult cutpaste(const Tensor& image, std::uint64_t seed, std::size_t patch_min, std::size_t patch_max,
                         BlendMode blend) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (patch_min < 1 || patch_min > patch_max) throw ParameterError("cutpaste: invalid patch size range");
  if (patch_max > std::min(h, w)) throw ParameterError("cutpaste: patch larger than image");
  Rng rng(seed);
  const Rect src = random_patch(rng, h, w, patch_min, patch_max);
  Rect dst = src;
  for (int attempt = 0; attempt < 16 && dst.y == src.y && dst.x == src.x; ++attempt) {
    dst.y = uniform_index(rng, 0, h - dst.h);
    dst.x = uniform_index(rng, 0, w - dst.w);
  }
  SynthesisResult r = cutpaste_with(image, src, dst, blend, 1e-5, 10000);
  r.recipe.seed = seed;
  return r;
}

Tensor ellipse_mask(std::size_t h, std::size_t w, const Ellipse& e) {
  Tensor mask({h, w}, DType::U8);
  const double ca = std::cos(e.angle), sa = std::sin(e.angle);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - e.cy, dx = static_cast<double>(x) - e.cx;
      const double u = (dx * ca + dy * sa) / e.rx, v = (-dx * sa + dy * ca) / e.ry;
      if (u * u + v * v <= 1.0) mask.at(y, x) = 1.0;
    }
  }
  // The pixel nearest the centre always belongs to the ellipse.
  const auto iy = static_cast<std::size_t>(std::clamp(std::lround(e.cy), 0L, static_cast<long>(h) - 1));
  const auto ix = static_cast<std::size_t>(std::clamp(std::lround(e.cx), 0L, static_cast<long>(w) - 1));
  mask.at(iy, ix) = 1.0;
  return mask;
}

Tensor gaussian_blob(std::size_t h, std::size_t w, const Ellipse& ellipse, double sigma, double amplitude) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_blob: sigma must be positive");
  Tensor field = ellipse_mask(h, w, ellipse);
  field.set_dtype(DType::F64);
  Tensor blob = convolve(field, gaussian_kernel(sigma));
  for (double& v : blob.data()) v *= amplitude;
  return blob;
}

SynthesisResult gaussian_intensity(const Tensor& image, std::uint64_t seed, double sigma_min, double sigma_max,
                                   double amplitude_min, double amplitude_max, double area_min, double area_max) {
  require_image(image);
  if (!(sigma_min > 0.0) || sigma_max < sigma_min) throw ParameterError("gaussian_intensity: invalid sigma range");
  Rng rng(seed);
  const Ellipse e = random_ellipse(rng, image.dim(0), image.dim(1), area_min, area_max);
  const double sigma = uniform(rng, sigma_min, sigma_max);
  double amplitude = uniform(rng, amplitude_min, amplitude_max);
  if (std::bernoulli_distribution(0.5)(rng)) amplitude = -amplitude;
  SynthesisResult r = gaussian_with(image, e, sigma, amplitude);
  r.recipe.seed = seed;
  return r;
}

Tensor warp_inside_mask(const Tensor& image, const Tensor& mask, const Tensor& dy, const Tensor& dx) {
  require_image(image);
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (mask.shape() != std::vector<std::size_t>{h, w} || dy.shape() != mask.shape() || dx.shape() != mask.shape()) {
    throw ParameterError("warp_inside_mask: mask and displacement must be [H][W] like the image");
  }
  Tensor out = image;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x) <= 0.0) continue;
      const double sy = std::clamp(static_cast<double>(y) + dy.at(y, x), 0.0, static_cast<double>(h - 1));
      const double sx = std::clamp(static_cast<double>(x) + dx.at(y, x), 0.0, static_cast<double>(w - 1));
      const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      for (std::size_t k = 0; k < c; ++k) {
        const double a = image.at(y0, x0, k), b = image.at(y0, x1, k);
        const double d = image.at(y1, x0, k), e = image.at(y1, x1, k);
        const double top = a + fx * (b - a), bottom = d + fx * (e - d);
        out.at(y, x, k) = std::clamp(top + fy * (bottom - top), 0.0, 1.0);
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> deformation_field(const Tensor& mask, std::uint64_t seed, double scale) {
  if (mask.ndim() != 2) throw ParameterError("deformation_field: expected an [H][W] mask");
  if (!(scale >= 0.0)) throw ParameterError("deformation_field: scale must be >= 0");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  double area = 0.0;
  for (double v : mask.data()) area += v > 0.0 ? 1.0 : 0.0;
  if (area == 0.0) throw ParameterError("deformation_field: mask is empty");
  const double radius = std::sqrt(area / std::numbers::pi);

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Tensor ny({h, w}, DType::F64), nx({h, w}, DType::F64);
  for (double& v : ny.data()) v = normal(rng);
  for (double& v : nx.data()) v = normal(rng);
  const auto kernel = gaussian_kernel(std::max(0.5, radius / 2.0));
  Tensor fy = convolve(ny, kernel), fx = convolve(nx, kernel);

  double peak = 0.0;
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    if (mask.data()[i] > 0.0) peak = std::max(peak, std::hypot(fy.data()[i], fx.data()[i]));
  }
  const double gain = peak > 0.0 ? scale * radius / peak : 0.0;
  for (double& v : fy.data()) v *= gain;
  for (double& v : fx.data()) v *= gain;
  return {std::move(fy), std::move(fx)};
}

SynthesisResult source_deformation(const Tensor& image, std::uint64_t seed, const Tensor& mask, double scale) {
  require_image(image);
  const auto [dy, dx] = deformation_field(mask, seed, scale);
  SynthesisResult r;
  r.image = warp_inside_mask(image, mask, dy, dx);
  r.mask = mask;
  r.mask.set_dtype(DType::U8);
  for (double& v : r.mask.data()) v = v > 0.0 ? 1.0 : 0.0;
  r.recipe.kind = SynthesisKind::SourceDeformation;
  r.recipe.seed = seed;
  r.recipe.scale = scale;
  return r;
}

SynthesisResult apply_recipe(const Tensor& image, const SynthesisRecipe& recipe, const SynthesisConfig& config) {
  SynthesisResult r;
  switch (recipe.kind) {
    case SynthesisKind::CutPaste:
      r = cutpaste_with(image, recipe.source, recipe.destination, recipe.blend, config.poisson_tolerance,
                        config.poisson_max_sweeps);
      break;
    case SynthesisKind::GaussianIntensity:
      r = gaussian_with(image, recipe.ellipse, recipe.sigma, recipe.amplitude);
      break;
    case SynthesisKind::SourceDeformation:
      r = source_deformation(image, recipe.seed, ellipse_mask(image.dim(0), image.dim(1), recipe.ellipse),
                             recipe.scale);
      break;
  }
  r.recipe = recipe;
  return r;
}

std::vector<SynthesisResult> synthesize_batch(const std::vector<Tensor>& images, std::uint64_t seed,
                                              const SynthesisConfig& config) {
  double total = 0.0;
  for (double m : config.mix) {
    if (!(m >= 0.0)) throw ParameterError("synthesize_batch: mix weights must be non-negative");
    total += m;
  }
  if (total == 0.0) throw ParameterError("synthesize_batch: all mix weights are zero");

  std::vector<SynthesisResult> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i];
    require_image(img);
    const std::size_t h = img.dim(0), w = img.dim(1);
    const std::uint64_t s = derive_seed(seed, "synthesis", i);
    Rng rng(s);
    std::discrete_distribution<int> pick(config.mix.begin(), config.mix.end());

    SynthesisRecipe recipe;
    recipe.kind = static_cast<SynthesisKind>(pick(rng));
    recipe.seed = s;
    switch (recipe.kind) {
      case SynthesisKind::CutPaste: {
        const auto [lo, hi] = patch_range(config, h, w);
        recipe.source = random_patch(rng, h, w, lo, hi);
        recipe.destination = recipe.source;
        for (int attempt = 0; attempt < 16 && recipe.destination.y == recipe.source.y &&
                              recipe.destination.x == recipe.source.x;
             ++attempt) {
          recipe.destination.y = uniform_index(rng, 0, h - recipe.source.h);
          recipe.destination.x = uniform_index(rng, 0, w - recipe.source.w);
        }
        recipe.blend = config.blend;
        break;
      }
      case SynthesisKind::GaussianIntensity:
        recipe.ellipse = random_ellipse(rng, h, w, config.area_min, config.area_max);
        recipe.sigma = uniform(rng, config.sigma_min, config.sigma_max);
        recipe.amplitude = uniform(rng, config.amplitude_min, config.amplitude_max);
        if (std::bernoulli_distribution(0.5)(rng)) recipe.amplitude = -recipe.amplitude;
        break;
      case SynthesisKind::SourceDeformation:
        recipe.ellipse = random_ellipse(rng, h, w, config.area_min, config.area_max);
        recipe.scale = uniform(rng, config.scale_min, config.scale_max);
        break;
    }
    out.push_back(apply_recipe(img, recipe, config));
  }
  return out;
}

std::string recipe_to_json(const SynthesisRecipe& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["seed"] = r.seed;
  switch (r.kind) {
    case SynthesisKind::CutPaste:
      j["source"] = {r.source.y, r.source.x, r.source.h, r.source.w};
      j["destination"] = {r.destination.y, r.destination.x, r.destination.h, r.destination.w};
      j["blend"] = r.blend == BlendMode::Poisson ? "poisson" : "direct";
      break;
    case SynthesisKind::GaussianIntensity:
      j["ellipse"] = {r.ellipse.cy, r.ellipse.cx, r.ellipse.ry, r.ellipse.rx, r.ellipse.angle};
      j["sigma"] = r.sigma;
      j["amplitude"] = r.amplitude;
      break;
    case SynthesisKind::SourceDeformation:
      j["ellipse"] = {r.ellipse.cy, r.ellipse.cx, r.ellipse.ry, r.ellipse.rx, r.ellipse.angle};
      j["scale"] = r.scale;
      break;
  }
  return j.dump(2);
}

SynthesisRecipe recipe_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SynthesisRecipe r;
  r.kind = synthesis_kind_from_string(j.at("kind").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto rect = [](const nlohmann::json& a) {
    return Rect{a.at(0).get<std::size_t>(), a.at(1).get<std::size_t>(), a.at(2).get<std::size_t>(),
                a.at(3).get<std::size_t>()};
  };
  const auto ellipse = [](const nlohmann::json& a) {
    return Ellipse{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(), a.at(3).get<double>(),
                   a.at(4).get<double>()};
  };
  if (j.contains("source")) r.source = rect(j["source"]);
  if (j.contains("destination")) r.destination = rect(j["destination"]);
  if (j.contains("blend")) r.blend = j["blend"] == "direct" ? BlendMode::Direct : BlendMode::Poisson;
  if (j.contains("ellipse")) r.ellipse = ellipse(j["ellipse"]);
  r.sigma = j.value("sigma", 0.0);
  r.amplitude = j.value("amplitude", 0.0);
  r.scale = j.value("scale", 0.0);
  return r;
}

}  // namespace hypad
