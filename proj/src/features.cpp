#include "hypad/features.hpp"

#include <algorithm>
#include <cmath>

namespace hypad {

namespace {

void require_hwc(const Tensor& t, const char* what) {
  if (t.ndim() != 3) throw ParameterError(std::string(what) + ": expected an [H][W][C] tensor");
}

}  // namespace

Tensor patchify(const Tensor& level, std::size_t patch) {
  require_hwc(level, "patchify");
  const std::size_t h = level.dim(0), w = level.dim(1), c = level.dim(2);
  if (patch < 1) throw ParameterError("patchify: patch size must be >= 1");
  if (patch > std::min(h, w)) {
    throw ParameterError("patchify: patch size " + std::to_string(patch) + " exceeds feature map " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  if (patch == 1) return level;

  const auto lo = -static_cast<std::ptrdiff_t>((patch - 1) / 2);
  const auto hi = static_cast<std::ptrdiff_t>(patch / 2);
  const auto clamp = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  const double inv = 1.0 / static_cast<double>(patch * patch);

  Tensor out({h, w, c}, level.dtype());
  std::vector<double> acc(c);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (auto dy = lo; dy <= hi; ++dy) {
        const std::size_t sy = clamp(static_cast<std::ptrdiff_t>(y) + dy, h);
        for (auto dx = lo; dx <= hi; ++dx) {
          const auto src = level.pixel(sy, clamp(static_cast<std::ptrdiff_t>(x) + dx, w));
          for (std::size_t k = 0; k < c; ++k) acc[k] += src[k];
        }
      }
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = acc[k] * inv;
    }
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& level, std::size_t target_h, std::size_t target_w) {
  require_hwc(level, "upsample_bilinear");
  const std::size_t h = level.dim(0), w = level.dim(1), c = level.dim(2);
  if (target_h < h || target_w < w) throw ParameterError("upsample_bilinear: downscaling is not supported");
  if (target_h == h && target_w == w) return level;

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  const auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double src = std::max(0.0, (static_cast<double>(i) + 0.5) * ratio - 0.5);
      const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
      t[i] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(h, target_h);
  const auto tx = taps(w, target_w);

  Tensor out({target_h, target_w, c}, level.dtype());
  for (std::size_t y = 0; y < target_h; ++y) {
    for (std::size_t x = 0; x < target_w; ++x) {
      const auto a = level.pixel(ty[y].i0, tx[x].i0), b = level.pixel(ty[y].i0, tx[x].i1);
      const auto d = level.pixel(ty[y].i1, tx[x].i0), e = level.pixel(ty[y].i1, tx[x].i1);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = a[k] + tx[x].frac * (b[k] - a[k]);
        const double bottom = d[k] + tx[x].frac * (e[k] - d[k]);
        out.at(y, x, k) = top + ty[y].frac * (bottom - top);
      }
    }
  }
  return out;
}

Tensor align_mask(const Tensor& mask, std::size_t target_h, std::size_t target_w) {
  if (mask.ndim() != 2) throw ParameterError("align_mask: expected an [H][W] mask");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  if (target_h > h || target_w > w || target_h == 0 || target_w == 0) {
    throw ParameterError("align_mask: target must not exceed the mask resolution");
  }
  const double sy = static_cast<double>(h) / static_cast<double>(target_h);
  const double sx = static_cast<double>(w) / static_cast<double>(target_w);

  // Overlap of the continuous interval [lo, hi) with source pixel i.
  const auto overlap = [](double lo, double hi, std::size_t i) {
    return std::max(0.0, std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i)));
  };

  Tensor out({target_h, target_w}, DType::U8);
  for (std::size_t ty = 0; ty < target_h; ++ty) {
    const double y0 = static_cast<double>(ty) * sy, y1 = static_cast<double>(ty + 1) * sy;
    for (std::size_t tx = 0; tx < target_w; ++tx) {
      const double x0 = static_cast<double>(tx) * sx, x1 = static_cast<double>(tx + 1) * sx;
      double anomalous = 0.0;
      for (auto y = static_cast<std::size_t>(y0); y < h && static_cast<double>(y) < y1; ++y) {
        const double oy = overlap(y0, y1, y);
        for (auto x = static_cast<std::size_t>(x0); x < w && static_cast<double>(x) < x1; ++x) {
          if (mask.at(y, x) > 0.0) anomalous += oy * overlap(x0, x1, x);
        }
      }
      out.at(ty, tx) = anomalous >= 0.5 * sy * sx ? 1.0 : 0.0;
    }
  }
  return out;
}

AlignedFeatures align_features(const FeatureStack& stack, std::size_t patch, const std::optional<Tensor>& mask) {
  if (stack.levels.empty()) throw ParameterError("align_features: no feature levels");
  AlignedFeatures out;
  for (const Tensor& l : stack.levels) {
    require_hwc(l, "align_features");
    out.height = std::max(out.height, l.dim(0));
    out.width = std::max(out.width, l.dim(1));
  }
  out.levels.reserve(stack.levels.size());
  for (const Tensor& l : stack.levels) out.levels.push_back(upsample_bilinear(patchify(l, patch), out.height, out.width));
  if (mask) out.labels = align_mask(*mask, out.height, out.width);
  return out;
}

}  // namespace hypad
