#include "hypad/toy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hypad/features.hpp"
#include "hypad/geometry.hpp"
#include "hypad/random.hpp"

namespace hypad {

namespace {

const std::vector<std::string> kLevels = {"layer_2", "layer_3"};

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

Tensor area_fraction(const Tensor& mask, std::size_t h, std::size_t w) {
  const std::size_t H = mask.dim(0), W = mask.dim(1);
  const double sy = static_cast<double>(H) / static_cast<double>(h);
  const double sx = static_cast<double>(W) / static_cast<double>(w);
  Tensor out({h, w}, DType::F64);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double covered = 0.0;
      for (std::size_t i = 0; i < H; ++i) {
        const double oy = overlap(y * sy, (y + 1) * sy, i, i + 1.0);
        if (oy == 0.0) continue;
        for (std::size_t j = 0; j < W; ++j) covered += oy * overlap(x * sx, (x + 1) * sx, j, j + 1.0) * mask.at(i, j);
      }
      out.at(y, x) = covered / (sy * sx);
    }
  }
  return out;
}

struct Generator {
  const ToyConfig& config;
  Vector direction;

  // Coarse cells shift by the anomalous fraction of their footprint.
  Tensor level(const Tensor& mask, std::size_t h, std::size_t w, std::mt19937_64& rng) const {
    std::normal_distribution<double> noise(0.0, config.sigma);
    const Tensor coverage = area_fraction(mask, h, w);
    Tensor t({h, w, config.channels}, DType::F32);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double shift = coverage.at(y, x) * config.offset * config.sigma;
        for (std::size_t c = 0; c < config.channels; ++c) t.at(y, x, c) = noise(rng) + shift * direction[c];
      }
    }
    return t;
  }

  Sample sample(const std::string& id, const std::string& source, int label, const Tensor& mask,
                std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    Sample s;
    s.id = id;
    s.source = source;
    s.label = label;
    s.features.source_id = source;
    s.features.level_names = kLevels;
    s.features.levels.push_back(level(mask, config.height, config.width, rng));
    s.features.levels.push_back(level(mask, (config.height + 1) / 2, (config.width + 1) / 2, rng));
    s.mask = mask;
    return s;
  }
};

Tensor empty_mask(const ToyConfig& c) { return Tensor({c.height, c.width}, DType::U8); }

Tensor half_mask(const ToyConfig& c, int side) {
  Tensor m = empty_mask(c);
  for (std::size_t y = 0; y < c.height; ++y) {
    for (std::size_t x = 0; x < c.width; ++x) {
      const bool on = side == 0   ? y < c.height / 2
                      : side == 1 ? y >= c.height - c.height / 2
                      : side == 2 ? x < c.width / 2
                                  : x >= c.width - c.width / 2;
      m.at(y, x) = on ? 1.0 : 0.0;
    }
  }
  return m;
}

Tensor rect_mask(const ToyConfig& c, std::mt19937_64& rng) {
  const std::size_t lo = std::max<std::size_t>(2, std::min(c.height, c.width) / 4);
  const std::size_t hi = std::max(lo, std::min(c.height, c.width) / 2);
  std::uniform_int_distribution<std::size_t> side(lo, hi);
  const std::size_t rh = side(rng), rw = side(rng);
  const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, c.height - rh)(rng);
  const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, c.width - rw)(rng);
  Tensor m = empty_mask(c);
  for (std::size_t y = y0; y < y0 + rh; ++y) {
    for (std::size_t x = x0; x < x0 + rw; ++x) m.at(y, x) = 1.0;
  }
  return m;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

}  // namespace

ToyData make_toy(const ToyConfig& config, std::uint64_t seed) {
  if (config.height < 4 || config.width < 4 || config.channels == 0) {
    throw ParameterError("toy dataset needs at least 4x4 pixels and one channel");
  }
  if (!(config.sigma > 0.0)) throw ParameterError("toy sigma must be positive");

  Generator gen{config, Vector(config.channels)};
  std::mt19937_64 dir_rng(derive_seed(seed, "toy-direction"));
  std::normal_distribution<double> normal;
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& v : gen.direction) {
      v = normal(dir_rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  for (double& v : gen.direction) v /= norm;

  ToyData data;
  data.train.levels = data.test.levels = kLevels;
  for (std::size_t i = 0; i < config.train_sources; ++i) {
    const Tensor mask = half_mask(config, static_cast<int>(i % 4));
    data.train.samples.push_back(gen.sample(numbered("train_", i), numbered("source_", i), 1, mask,
                                            derive_seed(seed, "toy-train", i)));
  }
  for (std::size_t i = 0; i < config.test_normal; ++i) {
    data.test.samples.push_back(gen.sample(numbered("good_", i), numbered("good_", i), 0, empty_mask(config),
                                           derive_seed(seed, "toy-test-normal", i)));
  }
  for (std::size_t i = 0; i < config.test_anomalous; ++i) {
    std::mt19937_64 rng(derive_seed(seed, "toy-test-mask", i));
    data.test.samples.push_back(gen.sample(numbered("anomaly_", i), numbered("anomaly_", i), 1,
                                           rect_mask(config, rng), derive_seed(seed, "toy-test-anomalous", i)));
  }
  return data;
}

}  // namespace hypad
