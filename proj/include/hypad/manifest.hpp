// Dataset manifests: JSON files listing, per image, its per-level FTNS feature
// files, an optional pixel mask and an image-level label.
//
//   {
//     "format": "hypad-manifest", "version": 1,
//     "levels": ["layer_2", "layer_3"],
//     "entries": [
//       {"id": "0001", "source": "0001", "image": "img/0001.png",
//        "features": {"layer_2": "feat/0001_layer_2.ftns", "layer_3": "..."},
//        "mask": "mask/0001.png", "label": 1}
//     ]
//   }
//
// Relative paths resolve against the manifest's directory. "source" names the
// normal image an entry was derived from (defaults to "id"); "image" and
// "mask" may be null.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hypad/features.hpp"

namespace hypad {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string id;
  std::string source;
  std::optional<std::filesystem::path> image;
  std::vector<std::filesystem::path> features;  // ordered like Manifest::levels
  std::optional<std::filesystem::path> mask;
  int label = 0;
};

struct Manifest {
  std::vector<std::string> levels;
  std::vector<ManifestEntry> entries;
};

/// Parses the manifest and checks that every referenced file exists.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// One image with its features loaded.
struct Sample {
  std::string id;
  std::string source;
  int label = 0;
  FeatureStack features;
  std::optional<Tensor> mask;
};

struct Dataset {
  std::vector<std::string> levels;
  std::vector<Sample> samples;

  /// Channel count per level, validated to be consistent across samples.
  std::vector<std::size_t> channels() const;
};

Dataset load_dataset(const Manifest& manifest);
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes features (and masks, as FTNS) under `dir` plus `dir/manifest.json`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace hypad
