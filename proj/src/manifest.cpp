#include "hypad/manifest.hpp"

#include <fstream>

#include "json.hpp"

#include "hypad/image_io.hpp"

namespace hypad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ManifestError(what + " not found: " + p.string());
}

std::string relative_or_absolute(const fs::path& p, const fs::path& base) {
  const auto rel = p.lexically_relative(base);
  return rel.empty() || *rel.begin() == ".." ? p.string() : rel.generic_string();
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();

  Manifest m;
  try {
    if (doc.value("format", std::string("hypad-manifest")) != "hypad-manifest") {
      throw ManifestError(path.string() + ": unknown manifest format");
    }
    m.levels = doc.at("levels").get<std::vector<std::string>>();
    if (m.levels.empty()) throw ManifestError(path.string() + ": no feature levels listed");
    for (const auto& e : doc.at("entries")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.source = e.contains("source") && !e["source"].is_null() ? e["source"].get<std::string>() : entry.id;
      entry.label = e.value("label", 0);
      if (entry.label != 0 && entry.label != 1) throw ManifestError(entry.id + ": label must be 0 or 1");
      if (e.contains("image") && !e["image"].is_null()) entry.image = resolve(base, e["image"].get<std::string>());
      if (e.contains("mask") && !e["mask"].is_null()) {
        entry.mask = resolve(base, e["mask"].get<std::string>());
        require_file(*entry.mask, "mask for " + entry.id);
      }
      const auto& feats = e.at("features");
      for (const auto& level : m.levels) {
        if (!feats.contains(level)) throw ManifestError(entry.id + ": missing features for level " + level);
        entry.features.push_back(resolve(base, feats[level].get<std::string>()));
        require_file(entry.features.back(), "feature file for " + entry.id);
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  json doc;
  doc["format"] = "hypad-manifest";
  doc["version"] = 1;
  doc["levels"] = manifest.levels;
  doc["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    json j;
    j["id"] = e.id;
    j["source"] = e.source;
    j["image"] = e.image ? json(relative_or_absolute(*e.image, base)) : json(nullptr);
    j["mask"] = e.mask ? json(relative_or_absolute(*e.mask, base)) : json(nullptr);
    j["label"] = e.label;
    json feats = json::object();
    for (std::size_t l = 0; l < manifest.levels.size(); ++l) {
      feats[manifest.levels[l]] = relative_or_absolute(e.features.at(l), base);
    }
    j["features"] = feats;
    doc["entries"].push_back(std::move(j));
  }
  write_text_atomic(path, doc.dump(2) + "\n");
}

std::vector<std::size_t> Dataset::channels() const {
  std::vector<std::size_t> out;
  for (const auto& s : samples) {
    if (s.features.levels.size() != levels.size()) throw ManifestError(s.id + ": wrong number of levels");
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const Tensor& t = s.features.levels[l];
      if (t.ndim() != 3) throw ManifestError(s.id + ": feature level " + levels[l] + " is not [H][W][C]");
      if (out.size() <= l) {
        out.push_back(t.dim(2));
      } else if (out[l] != t.dim(2)) {
        throw ManifestError(s.id + ": channel count of level " + levels[l] + " differs from other samples");
      }
    }
  }
  return out;
}

Dataset load_dataset(const Manifest& manifest) {
  Dataset d;
  d.levels = manifest.levels;
  for (const auto& e : manifest.entries) {
    Sample s;
    s.id = e.id;
    s.source = e.source;
    s.label = e.label;
    s.features.level_names = manifest.levels;
    s.features.source_id = e.source;
    for (const auto& p : e.features) s.features.levels.push_back(read_tensor(p));
    if (e.mask) s.mask = read_mask(*e.mask);
    d.samples.push_back(std::move(s));
  }
  d.channels();
  return d;
}

Dataset load_dataset(const fs::path& manifest_path) { return load_dataset(read_manifest(manifest_path)); }

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  Manifest m;
  m.levels = dataset.levels;
  for (const auto& s : dataset.samples) {
    ManifestEntry e;
    e.id = s.id;
    e.source = s.source;
    e.label = s.label;
    for (std::size_t l = 0; l < dataset.levels.size(); ++l) {
      const fs::path p = dir / "features" / (s.id + "_" + dataset.levels[l] + ".ftns");
      write_tensor(s.features.levels.at(l), p);
      e.features.push_back(p);
    }
    if (s.mask) {
      const fs::path p = dir / "masks" / (s.id + ".ftns");
      Tensor mask = *s.mask;
      mask.set_dtype(DType::U8);
      write_tensor(mask, p);
      e.mask = p;
    }
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, dir / "manifest.json");
}

}  // namespace hypad
