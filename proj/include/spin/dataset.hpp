#pragma once

// On-disk dataset layout:
//
//   <dir>/images/<name>.png   RGB imagery
//   <dir>/masks/<name>.png    road mask, {0, 255}
//   <dir>/orient/<name>.png   orientation class per pixel (0..36), 8-bit gray
//   <dir>/manifest.csv        header "name,split", one row per sample

#include <spin/raster_io.hpp>

#include <fstream>

namespace spin {

struct ManifestEntry {
  std::string name;
  std::string split;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw RasterIoError("cannot open manifest '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "name,split") throw RasterIoError("manifest '" + path.string() + "' has unexpected header '" + line + "'");
  std::vector<ManifestEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw RasterIoError("malformed manifest row '" + line + "'");
    out.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples,
                          const std::vector<std::string>& splits) {
  if (splits.size() != samples.size()) throw std::invalid_argument("write_dataset: one split label per sample");
  for (const char* sub : {"images", "masks", "orient"}) std::filesystem::create_directories(dir / sub);
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "name,split\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    save_image(s.image, (dir / "images" / (s.name + ".png")).string());
    save_mask(s.mask, (dir / "masks" / (s.name + ".png")).string());
    save_class_map(s.orient, (dir / "orient" / (s.name + ".png")).string());
    manifest << s.name << ',' << splits[i] << '\n';
  }
  if (!manifest) throw RasterIoError("failed writing manifest in '" + dir.string() + "'");
}

// Loads every sample of a split ("" loads all). Missing orientation maps
// default to background.
inline std::vector<Sample> load_dataset(const std::filesystem::path& dir, const std::string& split = "") {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(dir)) {
    if (!split.empty() && e.split != split) continue;
    Sample s;
    s.name = e.name;
    s.image = load_image((dir / "images" / (e.name + ".png")).string());
    s.mask = load_mask((dir / "masks" / (e.name + ".png")).string());
    const auto op = dir / "orient" / (e.name + ".png");
    s.orient = std::filesystem::exists(op) ? load_class_map(op.string()) : Mask(1, s.mask.height, s.mask.width, 0);
    if (s.mask.height != s.image.height || s.mask.width != s.image.width || s.orient.height != s.image.height ||
        s.orient.width != s.image.width)
      throw RasterIoError("sample '" + e.name + "' has rasters of different sizes");
    for (auto v : s.orient.data)
      if (v > 36) throw RasterIoError("sample '" + e.name + "' has orientation class " + std::to_string(v) + " > 36");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace spin
