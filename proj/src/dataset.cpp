#include "deanet/dataset.hpp"

#include <algorithm>
#include <map>

#include "deanet/error.hpp"
#include "deanet/png_io.hpp"

namespace deanet {
namespace {

namespace fs = std::filesystem;

std::map<std::string, fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("dataset directory not found: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.emplace(entry.path().filename().string(), entry.path());
  }
  return files;
}

}  // namespace

PairedDataset PairedDataset::ingest(const fs::path& low_dir, const fs::path& high_dir) {
  const auto low = list_pngs(low_dir);
  const auto high = list_pngs(high_dir);
  for (const auto& [name, path] : low)
    if (!high.count(name)) throw DataError("unpaired file " + path.string() + ": no " + name + " in " + high_dir.string());
  for (const auto& [name, path] : high)
    if (!low.count(name)) throw DataError("unpaired file " + path.string() + ": no " + name + " in " + low_dir.string());
  if (low.empty()) throw DataError("no PNG files in " + low_dir.string());
  PairedDataset ds;
  for (const auto& [name, low_path] : low) {
    const fs::path& high_path = high.at(name);
    const PngInfo a = read_png_info(low_path), b = read_png_info(high_path);
    if (a.width != b.width || a.height != b.height)
      throw DataError("dimension mismatch for " + name + ": " + low_path.string() + " is " + std::to_string(a.width) +
                      "x" + std::to_string(a.height) + ", " + high_path.string() + " is " + std::to_string(b.width) +
                      "x" + std::to_string(b.height));
    ds.pairs_.push_back({name, low_path, high_path, a.height, a.width});
  }
  return ds;
}

PairedDataset PairedDataset::from_root(const fs::path& root) { return ingest(root / "low", root / "high"); }

std::pair<Image, Image> PairedDataset::load(std::size_t i) const {
  const ImagePair& p = pair(i);
  Image low = read_png(p.low), high = read_png(p.high);
  if (!low.same_shape(high)) throw DataError("dimension mismatch after decoding " + p.name);
  return {std::move(low), std::move(high)};
}

}  // namespace deanet
