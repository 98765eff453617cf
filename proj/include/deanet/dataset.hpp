#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deanet/image.hpp"

namespace deanet {

struct ImagePair {
  std::string name;  // shared file name
  std::filesystem::path low;
  std::filesystem::path high;
  int height = 0;
  int width = 0;
};

/// Low/normal-light pairs matched by identical file name. Headers are
/// validated at ingest; pixels are decoded on demand.
class PairedDataset {
 public:
  static PairedDataset ingest(const std::filesystem::path& low_dir, const std::filesystem::path& high_dir);
  // <root>/low and <root>/high.
  static PairedDataset from_root(const std::filesystem::path& root);

  std::size_t size() const { return pairs_.size(); }
  const ImagePair& pair(std::size_t i) const { return pairs_.at(i); }
  const std::vector<ImagePair>& pairs() const { return pairs_; }
  std::pair<Image, Image> load(std::size_t i) const;

 private:
  std::vector<ImagePair> pairs_;
};

}  // namespace deanet
