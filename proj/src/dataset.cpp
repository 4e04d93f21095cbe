#include "dtnet/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "dtnet/pnm.hpp"

namespace dtnet {

namespace fs = std::filesystem;

void save_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu", i);
    const Sample& s = data[i];
    write_pgm((dir / (std::string(stem) + ".pgm")).string(), GrayImage{s.size, s.size, s.image});
    write_pbm((dir / (std::string(stem) + ".pbm")).string(), BitMask{s.size, s.size, s.mask});
  }
}

Dataset load_dataset(const fs::path& dir, std::vector<std::string>* ids) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw std::runtime_error("no .pgm images in " + dir.string());

  Dataset data;
  for (const auto& path : images) {
    GrayImage img = read_pgm(path.string());
    if (img.width != img.height) throw std::runtime_error(path.string() + ": images must be square");
    Sample s;
    s.size = img.width;
    s.image = std::move(img.pixels);
    fs::path mask_path = path;
    mask_path.replace_extension(".pbm");
    if (fs::exists(mask_path)) {
      BitMask m = read_pbm(mask_path.string());
      if (m.width != s.size || m.height != s.size) throw std::runtime_error(mask_path.string() + ": size mismatch");
      s.mask = std::move(m.bits);
    }
    if (!data.empty() && data.front().size != s.size) {
      throw std::runtime_error(path.string() + ": all images in a split must share one size");
    }
    data.push_back(std::move(s));
    if (ids != nullptr) ids->push_back(path.stem().string());
  }
  return data;
}

}  // namespace dtnet
