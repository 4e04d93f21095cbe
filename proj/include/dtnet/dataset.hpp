#ifndef DTNET_DATASET_HPP
#define DTNET_DATASET_HPP

// On-disk datasets: one directory per split holding NNNN.pgm images and
// NNNN.pbm masks.

#include <filesystem>
#include <string>
#include <vector>

#include "dtnet/synthetic.hpp"

namespace dtnet {

void save_dataset(const std::filesystem::path& dir, const Dataset& data);

// Images without a matching mask load with an empty mask vector.
Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::string>* ids = nullptr);

}  // namespace dtnet

#endif  // DTNET_DATASET_HPP
