#ifndef DTNET_CHECKPOINT_HPP
#define DTNET_CHECKPOINT_HPP

// "DTNT1" checkpoint files: the magic string followed by records of
//   u32 name_len | name bytes | u32 rank | u32 dims[rank] | f64 payload
// with all integers and floats little-endian and payloads row-major.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtnet/layers.hpp"

namespace dtnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

inline constexpr std::string_view kCheckpointMagic = "DTNT1";

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(const ParamStore& store, const std::string& prefix = "");
// Copies values into the store's tensors. Every store entry must be present
// under `prefix + name` with an identical shape.
void restore(ParamStore& store, const std::vector<NamedTensor>& tensors, const std::string& prefix = "");

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

}  // namespace dtnet

#endif  // DTNET_CHECKPOINT_HPP
