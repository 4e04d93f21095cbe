#include "dtnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace dtnet {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8, "f64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kCheckpointMagic);
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.data.size()) throw CheckpointError("tensor '" + t.name + "' has inconsistent shape");
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f64(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw CheckpointError("bad checkpoint magic");
  std::vector<NamedTensor> out;
  while (!in.done()) {
    NamedTensor t;
    const auto len = in.u32();
    t.name = std::string(in.take(len, "name"));
    const auto rank = in.u32();
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = in.u32();
      if (d == 0) throw CheckpointError("tensor '" + t.name + "' has a zero dimension");
      t.shape.push_back(d);
      if (count > std::numeric_limits<std::size_t>::max() / d) throw CheckpointError("tensor too large");
      count *= d;
    }
    if (count > bytes.size() / 8) throw CheckpointError("checkpoint truncated in payload of '" + t.name + "'");
    t.data.resize(count);
    for (auto& v : t.data) v = in.f64();
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> snapshot(const ParamStore& store, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : store.entries()) {
    out.push_back({prefix + name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  return out;
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void restore(ParamStore& store, const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  for (auto& [name, t] : store.entries()) {
    const auto* src = find_tensor(tensors, prefix + name);
    if (src == nullptr) throw CheckpointError("checkpoint is missing '" + prefix + name + "'");
    if (src->shape != t.shape()) {
      throw CheckpointError("shape mismatch for '" + prefix + name + "': " + to_string(src->shape) + " vs " +
                            to_string(t.shape()));
    }
    std::copy(src->data.begin(), src->data.end(), t.mutable_data().begin());
  }
}

}  // namespace dtnet
