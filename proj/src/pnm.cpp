#include "dtnet/pnm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dtnet {

namespace {

// Reads whitespace-separated tokens, skipping '#' comments.
class TokenReader {
 public:
  explicit TokenReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw PnmError("cannot open " + path);
  }

  std::string next() {
    std::string token;
    char c;
    while (in_.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in_, skip);
        if (!token.empty()) return token;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!token.empty()) return token;
        continue;
      }
      token.push_back(c);
    }
    if (token.empty()) throw PnmError(path_ + ": unexpected end of file");
    return token;
  }

  long long number() {
    const std::string t = next();
    try {
      std::size_t used = 0;
      const long long v = std::stoll(t, &used);
      if (used != t.size() || v < 0) throw PnmError(path_ + ": bad number '" + t + "'");
      return v;
    } catch (const std::logic_error&) {
      throw PnmError(path_ + ": bad number '" + t + "'");
    }
  }

 private:
  std::string path_;
  std::ifstream in_;
};

void read_header(TokenReader& r, const std::string& path, const char* magic, std::size_t& w, std::size_t& h) {
  if (r.next() != magic) throw PnmError(path + ": expected " + magic + " header");
  const long long width = r.number();
  const long long height = r.number();
  if (width <= 0 || height <= 0) throw PnmError(path + ": non-positive dimensions");
  w = static_cast<std::size_t>(width);
  h = static_cast<std::size_t>(height);
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PnmError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw PnmError("graymap size does not match its pixels");
  auto out = open_for_write(path);
  out << "P2\n" << image.width << ' ' << image.height << '\n' << kGraymapMaxval << '\n';
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double v = std::clamp(image.pixels[y * image.width + x], 0.0, 1.0);
      out << std::lround(v * kGraymapMaxval) << (x + 1 == image.width ? '\n' : ' ');
    }
  }
  if (!out) throw PnmError("failed writing " + path);
}

GrayImage read_pgm(const std::string& path) {
  TokenReader r(path);
  GrayImage image;
  read_header(r, path, "P2", image.width, image.height);
  const long long maxval = r.number();
  if (maxval <= 0 || maxval > 65535) throw PnmError(path + ": maxval out of range");
  image.pixels.resize(image.width * image.height);
  for (double& p : image.pixels) {
    const long long v = r.number();
    if (v > maxval) throw PnmError(path + ": sample exceeds maxval");
    p = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return image;
}

void write_pbm(const std::string& path, const BitMask& mask) {
  if (mask.bits.size() != mask.width * mask.height) throw PnmError("bitmap size does not match its bits");
  auto out = open_for_write(path);
  out << "P1\n" << mask.width << ' ' << mask.height << '\n';
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      out << (mask.bits[y * mask.width + x] != 0 ? '1' : '0') << (x + 1 == mask.width ? '\n' : ' ');
    }
  }
  if (!out) throw PnmError("failed writing " + path);
}

BitMask read_pbm(const std::string& path) {
  TokenReader r(path);
  BitMask mask;
  read_header(r, path, "P1", mask.width, mask.height);
  mask.bits.reserve(mask.width * mask.height);
  // Bits may be packed without separators.
  while (mask.bits.size() < mask.width * mask.height) {
    for (char c : r.next()) {
      if (c != '0' && c != '1') throw PnmError(path + ": bitmap samples must be 0 or 1");
      if (mask.bits.size() == mask.width * mask.height) throw PnmError(path + ": too many samples");
      mask.bits.push_back(c - '0');
    }
  }
  return mask;
}

}  // namespace dtnet
