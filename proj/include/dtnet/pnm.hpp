#ifndef DTNET_PNM_HPP
#define DTNET_PNM_HPP

// Plain-text portable graymap (P2) and bitmap (P1) IO.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtnet {

class PnmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, in [0,1]
};

struct BitMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> bits;  // row-major, 1 = foreground (black in P1)
};

inline constexpr int kGraymapMaxval = 65535;

void write_pgm(const std::string& path, const GrayImage& image);
GrayImage read_pgm(const std::string& path);
void write_pbm(const std::string& path, const BitMask& mask);
BitMask read_pbm(const std::string& path);

}  // namespace dtnet

#endif  // DTNET_PNM_HPP
