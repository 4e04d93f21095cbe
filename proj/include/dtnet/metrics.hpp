#ifndef DTNET_METRICS_HPP
#define DTNET_METRICS_HPP

// Overlap and surface-distance metrics on binary masks stored row-major.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dtnet {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> gt);

// Score returned when prediction and label are both empty.
inline constexpr double kEmptyAgreement = 1.0;

double iou(std::span<const int> pred, std::span<const int> gt, double empty_value = kEmptyAgreement);
double dice(std::span<const int> pred, std::span<const int> gt, double empty_value = kEmptyAgreement);

// Mask pixels with at least one 4-neighbour outside the mask or the image.
std::vector<std::size_t> surface_pixels(std::span<const int> mask, std::size_t height, std::size_t width);

// Exact squared Euclidean distance from every pixel to the nearest pixel of
// `sites`. Pixels are infinitely far when `sites` is empty.
std::vector<double> squared_distance_transform(std::span<const int> sites, std::size_t height, std::size_t width);

// Average symmetric surface distance in pixels; nullopt when either mask is
// empty.
std::optional<double> assd(std::span<const int> pred, std::span<const int> gt, std::size_t height,
                           std::size_t width);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

// Population statistics over the present values.
Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::vector<std::string> image_ids;
  std::vector<double> iou;
  std::vector<double> dice;
  std::vector<std::optional<double>> assd;

  void add(std::string id, std::span<const int> pred, std::span<const int> gt, std::size_t height,
           std::size_t width);
  std::size_t size() const { return iou.size(); }
  Summary iou_summary() const;
  Summary dice_summary() const;
  Summary assd_summary() const;

  // image_id,iou,dice,assd with an empty assd field for missing values.
  void write_csv(const std::string& path) const;
};

}  // namespace dtnet

#endif  // DTNET_METRICS_HPP
