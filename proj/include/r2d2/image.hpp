#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace r2d2 {

/// Planar (channel-major) float image. Intensities live in [0, 1] at the
/// I/O boundary; the models work on the [-1, 1] mapping of the same data.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const Image& o) const = default;
};

/// Per-pixel terrain class labels in [0, class_names.size()).
struct SemanticMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> class_names;

  SemanticMap() = default;
  SemanticMap(int h, int w, std::vector<std::string> names, std::uint8_t fill = 0)
      : height(h),
        width(w),
        labels(static_cast<std::size_t>(h) * w, fill),
        class_names(std::move(names)) {}

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const SemanticMap& o) const = default;

  /// Throws InvalidInput if any label is out of range.
  void validate() const;
};

}  // namespace r2d2
