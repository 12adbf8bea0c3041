#pragma once

#include <filesystem>

#include "r2d2/image.hpp"

namespace r2d2 {

/// Binary 8-bit PGM (P5). Intensities are clamped to [0, 1] and rounded to
/// the nearest of 256 levels; multi-channel images are stacked vertically.
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

/// Label rasters share the PGM container; each byte is a class index.
void write_label_pgm(const std::filesystem::path& path, const SemanticMap& map);
SemanticMap read_label_pgm(const std::filesystem::path& path,
                           const std::vector<std::string>& class_names);

/// Round-trips an image through 8-bit quantisation without touching disk.
Image quantize8(const Image& image);

}  // namespace r2d2
