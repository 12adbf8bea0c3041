#include "r2d2/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "r2d2/errors.hpp"

namespace r2d2 {

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_bytes(const std::filesystem::path& path, int h, int w,
                 const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path, int& h, int& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw InvalidInput(path.string() + ": not a binary PGM");
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> v)) throw InvalidInput(path.string() + ": malformed PGM header");
    return v;
  };
  w = next_int();
  h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw InvalidInput(path.string() + ": only 8-bit PGM is supported");
  in.get();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h) * w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw InvalidInput(path.string() + ": truncated pixel data");
  return bytes;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  write_bytes(path, image.channels * image.height, image.width, bytes);
}

Image read_pgm(const std::filesystem::path& path) {
  int h = 0, w = 0;
  auto bytes = read_bytes(path, h, w);
  Image img(1, h, w);
  std::transform(bytes.begin(), bytes.end(), img.data.begin(),
                 [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
  return img;
}

void write_label_pgm(const std::filesystem::path& path, const SemanticMap& map) {
  write_bytes(path, map.height, map.width, map.labels);
}

SemanticMap read_label_pgm(const std::filesystem::path& path,
                           const std::vector<std::string>& class_names) {
  int h = 0, w = 0;
  auto bytes = read_bytes(path, h, w);
  SemanticMap map(h, w, class_names);
  map.labels = std::move(bytes);
  map.validate();
  return map;
}

Image quantize8(const Image& image) {
  Image out = image;
  for (auto& v : out.data) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

}  // namespace r2d2
