#include "lvba/io.hpp"

#include "lvba/errors.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace lvba::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp; these helpers keep only trivially
// destructible locals between setjmp and the libpng calls.
bool png_write_all(std::FILE* f, int width, int height, int color_type, int bit_depth,
                   const std::uint8_t* bytes, int row_bytes) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, bytes + static_cast<std::size_t>(y) * row_bytes);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    int bit_depth, const std::vector<std::uint8_t>& bytes, int row_bytes) {
  File f = open(path, "wb");
  if (!png_write_all(f.get(), width, height, color_type, bit_depth, bytes.data(), row_bytes)) {
    throw IoError("png write failed: " + path.string());
  }
}

bool png_read_all(std::FILE* f, Image& img) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  png_bytep volatile row = nullptr;  // read after longjmp
  if (!info || setjmp(png_jmpbuf(png))) {
    std::free(row);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ct = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  if (ct & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  row = static_cast<png_bytep>(std::malloc(png_get_rowbytes(png, info)));
  img = Image(w, h);
  double* d = img.data().data();
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row, nullptr);
    for (int k = 0; k < 3 * w; ++k) d[static_cast<std::size_t>(y) * 3 * w + k] = row[k] / 255.0;
  }
  std::free(row);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct Header {
  std::size_t count = 0;
  std::vector<std::string> fields;
};

Header read_header(std::istream& is, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(is, line) || line != "lvba_points") {
    throw IoError("not a point file: " + path.string());
  }
  Header h;
  bool binary = false;
  while (std::getline(is, line)) {
    if (line == "end_header") {
      if (!binary) throw IoError("missing binary format line in " + path.string());
      return h;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "count") {
      ls >> h.count;
    } else if (key == "fields") {
      std::string f;
      while (ls >> f) h.fields.push_back(f);
    } else if (key == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt == "binary_float32_le";
    }
  }
  throw IoError("unterminated header in " + path.string());
}

void write_records(const std::filesystem::path& path, const std::string& fields,
                   const std::vector<float>& values, std::size_t count) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string());
  os << "lvba_points\ncount " << count << "\nfields " << fields
     << "\nformat binary_float32_le\nend_header\n";
  static_assert(std::endian::native == std::endian::little);
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<float> read_records(const std::filesystem::path& path, std::size_t width,
                                std::size_t& count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const Header h = read_header(is, path);
  if (h.fields.size() != width) {
    throw IoError("unexpected field count in " + path.string());
  }
  count = h.count;
  std::vector<float> values(h.count * width);
  is.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (static_cast<std::size_t>(is.gcount()) != values.size() * sizeof(float)) {
    throw IoError("truncated point data in " + path.string());
  }
  return values;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  const int w = img.width(), h = img.height();
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  const auto d = img.data();
  std::transform(d.begin(), d.end(), bytes.begin(), quantize);
  write_png_rows(path, w, h, PNG_COLOR_TYPE_RGB, 8, bytes, 3 * w);
}

Image read_png(const std::filesystem::path& path) {
  File f = open(path, "rb");
  Image img;
  if (!png_read_all(f.get(), img)) throw IoError("png read failed: " + path.string());
  return img;
}

void write_depth_png(const std::filesystem::path& path, const std::vector<double>& depth,
                     int width, int height) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * 2);
  for (std::size_t k = 0; k < depth.size(); ++k) {
    const auto mm = static_cast<std::uint16_t>(std::clamp(std::lround(depth[k] * 1000.0), 0L, 65535L));
    bytes[2 * k] = static_cast<std::uint8_t>(mm >> 8);
    bytes[2 * k + 1] = static_cast<std::uint8_t>(mm & 0xff);
  }
  write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, bytes, 2 * width);
}

void write_scan(const std::filesystem::path& path, const std::vector<Vec3>& points) {
  std::vector<float> v;
  v.reserve(points.size() * 3);
  for (const auto& p : points) {
    for (int i = 0; i < 3; ++i) v.push_back(static_cast<float>(p[i]));
  }
  write_records(path, "x y z", v, points.size());
}

std::vector<Vec3> read_scan(const std::filesystem::path& path) {
  std::size_t n = 0;
  const auto v = read_records(path, 3, n);
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return pts;
}

void write_cloud(const std::filesystem::path& path, const RadianceCloud& cloud) {
  std::vector<float> v;
  v.reserve(cloud.size() * 6);
  for (const auto& p : cloud) {
    for (int i = 0; i < 3; ++i) v.push_back(static_cast<float>(p.position[i]));
    for (int i = 0; i < 3; ++i) v.push_back(static_cast<float>(p.radiance[i]));
  }
  write_records(path, "x y z r g b", v, cloud.size());
}

RadianceCloud read_cloud(const std::filesystem::path& path) {
  std::size_t n = 0;
  const auto v = read_records(path, 6, n);
  RadianceCloud cloud(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = &v[6 * i];
    cloud[i].position = Vec3(r[0], r[1], r[2]);
    cloud[i].radiance = Vec3(r[3], r[4], r[5]);
  }
  return cloud;
}

void write_cloud_ascii(const std::filesystem::path& path, const RadianceCloud& cloud) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  char buf[160];
  for (const auto& p : cloud) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f\n", p.position.x(),
                  p.position.y(), p.position.z(), p.radiance.x(), p.radiance.y(),
                  p.radiance.z());
    os << buf;
  }
}

}  // namespace lvba::io
