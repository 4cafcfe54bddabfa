#pragma once

#include "lvba/colorize_eval.hpp"
#include "lvba/geometry.hpp"

#include <filesystem>
#include <vector>

namespace lvba::io {

/// 8-bit RGB PNG; values are quantized as round(255 v) and read back as v / 255.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// 16-bit grayscale PNG of depth in millimeters (0 = empty, saturating).
void write_depth_png(const std::filesystem::path& path, const std::vector<double>& depth,
                     int width, int height);

/// Point records: a text header
///   lvba_points
///   count <n>
///   fields x y z [r g b]
///   format binary_float32_le
///   end_header
/// followed by n little-endian float32 records.
void write_scan(const std::filesystem::path& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_scan(const std::filesystem::path& path);

void write_cloud(const std::filesystem::path& path, const RadianceCloud& cloud);
RadianceCloud read_cloud(const std::filesystem::path& path);

/// "x y z r g b" per line.
void write_cloud_ascii(const std::filesystem::path& path, const RadianceCloud& cloud);

}  // namespace lvba::io
