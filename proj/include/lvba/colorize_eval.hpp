#pragma once

#include "lvba/geometry.hpp"
#include "lvba/lidar_ba.hpp"
#include "lvba/photometric_ba.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace lvba {

/// World-frame point with exposure-normalized RGB radiance.
struct RadiancePoint {
  Vec3 position = Vec3::Zero();
  Vec3 radiance = Vec3::Zero();
};

using RadianceCloud = std::vector<RadiancePoint>;

/// Colors every LiDAR point from the camera frame nearest in time:
///   r = I(project(T_C^-1 T_L p)) / eps
/// Points that project outside that frame are dropped.
RadianceCloud colorize(const std::vector<LidarScan>& scans, const std::vector<Pose>& lidar_poses,
                       std::span<const CameraState> states,
                       std::span<const double> camera_stamps, std::span<const Image> images,
                       const Intrinsics& K);

struct RenderConfig {
  int splat = 1;  // half-width of the square splat, pixels
};

using Mask = std::vector<std::uint8_t>;

struct RenderResult {
  Image image;
  std::vector<double> depth;  // meters, 0 where empty
  Mask mask;

  std::size_t covered() const;
};

/// Z-buffered splat render; each covered pixel takes eps * r of the nearest
/// point (ties go to the earlier point), clamped to [0, 1].
RenderResult render(const RadianceCloud& cloud, const CameraState& state, const Intrinsics& K,
                    const RenderConfig& cfg = {});

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over masked RGB values, capped at kPsnrCap.
/// An empty mask (all zero or no pixels) raises InvalidArgument. A mask
/// argument of size 0 means "all pixels".
double psnr(const Image& a, const Image& b, const Mask& mask = {});

/// Single-scale SSIM on BT.601 luma with an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2. Window weights are restricted to in-bounds masked
/// pixels and renormalized; the score is averaged over masked centers.
double ssim(const Image& a, const Image& b, const Mask& mask = {});

struct FrameEval {
  int frame_id = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double coverage_fraction = 0.0;
};

struct EvalReport {
  std::vector<FrameEval> frames;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_coverage = 0.0;
};

/// Renders the cloud at every state and scores it against the raw image on
/// covered pixels. A frame with nothing covered scores 0 dB and SSIM 0.
EvalReport evaluate_run(std::span<const CameraState> states, const RadianceCloud& cloud,
                        std::span<const Image> images, const Intrinsics& K,
                        const RenderConfig& cfg = {});

/// Mean of the per-frame values of several reports, weighting each report equally.
EvalReport average_reports(std::span<const EvalReport> reports);

/// Key-value text: one `frame` row per frame followed by the means.
void write_report(std::ostream& os, const EvalReport& report);
EvalReport read_report(std::istream& is);

}  // namespace lvba
