#pragma once

#include "lvba/colorize_eval.hpp"
#include "lvba/geometry.hpp"
#include "lvba/lidar_ba.hpp"
#include "lvba/photometric_ba.hpp"
#include "lvba/synthetic_world.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lvba {

/// One manifest record: a scan or an image with its rough world pose.
struct FrameRecord {
  double timestamp = 0.0;
  std::string path;  // relative to the dataset root
  Pose pose;         // world-from-sensor
};

/// A dataset directory holds `manifest.txt`, PNG images and binary scans.
///
///   lvba_manifest 1
///   intrinsics <fx> <fy> <cx> <cy> <width> <height>
///   extrinsic <tx> <ty> <tz> <qw> <qx> <qy> <qz>     (optional, LiDAR-from-camera)
///   frames lidar <N> camera <M>
///   lidar <t> <path> <tx> <ty> <tz> <qw> <qx> <qy> <qz>    (N records)
///   camera <t> <path> <tx> <ty> <tz> <qw> <qx> <qy> <qz>   (M records)
///
/// Blank lines and lines starting with '#' are ignored.
struct Dataset {
  std::filesystem::path root;
  Intrinsics intrinsics;
  std::optional<Pose> extrinsic;
  std::vector<FrameRecord> lidar;
  std::vector<FrameRecord> camera;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Parses and validates the manifest: every referenced file exists,
/// timestamps strictly increase per sensor and record counts match the
/// `frames` line.
Dataset load_dataset(const std::filesystem::path& root);

/// Writes `root/manifest.txt` (numbers in %.17g). Data files are not touched.
void write_manifest(const Dataset& ds);

std::vector<LidarScan> load_scans(const Dataset& ds);
std::vector<Image> load_images(const Dataset& ds, const std::vector<std::size_t>& frames);

struct KeyframeConfig {
  double trans = 0.3;    // meters
  double rot_deg = 10.0;
};

/// Greedy: frame 0, then every frame that moved at least `trans` or turned
/// at least `rot_deg` from the last kept one.
std::vector<std::size_t> extract_keyframes(const Dataset& ds, const KeyframeConfig& cfg);

/// Contiguous chunks of at most max_frames camera frames sharing one frame
/// with the previous chunk. Each scan goes to the chunks holding the camera
/// frame nearest to it in time.
std::vector<Dataset> split_sequence(const Dataset& ds, std::size_t max_frames);

struct StageToggles {
  bool skip_lidar_ba = false;
  bool skip_visual_ba = false;
  bool gsp = true;  // global scene points
  bool ret = true;  // exposure estimation
};

struct RunConfig {
  LidarBaConfig lidar;
  VisualBaConfig visual;
  RenderConfig render;
  KeyframeConfig keyframes;
  StageToggles stages;
  std::uint64_t seed = 1;
  int max_frames = 0;  // split into sub-sequences above this many keyframes; 0 = never
};

/// Throws InvalidArgument naming the first out-of-range field.
void validate(const RunConfig& cfg);

void to_json(nlohmann::json& j, const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& cfg);

RunConfig load_config(const std::filesystem::path& path);

struct RunSummary {
  std::vector<std::size_t> keyframes;
  std::vector<Pose> lidar_poses;
  std::vector<CameraState> camera_states;  // one per keyframe
  RadianceCloud cloud;
  EvalReport report;
  LidarBaResult lidar_ba;
  VisualBaReport visual_ba;
};

/// Stage log lines also go to standard error unless turned off.
void set_stderr_logging(bool on);

/// LiDAR BA, pose propagation, visual BA, colorization, rendering and
/// evaluation. Writes into `out`:
///   config.json         resolved configuration
///   pipeline.log        stage log with input hashes
///   keyframes.txt       camera frame indices
///   lidar_poses.txt     t tx ty tz qw qx qy qz per scan
///   camera_states.txt   frame t tx ty tz qw qx qy qz exposure per keyframe
///   cloud.bin           radiance cloud
///   renders/            <frame>.png and <frame>_depth.png
///   report.txt          per-frame PSNR / SSIM / coverage
///   summary.json        means and solver summaries
/// Each file is written as soon as its stage finishes. A failing stage
/// raises StageError.
RunSummary run_pipeline(const Dataset& ds, const RunConfig& cfg, const std::filesystem::path& out);

/// Runs every chunk of split_sequence into out/chunk_<k> and writes the
/// averaged report and summary into out.
EvalReport run_split(const Dataset& ds, const RunConfig& cfg, const std::filesystem::path& out);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull);

struct SynthOptions {
  double lidar_noise = 0.005;
  double lidar_trans = 0.0;   // fixed-magnitude LiDAR pose error, meters
  double lidar_rot_deg = 0.0;
  double camera_trans = 0.0;  // extra camera pose error on top of the LiDAR one
  double camera_rot_deg = 0.0;
  std::uint64_t seed = 1;
};

/// Renders and simulates the scene into a dataset directory. The manifest
/// holds perturbed poses; ground truth goes to ground_truth.txt
/// (lidar/camera records plus per-frame exposures) and scene.json.
Dataset write_synthetic_dataset(const synth::SceneSpec& scene, const std::filesystem::path& root,
                                const SynthOptions& opts);

struct GroundTruth {
  std::vector<Pose> lidar;
  std::vector<Pose> camera;
  std::vector<double> exposures;
};
GroundTruth load_ground_truth(const std::filesystem::path& root);

// Stage helpers shared by run_pipeline and the per-stage CLI verbs.

/// Corrects each keyframe's manifest pose with the LiDAR scan nearest in
/// time; exposures start at 1.
std::vector<CameraState> propagate_states(const Dataset& ds,
                                          const std::vector<std::size_t>& keyframes,
                                          const std::vector<Pose>& lidar_init,
                                          const std::vector<Pose>& lidar_opt);

VisualBaInputs visual_inputs(const std::vector<LidarScan>& scans,
                             const std::vector<Pose>& lidar_poses,
                             const std::vector<PlaneFeature>& features,
                             const std::vector<Image>& images,
                             std::span<const CameraState> states, const Intrinsics& K,
                             const RunConfig& cfg);

/// lidar_poses.txt: t tx ty tz qw qx qy qz per scan.
void write_lidar_poses(const std::filesystem::path& path, const std::vector<LidarScan>& scans,
                       const std::vector<Pose>& poses);
std::vector<Pose> read_lidar_poses(const std::filesystem::path& path);

/// camera_states.txt: frame t tx ty tz qw qx qy qz exposure per keyframe.
void write_camera_states(const std::filesystem::path& path,
                         const std::vector<std::size_t>& frames,
                         const std::vector<double>& stamps,
                         const std::vector<CameraState>& states);
std::vector<CameraState> read_camera_states(const std::filesystem::path& path,
                                            std::vector<std::size_t>* frames = nullptr);

}  // namespace lvba
