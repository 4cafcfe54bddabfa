#include "lvba/errors.hpp"
#include "lvba/io.hpp"
#include "lvba/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace lvba;

namespace {

struct Options {
  std::string dataset;
  std::string output;
  std::string config;
  std::optional<std::uint64_t> seed;
  bool no_gsp = false;
  bool no_ret = false;
  std::optional<int> levels;
  std::optional<int> max_frames;
};

struct SynthArgs {
  std::string scene = "room";
  std::string scene_file;
  std::size_t frames = 20;
  SynthOptions opts;
};

void add_common(CLI::App* cmd, Options& o, bool needs_dataset) {
  if (needs_dataset) cmd->add_option("dataset", o.dataset, "dataset directory")->required();
  cmd->add_option("-o,--output", o.output, "output directory")->required();
  cmd->add_option("-c,--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "seed");
  cmd->add_flag("--no-gsp", o.no_gsp, "disable global scene points");
  cmd->add_flag("--no-ret", o.no_ret, "disable exposure estimation");
  cmd->add_option("--levels", o.levels, "pyramid levels")->check(CLI::Range(1, 8));
  cmd->add_option("--max-frames", o.max_frames, "keyframes per sub-sequence")
      ->check(CLI::Range(2, 1 << 20));
}

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.no_gsp) cfg.stages.gsp = false;
  if (o.no_ret) cfg.stages.ret = false;
  if (o.levels) cfg.visual.solver.levels = *o.levels;
  if (o.max_frames) cfg.max_frames = *o.max_frames;
  validate(cfg);
  return cfg;
}

void log(const std::string& s) { std::cerr << "lvba: " << s << '\n'; }

fs::path out_dir(const Options& o) {
  fs::create_directories(o.output);
  return o.output;
}

std::vector<Pose> manifest_lidar_poses(const Dataset& ds) {
  std::vector<Pose> p;
  for (const auto& r : ds.lidar) p.push_back(r.pose);
  return p;
}

// Optimized poses from an earlier lidar-ba run in the same directory, if any.
std::vector<Pose> current_lidar_poses(const Dataset& ds, const fs::path& out) {
  const fs::path p = out / "lidar_poses.txt";
  if (!fs::exists(p)) return manifest_lidar_poses(ds);
  auto poses = read_lidar_poses(p);
  if (poses.size() != ds.lidar.size()) {
    throw DatasetError(p.string() + ": pose count does not match the dataset");
  }
  return poses;
}

struct StatesFile {
  std::vector<std::size_t> frames;
  std::vector<CameraState> states;
  std::vector<double> stamps;
};

StatesFile load_states(const Dataset& ds, const fs::path& out) {
  StatesFile s;
  s.states = read_camera_states(out / "camera_states.txt", &s.frames);
  for (const auto f : s.frames) {
    if (f >= ds.camera.size()) throw DatasetError("camera_states.txt names an unknown frame");
    s.stamps.push_back(ds.camera[f].timestamp);
  }
  return s;
}

int cmd_lidar_ba(const Options& o) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(o.dataset);
  const fs::path out = out_dir(o);
  const auto scans = load_scans(ds);
  const auto r = optimize_lidar_poses(scans, manifest_lidar_poses(ds), cfg.lidar);
  log("lidar-ba initial_cost=" + std::to_string(r.initial_cost) +
      " final_cost=" + std::to_string(r.final_cost) + " " + r.message);
  if (r.diverged) throw OptimizationError(r.message);
  write_lidar_poses(out / "lidar_poses.txt", scans, r.poses);
  return 0;
}

int cmd_visual_ba(const Options& o) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(o.dataset);
  const fs::path out = out_dir(o);
  const auto scans = load_scans(ds);
  const auto lidar = current_lidar_poses(ds, out);
  const auto kf = extract_keyframes(ds, cfg.keyframes);
  const auto images = load_images(ds, kf);
  auto states = propagate_states(ds, kf, manifest_lidar_poses(ds), lidar);
  const auto map = build_plane_voxel_map(scans, lidar, cfg.lidar.map);
  const auto features = extract_plane_features(scans, lidar, map, cfg.lidar.feature_stride);
  const auto in = visual_inputs(scans, lidar, features, images, states, ds.intrinsics, cfg);
  VisualBaConfig vcfg = cfg.visual;
  vcfg.use_global = cfg.stages.gsp;
  vcfg.estimate_exposure = cfg.stages.ret;
  VisualBaReport rep;
  states = coarse_to_fine(states, in, vcfg, &rep);
  for (const auto& lr : rep.levels) {
    log("visual-ba level=" + std::to_string(lr.level) + " items=" + std::to_string(lr.items) +
        " cost " + std::to_string(lr.cost_start) + " -> " + std::to_string(lr.cost_end) + " (" +
        lr.solve.termination + ")");
  }
  std::vector<double> stamps;
  for (const auto f : kf) stamps.push_back(ds.camera[f].timestamp);
  write_camera_states(out / "camera_states.txt", kf, stamps, states);
  return 0;
}

int cmd_colorize(const Options& o) {
  const Dataset ds = load_dataset(o.dataset);
  const fs::path out = out_dir(o);
  const auto scans = load_scans(ds);
  const auto lidar = current_lidar_poses(ds, out);
  const StatesFile s = load_states(ds, out);
  const auto images = load_images(ds, s.frames);
  const auto cloud = colorize(scans, lidar, s.states, s.stamps, images, ds.intrinsics);
  io::write_cloud(out / "cloud.bin", cloud);
  log("colorize points=" + std::to_string(cloud.size()));
  return 0;
}

int cmd_render(const Options& o) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(o.dataset);
  const fs::path out = out_dir(o);
  const StatesFile s = load_states(ds, out);
  const auto cloud = io::read_cloud(out / "cloud.bin");
  fs::create_directories(out / "renders");
  const Intrinsics& K = ds.intrinsics;
  for (std::size_t k = 0; k < s.states.size(); ++k) {
    const RenderResult rr = render(cloud, s.states[k], K, cfg.render);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", s.frames[k]);
    io::write_png(out / "renders" / (std::string(name) + ".png"), rr.image);
    io::write_depth_png(out / "renders" / (std::string(name) + "_depth.png"), rr.depth, K.width,
                        K.height);
  }
  log("render frames=" + std::to_string(s.states.size()));
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(o.dataset);
  const fs::path out = out_dir(o);
  const StatesFile s = load_states(ds, out);
  const auto cloud = io::read_cloud(out / "cloud.bin");
  const auto images = load_images(ds, s.frames);
  EvalReport rep = evaluate_run(s.states, cloud, images, ds.intrinsics, cfg.render);
  for (std::size_t k = 0; k < rep.frames.size(); ++k) {
    rep.frames[k].frame_id = static_cast<int>(s.frames[k]);
  }
  std::ofstream os(out / "report.txt");
  if (!os) throw IoError("cannot write " + (out / "report.txt").string());
  write_report(os, rep);
  log("eval mean_psnr_db=" + std::to_string(rep.mean_psnr_db) +
      " mean_ssim=" + std::to_string(rep.mean_ssim));
  return 0;
}

int cmd_run(const Options& o) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(o.dataset);
  if (cfg.max_frames >= 2) {
    run_split(ds, cfg, o.output);
  } else {
    run_pipeline(ds, cfg, o.output);
  }
  return 0;
}

int cmd_split(const Options& o) {
  RunConfig cfg = resolve(o);
  if (cfg.max_frames < 2) throw InvalidArgument("split needs --max-frames (>= 2)");
  run_split(load_dataset(o.dataset), cfg, o.output);
  return 0;
}

int cmd_synth(const Options& o, SynthArgs a) {
  const std::uint64_t seed = o.seed.value_or(1);
  synth::SceneSpec scene;
  if (!a.scene_file.empty()) {
    std::ifstream is(a.scene_file);
    if (!is) throw IoError("cannot open scene file " + a.scene_file);
    try {
      scene = nlohmann::json::parse(is).get<synth::SceneSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("scene file " + a.scene_file + ": " + e.what());
    }
  } else {
    scene = synth::preset(a.scene, a.frames, seed);
  }
  a.opts.seed = seed;
  const Dataset ds = write_synthetic_dataset(scene, o.output, a.opts);
  log("synth frames=" + std::to_string(ds.camera.size()) + " -> " + o.output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR-prior visual bundle adjustment"};
  app.require_subcommand(1);

  Options o;
  SynthArgs sa;
  auto* run = app.add_subcommand("run", "full pipeline");
  auto* lba = app.add_subcommand("lidar-ba", "optimize LiDAR poses into <output>/lidar_poses.txt");
  auto* vba = app.add_subcommand("visual-ba", "optimize camera states into <output>/camera_states.txt");
  auto* col = app.add_subcommand("colorize", "colorize scans into <output>/cloud.bin");
  auto* ren = app.add_subcommand("render", "render <output>/cloud.bin at every camera state");
  auto* evl = app.add_subcommand("eval", "score renders against the raw images");
  auto* syn = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* spl = app.add_subcommand("split", "run sub-sequences and average their reports");
  for (auto* c : {run, lba, vba, col, ren, evl, spl}) add_common(c, o, true);
  add_common(syn, o, false);
  syn->add_option("--scene", sa.scene, "room, smooth-room, three-wall, two-room, revisit-loop");
  syn->add_option("--scene-file", sa.scene_file, "scene JSON");
  syn->add_option("--frames", sa.frames, "frame count")->check(CLI::PositiveNumber);
  syn->add_option("--lidar-noise", sa.opts.lidar_noise, "range noise sigma, meters");
  syn->add_option("--lidar-trans", sa.opts.lidar_trans, "LiDAR pose error, meters");
  syn->add_option("--lidar-rot", sa.opts.lidar_rot_deg, "LiDAR pose error, degrees");
  syn->add_option("--camera-trans", sa.opts.camera_trans, "extra camera pose error, meters");
  syn->add_option("--camera-rot", sa.opts.camera_rot_deg, "extra camera pose error, degrees");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (lba->parsed()) return cmd_lidar_ba(o);
    if (vba->parsed()) return cmd_visual_ba(o);
    if (col->parsed()) return cmd_colorize(o);
    if (ren->parsed()) return cmd_render(o);
    if (evl->parsed()) return cmd_eval(o);
    if (syn->parsed()) return cmd_synth(o, sa);
    if (spl->parsed()) return cmd_split(o);
  } catch (const Error& e) {
    std::cerr << "lvba: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "lvba: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
