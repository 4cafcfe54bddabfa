#include "lvba/pipeline.hpp"

#include "lvba/errors.hpp"
#include "lvba/global_visibility.hpp"
#include "lvba/io.hpp"
#include "lvba/parallel.hpp"
#include "lvba/scene_points.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace lvba {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string pose_text(const Pose& p) {
  const Vec3& t = p.translation();
  const auto& q = p.quaternion();
  return num(t.x()) + ' ' + num(t.y()) + ' ' + num(t.z()) + ' ' + num(q.w()) + ' ' +
         num(q.x()) + ' ' + num(q.y()) + ' ' + num(q.z());
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DatasetError(where + ": bad number '" + s + "'");
  }
  return v;
}

long parse_int(const std::string& s, const std::string& where) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DatasetError(where + ": bad integer '" + s + "'");
  }
  return v;
}

Pose parse_pose(const std::vector<std::string>& tk, std::size_t at, const std::string& where) {
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = parse_double(tk[at + i], where);
  const Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
  if (!(q.norm() > 0.5 && q.norm() < 2.0)) throw DatasetError(where + ": quaternion is not unit");
  return Pose(q, Vec3(v[0], v[1], v[2]));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError("cannot open " + path.string());
  return is;
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest = root / kManifestName;
  if (!fs::exists(manifest)) throw MissingFileError("manifest not found: " + manifest.string());
  std::ifstream is = open_in(manifest);

  Dataset ds;
  ds.root = root;
  bool header = false, have_intrinsics = false, have_frames = false;
  long n_lidar = 0, n_camera = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto tk = tokens(line);
    if (tk.empty() || tk[0][0] == '#') continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (!header) {
      if (tk.size() != 2 || tk[0] != "lvba_manifest" || tk[1] != "1") {
        throw DatasetError(where + ": expected 'lvba_manifest 1'");
      }
      header = true;
      continue;
    }
    const std::string& key = tk[0];
    if (key == "intrinsics") {
      if (tk.size() != 7) throw DatasetError(where + ": intrinsics needs 6 values");
      auto& K = ds.intrinsics;
      K.fx = parse_double(tk[1], where);
      K.fy = parse_double(tk[2], where);
      K.cx = parse_double(tk[3], where);
      K.cy = parse_double(tk[4], where);
      K.width = static_cast<int>(parse_int(tk[5], where));
      K.height = static_cast<int>(parse_int(tk[6], where));
      if (!K.valid()) throw DatasetError(where + ": invalid intrinsics");
      have_intrinsics = true;
    } else if (key == "extrinsic") {
      if (tk.size() != 8) throw DatasetError(where + ": extrinsic needs 7 values");
      ds.extrinsic = parse_pose(tk, 1, where);
    } else if (key == "frames") {
      if (tk.size() != 5 || tk[1] != "lidar" || tk[3] != "camera") {
        throw DatasetError(where + ": expected 'frames lidar <N> camera <M>'");
      }
      n_lidar = parse_int(tk[2], where);
      n_camera = parse_int(tk[4], where);
      have_frames = true;
    } else if (key == "lidar" || key == "camera") {
      if (tk.size() != 10) throw DatasetError(where + ": " + key + " record needs 9 fields");
      FrameRecord r;
      r.timestamp = parse_double(tk[1], where);
      r.path = tk[2];
      r.pose = parse_pose(tk, 3, where);
      (key == "lidar" ? ds.lidar : ds.camera).push_back(std::move(r));
    } else {
      throw DatasetError(where + ": unknown record '" + key + "'");
    }
  }
  if (!header) throw DatasetError(manifest.string() + ": empty manifest");
  if (!have_intrinsics) throw DatasetError(manifest.string() + ": no intrinsics line");
  if (!have_frames) throw DatasetError(manifest.string() + ": no frames line");
  if (static_cast<long>(ds.lidar.size()) != n_lidar) {
    throw CountMismatchError(manifest.string() + ": frames line declares " +
                             std::to_string(n_lidar) + " lidar records, found " +
                             std::to_string(ds.lidar.size()));
  }
  if (static_cast<long>(ds.camera.size()) != n_camera) {
    throw CountMismatchError(manifest.string() + ": frames line declares " +
                             std::to_string(n_camera) + " camera records, found " +
                             std::to_string(ds.camera.size()));
  }
  for (const auto* recs : {&ds.lidar, &ds.camera}) {
    const char* sensor = recs == &ds.lidar ? "lidar" : "camera";
    for (std::size_t i = 1; i < recs->size(); ++i) {
      if (!((*recs)[i].timestamp > (*recs)[i - 1].timestamp)) {
        throw TimestampOrderError(std::string(sensor) + " record " + std::to_string(i) + " (" +
                                  (*recs)[i].path + "): timestamp " +
                                  num((*recs)[i].timestamp) + " is not after " +
                                  num((*recs)[i - 1].timestamp));
      }
    }
  }
  for (const auto* recs : {&ds.lidar, &ds.camera}) {
    for (const auto& r : *recs) {
      const fs::path p = root / r.path;
      if (!fs::exists(p)) throw MissingFileError("missing file: " + p.string());
    }
  }
  return ds;
}

void write_manifest(const Dataset& ds) {
  std::ofstream os = open_out(ds.root / kManifestName);
  const auto& K = ds.intrinsics;
  os << "lvba_manifest 1\n";
  os << "intrinsics " << num(K.fx) << ' ' << num(K.fy) << ' ' << num(K.cx) << ' ' << num(K.cy)
     << ' ' << K.width << ' ' << K.height << '\n';
  if (ds.extrinsic) os << "extrinsic " << pose_text(*ds.extrinsic) << '\n';
  os << "frames lidar " << ds.lidar.size() << " camera " << ds.camera.size() << '\n';
  for (const auto* recs : {&ds.lidar, &ds.camera}) {
    const char* sensor = recs == &ds.lidar ? "lidar" : "camera";
    for (const auto& r : *recs) {
      if (r.path.empty() || r.path.find_first_of(" \t\n") != std::string::npos) {
        throw InvalidArgument("manifest paths must be non-empty without whitespace: '" + r.path +
                              "'");
      }
      os << sensor << ' ' << num(r.timestamp) << ' ' << r.path << ' ' << pose_text(r.pose)
         << '\n';
    }
  }
  if (!os) throw IoError("write failed: " + (ds.root / kManifestName).string());
}

std::vector<LidarScan> load_scans(const Dataset& ds) {
  std::vector<LidarScan> scans(ds.lidar.size());
  for (std::size_t i = 0; i < scans.size(); ++i) {
    scans[i].points = io::read_scan(ds.root / ds.lidar[i].path);
    scans[i].timestamp = ds.lidar[i].timestamp;
    scans[i].init_pose = ds.lidar[i].pose;
  }
  return scans;
}

std::vector<Image> load_images(const Dataset& ds, const std::vector<std::size_t>& frames) {
  std::vector<Image> images;
  images.reserve(frames.size());
  for (const std::size_t f : frames) {
    const fs::path p = ds.root / ds.camera.at(f).path;
    Image img = io::read_png(p);
    if (img.width() != ds.intrinsics.width || img.height() != ds.intrinsics.height) {
      throw DatasetError(p.string() + ": image size does not match the intrinsics");
    }
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<std::size_t> extract_keyframes(const Dataset& ds, const KeyframeConfig& cfg) {
  std::vector<std::size_t> kf;
  if (ds.camera.empty()) return kf;
  kf.push_back(0);
  const double rot = cfg.rot_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 1; i < ds.camera.size(); ++i) {
    const Pose& last = ds.camera[kf.back()].pose;
    const Pose& cur = ds.camera[i].pose;
    if (translation_distance(last, cur) >= cfg.trans || rotation_angle(last, cur) >= rot) {
      kf.push_back(i);
    }
  }
  return kf;
}

std::vector<Dataset> split_sequence(const Dataset& ds, std::size_t max_frames) {
  if (max_frames < 2) throw InvalidArgument("split_sequence: max_frames must be >= 2");
  const std::size_t m = ds.camera.size();
  if (m <= max_frames) return {ds};
  std::vector<double> stamps;
  for (const auto& r : ds.camera) stamps.push_back(r.timestamp);
  std::vector<std::size_t> owner;
  for (const auto& r : ds.lidar) owner.push_back(nearest_in_time(stamps, r.timestamp));

  std::vector<Dataset> out;
  for (std::size_t begin = 0;; begin += max_frames - 1) {
    const std::size_t end = std::min(begin + max_frames, m);
    Dataset c;
    c.root = ds.root;
    c.intrinsics = ds.intrinsics;
    c.extrinsic = ds.extrinsic;
    c.camera.assign(ds.camera.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.camera.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t s = 0; s < ds.lidar.size(); ++s) {
      if (owner[s] >= begin && owner[s] < end) c.lidar.push_back(ds.lidar[s]);
    }
    out.push_back(std::move(c));
    if (end == m) break;
  }
  return out;
}

// ---- configuration ----

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
      throw InvalidArgument("config: unknown key '" + where + "." + k + "'");
    }
  }
}

template <typename T>
void get(const json& j, const char* key, T& v) {
  if (!j.contains(key)) return;
  try {
    v = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument("config: " + what);
}

}  // namespace

void validate(const RunConfig& c) {
  const auto& m = c.lidar.map;
  require(m.voxel_size > 0.0, "lidar_ba.voxel_size must be > 0");
  require(m.min_pts >= 3, "lidar_ba.min_pts must be >= 3");
  require(m.max_eigen_ratio > 0.0 && m.max_eigen_ratio <= 1.0,
          "lidar_ba.max_eigen_ratio must be in (0, 1]");
  require(m.max_thickness > 0.0, "lidar_ba.max_thickness must be > 0");
  require(c.lidar.max_outer_iters >= 1, "lidar_ba.max_outer_iters must be >= 1");
  require(c.lidar.max_inner_iters >= 1, "lidar_ba.max_inner_iters must be >= 1");
  require(c.lidar.lambda_init > 0.0, "lidar_ba.lambda_init must be > 0");
  require(c.lidar.lambda_up > 1.0, "lidar_ba.lambda_up must be > 1");
  require(c.lidar.lambda_down > 0.0 && c.lidar.lambda_down < 1.0,
          "lidar_ba.lambda_down must be in (0, 1)");
  require(c.lidar.max_reject >= 1, "lidar_ba.max_reject must be >= 1");
  require(c.lidar.pose_tolerance >= 0.0, "lidar_ba.pose_tolerance must be >= 0");
  require(c.lidar.cost_tolerance >= 0.0, "lidar_ba.cost_tolerance must be >= 0");
  require(c.lidar.feature_stride >= 1, "lidar_ba.feature_stride must be >= 1");

  const auto& p = c.visual.points;
  for (const auto& [name, a] : {std::pair{"alpha0", p.alpha0}, std::pair{"alpha1", p.alpha1},
                                std::pair{"alpha2", p.alpha2}}) {
    require(a >= 0.0 && a < 1.0, std::string("scene_points.") + name + " must be in [0, 1)");
  }
  require(p.alpha3 >= -1.0 && p.alpha3 < 1.0, "scene_points.alpha3 must be in [-1, 1)");
  require(p.cell >= 8, "scene_points.cell must be >= 8");
  require(p.window_size >= 1, "scene_points.window_size must be >= 1");
  require(p.sigma1 > 0.0 && p.sigma2 > p.sigma1, "scene_points needs 0 < sigma1 < sigma2");
  require(p.min_score >= 0.0, "scene_points.min_score must be >= 0");
  require(p.radius > 0.0, "scene_points.radius must be > 0");
  require(p.patch_size >= 2 && p.patch_size % 2 == 0,
          "scene_points.patch_size must be even and >= 2");

  require(c.visual.visibility.voxel_size > 0.0, "visibility.voxel_size must be > 0");
  require(c.visual.visibility.proximity > 0.0, "visibility.proximity must be > 0");

  const auto& s = c.visual.solver;
  require(s.max_iters >= 1, "solver.max_iters must be >= 1");
  require(s.lambda_init > 0.0, "solver.lambda_init must be > 0");
  require(s.lambda_up > 1.0, "solver.lambda_up must be > 1");
  require(s.lambda_down > 0.0 && s.lambda_down < 1.0, "solver.lambda_down must be in (0, 1)");
  require(s.max_reject >= 1, "solver.max_reject must be >= 1");
  require(s.cost_tolerance >= 0.0, "solver.cost_tolerance must be >= 0");
  require(s.step_tolerance >= 0.0, "solver.step_tolerance must be >= 0");
  require(s.huber > 0.0, "solver.huber must be > 0");
  require(s.levels >= 1 && s.levels <= 8, "solver.levels must be in [1, 8]");

  require(c.render.splat >= 0 && c.render.splat <= 8, "render.splat must be in [0, 8]");
  require(c.keyframes.trans >= 0.0, "keyframes.trans must be >= 0");
  require(c.keyframes.rot_deg >= 0.0, "keyframes.rot_deg must be >= 0");
  require(c.max_frames == 0 || c.max_frames >= 2, "max_frames must be 0 or >= 2");
}

void to_json(json& j, const RunConfig& c) {
  const auto& m = c.lidar.map;
  const auto& p = c.visual.points;
  const auto& s = c.visual.solver;
  j = json{
      {"lidar_ba",
       {{"voxel_size", m.voxel_size},
        {"min_pts", m.min_pts},
        {"max_eigen_ratio", m.max_eigen_ratio},
        {"max_thickness", m.max_thickness},
        {"max_outer_iters", c.lidar.max_outer_iters},
        {"max_inner_iters", c.lidar.max_inner_iters},
        {"lambda_init", c.lidar.lambda_init},
        {"lambda_up", c.lidar.lambda_up},
        {"lambda_down", c.lidar.lambda_down},
        {"max_reject", c.lidar.max_reject},
        {"pose_tolerance", c.lidar.pose_tolerance},
        {"cost_tolerance", c.lidar.cost_tolerance},
        {"feature_stride", c.lidar.feature_stride}}},
      {"scene_points",
       {{"alpha0", p.alpha0},
        {"alpha1", p.alpha1},
        {"alpha2", p.alpha2},
        {"alpha3", p.alpha3},
        {"cell", p.cell},
        {"window_size", p.window_size},
        {"sigma1", p.sigma1},
        {"sigma2", p.sigma2},
        {"min_score", p.min_score},
        {"radius", p.radius},
        {"patch_size", p.patch_size}}},
      {"visibility",
       {{"voxel_size", c.visual.visibility.voxel_size},
        {"proximity", c.visual.visibility.proximity}}},
      {"solver",
       {{"max_iters", s.max_iters},
        {"lambda_init", s.lambda_init},
        {"lambda_up", s.lambda_up},
        {"lambda_down", s.lambda_down},
        {"max_reject", s.max_reject},
        {"cost_tolerance", s.cost_tolerance},
        {"step_tolerance", s.step_tolerance},
        {"huber", s.huber},
        {"levels", s.levels}}},
      {"render", {{"splat", c.render.splat}}},
      {"keyframes", {{"trans", c.keyframes.trans}, {"rot_deg", c.keyframes.rot_deg}}},
      {"stages",
       {{"skip_lidar_ba", c.stages.skip_lidar_ba},
        {"skip_visual_ba", c.stages.skip_visual_ba},
        {"gsp", c.stages.gsp},
        {"ret", c.stages.ret}}},
      {"seed", c.seed},
      {"max_frames", c.max_frames}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j, "", {"lidar_ba", "scene_points", "visibility", "solver", "render", "keyframes",
                     "stages", "seed", "max_frames"});
  if (j.contains("lidar_ba")) {
    const auto& l = j["lidar_ba"];
    check_keys(l, "lidar_ba",
               {"voxel_size", "min_pts", "max_eigen_ratio", "max_thickness", "max_outer_iters",
                "max_inner_iters", "lambda_init", "lambda_up", "lambda_down", "max_reject",
                "pose_tolerance", "cost_tolerance", "feature_stride"});
    get(l, "voxel_size", c.lidar.map.voxel_size);
    get(l, "min_pts", c.lidar.map.min_pts);
    get(l, "max_eigen_ratio", c.lidar.map.max_eigen_ratio);
    get(l, "max_thickness", c.lidar.map.max_thickness);
    get(l, "max_outer_iters", c.lidar.max_outer_iters);
    get(l, "max_inner_iters", c.lidar.max_inner_iters);
    get(l, "lambda_init", c.lidar.lambda_init);
    get(l, "lambda_up", c.lidar.lambda_up);
    get(l, "lambda_down", c.lidar.lambda_down);
    get(l, "max_reject", c.lidar.max_reject);
    get(l, "pose_tolerance", c.lidar.pose_tolerance);
    get(l, "cost_tolerance", c.lidar.cost_tolerance);
    get(l, "feature_stride", c.lidar.feature_stride);
  }
  if (j.contains("scene_points")) {
    const auto& p = j["scene_points"];
    check_keys(p, "scene_points",
               {"alpha0", "alpha1", "alpha2", "alpha3", "cell", "window_size", "sigma1",
                "sigma2", "min_score", "radius", "patch_size"});
    auto& sp = c.visual.points;
    get(p, "alpha0", sp.alpha0);
    get(p, "alpha1", sp.alpha1);
    get(p, "alpha2", sp.alpha2);
    get(p, "alpha3", sp.alpha3);
    get(p, "cell", sp.cell);
    get(p, "window_size", sp.window_size);
    get(p, "sigma1", sp.sigma1);
    get(p, "sigma2", sp.sigma2);
    get(p, "min_score", sp.min_score);
    get(p, "radius", sp.radius);
    get(p, "patch_size", sp.patch_size);
  }
  c.visual.solver.patch_size = c.visual.points.patch_size;
  if (j.contains("visibility")) {
    const auto& v = j["visibility"];
    check_keys(v, "visibility", {"voxel_size", "proximity"});
    get(v, "voxel_size", c.visual.visibility.voxel_size);
    get(v, "proximity", c.visual.visibility.proximity);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver",
               {"max_iters", "lambda_init", "lambda_up", "lambda_down", "max_reject",
                "cost_tolerance", "step_tolerance", "huber", "levels"});
    auto& so = c.visual.solver;
    get(s, "max_iters", so.max_iters);
    get(s, "lambda_init", so.lambda_init);
    get(s, "lambda_up", so.lambda_up);
    get(s, "lambda_down", so.lambda_down);
    get(s, "max_reject", so.max_reject);
    get(s, "cost_tolerance", so.cost_tolerance);
    get(s, "step_tolerance", so.step_tolerance);
    get(s, "huber", so.huber);
    get(s, "levels", so.levels);
  }
  if (j.contains("render")) {
    check_keys(j["render"], "render", {"splat"});
    get(j["render"], "splat", c.render.splat);
  }
  if (j.contains("keyframes")) {
    check_keys(j["keyframes"], "keyframes", {"trans", "rot_deg"});
    get(j["keyframes"], "trans", c.keyframes.trans);
    get(j["keyframes"], "rot_deg", c.keyframes.rot_deg);
  }
  if (j.contains("stages")) {
    const auto& s = j["stages"];
    check_keys(s, "stages", {"skip_lidar_ba", "skip_visual_ba", "gsp", "ret"});
    get(s, "skip_lidar_ba", c.stages.skip_lidar_ba);
    get(s, "skip_visual_ba", c.stages.skip_visual_ba);
    get(s, "gsp", c.stages.gsp);
    get(s, "ret", c.stages.ret);
  }
  get(j, "seed", c.seed);
  get(j, "max_frames", c.max_frames);
  validate(c);
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  RunConfig cfg;
  from_json(j, cfg);
  return cfg;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---- pipeline ----

namespace {

struct Hasher {
  std::uint64_t h = 0xcbf29ce484222325ull;

  void add(const void* p, std::size_t n) { h = fnv1a(p, n, h); }
  void add(double v) { add(&v, sizeof v); }
  void add(const Vec3& v) { add(v.data(), 3 * sizeof(double)); }
  void add(const Pose& p) {
    add(p.translation());
    add(p.quaternion().coeffs().data(), 4 * sizeof(double));
  }
  void add(const Image& img) { add(img.data().data(), img.data().size() * sizeof(double)); }
  void add(const std::string& s) { add(s.data(), s.size()); }

  std::string hex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

bool g_stderr_log = true;

class Log {
public:
  explicit Log(const fs::path& path) : os_(open_out(path)) {}

  void line(const std::string& s) {
    os_ << s << '\n';
    os_.flush();
    if (g_stderr_log) std::cerr << "lvba: " << s << '\n';
  }

private:
  std::ofstream os_;
};

template <typename Fn>
auto stage(Log& log, const char* name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  log.line(std::string("stage ") + name + " begin");
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      log.line(std::string("stage ") + name + " done seconds=" +
               num(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
    } else {
      auto r = fn();
      log.line(std::string("stage ") + name + " done seconds=" +
               num(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    log.line(std::string("stage ") + name + " failed: " + e.what());
    throw StageError(name, e.what());
  }
}

std::string frame_name(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", f);
  return buf;
}

json report_summary(const EvalReport& r) {
  return {{"mean_psnr_db", r.mean_psnr_db},
          {"mean_ssim", r.mean_ssim},
          {"mean_coverage_fraction", r.mean_coverage},
          {"frames", r.frames.size()}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os = open_out(path);
  os << j.dump(2) << '\n';
}

void write_report_file(const fs::path& path, const EvalReport& r) {
  std::ofstream os = open_out(path);
  write_report(os, r);
}

}  // namespace

void set_stderr_logging(bool on) { g_stderr_log = on; }

RunSummary run_pipeline(const Dataset& ds, const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(out / "renders", ec);
  if (ec) throw IoError("cannot create run directory " + out.string() + ": " + ec.message());
  json cfg_json = cfg;
  write_json(out / "config.json", cfg_json);
  Log log(out / "pipeline.log");
  log.line("run dataset=" + ds.root.string() + " lidar=" + std::to_string(ds.lidar.size()) +
           " camera=" + std::to_string(ds.camera.size()) + " seed=" + std::to_string(cfg.seed));

  RunSummary res;
  const Intrinsics& K = ds.intrinsics;
  std::vector<LidarScan> scans;
  std::vector<Image> images;
  std::vector<double> cam_stamps;

  stage(log, "load", [&] {
    if (ds.camera.empty()) throw DatasetError("dataset has no camera frames");
    if (ds.lidar.empty()) throw DatasetError("dataset has no lidar scans");
    res.keyframes = extract_keyframes(ds, cfg.keyframes);
    scans = load_scans(ds);
    images = load_images(ds, res.keyframes);
    for (const auto f : res.keyframes) cam_stamps.push_back(ds.camera[f].timestamp);
    std::ofstream os = open_out(out / "keyframes.txt");
    for (const auto f : res.keyframes) os << f << '\n';
    log.line("load keyframes=" + std::to_string(res.keyframes.size()) +
             " scans=" + std::to_string(scans.size()));
  });

  std::vector<Pose> lidar_init;
  for (const auto& s : scans) lidar_init.push_back(s.init_pose);

  stage(log, "lidar_ba", [&] {
    Hasher h;
    for (const auto& s : scans) {
      h.add(s.points.data(), s.points.size() * sizeof(Vec3));
      h.add(s.init_pose);
    }
    log.line("lidar_ba input_hash=" + h.hex() + " skip=" + std::to_string(cfg.stages.skip_lidar_ba));
    if (cfg.stages.skip_lidar_ba) {
      const auto map = build_plane_voxel_map(scans, lidar_init, cfg.lidar.map);
      res.lidar_ba.poses = lidar_init;
      res.lidar_ba.initial_cost = res.lidar_ba.final_cost =
          point_to_plane_cost(scans, lidar_init, map);
      res.lidar_ba.features =
          extract_plane_features(scans, lidar_init, map, cfg.lidar.feature_stride);
      res.lidar_ba.message = "skipped";
    } else {
      res.lidar_ba = optimize_lidar_poses(scans, lidar_init, cfg.lidar);
    }
    res.lidar_poses = res.lidar_ba.poses;
    for (std::size_t i = 0; i < res.lidar_ba.accepted_costs.size(); ++i) {
      log.line("lidar_ba step " + std::to_string(i) + " cost=" + num(res.lidar_ba.accepted_costs[i]));
    }
    log.line("lidar_ba initial_cost=" + num(res.lidar_ba.initial_cost) +
             " final_cost=" + num(res.lidar_ba.final_cost) +
             " outer_iterations=" + std::to_string(res.lidar_ba.outer_iterations) +
             " features=" + std::to_string(res.lidar_ba.features.size()) + " message=\"" +
             res.lidar_ba.message + "\"");
    if (res.lidar_ba.diverged) throw OptimizationError(res.lidar_ba.message);
    write_lidar_poses(out / "lidar_poses.txt", scans, res.lidar_poses);
  });

  stage(log, "propagate", [&] {
    Hasher h;
    for (const auto& p : lidar_init) h.add(p);
    for (const auto& p : res.lidar_poses) h.add(p);
    for (const auto f : res.keyframes) h.add(ds.camera[f].pose);
    log.line("propagate input_hash=" + h.hex());
    res.camera_states = propagate_states(ds, res.keyframes, lidar_init, res.lidar_poses);
  });

  stage(log, "visual_ba", [&] {
    VisualBaConfig vcfg = cfg.visual;
    vcfg.use_global = cfg.stages.gsp;
    vcfg.estimate_exposure = cfg.stages.ret;
    Hasher h;
    for (const auto& s : res.camera_states) {
      h.add(s.pose);
      h.add(s.exposure);
    }
    for (const auto& img : images) h.add(img);
    for (const auto& f : res.lidar_ba.features) {
      h.add(f.p_f);
      h.add(f.n_f);
    }
    log.line("visual_ba input_hash=" + h.hex() + " skip=" +
             std::to_string(cfg.stages.skip_visual_ba) + " gsp=" +
             std::to_string(cfg.stages.gsp) + " ret=" + std::to_string(cfg.stages.ret));
    if (cfg.stages.skip_visual_ba) return;

    const VisualBaInputs in = visual_inputs(scans, res.lidar_poses, res.lidar_ba.features, images,
                                            res.camera_states, K, cfg);

    res.camera_states = coarse_to_fine(res.camera_states, in, vcfg, &res.visual_ba);
    for (const auto& lr : res.visual_ba.levels) {
      if (!lr.exposure_solve.log.empty()) {
        log.line("visual_ba level=" + std::to_string(lr.level) + " exposure_only cost " +
                 num(lr.exposure_solve.initial_cost) + " -> " +
                 num(lr.exposure_solve.final_cost) + " iters=" +
                 std::to_string(lr.exposure_solve.iterations) + " termination=\"" +
                 lr.exposure_solve.termination + "\"");
      }
      for (const auto& it : lr.solve.log) {
        log.line("visual_ba level=" + std::to_string(it.level) +
                 " iter=" + std::to_string(it.iteration) + " cost_before=" + num(it.cost_before) +
                 " cost_after=" + num(it.cost_after) + " lambda=" + num(it.lambda) +
                 " step_norm=" + num(it.step_norm) +
                 " active_items=" + std::to_string(it.active_items) +
                 " accepted=" + std::to_string(it.accepted));
      }
      log.line("visual_ba level=" + std::to_string(lr.level) +
               " local_points=" + std::to_string(lr.local_points) +
               " global_points=" + std::to_string(lr.global_points) +
               " items=" + std::to_string(lr.items) +
               " global_items=" + std::to_string(lr.global_items) +
               " cost_start=" + num(lr.cost_start) + " cost_end=" + num(lr.cost_end) +
               " termination=\"" + lr.solve.termination + "\"");
    }
  });
  write_camera_states(out / "camera_states.txt", res.keyframes, cam_stamps, res.camera_states);

  stage(log, "colorize", [&] {
    Hasher h;
    for (const auto& p : res.lidar_poses) h.add(p);
    for (const auto& s : res.camera_states) {
      h.add(s.pose);
      h.add(s.exposure);
    }
    log.line("colorize input_hash=" + h.hex());
    res.cloud = colorize(scans, res.lidar_poses, res.camera_states, cam_stamps, images, K);
    if (res.cloud.empty()) throw Error("no LiDAR point projects into any keyframe");
    io::write_cloud(out / "cloud.bin", res.cloud);
    log.line("colorize points=" + std::to_string(res.cloud.size()));
  });

  stage(log, "render", [&] {
    for (std::size_t k = 0; k < res.camera_states.size(); ++k) {
      const RenderResult rr = render(res.cloud, res.camera_states[k], K, cfg.render);
      const std::string name = frame_name(res.keyframes[k]);
      io::write_png(out / "renders" / (name + ".png"), rr.image);
      io::write_depth_png(out / "renders" / (name + "_depth.png"), rr.depth, K.width, K.height);
    }
  });

  stage(log, "evaluate", [&] {
    res.report = evaluate_run(res.camera_states, res.cloud, images, K, cfg.render);
    for (std::size_t k = 0; k < res.report.frames.size(); ++k) {
      res.report.frames[k].frame_id = static_cast<int>(res.keyframes[k]);
    }
    write_report_file(out / "report.txt", res.report);
    log.line("evaluate mean_psnr_db=" + num(res.report.mean_psnr_db) +
             " mean_ssim=" + num(res.report.mean_ssim) +
             " mean_coverage_fraction=" + num(res.report.mean_coverage));
  });

  json levels = json::array();
  for (const auto& lr : res.visual_ba.levels) {
    levels.push_back({{"level", lr.level},
                      {"local_points", lr.local_points},
                      {"global_points", lr.global_points},
                      {"items", lr.items},
                      {"global_items", lr.global_items},
                      {"cost_start", lr.cost_start},
                      {"cost_end", lr.cost_end},
                      {"iterations", lr.solve.iterations},
                      {"termination", lr.solve.termination}});
  }
  json summary = {{"keyframes", res.keyframes.size()},
                  {"scans", scans.size()},
                  {"cloud_points", res.cloud.size()},
                  {"lidar_ba",
                   {{"initial_cost", res.lidar_ba.initial_cost},
                    {"final_cost", res.lidar_ba.final_cost},
                    {"outer_iterations", res.lidar_ba.outer_iterations},
                    {"message", res.lidar_ba.message}}},
                  {"visual_ba", levels},
                  {"evaluation", report_summary(res.report)}};
  write_json(out / "summary.json", summary);
  log.line("run done");
  return res;
}

EvalReport run_split(const Dataset& ds, const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  const auto kf = extract_keyframes(ds, cfg.keyframes);
  Dataset kds = ds;
  kds.camera.clear();
  for (const auto f : kf) kds.camera.push_back(ds.camera[f]);
  const auto chunks = cfg.max_frames >= 2
                          ? split_sequence(kds, static_cast<std::size_t>(cfg.max_frames))
                          : std::vector<Dataset>{kds};
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  json cfg_json = cfg;
  write_json(out / "config.json", cfg_json);

  std::vector<EvalReport> reports;
  json per_chunk = json::array();
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const auto sub = out / ("chunk_" + std::to_string(c));
    reports.push_back(run_pipeline(chunks[c], cfg, sub).report);
    per_chunk.push_back(report_summary(reports.back()));
  }
  const EvalReport avg = average_reports(reports);
  write_report_file(out / "report.txt", avg);
  json summary = {{"chunks", chunks.size()},
                  {"keyframes", kf.size()},
                  {"per_chunk", per_chunk},
                  {"evaluation", report_summary(avg)}};
  write_json(out / "summary.json", summary);
  return avg;
}

// ---- synthetic export ----

Dataset write_synthetic_dataset(const synth::SceneSpec& scene, const fs::path& root,
                                const SynthOptions& opts) {
  std::error_code ec;
  fs::create_directories(root / "scans", ec);
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + root.string() + ": " + ec.message());

  const double deg = std::numbers::pi / 180.0;
  const std::size_t n = scene.frame_count();
  std::vector<Pose> lidar = scene.trajectory;
  if (opts.lidar_trans > 0.0 || opts.lidar_rot_deg > 0.0) {
    lidar = synth::perturb_fixed(scene.trajectory, opts.lidar_trans, opts.lidar_rot_deg * deg,
                                 opts.seed, {0});
  }
  std::vector<Pose> camera;
  for (std::size_t f = 0; f < n; ++f) camera.push_back(lidar[f] * scene.camera_extrinsic);
  if (opts.camera_trans > 0.0 || opts.camera_rot_deg > 0.0) {
    camera = synth::perturb_fixed(camera, opts.camera_trans, opts.camera_rot_deg * deg,
                                  opts.seed + 1);
  }

  Dataset ds;
  ds.root = root;
  ds.intrinsics = scene.intrinsics;
  ds.extrinsic = scene.camera_extrinsic;
  std::vector<Image> rendered(n);
  std::vector<LidarScan> scans(n);
  parallel_for(n, [&](std::size_t f) {
    rendered[f] = synth::render_ground_truth(scene, f);
    scans[f] = synth::simulate_lidar(scene, f, opts.lidar_noise);
  });
  for (std::size_t f = 0; f < n; ++f) {
    const std::string name = frame_name(f);
    io::write_scan(root / "scans" / (name + ".bin"), scans[f].points);
    io::write_png(root / "images" / (name + ".png"), rendered[f]);
    ds.lidar.push_back({scene.timestamp(f), "scans/" + name + ".bin", lidar[f]});
    ds.camera.push_back({scene.timestamp(f), "images/" + name + ".png", camera[f]});
  }
  write_manifest(ds);

  std::ofstream gt = open_out(root / "ground_truth.txt");
  for (std::size_t f = 0; f < n; ++f) {
    gt << "lidar " << num(scene.timestamp(f)) << ' ' << pose_text(scene.trajectory[f]) << '\n';
  }
  for (std::size_t f = 0; f < n; ++f) {
    gt << "camera " << num(scene.timestamp(f)) << ' ' << pose_text(scene.camera_pose(f)) << ' '
       << num(scene.exposures[f]) << '\n';
  }
  json sj = scene;
  write_json(root / "scene.json", sj);
  return ds;
}

GroundTruth load_ground_truth(const fs::path& root) {
  std::ifstream is = open_in(root / "ground_truth.txt");
  GroundTruth gt;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto tk = tokens(line);
    if (tk.empty()) continue;
    const std::string where = "ground_truth.txt:" + std::to_string(line_no);
    if (tk[0] == "lidar" && tk.size() == 9) {
      gt.lidar.push_back(parse_pose(tk, 2, where));
    } else if (tk[0] == "camera" && tk.size() == 10) {
      gt.camera.push_back(parse_pose(tk, 2, where));
      gt.exposures.push_back(parse_double(tk[9], where));
    } else {
      throw DatasetError(where + ": malformed record");
    }
  }
  return gt;
}

std::vector<CameraState> read_camera_states(const fs::path& path,
                                            std::vector<std::size_t>* frames) {
  std::ifstream is = open_in(path);
  std::vector<CameraState> out;
  if (frames) frames->clear();
  std::string line;
  while (std::getline(is, line)) {
    const auto tk = tokens(line);
    if (tk.empty()) continue;
    if (tk.size() != 10) throw IoError(path.string() + ": malformed state row");
    CameraState s;
    s.pose = parse_pose(tk, 2, path.string());
    s.exposure = parse_double(tk[9], path.string());
    out.push_back(s);
    if (frames) frames->push_back(static_cast<std::size_t>(parse_int(tk[0], path.string())));
  }
  return out;
}

std::vector<Pose> read_lidar_poses(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::vector<Pose> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto tk = tokens(line);
    if (tk.empty()) continue;
    if (tk.size() != 8) throw IoError(path.string() + ": malformed pose row");
    out.push_back(parse_pose(tk, 1, path.string()));
  }
  return out;
}

void write_lidar_poses(const fs::path& path, const std::vector<LidarScan>& scans,
                       const std::vector<Pose>& poses) {
  std::ofstream os = open_out(path);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    os << num(scans[i].timestamp) << ' ' << pose_text(poses[i]) << '\n';
  }
}

void write_camera_states(const fs::path& path, const std::vector<std::size_t>& frames,
                         const std::vector<double>& stamps,
                         const std::vector<CameraState>& states) {
  std::ofstream os = open_out(path);
  for (std::size_t i = 0; i < states.size(); ++i) {
    os << frames[i] << ' ' << num(stamps[i]) << ' ' << pose_text(states[i].pose) << ' '
       << num(states[i].exposure) << '\n';
  }
}

std::vector<CameraState> propagate_states(const Dataset& ds,
                                          const std::vector<std::size_t>& keyframes,
                                          const std::vector<Pose>& lidar_init,
                                          const std::vector<Pose>& lidar_opt) {
  if (lidar_init.size() != ds.lidar.size() || lidar_opt.size() != ds.lidar.size()) {
    throw InvalidArgument("propagate_states: LiDAR pose count does not match the dataset");
  }
  std::vector<double> stamps;
  for (const auto& r : ds.lidar) stamps.push_back(r.timestamp);
  std::vector<CameraState> states;
  for (const auto f : keyframes) {
    const std::size_t s = nearest_in_time(stamps, ds.camera.at(f).timestamp);
    CameraState st;
    st.pose = propagate_camera_pose(ds.camera[f].pose, lidar_init[s], lidar_opt[s]);
    states.push_back(st);
  }
  return states;
}

VisualBaInputs visual_inputs(const std::vector<LidarScan>& scans,
                             const std::vector<Pose>& lidar_poses,
                             const std::vector<PlaneFeature>& features,
                             const std::vector<Image>& images,
                             std::span<const CameraState> states, const Intrinsics& K,
                             const RunConfig& cfg) {
  VisualBaInputs in;
  for (const auto& img : images) {
    in.pyramids.push_back(build_pyramid(img, K, cfg.visual.solver.levels));
  }
  in.features = features;
  for (const auto& p : lidar_poses) in.scan_positions.push_back(p.translation());
  in.support = plane_support(features, cfg.lidar.map.voxel_size);
  std::vector<Vec3> cam_pos;
  for (const auto& s : states) cam_pos.push_back(s.pose.translation());
  in.vmap = build_visibility_map(scans, lidar_poses, cam_pos, cfg.visual.visibility);
  return in;
}

}  // namespace lvba
