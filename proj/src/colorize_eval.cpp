#include "lvba/colorize_eval.hpp"

#include "lvba/errors.hpp"
#include "lvba/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace lvba {

RadianceCloud colorize(const std::vector<LidarScan>& scans, const std::vector<Pose>& lidar_poses,
                       std::span<const CameraState> states,
                       std::span<const double> camera_stamps, std::span<const Image> images,
                       const Intrinsics& K) {
  if (scans.size() != lidar_poses.size()) {
    throw InvalidArgument("colorize: scan/pose count mismatch");
  }
  if (states.size() != camera_stamps.size() || states.size() != images.size()) {
    throw InvalidArgument("colorize: camera state/stamp/image count mismatch");
  }
  if (states.empty()) return {};
  const std::vector<double> stamps(camera_stamps.begin(), camera_stamps.end());

  std::vector<RadianceCloud> per_scan(scans.size());
  parallel_for(scans.size(), [&](std::size_t s) {
    const std::size_t c = nearest_in_time(stamps, scans[s].timestamp);
    const CameraState& st = states[c];
    const Pose& T_L = lidar_poses[s];
    auto& out = per_scan[s];
    out.reserve(scans[s].points.size());
    for (const auto& q : scans[s].points) {
      const Vec3 p = T_L * q;
      const auto u = project(K, st.pose, p);
      if (!u) continue;
      out.push_back({p, sample_bilinear(images[c], *u) / st.exposure});
    }
  });
  RadianceCloud cloud;
  for (auto& v : per_scan) cloud.insert(cloud.end(), v.begin(), v.end());
  return cloud;
}

std::size_t RenderResult::covered() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

RenderResult render(const RadianceCloud& cloud, const CameraState& state, const Intrinsics& K,
                    const RenderConfig& cfg) {
  const int w = K.width, h = K.height;
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  RenderResult res;
  res.image = Image(w, h, 0.0);
  res.depth.assign(npx, 0.0);
  res.mask.assign(npx, 0);
  std::vector<std::size_t> owner(npx, std::numeric_limits<std::size_t>::max());

  const Pose inv = state.pose.inverse();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = inv * cloud[i].position;
    if (pc.z() <= kMinDepth) continue;
    const double u = K.fx * pc.x() / pc.z() + K.cx;
    const double v = K.fy * pc.y() / pc.z() + K.cy;
    if (!std::isfinite(u) || !std::isfinite(v)) continue;
    const long cx = std::lround(u), cy = std::lround(v);
    for (long y = cy - cfg.splat; y <= cy + cfg.splat; ++y) {
      if (y < 0 || y >= h) continue;
      for (long x = cx - cfg.splat; x <= cx + cfg.splat; ++x) {
        if (x < 0 || x >= w) continue;
        const std::size_t k = static_cast<std::size_t>(y) * w + x;
        if (res.mask[k] && res.depth[k] <= pc.z()) continue;
        res.mask[k] = 1;
        res.depth[k] = pc.z();
        owner[k] = i;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      if (!res.mask[k]) continue;
      const Vec3 c = (state.exposure * cloud[owner[k]].radiance).cwiseMax(0.0).cwiseMin(1.0);
      res.image.set(x, y, c);
    }
  }
  return res;
}

namespace {

void check_pair(const Image& a, const Image& b, const Mask& mask, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw InvalidArgument(std::string(what) + ": image dimensions differ");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(a.width()) * a.height()) {
    throw InvalidArgument(std::string(what) + ": mask size does not match image");
  }
  const bool any = mask.empty() ? a.width() * a.height() > 0
                                : std::find(mask.begin(), mask.end(), 1) != mask.end();
  if (!any) throw InvalidArgument(std::string(what) + ": empty mask");
}

bool masked(const Mask& mask, std::size_t k) { return mask.empty() || mask[k]; }

std::vector<double> luma(const Image& img) {
  std::vector<double> y(static_cast<std::size_t>(img.width()) * img.height());
  const auto d = img.data();
  for (std::size_t k = 0; k < y.size(); ++k) {
    y[k] = 0.299 * d[3 * k] + 0.587 * d[3 * k + 1] + 0.114 * d[3 * k + 2];
  }
  return y;
}

}  // namespace

double psnr(const Image& a, const Image& b, const Mask& mask) {
  check_pair(a, b, mask, "psnr");
  const auto da = a.data(), db = b.data();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < da.size() / 3; ++k) {
    if (!masked(mask, k)) continue;
    for (int c = 0; c < 3; ++c) {
      const double e = da[3 * k + c] - db[3 * k + c];
      sum += e * e;
    }
    n += 3;
  }
  const double mse = sum / static_cast<double>(n);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, const Mask& mask) {
  check_pair(a, b, mask, "ssim");
  constexpr int R = 5;
  constexpr double sigma = 1.5;
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  std::array<double, 2 * R + 1> g{};
  for (int i = -R; i <= R; ++i) g[i + R] = std::exp(-0.5 * i * i / (sigma * sigma));

  const int w = a.width(), h = a.height();
  const auto ya = luma(a), yb = luma(b);
  std::vector<double> score(static_cast<std::size_t>(w) * h, 0.0);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      if (!masked(mask, k)) continue;
      double sw = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -R; dy <= R; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -R; dx <= R; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const std::size_t kk = static_cast<std::size_t>(yy) * w + xx;
          if (!masked(mask, kk)) continue;
          const double wt = g[dy + R] * g[dx + R];
          const double va = ya[kk], vb = yb[kk];
          sw += wt;
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      ma /= sw;
      mb /= sw;
      const double va = std::max(0.0, saa / sw - ma * ma);
      const double vb = std::max(0.0, sbb / sw - mb * mb);
      const double cov = sab / sw - ma * mb;
      score[k] = ((2 * ma * mb + C1) * (2 * cov + C2)) /
                 ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
  });
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < score.size(); ++k) {
    if (!masked(mask, k)) continue;
    sum += score[k];
    ++n;
  }
  return sum / static_cast<double>(n);
}

namespace {

void fill_means(EvalReport& r) {
  r.mean_psnr_db = r.mean_ssim = r.mean_coverage = 0.0;
  if (r.frames.empty()) return;
  for (const auto& f : r.frames) {
    r.mean_psnr_db += f.psnr_db;
    r.mean_ssim += f.ssim;
    r.mean_coverage += f.coverage_fraction;
  }
  const double n = static_cast<double>(r.frames.size());
  r.mean_psnr_db /= n;
  r.mean_ssim /= n;
  r.mean_coverage /= n;
}

}  // namespace

EvalReport evaluate_run(std::span<const CameraState> states, const RadianceCloud& cloud,
                        std::span<const Image> images, const Intrinsics& K,
                        const RenderConfig& cfg) {
  if (states.size() != images.size()) {
    throw InvalidArgument("evaluate_run: state/image count mismatch");
  }
  if (cloud.empty()) throw InvalidArgument("evaluate_run: empty cloud");
  EvalReport rep;
  rep.frames.resize(states.size());
  for (std::size_t f = 0; f < states.size(); ++f) {
    const RenderResult rr = render(cloud, states[f], K, cfg);
    FrameEval& fe = rep.frames[f];
    fe.frame_id = static_cast<int>(f);
    fe.coverage_fraction =
        static_cast<double>(rr.covered()) / static_cast<double>(rr.mask.size());
    if (rr.covered() == 0) continue;
    fe.psnr_db = psnr(rr.image, images[f], rr.mask);
    fe.ssim = ssim(rr.image, images[f], rr.mask);
  }
  fill_means(rep);
  return rep;
}

EvalReport average_reports(std::span<const EvalReport> reports) {
  EvalReport out;
  if (reports.empty()) return out;
  for (const auto& r : reports) {
    out.frames.insert(out.frames.end(), r.frames.begin(), r.frames.end());
    out.mean_psnr_db += r.mean_psnr_db;
    out.mean_ssim += r.mean_ssim;
    out.mean_coverage += r.mean_coverage;
  }
  const double n = static_cast<double>(reports.size());
  out.mean_psnr_db /= n;
  out.mean_ssim /= n;
  out.mean_coverage /= n;
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report(std::ostream& os, const EvalReport& report) {
  os << "frames " << report.frames.size() << '\n';
  for (const auto& f : report.frames) {
    os << "frame frame_id=" << f.frame_id << " psnr_db=" << num(f.psnr_db)
       << " ssim=" << num(f.ssim) << " coverage_fraction=" << num(f.coverage_fraction) << '\n';
  }
  os << "mean_psnr_db " << num(report.mean_psnr_db) << '\n';
  os << "mean_ssim " << num(report.mean_ssim) << '\n';
  os << "mean_coverage_fraction " << num(report.mean_coverage) << '\n';
}

EvalReport read_report(std::istream& is) {
  EvalReport rep;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frame") {
      FrameEval f;
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw IoError("malformed report row: " + line);
        const std::string k = kv.substr(0, eq);
        const double v = std::stod(kv.substr(eq + 1));
        if (k == "frame_id") f.frame_id = static_cast<int>(v);
        else if (k == "psnr_db") f.psnr_db = v;
        else if (k == "ssim") f.ssim = v;
        else if (k == "coverage_fraction") f.coverage_fraction = v;
      }
      rep.frames.push_back(f);
    } else if (key == "mean_psnr_db") {
      ls >> rep.mean_psnr_db;
    } else if (key == "mean_ssim") {
      ls >> rep.mean_ssim;
    } else if (key == "mean_coverage_fraction") {
      ls >> rep.mean_coverage;
    }
  }
  return rep;
}

}  // namespace lvba
