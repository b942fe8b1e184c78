#include "ecdepth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecdepth/error.hpp"
#include "ecdepth/rng.hpp"
#include "image_util.hpp"

namespace fs = std::filesystem;

namespace ecdepth {

namespace {

constexpr double kTau = 6.283185307179586;
constexpr double kFloorY = 1.5;
constexpr double kFarWallZ = 30.0;
constexpr double kFarWallTopY = -0.5;
constexpr double kBackdropZ = 45.0;
constexpr double kHuge = 1e9;

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%010d.png", index);
  return buf;
}

std::string depth_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth_%010d.png", index);
  return buf;
}

double tex_value(const WorldSurface& s, int c, double u, double v) {
  auto ci = static_cast<size_t>(c);
  double val = s.base[ci] +
               s.amp1[ci] * std::sin(s.fa * u + s.pa[ci]) * std::cos(s.fb * v + s.pb[ci]) +
               s.amp2[ci] * std::sin(s.fc * (u + v) + s.pc[ci]) +
               s.amp3[ci] * std::sin(s.fd * (u - v) + s.pd[ci]);
  return std::min(0.97, std::max(0.03, val));
}

// Frequency ranges are per texture axis so grazing surfaces (the floor's z
// axis compresses on screen like z^2) can stay below the sampling limit.
void seed_texture(WorldSurface& s, Rng& rng, double alo, double ahi, double blo, double bhi,
                  double clo, double chi, double amp_scale = 1.0) {
  for (int c = 0; c < 3; ++c) {
    auto ci = static_cast<size_t>(c);
    s.base[ci] = rng.uniform(0.40, 0.60);
    s.amp1[ci] = amp_scale * rng.uniform(0.08, 0.18);
    s.amp2[ci] = amp_scale * rng.uniform(0.05, 0.12);
    s.amp3[ci] = amp_scale * rng.uniform(0.05, 0.12);
  }
  s.fa = rng.uniform(alo, ahi);
  s.fb = rng.uniform(blo, bhi);
  s.fc = rng.uniform(clo, chi);
  s.fd = rng.uniform(clo, chi);
  for (int c = 0; c < 3; ++c) {
    auto ci = static_cast<size_t>(c);
    s.pa[ci] = rng.uniform(0.0, kTau);
    s.pb[ci] = rng.uniform(0.0, kTau);
    s.pc[ci] = rng.uniform(0.0, kTau);
    s.pd[ci] = rng.uniform(0.0, kTau);
  }
}

// Sub-pixel resampling across a visible texture seam costs photometric error
// proportional to the seam contrast, so surfaces that touch share a texture
// family and get their free parameters solved to agree along the contact line.
// `v_self` / `v_other` are the two surfaces' in-plane v coordinates there.
void continue_texture(WorldSurface& s, const WorldSurface& from, double v_self, double v_other,
                      double fb_new) {
  s.base = from.base;
  s.amp1 = from.amp1;
  s.amp2 = from.amp2;
  s.amp3 = from.amp3;
  s.fa = from.fa;
  s.pa = from.pa;
  s.fc = from.fc;
  s.fd = from.fd;
  s.fb = fb_new;
  for (size_t c = 0; c < 3; ++c) {
    double kappa = std::cos(from.fb * v_other + from.pb[c]);
    s.pb[c] = std::acos(std::min(1.0, std::max(-1.0, kappa))) - fb_new * v_self;
    s.pc[c] = from.pc[c] + from.fc * (v_other - v_self);
    s.pd[c] = from.pd[c] + from.fd * (v_self - v_other);
  }
}

Tensor<float> resize_maybe(const Tensor<float>& img, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) return img;
  return imgu::resize_chw(img, target_h, target_w);
}

}  // namespace

SyntheticWorld build_world(const WorldConfig& cfg) {
  if (cfg.width < 8 || cfg.height < 8)
    fail(ErrorCategory::usage, "world resolution must be at least 8x8");
  if (cfg.frame_count < 3) fail(ErrorCategory::usage, "world needs at least 3 frames");
  SyntheticWorld w;
  w.cfg = cfg;
  w.k.width = cfg.width;
  w.k.height = cfg.height;
  w.k.fx = 0.58 * cfg.width;
  w.k.fy = 1.92 * cfg.height;
  w.k.cx = 0.5 * cfg.width;
  w.k.cy = 0.5 * cfg.height;

  // floor, far wall and backdrop guarantee full ray coverage; their textures
  // continue across the two contact lines
  WorldSurface floor;
  floor.axis = 1;
  floor.offset = kFloorY;
  floor.lo0 = -kHuge;
  floor.hi0 = kHuge;
  floor.lo1 = 0.5;
  floor.hi1 = kHuge;
  Rng floor_rng(Rng::derive(cfg.seed, "surface", 1000));
  seed_texture(floor, floor_rng, 1.2, 2.4, 0.03, 0.06, 0.03, 0.08);
  w.surfaces.push_back(floor);

  // full-width wall meeting the floor; hides the heavily foreshortened far
  // floor where screen-space texture gradients blow up
  WorldSurface wall;
  wall.axis = 2;
  wall.offset = kFarWallZ;
  wall.lo0 = -kHuge;
  wall.hi0 = kHuge;
  wall.lo1 = kFarWallTopY;
  wall.hi1 = kHuge;
  Rng wall_rng(Rng::derive(cfg.seed, "surface", 1002));
  continue_texture(wall, floor, kFloorY, kFarWallZ, wall_rng.uniform(0.8, 1.6));
  w.surfaces.push_back(wall);

  WorldSurface back;
  back.axis = 2;
  back.offset = kBackdropZ;
  back.lo0 = -kHuge;
  back.hi0 = kHuge;
  back.lo1 = -kHuge;
  back.hi1 = kHuge;
  Rng back_rng(Rng::derive(cfg.seed, "surface", 1001));
  continue_texture(back, wall, kFarWallTopY, kFarWallTopY, back_rng.uniform(0.5, 1.0));
  w.surfaces.push_back(back);

  double half_x = 0.5 * cfg.width / w.k.fx;   // frustum tangents
  double half_y = 0.5 * cfg.height / w.k.fy;
  for (int i = 0; i < cfg.num_rects; ++i) {
    Rng rng(Rng::derive(cfg.seed, "surface", static_cast<uint64_t>(i)));
    WorldSurface r;
    r.axis = 2;
    double frac = cfg.num_rects > 1 ? static_cast<double>(i) / (cfg.num_rects - 1) : 0.0;
    r.offset = 10.0 * std::pow(22.0 / 10.0, frac) * std::exp(rng.uniform(-0.08, 0.08));
    double cx = rng.uniform(-0.55, 0.55) * half_x * r.offset;
    double cy = rng.uniform(-0.60, 0.35) * half_y * r.offset;
    double hw = rng.uniform(0.055, 0.10) * r.offset * half_x;
    double hh = rng.uniform(0.16, 0.30) * r.offset * half_y;
    r.lo0 = cx - hw;
    r.hi0 = cx + hw;
    r.lo1 = cy - hh;
    r.hi1 = cy + hh;
    // keep rectangles clear of the floor plane: a rect crossing it would show
    // a full-contrast intersection seam
    double max_bottom = kFloorY - 0.3;
    if (r.hi1 > max_bottom) {
      double shift = r.hi1 - max_bottom;
      r.lo1 -= shift;
      r.hi1 = max_bottom;
    }
    double flo = 2.2 * 10.0 / r.offset, fhi = 9.0 * 10.0 / r.offset;
    seed_texture(r, rng, flo, fhi, flo, fhi, flo, fhi, 0.6);
    w.surfaces.push_back(r);
  }
  return w;
}

RigidTransform camera_to_world(const SyntheticWorld& world, int frame) {
  double s = world.cfg.motion_scale;
  double t = static_cast<double>(frame);
  std::array<double, 3> pos{
      s * 0.10 * std::sin(kTau * t / 23.0),
      s * 0.05 * std::sin(kTau * t / 17.0 + 1.0),
      s * (0.5 * std::sin(kTau * t / 40.0) + 0.010 * t),
  };
  std::array<double, 3> rot{
      s * 0.004 * std::sin(kTau * t / 13.0 + 2.0),  // pitch
      s * 0.012 * std::sin(kTau * t / 31.0),        // yaw
      s * 0.005 * std::sin(kTau * t / 29.0 + 0.7),  // roll
  };
  RigidTransform c2w = axis_angle_to_transform(rot, pos);
  // every wall must stay well in front of the camera
  for (const auto& surf : world.surfaces)
    if (surf.axis == 2 && surf.offset < pos[2] + 1.0)
      fail(ErrorCategory::data, "degenerate trajectory: camera passed surface at z=" +
                                    std::to_string(surf.offset) + " on frame " + std::to_string(frame));
  return c2w;
}

namespace {

struct RayHit {
  double t = -1;
  double u = 0, v = 0;
  const WorldSurface* surf = nullptr;
};

RayHit cast_ray(const SyntheticWorld& world, const RigidTransform& c2w, double px, double py) {
  const Intrinsics& k = world.k;
  const auto& o = c2w.t;
  std::array<double, 3> dc{(px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0};
  std::array<double, 3> dw{
      c2w.r[0] * dc[0] + c2w.r[1] * dc[1] + c2w.r[2] * dc[2],
      c2w.r[3] * dc[0] + c2w.r[4] * dc[1] + c2w.r[5] * dc[2],
      c2w.r[6] * dc[0] + c2w.r[7] * dc[1] + c2w.r[8] * dc[2],
  };
  RayHit hit;
  for (const auto& s : world.surfaces) {
    double denom = s.axis == 1 ? dw[1] : dw[2];
    if (std::fabs(denom) < 1e-12) continue;
    double origin = s.axis == 1 ? o[1] : o[2];
    double t = (s.offset - origin) / denom;
    if (t <= 1e-6) continue;
    double u = o[0] + t * dw[0];
    double v = s.axis == 1 ? o[2] + t * dw[2] : o[1] + t * dw[1];
    if (u < s.lo0 || u > s.hi0 || v < s.lo1 || v > s.hi1) continue;
    if (hit.t < 0 || t < hit.t) hit = {t, u, v, &s};
  }
  if (!hit.surf) fail(ErrorCategory::data, "ray missed all surfaces (world coverage bug)");
  return hit;
}

}  // namespace

void render_frame(const SyntheticWorld& world, const RigidTransform& c2w, Tensor<float>& image,
                  Tensor<double>& depth) {
  const Intrinsics& k = world.k;
  int H = k.height, W = k.width;
  image = Tensor<float>({3, H, W}, 0.0f);
  depth = Tensor<double>({H, W}, 0.0);
  size_t hw = static_cast<size_t>(H) * W;
  // color is supersampled so occlusion edges become smooth ~1px ramps (sharp
  // or coarsely quantized steps cannot be reproduced by bilinear warp
  // resampling); pixels whose coarse rays straddle several surfaces refine to
  // a 16x16 grid. depth is the center ray so every pixel has the depth of one
  // unique surface
  static constexpr double kSub[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};
  static constexpr int kFine = 16;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      RayHit center = cast_ray(world, c2w, j, i);
      // camera-frame depth: hit = o + t*dw, and R^T(hit-o) = t*dc with dc.z = 1
      depth[static_cast<int64_t>(i) * W + j] = center.t;
      double acc[3] = {0, 0, 0};
      bool mixed = false;
      for (double sv : kSub)
        for (double su : kSub) {
          RayHit h = (su == 0.0 && sv == 0.0) ? center : cast_ray(world, c2w, j + su, i + sv);
          if (h.surf != center.surf) mixed = true;
          for (int c = 0; c < 3; ++c) acc[c] += tex_value(*h.surf, c, h.u, h.v);
        }
      double norm = 9.0;
      if (mixed) {
        acc[0] = acc[1] = acc[2] = 0;
        norm = static_cast<double>(kFine) * kFine;
        for (int sv = 0; sv < kFine; ++sv)
          for (int su = 0; su < kFine; ++su) {
            RayHit h = cast_ray(world, c2w, j + (su + 0.5) / kFine - 0.5,
                                i + (sv + 0.5) / kFine - 0.5);
            for (int c = 0; c < 3; ++c) acc[c] += tex_value(*h.surf, c, h.u, h.v);
          }
      }
      for (int c = 0; c < 3; ++c)
        image.data()[static_cast<size_t>(c) * hw + static_cast<size_t>(i) * W + j] =
            static_cast<float>(acc[c] / norm);
    }
}

FrameTriplet synthetic_triplet(const SyntheticWorld& world, int index) {
  if (index < 1 || index > world.cfg.frame_count - 2)
    fail(ErrorCategory::data, "triplet index " + std::to_string(index) + " out of range 1.." +
                                  std::to_string(world.cfg.frame_count - 2));
  FrameTriplet t;
  t.k = world.k;
  Tensor<double> d_prev, d_next;
  RigidTransform c2w_prev = camera_to_world(world, index - 1);
  RigidTransform c2w_cur = camera_to_world(world, index);
  RigidTransform c2w_next = camera_to_world(world, index + 1);
  render_frame(world, c2w_prev, t.prev, d_prev);
  Tensor<double> d_cur;
  render_frame(world, c2w_cur, t.cur, d_cur);
  render_frame(world, c2w_next, t.next, d_next);
  t.has_gt_depth = true;
  t.gt_depth.depth = d_cur;
  t.gt_depth.valid = Tensor<double>(d_cur.shape(), 1.0);
  t.has_gt_pose = true;
  t.to_prev = c2w_prev.inverse().compose(c2w_cur);
  t.to_next = c2w_next.inverse().compose(c2w_cur);
  return t;
}

void export_kitti(const SyntheticWorld& world, const std::string& root, const std::string& sequence) {
  fs::path dir = fs::path(root) / sequence;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create directory " + dir.string());

  std::ofstream intr(dir / "intrinsics.txt");
  if (!intr) fail(ErrorCategory::io, "cannot write " + (dir / "intrinsics.txt").string());
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %d %d\n", world.k.fx, world.k.fy,
                world.k.cx, world.k.cy, world.k.width, world.k.height);
  intr << buf;
  intr.close();

  for (int f = 0; f < world.cfg.frame_count; ++f) {
    Tensor<float> image;
    Tensor<double> depth;
    render_frame(world, camera_to_world(world, f), image, depth);
    write_rgb_png(image, (dir / frame_name(f)).string());
    DepthMap dm{depth, Tensor<double>(depth.shape(), 1.0)};
    write_depth_png(dm, (dir / depth_name(f)).string());
  }
}

std::vector<int> list_kitti_frames(const std::string& root, const std::string& sequence) {
  fs::path dir = fs::path(root) / sequence;
  if (!fs::is_directory(dir)) fail(ErrorCategory::io, "no such sequence directory: " + dir.string());
  std::vector<int> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string name = e.path().filename().string();
    if (name.size() == 20 && name.rfind("frame_", 0) == 0 && name.substr(16) == ".png")
      out.push_back(std::stoi(name.substr(6, 10)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_kitti_sequences(const std::string& root) {
  if (!fs::is_directory(root)) fail(ErrorCategory::io, "no such dataset directory: " + root);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

Intrinsics load_intrinsics(const std::string& root, const std::string& sequence) {
  fs::path p = fs::path(root) / sequence / "intrinsics.txt";
  std::ifstream in(p);
  if (!in) fail(ErrorCategory::io, "missing intrinsics file: " + p.string());
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
    fail(ErrorCategory::format, "malformed intrinsics file: " + p.string());
  validate(k);
  return k;
}

namespace {

Intrinsics rescale(Intrinsics k, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0) return k;
  double sx = static_cast<double>(target_w) / k.width;
  double sy = static_cast<double>(target_h) / k.height;
  k.fx *= sx;
  k.cx *= sx;
  k.fy *= sy;
  k.cy *= sy;
  k.width = target_w;
  k.height = target_h;
  return k;
}

Tensor<float> load_frame_image(const fs::path& dir, int index, const std::string& sequence,
                               int wanted_by) {
  fs::path p = dir / frame_name(index);
  if (!fs::exists(p))
    fail(ErrorCategory::data, "missing neighbor frame " + std::to_string(index) + " of " +
                                  std::to_string(wanted_by) + " in sequence " + sequence);
  return read_rgb_png(p.string());
}

DepthMap resample_depth_nearest(const DepthMap& d, int target_w, int target_h) {
  int H = static_cast<int>(d.depth.dim(0)), W = static_cast<int>(d.depth.dim(1));
  if (target_w <= 0 || target_h <= 0 || (target_w == W && target_h == H)) return d;
  DepthMap out;
  out.depth = Tensor<double>({target_h, target_w}, 0.0);
  out.valid = Tensor<double>({target_h, target_w}, 0.0);
  for (int y = 0; y < target_h; ++y)
    for (int x = 0; x < target_w; ++x) {
      int sy = std::min(H - 1, static_cast<int>((y + 0.5) * H / target_h));
      int sx = std::min(W - 1, static_cast<int>((x + 0.5) * W / target_w));
      out.depth[static_cast<int64_t>(y) * target_w + x] = d.depth[static_cast<int64_t>(sy) * W + sx];
      out.valid[static_cast<int64_t>(y) * target_w + x] = d.valid[static_cast<int64_t>(sy) * W + sx];
    }
  return out;
}

}  // namespace

FrameTriplet load_kitti_triplet(const std::string& root, const std::string& sequence, int index,
                                int target_w, int target_h) {
  fs::path dir = fs::path(root) / sequence;
  if (!fs::exists(dir / frame_name(index)))
    fail(ErrorCategory::data,
         "no frame " + std::to_string(index) + " in sequence " + sequence);
  FrameTriplet t;
  t.prev = resize_maybe(load_frame_image(dir, index - 1, sequence, index), target_w, target_h);
  t.cur = resize_maybe(load_frame_image(dir, index, sequence, index), target_w, target_h);
  t.next = resize_maybe(load_frame_image(dir, index + 1, sequence, index), target_w, target_h);
  t.k = rescale(load_intrinsics(root, sequence), target_w, target_h);
  fs::path dp = dir / depth_name(index);
  if (fs::exists(dp)) {
    t.has_gt_depth = true;
    t.gt_depth = resample_depth_nearest(read_depth_png(dp.string()), target_w, target_h);
  }
  return t;
}

EvalFrame load_kitti_frame(const std::string& root, const std::string& sequence, int index,
                           int target_w, int target_h) {
  fs::path dir = fs::path(root) / sequence;
  fs::path p = dir / frame_name(index);
  if (!fs::exists(p))
    fail(ErrorCategory::data, "no frame " + std::to_string(index) + " in sequence " + sequence);
  EvalFrame f;
  f.image = resize_maybe(read_rgb_png(p.string()), target_w, target_h);
  fs::path dp = dir / depth_name(index);
  if (fs::exists(dp)) {
    f.has_gt_depth = true;
    f.gt_depth = resample_depth_nearest(read_depth_png(dp.string()), target_w, target_h);
  }
  return f;
}

}  // namespace ecdepth
