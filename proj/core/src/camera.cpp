#include "ecdepth/camera.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace ecdepth {

namespace {

Eigen::Matrix3d to_eigen(const std::array<double, 9>& r) {
  Eigen::Matrix3d m;
  m << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return m;
}

std::array<double, 9> from_eigen(const Eigen::Matrix3d& m) {
  return {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
}

}  // namespace

void validate(const Intrinsics& k) {
  if (!(k.fx > 0 && k.fy > 0))
    fail(ErrorCategory::data, "intrinsics: focal lengths must be positive");
  if (!(k.cx > 0 && k.cx < k.width && k.cy > 0 && k.cy < k.height))
    fail(ErrorCategory::data, "intrinsics: principal point must lie inside the image");
}

RigidTransform RigidTransform::inverse() const {
  Eigen::Matrix3d R = to_eigen(r);
  Eigen::Vector3d T(t[0], t[1], t[2]);
  Eigen::Matrix3d Rt = R.transpose();
  Eigen::Vector3d ti = -Rt * T;
  RigidTransform out;
  out.r = from_eigen(Rt);
  out.t = {ti.x(), ti.y(), ti.z()};
  return out;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  Eigen::Matrix3d Ra = to_eigen(r), Rb = to_eigen(other.r);
  Eigen::Vector3d ta(t[0], t[1], t[2]), tb(other.t[0], other.t[1], other.t[2]);
  Eigen::Matrix3d Rc = Ra * Rb;
  Eigen::Vector3d tc = Ra * tb + ta;
  RigidTransform out;
  out.r = from_eigen(Rc);
  out.t = {tc.x(), tc.y(), tc.z()};
  return out;
}

std::array<double, 3> RigidTransform::apply(const std::array<double, 3>& p) const {
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + t[0],
          r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + t[1],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + t[2]};
}

bool RigidTransform::is_orthonormal(double tol) const {
  Eigen::Matrix3d R = to_eigen(r);
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

RigidTransform axis_angle_to_transform(const std::array<double, 3>& axis_angle,
                                       const std::array<double, 3>& translation) {
  const double x = axis_angle[0], y = axis_angle[1], z = axis_angle[2];
  const double s2 = x * x + y * y + z * z;
  const double theta = std::sqrt(s2);
  double f, g;  // sin(t)/t and (1-cos(t))/t^2, series near zero
  if (theta < 1e-8) {
    f = 1.0 - s2 / 6.0;
    g = 0.5 - s2 / 24.0;
  } else {
    f = std::sin(theta) / theta;
    g = (1.0 - std::cos(theta)) / s2;
  }
  RigidTransform out;
  out.r = {1 - g * (y * y + z * z), -f * z + g * x * y,     f * y + g * x * z,
           f * z + g * x * y,       1 - g * (x * x + z * z), -f * x + g * y * z,
           -f * y + g * x * z,      f * x + g * y * z,       1 - g * (x * x + y * y)};
  out.t = translation;
  return out;
}

PixelGrid project(const Tensor<double>& depth, const RigidTransform& T, const Intrinsics& k) {
  if (depth.rank() != 2 || depth.dim(0) != k.height || depth.dim(1) != k.width)
    fail(ErrorCategory::shape, "project: depth " + shape_str(depth.shape()) + " vs intrinsics size");
  const int H = k.height, W = k.width;
  PixelGrid out;
  out.coords = Tensor<double>({H, W, 2});
  out.valid = Tensor<double>({H, W});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      double d = depth[i * W + j];
      std::array<double, 3> p = {(j - k.cx) / k.fx * d, (i - k.cy) / k.fy * d, d};
      auto q = T.apply(p);
      double zs = std::max(q[2], 1e-6);
      double u = k.fx * q[0] / zs + k.cx;
      double v = k.fy * q[1] / zs + k.cy;
      out.coords[(i * W + j) * 2 + 0] = u;
      out.coords[(i * W + j) * 2 + 1] = v;
      bool ok = q[2] > 1e-6 && u >= 0.0 && u <= W - 1 && v >= 0.0 && v <= H - 1;
      out.valid[i * W + j] = ok ? 1.0 : 0.0;
    }
  }
  return out;
}

// --- differentiable path -----------------------------------------------

template <typename T>
std::array<Var<T>, 9> rodrigues(Tape<T>& tape, const std::array<Var<T>, 3>& axis) {
  Var<T> x = axis[0], y = axis[1], z = axis[2];
  Var<T> s2 = tape.square(x) + tape.square(y) + tape.square(z);
  // The 1e-16 floor keeps sqrt differentiable at zero rotation; sin(t)/t and
  // 2*(sin(t/2)/t)^2 are then evaluated at t = 1e-8, indistinguishable from
  // their limits 1 and 0.5 in either precision.
  Var<T> theta = tape.sqrt(s2 + 1e-16);
  Var<T> f = tape.sin(theta) / theta;
  Var<T> half_sinc = tape.sin(theta * 0.5) / theta;  // sin(t/2)/t
  Var<T> g = 2.0 * tape.square(half_sinc);           // (1-cos t)/t^2, cancellation-free
  Var<T> one = tape.scalar(T(1));
  std::array<Var<T>, 9> r = {
      one - g * (tape.square(y) + tape.square(z)), -(f * z) + g * x * y, f * y + g * x * z,
      f * z + g * x * y, one - g * (tape.square(x) + tape.square(z)), -(f * x) + g * y * z,
      -(f * y) + g * x * z, f * x + g * y * z, one - g * (tape.square(x) + tape.square(y))};
  return r;
}

template <typename T>
GridOutput<T> reprojection_grid(Tape<T>& tape, Var<T> depth, const std::array<Var<T>, 9>& rot,
                                const std::array<Var<T>, 3>& trans, const Intrinsics& k) {
  const Shape& ds = depth.shape();
  if (ds.size() != 4 || ds[0] != 1 || ds[1] != 1)
    fail(ErrorCategory::shape, "reprojection_grid: depth must be (1,1,H,W), got " + shape_str(ds));
  const int H = ds[2], W = ds[3];
  const int64_t hw = static_cast<int64_t>(H) * W;

  // Camera-ray directions scaled by depth give the backprojected point cloud.
  Tensor<T> dirs({1, 3, H, W});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      dirs[0 * hw + i * W + j] = static_cast<T>((j - k.cx) / k.fx);
      dirs[1 * hw + i * W + j] = static_cast<T>((i - k.cy) / k.fy);
      dirs[2 * hw + i * W + j] = T(1);
    }
  }
  Var<T> rays = tape.constant(std::move(dirs));
  Var<T> points = rays * depth;  // (1,3,H,W) via broadcast over channel dim
  Var<T> X = tape.slice(points, {0, 0, 0, 0}, {1, 1, H, W});
  Var<T> Y = tape.slice(points, {0, 1, 0, 0}, {1, 1, H, W});
  Var<T> Z = tape.slice(points, {0, 2, 0, 0}, {1, 1, H, W});

  Var<T> Xp = rot[0] * X + rot[1] * Y + rot[2] * Z + trans[0];
  Var<T> Yp = rot[3] * X + rot[4] * Y + rot[5] * Z + trans[1];
  Var<T> Zp = rot[6] * X + rot[7] * Y + rot[8] * Z + trans[2];

  Var<T> z_floor = tape.scalar(T(1e-6));
  Var<T> Zs = tape.max2(Zp, z_floor);
  Var<T> u = tape.scalar(static_cast<T>(k.fx)) * (Xp / Zs) + tape.scalar(static_cast<T>(k.cx));
  Var<T> v = tape.scalar(static_cast<T>(k.fy)) * (Yp / Zs) + tape.scalar(static_cast<T>(k.cy));

  GridOutput<T> out;
  out.grid = tape.concat({u, v}, 1);
  out.z_valid = tape.cmp(Zp, CmpMode::gt, 1e-6);
  return out;
}

template <typename T>
WarpOutput<T> synthesize_view(Tape<T>& tape, Var<T> src_image, Var<T> depth,
                              const PoseNodes<T>& pose, const Intrinsics& k) {
  auto rot = rodrigues(tape, pose.axis);
  auto g = reprojection_grid(tape, depth, rot, pose.trans, k);
  Var<T> bounds = tape.grid_in_bounds(g.grid, k.height, k.width);
  Var<T> mask = bounds * g.z_valid;
  // border-padded sample, NOT zeroed by the mask: structural-similarity windows
  // near the validity boundary must not see artificial zeros
  Var<T> sampled = tape.grid_sample(src_image, g.grid);
  return {sampled, mask, g.grid};
}

template std::array<Var<float>, 9> rodrigues(Tape<float>&, const std::array<Var<float>, 3>&);
template std::array<Var<double>, 9> rodrigues(Tape<double>&, const std::array<Var<double>, 3>&);
template GridOutput<float> reprojection_grid(Tape<float>&, Var<float>,
                                             const std::array<Var<float>, 9>&,
                                             const std::array<Var<float>, 3>&, const Intrinsics&);
template GridOutput<double> reprojection_grid(Tape<double>&, Var<double>,
                                              const std::array<Var<double>, 9>&,
                                              const std::array<Var<double>, 3>&, const Intrinsics&);
template WarpOutput<float> synthesize_view(Tape<float>&, Var<float>, Var<float>,
                                           const PoseNodes<float>&, const Intrinsics&);
template WarpOutput<double> synthesize_view(Tape<double>&, Var<double>, Var<double>,
                                            const PoseNodes<double>&, const Intrinsics&);

}  // namespace ecdepth
