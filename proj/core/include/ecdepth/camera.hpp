#pragma once

#include <array>

#include "ecdepth/tape.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

// Checks fx,fy > 0 and principal point strictly inside the image.
void validate(const Intrinsics& k);

struct RigidTransform {
  // Row-major 3x3 rotation and translation in meters.
  std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> t{0, 0, 0};

  static RigidTransform identity() { return {}; }
  RigidTransform inverse() const;                       // (R^T, -R^T t)
  RigidTransform compose(const RigidTransform&) const;  // this after other
  std::array<double, 3> apply(const std::array<double, 3>& p) const;
  bool is_orthonormal(double tol = 1e-6) const;
};

// Rodrigues' formula; smooth at the zero rotation vector.
RigidTransform axis_angle_to_transform(const std::array<double, 3>& axis_angle,
                                       const std::array<double, 3>& translation);

// Plain (non-differentiable) reprojection of every pixel of a depth map:
// backproject with K and D, transform by T, reproject. coords is (H,W,2)
// storing (u,v); valid is (H,W) with 1 where the result lands inside the
// image with transformed depth > 1e-6.
struct PixelGrid {
  Tensor<double> coords;
  Tensor<double> valid;
};
PixelGrid project(const Tensor<double>& depth, const RigidTransform& T, const Intrinsics& k);

// --- differentiable path -----------------------------------------------

// Pose parameters as scalar tape nodes: axis-angle rotation + translation.
template <typename T>
struct PoseNodes {
  std::array<Var<T>, 3> axis;
  std::array<Var<T>, 3> trans;
};

// Row-major rotation matrix entries from an axis-angle vector, built out of
// tape primitives so pose gradients flow; finite and exact at zero rotation.
template <typename T>
std::array<Var<T>, 9> rodrigues(Tape<T>& tape, const std::array<Var<T>, 3>& axis);

template <typename T>
struct WarpOutput {
  Var<T> image;  // border-padded sampled source (N,C,H,W)
  Var<T> mask;   // validity (N,1,H,W), not differentiated
  Var<T> grid;   // sample coordinates (N,2,H,W)
};

// Reprojection sample grid for a single batch sample: depth (1,1,H,W),
// rotation entries + translation as scalar nodes. Returns grid (1,2,H,W) and
// the depth-positivity part of validity (1,1,H,W).
template <typename T>
struct GridOutput {
  Var<T> grid;
  Var<T> z_valid;
};
template <typename T>
GridOutput<T> reprojection_grid(Tape<T>& tape, Var<T> depth, const std::array<Var<T>, 9>& rot,
                                const std::array<Var<T>, 3>& trans, const Intrinsics& k);

// Full warp of a source image into the target frame for one batch sample.
template <typename T>
WarpOutput<T> synthesize_view(Tape<T>& tape, Var<T> src_image, Var<T> depth,
                              const PoseNodes<T>& pose, const Intrinsics& k);

extern template std::array<Var<float>, 9> rodrigues(Tape<float>&, const std::array<Var<float>, 3>&);
extern template std::array<Var<double>, 9> rodrigues(Tape<double>&, const std::array<Var<double>, 3>&);
extern template GridOutput<float> reprojection_grid(Tape<float>&, Var<float>,
                                                    const std::array<Var<float>, 9>&,
                                                    const std::array<Var<float>, 3>&,
                                                    const Intrinsics&);
extern template GridOutput<double> reprojection_grid(Tape<double>&, Var<double>,
                                                     const std::array<Var<double>, 9>&,
                                                     const std::array<Var<double>, 3>&,
                                                     const Intrinsics&);
extern template WarpOutput<float> synthesize_view(Tape<float>&, Var<float>, Var<float>,
                                                  const PoseNodes<float>&, const Intrinsics&);
extern template WarpOutput<double> synthesize_view(Tape<double>&, Var<double>, Var<double>,
                                                   const PoseNodes<double>&, const Intrinsics&);

}  // namespace ecdepth
