#pragma once

#include <string>
#include <vector>

#include "ecdepth/camera.hpp"
#include "ecdepth/png_io.hpp"
#include "ecdepth/tensor.hpp"

namespace ecdepth {

struct FrameTriplet {
  Tensor<float> prev, cur, next;  // (3,H,W) in [0,1]
  Intrinsics k;
  bool has_gt_depth = false;
  DepthMap gt_depth;  // for cur
  bool has_gt_pose = false;
  RigidTransform to_prev, to_next;  // camera-frame maps T_{t->t'}
};

// Procedurally textured scene: a floor plane, fronto-parallel rectangles at
// known depths, and a backdrop wall so every ray hits a surface. Camera
// coordinates: x right, y down, z forward.
struct WorldConfig {
  int width = 192, height = 64;
  int frame_count = 202;
  uint64_t seed = 1;
  int num_rects = 5;
  double motion_scale = 1.0;  // 0 = static camera
};

struct WorldSurface {
  int axis = 2;           // plane of constant coordinate: 1 = y (floor), 2 = z (wall)
  double offset = 0;      // plane coordinate in meters
  double lo0 = 0, hi0 = 0, lo1 = 0, hi1 = 0;  // in-plane bounds (x then y/z)
  // texture: three sinusoid terms (axis-aligned product + the two diagonals)
  // with shared frequencies but per-channel amplitudes and phases, so local
  // color gradients span multiple directions and correspondence stays
  // identifiable under warping
  std::array<double, 3> base{}, amp1{}, amp2{}, amp3{};
  double fa = 0, fb = 0, fc = 0, fd = 0;
  std::array<double, 3> pa{}, pb{}, pc{}, pd{};
};

struct SyntheticWorld {
  WorldConfig cfg;
  Intrinsics k;
  std::vector<WorldSurface> surfaces;
};

SyntheticWorld build_world(const WorldConfig& cfg);

// Camera-to-world pose of a trajectory frame (smooth sway + small rotations).
RigidTransform camera_to_world(const SyntheticWorld& world, int frame);

// Ray-cast render; depth is the camera-frame z of the closest hit.
void render_frame(const SyntheticWorld& world, const RigidTransform& c2w, Tensor<float>& image,
                  Tensor<double>& depth);

// Triplet around frame `index` (1 .. frame_count-2) with GT depth and poses.
FrameTriplet synthetic_triplet(const SyntheticWorld& world, int index);

// Layout: root/<sequence>/frame_%010d.png, depth_%010d.png, intrinsics.txt
// ("fx fy cx cy width height").
void export_kitti(const SyntheticWorld& world, const std::string& root, const std::string& sequence);

// Sorted frame indices present in a sequence directory.
std::vector<int> list_kitti_frames(const std::string& root, const std::string& sequence);

// Sorted sequence directory names under root.
std::vector<std::string> list_kitti_sequences(const std::string& root);

// target_w/target_h = 0 keeps the stored resolution; otherwise images are
// bilinearly resized and intrinsics rescaled.
FrameTriplet load_kitti_triplet(const std::string& root, const std::string& sequence, int index,
                                int target_w = 0, int target_h = 0);

Intrinsics load_intrinsics(const std::string& root, const std::string& sequence);

// Single frame + optional GT depth (for evaluation).
struct EvalFrame {
  Tensor<float> image;
  bool has_gt_depth = false;
  DepthMap gt_depth;
};
EvalFrame load_kitti_frame(const std::string& root, const std::string& sequence, int index,
                           int target_w = 0, int target_h = 0);

}  // namespace ecdepth
