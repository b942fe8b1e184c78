#include "ecdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include "ecdepth/camera.hpp"
#include "ecdepth/dataset.hpp"
#include "ecdepth/distill.hpp"
#include "ecdepth/error.hpp"
#include "ecdepth/losses.hpp"
#include "ecdepth/network.hpp"
#include "ecdepth/optimizer.hpp"
#include "ecdepth/perturb.hpp"
#include "ecdepth/rng.hpp"
#include "image_util.hpp"

namespace ecdepth {

namespace {

struct SampleRef {
  std::string seq;
  int index = 0;
};

// Frames whose both temporal neighbors exist.
std::vector<SampleRef> collect_triplets(const std::string& root) {
  std::vector<SampleRef> out;
  for (const std::string& seq : list_kitti_sequences(root)) {
    std::vector<int> frames = list_kitti_frames(root, seq);
    std::set<int> have(frames.begin(), frames.end());
    for (int idx : frames)
      if (have.count(idx - 1) && have.count(idx + 1)) out.push_back({seq, idx});
  }
  if (out.empty()) fail(ErrorCategory::data, "no triplet samples under " + root);
  return out;
}

struct TripletCache {
  std::string root;
  int w = 0, h = 0;
  std::map<std::pair<std::string, int>, FrameTriplet> loaded;

  const FrameTriplet& get(const SampleRef& ref) {
    auto key = std::make_pair(ref.seq, ref.index);
    auto it = loaded.find(key);
    if (it != loaded.end()) return it->second;
    FrameTriplet trip = load_kitti_triplet(root, ref.seq, ref.index, w, h);
    trip.has_gt_depth = false;  // training never reads GT
    trip.gt_depth = {};
    return loaded.emplace(key, std::move(trip)).first->second;
  }
};

std::vector<int> permutation(int n, Rng rng) {
  std::vector<int> p(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<size_t>(i)],
                                            p[static_cast<size_t>(rng.uniform_int(0, i))]);
  return p;
}

ParamMap<float> extract_group(const Checkpoint& ckpt, const std::string& prefix) {
  ParamMap<float> out;
  for (const auto& [name, t] : ckpt.arrays)
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), t);
  if (out.empty())
    fail(ErrorCategory::format, "checkpoint has no '" + prefix + "' arrays");
  return out;
}

void check_manifest(const ParamMap<float>& params, const std::string& arch, const char* what) {
  auto manifest = layer_manifest(arch);
  if (params.size() != manifest.size())
    fail(ErrorCategory::format, std::string(what) + " arrays do not match the " + arch +
                                    " manifest (count " + std::to_string(params.size()) + " vs " +
                                    std::to_string(manifest.size()) + ")");
  for (const auto& [name, shape] : manifest) {
    auto it = params.find(name);
    if (it == params.end())
      fail(ErrorCategory::format, std::string(what) + " arrays missing " + name);
    if (!same_shape(it->second.shape(), shape))
      fail(ErrorCategory::format, std::string(what) + " array " + name + " has shape " +
                                      shape_str(it->second.shape()) + ", manifest wants " +
                                      shape_str(shape));
  }
}

Checkpoint assemble(const TrainConfig& cfg, uint64_t step, const ParamMap<float>& student,
                    const AdamWState& state, const ParamMap<float>* teacher) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.step = step;
  for (const auto& [name, t] : student) ckpt.arrays.emplace("student." + name, t);
  for (const auto& [name, t] : state.m) ckpt.arrays.emplace("opt.m." + name, t);
  for (const auto& [name, t] : state.v) ckpt.arrays.emplace("opt.v." + name, t);
  if (teacher)
    for (const auto& [name, t] : *teacher) ckpt.arrays.emplace("teacher." + name, t);
  return ckpt;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open " + path + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) fail(ErrorCategory::io, "failed writing " + path);
}

Var<float> image_const(Tape<float>& tape, const Tensor<float>& chw) {
  Shape s = chw.shape();
  return tape.constant(Tensor<float>(Shape{1, s[0], s[1], s[2]}, chw.storage()));
}

PoseNodes<float> pose_from_vec(Tape<float>& tape, Var<float> p6) {
  auto comp = [&](int i) {
    return tape.reshape(tape.slice(p6, {0, i}, {1, 1}), {1});
  };
  return PoseNodes<float>{{comp(0), comp(1), comp(2)}, {comp(3), comp(4), comp(5)}};
}

struct SampleLosses {
  double l_p = 0, l_e = 0, l_c = 0, l_dist = 0, retention = 1.0;
};

// Builds the per-sample graph, backpropagates, and adds this sample's leaf
// gradients into grad_sum. Stage 2 when `teacher` is non-null.
SampleLosses run_sample(const TrainConfig& cfg, const FrameTriplet& trip,
                        const ParamMap<float>& student, const ParamMap<float>* teacher,
                        uint64_t sample_seed, uint64_t dropout_seed,
                        std::map<std::string, Tensor<float>>& grad_sum) {
  const int H = cfg.height, W = cfg.width;
  const int n_scales = cfg.num_scales;
  const bool stage2 = teacher != nullptr;

  Triplet per = make_triplet(trip.cur, sample_seed);
  Tensor<float> prev_w = weak_perturb(trip.prev, per.jitter);
  Tensor<float> next_w = weak_perturb(trip.next, per.jitter);

  Tape<float> tape;
  BoundParams<float> sp = bind_params(tape, student, true);

  Var<float> target = image_const(tape, trip.cur);  // photometric terms see clean frames
  Var<float> src_prev = image_const(tape, trip.prev);
  Var<float> src_next = image_const(tape, trip.next);
  Var<float> in_weak = image_const(tape, per.weak);
  Var<float> in_s1 = image_const(tape, per.strong1);
  Var<float> in_s2 = image_const(tape, per.strong2);
  Var<float> in_prev_w = image_const(tape, prev_w);
  Var<float> in_next_w = image_const(tape, next_w);

  std::vector<Var<float>> pyramid;  // clean target per scale, for smoothness
  for (int s = 0; s < n_scales; ++s)
    pyramid.push_back(s == 0 ? target
                             : image_const(tape, imgu::resize_chw(trip.cur, H >> s, W >> s)));

  DepthOutputs<float> d_w =
      depth_forward(tape, sp, in_weak, FeaturePerturbation{cfg.keep_prob, dropout_seed});
  DepthOutputs<float> d_s1 = depth_forward(tape, sp, in_s1);
  DepthOutputs<float> d_s2 = depth_forward(tape, sp, in_s2);
  PoseNodes<float> pose_prev = pose_from_vec(tape, pose_forward(tape, sp, in_weak, in_prev_w));
  PoseNodes<float> pose_next = pose_from_vec(tape, pose_forward(tape, sp, in_weak, in_next_w));

  // teacher side (constants: gradient-free by construction)
  Var<float> label, gc, dc, mask;
  if (stage2) {
    BoundParams<float> tp = bind_params(tape, *teacher, false);
    DepthOutputs<float> t_w = depth_forward(tape, tp, in_weak);
    DepthOutputs<float> t_s1 = depth_forward(tape, tp, in_s1);
    DepthOutputs<float> t_s2 = depth_forward(tape, tp, in_s2);
    PoseNodes<float> t_pose_prev =
        pose_from_vec(tape, pose_forward(tape, tp, in_weak, in_prev_w));
    PoseNodes<float> t_pose_next =
        pose_from_vec(tape, pose_forward(tape, tp, in_weak, in_next_w));
    label = disparity_to_depth(tape, t_w.disp[0]);
    WarpOutput<float> tv1 = synthesize_view(tape, src_prev, label, t_pose_prev, trip.k);
    WarpOutput<float> tv2 = synthesize_view(tape, src_next, label, t_pose_next, trip.k);
    gc = gc_filter(tape, target, {tv1.image, tv2.image}, {tv1.mask, tv2.mask}, cfg.delta_g);
    dc = dc_filter(tape, label, disparity_to_depth(tape, t_s1.disp[0]),
                   disparity_to_depth(tape, t_s2.disp[0]), cfg.delta_d);
    mask = tape.mul(gc, dc);
  }

  std::vector<ScaleTerms<float>> terms;
  std::vector<Var<float>> lc_terms;
  for (int s = 0; s < n_scales; ++s) {
    ScaleTerms<float> t;
    Var<float> full_w =
        s == 0 ? d_w.disp[static_cast<size_t>(s)]
               : tape.resize_bilinear(d_w.disp[static_cast<size_t>(s)], H, W);
    Var<float> depth_full = disparity_to_depth(tape, full_w);
    WarpOutput<float> v1 = synthesize_view(tape, src_prev, depth_full, pose_prev, trip.k);
    WarpOutput<float> v2 = synthesize_view(tape, src_next, depth_full, pose_next, trip.k);
    t.l_p = reprojection_loss(tape, target, {v1.image, v2.image}, {v1.mask, v2.mask}, cfg.theta)
                .scalar;
    t.l_e = smoothness_loss(tape, disparity_to_depth(tape, d_w.disp[static_cast<size_t>(s)]),
                            pyramid[static_cast<size_t>(s)]);

    bool want_lc = !stage2 || cfg.stage2_consistency;
    if (want_lc) {
      std::vector<Var<float>> branch_depths = {
          disparity_to_depth(tape, d_w.disp[static_cast<size_t>(s)]),
          disparity_to_depth(tape, d_s1.disp[static_cast<size_t>(s)]),
          disparity_to_depth(tape, d_s2.disp[static_cast<size_t>(s)]),
          disparity_to_depth(tape, d_w.disp_fp[static_cast<size_t>(s)])};
      t.l_c = consistency_loss(tape, branch_depths);
      t.has_c = true;
      if (stage2) lc_terms.push_back(t.l_c);
    }

    if (stage2) {
      auto full = [&](Var<float> disp) {
        Var<float> f = s == 0 ? disp : tape.resize_bilinear(disp, H, W);
        return disparity_to_depth(tape, f);
      };
      std::vector<Var<float>> students = {full(d_w.disp[static_cast<size_t>(s)]),
                                          full(d_s1.disp[static_cast<size_t>(s)]),
                                          full(d_s2.disp[static_cast<size_t>(s)]),
                                          full(d_w.disp_fp[static_cast<size_t>(s)])};
      t.l_dist = distillation_loss(tape, label, students, mask);
      t.has_dist = true;
    }
    terms.push_back(t);
  }

  LossBreakdown<float> bd;
  Var<float> total;
  Var<float> retention_node;
  if (!stage2) {
    bd = stage1_total(tape, terms, cfg.alpha, cfg.beta);
    total = bd.total;
  } else {
    bd = stage2_total(tape, terms, cfg.alpha, cfg.gamma);
    total = bd.total;
    if (cfg.stage2_consistency && !lc_terms.empty()) {
      Var<float> lc_mean = lc_terms[0];
      for (size_t i = 1; i < lc_terms.size(); ++i) lc_mean = lc_mean + lc_terms[i];
      lc_mean = lc_mean * (1.0 / static_cast<double>(lc_terms.size()));
      bd.l_c = lc_mean;
      total = total + cfg.beta * lc_mean;
    }
    retention_node = tape.mean(mask);
  }

  tape.evaluate(total);
  tape.evaluate(bd.l_p);
  tape.evaluate(bd.l_e);
  tape.evaluate(bd.l_c);
  if (stage2) {
    tape.evaluate(bd.l_dist);
    tape.evaluate(retention_node);
  }
  std::map<std::string, Tensor<float>> grads = tape.backward(total);
  for (auto& [name, g] : grads) {
    auto it = grad_sum.find(name);
    if (it == grad_sum.end()) {
      grad_sum.emplace(name, std::move(g));
    } else {
      Tensor<float>& acc = it->second;
      for (int64_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }

  SampleLosses out;
  out.l_p = tape.value(bd.l_p).item();
  out.l_e = tape.value(bd.l_e).item();
  out.l_c = tape.value(bd.l_c).item();
  out.l_dist = stage2 ? tape.value(bd.l_dist).item() : 0.0;
  out.retention = stage2 ? tape.value(retention_node).item() : 1.0;
  return out;
}

}  // namespace

std::string run_log_csv(const std::vector<StepLog>& log) {
  std::string out = "step,epoch,lr,L_p,L_e,L_c,L_dist,retention\n";
  char buf[256];
  for (const StepLog& row : log) {
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(row.step), row.epoch, row.lr, row.l_p, row.l_e, row.l_c,
                  row.l_dist, row.retention);
    out += buf;
  }
  return out;
}

Checkpoint init_checkpoint(const TrainConfig& cfg) {
  validate_config(cfg);
  ParamMap<float> params = init_params<float>(cfg.arch, Rng::derive(cfg.seed, "init"));
  AdamWState state = init_adamw(params);
  return assemble(cfg, 0, params, state, cfg.stage == 2 ? &params : nullptr);
}

Checkpoint promote_to_stage2(const Checkpoint& stage1, const TrainConfig& cfg) {
  validate_config(cfg);
  if (cfg.stage != 2) fail(ErrorCategory::usage, "promote_to_stage2: config stage must be 2");
  ParamMap<float> student = extract_group(stage1, "student.");
  check_manifest(student, cfg.arch, "student");
  AdamWState state = init_adamw(student);
  return assemble(cfg, 0, student, state, &student);
}

TrainResult train(const TrainConfig& cfg, const Checkpoint& start, const std::string& out_dir) {
  validate_config(cfg);
  if (cfg.dataset.empty()) fail(ErrorCategory::usage, "config: dataset path is required");
  const bool stage2 = cfg.stage == 2;

  ParamMap<float> student = extract_group(start, "student.");
  check_manifest(student, cfg.arch, "student");
  AdamWState state;
  state.m = extract_group(start, "opt.m.");
  state.v = extract_group(start, "opt.v.");
  check_manifest(state.m, cfg.arch, "optimizer first-moment");
  check_manifest(state.v, cfg.arch, "optimizer second-moment");
  state.t = start.step;
  ParamMap<float> teacher;
  if (stage2) {
    teacher = extract_group(start, "teacher.");
    check_manifest(teacher, cfg.arch, "teacher");
  }

  std::vector<SampleRef> samples = collect_triplets(cfg.dataset);
  TripletCache cache{cfg.dataset, cfg.width, cfg.height, {}};
  const int n = static_cast<int>(samples.size());
  const int spe = std::max(1, n / cfg.batch_size);
  int64_t total_steps = static_cast<int64_t>(cfg.epochs) * spe;
  if (cfg.max_steps > 0) total_steps = std::min<int64_t>(total_steps, cfg.max_steps);
  if (static_cast<int64_t>(start.step) > total_steps)
    fail(ErrorCategory::usage, "checkpoint step " + std::to_string(start.step) +
                                   " exceeds the configured schedule of " +
                                   std::to_string(total_steps) + " steps");

  const bool writing = !out_dir.empty();
  if (writing) std::filesystem::create_directories(out_dir);

  TrainResult result;
  for (int64_t step = static_cast<int64_t>(start.step); step < total_steps; ++step) {
    int epoch = static_cast<int>(step / spe);
    double lr_scale = epoch >= decay_boundary(cfg) ? 0.1 : 1.0;
    std::vector<int> perm =
        permutation(n, Rng(Rng::derive(cfg.seed, "order", static_cast<uint64_t>(epoch))));

    std::map<std::string, Tensor<float>> grad_sum;
    SampleLosses mean;
    mean.retention = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      int pos = static_cast<int>((step % spe) * cfg.batch_size + b) % n;
      const FrameTriplet& trip = cache.get(samples[static_cast<size_t>(perm[static_cast<size_t>(pos)])]);
      uint64_t sseed = Rng::derive(cfg.seed, "sample", static_cast<uint64_t>(step),
                                   static_cast<uint64_t>(b));
      uint64_t dseed = Rng::derive(cfg.seed, "dropout", static_cast<uint64_t>(step),
                                   static_cast<uint64_t>(b));
      try {
        SampleLosses sl =
            run_sample(cfg, trip, student, stage2 ? &teacher : nullptr, sseed, dseed, grad_sum);
        mean.l_p += sl.l_p;
        mean.l_e += sl.l_e;
        mean.l_c += sl.l_c;
        mean.l_dist += sl.l_dist;
        mean.retention += sl.retention;
      } catch (const Error& e) {
        fail(e.category(), "step " + std::to_string(step) + " sample " + std::to_string(b) +
                               ": " + e.what());
      }
    }
    const double inv_b = 1.0 / cfg.batch_size;
    for (auto& [name, g] : grad_sum)
      for (int64_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(g[i] * inv_b);
    mean.l_p *= inv_b;
    mean.l_e *= inv_b;
    mean.l_c *= inv_b;
    mean.l_dist *= inv_b;
    mean.retention *= inv_b;

    try {
      adamw_step(student, grad_sum, state, cfg.lr_encoder * lr_scale, cfg.lr_decoder * lr_scale,
                 cfg.weight_decay);
    } catch (const Error& e) {
      fail(e.category(), "step " + std::to_string(step) + ": " + e.what());
    }
    if (stage2) ema_update(teacher, student, cfg.ema_momentum);

    StepLog row;
    row.step = step;
    row.epoch = epoch;
    row.lr = cfg.lr_decoder * lr_scale;
    row.l_p = mean.l_p;
    row.l_e = mean.l_e;
    row.l_c = mean.l_c;
    row.l_dist = mean.l_dist;
    row.retention = mean.retention;
    result.log.push_back(row);

    if (writing && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < total_steps) {
      Checkpoint snap = assemble(cfg, static_cast<uint64_t>(step + 1), student, state,
                                 stage2 ? &teacher : nullptr);
      char name[64];
      std::snprintf(name, sizeof(name), "/checkpoint_%08lld.bin",
                    static_cast<long long>(step + 1));
      save_checkpoint(snap, out_dir + name);
      write_text(out_dir + "/run_log.csv", run_log_csv(result.log));
    }
  }

  result.checkpoint = assemble(cfg, static_cast<uint64_t>(total_steps), student, state,
                               stage2 ? &teacher : nullptr);
  if (writing) {
    save_checkpoint(result.checkpoint, out_dir + "/checkpoint.bin");
    write_text(out_dir + "/run_log.csv", run_log_csv(result.log));
  }
  return result;
}

Tensor<double> infer_depth(const Checkpoint& ckpt, const Tensor<float>& image) {
  const TrainConfig& cfg = ckpt.config;
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.height ||
      image.dim(2) != cfg.width)
    fail(ErrorCategory::shape, "infer: image must be (3," + std::to_string(cfg.height) + "," +
                                   std::to_string(cfg.width) + "), got " +
                                   shape_str(image.shape()));
  ParamMap<float> student = extract_group(ckpt, "student.");
  check_manifest(student, cfg.arch, "student");

  Tape<float> tape;
  BoundParams<float> sp = bind_params(tape, student, false);
  Var<float> in = image_const(tape, image);
  DepthOutputs<float> d = depth_forward(tape, sp, in);
  Var<float> depth = disparity_to_depth(tape, d.disp[0]);
  tape.evaluate(depth);
  const Tensor<float>& v = tape.value(depth);
  Tensor<double> out({cfg.height, cfg.width});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(v[i]);
  return out;
}

Tensor<double> infer_depth_at(const Checkpoint& ckpt, const Tensor<float>& image) {
  const TrainConfig& cfg = ckpt.config;
  if (image.rank() != 3 || image.dim(0) != 3)
    fail(ErrorCategory::shape, "infer: image must be (3,H,W), got " + shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  if (h == cfg.height && w == cfg.width) return infer_depth(ckpt, image);
  Tensor<double> d = infer_depth(ckpt, imgu::resize_chw(image, cfg.height, cfg.width));
  Tensor<float> plane(Shape{1, cfg.height, cfg.width});
  for (int64_t i = 0; i < d.size(); ++i) plane[i] = static_cast<float>(d[i]);
  Tensor<float> up = imgu::resize_chw(plane, h, w);
  Tensor<double> out({h, w});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(up[i]);
  return out;
}

}  // namespace ecdepth
