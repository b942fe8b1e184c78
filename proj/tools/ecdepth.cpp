// ecdepth: command-line front end for the depth training engine.
//
// Subcommands: synth, train, infer, corrupt, eval, inspect.  Every run that
// produces artifacts also records its own invocation line next to them, so
// any output can be regenerated from the logged command alone.  Exit codes:
// 0 success, 2 usage error, 1 everything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecdepth/checkpoint.hpp"
#include "ecdepth/config.hpp"
#include "ecdepth/dataset.hpp"
#include "ecdepth/error.hpp"
#include "ecdepth/evaluator.hpp"
#include "ecdepth/perturb.hpp"
#include "ecdepth/png_io.hpp"
#include "ecdepth/rng.hpp"
#include "ecdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace ecdepth;

namespace {

std::string quote_arg(const std::string& a) {
  if (!a.empty() && a.find_first_of(" \t\"'\\") == std::string::npos) return a;
  std::string q = "'";
  for (char c : a) {
    if (c == '\'')
      q += "'\\''";
    else
      q += c;
  }
  q += "'";
  return q;
}

std::string invocation_line(int argc, char** argv) {
  std::string line;
  for (int i = 0; i < argc; ++i) {
    if (i) line += ' ';
    line += quote_arg(argv[i]);
  }
  line += '\n';
  return line;
}

void write_text_file(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCategory::io, "short write to " + path);
}

void copy_file_verbatim(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::copy_file(from, to, fs::copy_options::overwrite_existing, ec);
  if (ec)
    fail(ErrorCategory::io,
         "cannot copy " + from.string() + " to " + to.string() + ": " + ec.message());
}

std::string frame_name(const char* stem, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%010d.png", stem, index);
  return buf;
}

bool has_teacher_arrays(const Checkpoint& ckpt) {
  for (const auto& [name, t] : ckpt.arrays)
    if (name.rfind("teacher.", 0) == 0) return true;
  return false;
}

std::vector<CorruptionKind> parse_corruption_list(const std::string& arg) {
  std::vector<CorruptionKind> kinds;
  if (arg == "none") return kinds;
  if (arg == "all") {
    for (int i = 0; i < kNumCorruptionKinds; ++i) kinds.push_back(static_cast<CorruptionKind>(i));
    return kinds;
  }
  std::string::size_type pos = 0;
  while (pos <= arg.size()) {
    auto comma = arg.find(',', pos);
    if (comma == std::string::npos) comma = arg.size();
    std::string name = arg.substr(pos, comma - pos);
    if (name.empty()) fail(ErrorCategory::usage, "empty corruption name in list '" + arg + "'");
    kinds.push_back(corruption_kind_from_string(name));
    pos = comma + 1;
  }
  return kinds;
}

int cmd_synth(const std::string& out_dir, int frames, uint64_t seed, double motion, int width,
              int height, const std::string& invocation) {
  WorldConfig wc;
  wc.width = width;
  wc.height = height;
  wc.frame_count = frames;
  wc.seed = seed;
  wc.motion_scale = motion;
  SyntheticWorld world = build_world(wc);
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/invocation.txt", invocation);
  export_kitti(world, out_dir, "000");
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& init_path,
              const std::string& out_dir, const std::string& invocation) {
  TrainConfig cfg = load_config(config_path);
  Checkpoint start;
  if (init_path.empty()) {
    if (cfg.stage == 2)
      fail(ErrorCategory::usage, "stage 2 training requires --init with a stage-1 checkpoint");
    start = init_checkpoint(cfg);
  } else {
    Checkpoint init = load_checkpoint(init_path);
    bool teacher = has_teacher_arrays(init);
    if (cfg.stage == 2 && !teacher) {
      start = promote_to_stage2(init, cfg);
    } else if (cfg.stage == 1 && teacher) {
      fail(ErrorCategory::usage,
           "stage 1 config cannot resume from a stage-2 checkpoint " + init_path);
    } else {
      start = std::move(init);
      start.config = cfg;
    }
  }
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/invocation.txt", invocation);
  write_text_file(out_dir + "/config.txt", serialize_config(cfg));
  train(cfg, start, out_dir);
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& out_path, const std::string& invocation) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  Tensor<float> image = read_rgb_png(image_path);
  Tensor<double> depth = infer_depth_at(ckpt, image);
  DepthMap dm{depth, Tensor<double>(depth.shape(), 1.0)};
  write_text_file(out_path + ".invocation.txt", invocation);
  write_depth_png(dm, out_path);
  return 0;
}

int cmd_corrupt(const std::string& in_dir, const std::string& out_dir, const std::string& kind_name,
                int severity, uint64_t seed, const std::string& invocation) {
  CorruptionKind kind = corruption_kind_from_string(kind_name);
  std::error_code ec;
  if (fs::weakly_canonical(in_dir, ec) == fs::weakly_canonical(out_dir, ec) && !ec)
    fail(ErrorCategory::usage, "--out must differ from --in; refusing to overwrite the input");
  std::vector<std::string> sequences = list_kitti_sequences(in_dir);
  if (sequences.empty()) fail(ErrorCategory::data, "no sequence directories under " + in_dir);
  fs::create_directories(out_dir);
  write_text_file(out_dir + "/invocation.txt", invocation);
  for (size_t si = 0; si < sequences.size(); ++si) {
    const std::string& seq = sequences[si];
    fs::path src_seq = fs::path(in_dir) / seq;
    fs::path dst_seq = fs::path(out_dir) / seq;
    fs::create_directories(dst_seq);
    copy_file_verbatim(src_seq / "intrinsics.txt", dst_seq / "intrinsics.txt");
    for (int frame : list_kitti_frames(in_dir, seq)) {
      Tensor<float> image = read_rgb_png((src_seq / frame_name("frame", frame)).string());
      CorruptionSpec spec{kind, severity,
                          Rng::derive(seed, "corrupt", static_cast<uint64_t>(si),
                                      static_cast<uint64_t>(frame))};
      write_rgb_png(apply_corruption(image, spec), (dst_seq / frame_name("frame", frame)).string());
      fs::path depth_src = src_seq / frame_name("depth", frame);
      if (fs::exists(depth_src)) copy_file_verbatim(depth_src, dst_seq / frame_name("depth", frame));
    }
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& corruptions, const std::string& report_path, uint64_t seed,
             bool seed_given, const std::string& invocation) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::vector<CorruptionKind> kinds = parse_corruption_list(corruptions);
  uint64_t eval_seed = seed_given ? seed : ckpt.config.seed;
  InferFn infer = [&ckpt](const Tensor<float>& image) { return infer_depth_at(ckpt, image); };
  BenchmarkReport report = run_corruption_benchmark(data_dir, infer, kinds, eval_seed);
  write_text_file(report_path + ".invocation.txt", invocation);
  write_benchmark_csv(report, report_path);
  return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::cout << describe_checkpoint(ckpt);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"self-supervised monocular depth: synthesis, training, inference, evaluation"};
  app.require_subcommand(1);
  std::string invocation = invocation_line(argc, argv);

  auto* synth = app.add_subcommand("synth", "render a synthetic driving world to a dataset dir");
  std::string synth_out;
  int synth_frames = 202;
  uint64_t synth_seed = 1;
  double synth_motion = 1.0;
  int synth_width = 192, synth_height = 64;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--frames", synth_frames, "number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "world seed");
  synth->add_option("--motion", synth_motion, "camera motion scale")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--width", synth_width, "image width")->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_height, "image height")->check(CLI::PositiveNumber);

  auto* train_cmd = app.add_subcommand("train", "train a depth model from a config file");
  std::string train_config, train_init, train_out;
  train_cmd->add_option("--config", train_config, "training config file")->required();
  train_cmd->add_option("--init", train_init, "initial checkpoint (resume or stage-2 start)");
  train_cmd->add_option("--out", train_out, "output directory")->required();

  auto* infer_cmd = app.add_subcommand("infer", "predict a depth map for one image");
  std::string infer_ckpt, infer_image, infer_out;
  infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
  infer_cmd->add_option("--image", infer_image, "input RGB png")->required();
  infer_cmd->add_option("--out", infer_out, "output depth png")->required();

  auto* corrupt_cmd = app.add_subcommand("corrupt", "corrupt every frame of a dataset");
  std::string corrupt_in, corrupt_out, corrupt_kind;
  int corrupt_severity = 0;
  uint64_t corrupt_seed = 1;
  corrupt_cmd->add_option("--in", corrupt_in, "input dataset directory")->required();
  corrupt_cmd->add_option("--out", corrupt_out, "output dataset directory")->required();
  corrupt_cmd->add_option("--kind", corrupt_kind, "corruption kind name")->required();
  corrupt_cmd->add_option("--severity", corrupt_severity, "severity 1..5")
      ->required()
      ->check(CLI::Range(1, 5));
  corrupt_cmd->add_option("--seed", corrupt_seed, "corruption seed");

  auto* eval_cmd = app.add_subcommand("eval", "run the clean + corruption benchmark");
  std::string eval_ckpt, eval_data, eval_corruptions = "all", eval_report;
  uint64_t eval_seed = 0;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory with ground truth")->required();
  eval_cmd->add_option("--corruptions", eval_corruptions,
                       "all, none, or comma-separated kind names");
  eval_cmd->add_option("--report", eval_report, "output CSV path")->required();
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed,
                                             "evaluation seed (default: checkpoint seed)");

  auto* inspect_cmd = app.add_subcommand("inspect", "describe a checkpoint");
  std::string inspect_ckpt;
  inspect_cmd->add_option("--ckpt", inspect_ckpt, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  }

  if (synth->parsed())
    return cmd_synth(synth_out, synth_frames, synth_seed, synth_motion, synth_width, synth_height,
                     invocation);
  if (train_cmd->parsed()) return cmd_train(train_config, train_init, train_out, invocation);
  if (infer_cmd->parsed()) return cmd_infer(infer_ckpt, infer_image, infer_out, invocation);
  if (corrupt_cmd->parsed())
    return cmd_corrupt(corrupt_in, corrupt_out, corrupt_kind, corrupt_severity, corrupt_seed,
                       invocation);
  if (eval_cmd->parsed())
    return cmd_eval(eval_ckpt, eval_data, eval_corruptions, eval_report, eval_seed,
                    eval_seed_opt->count() > 0, invocation);
  if (inspect_cmd->parsed()) return cmd_inspect(inspect_ckpt);
  fail(ErrorCategory::usage, "no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", to_string(e.category()), e.what());
    return e.category() == ErrorCategory::usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 1;
  }
}
