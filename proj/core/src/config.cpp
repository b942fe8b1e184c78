#include "ecdepth/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "ecdepth/error.hpp"

namespace ecdepth {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    fail(ErrorCategory::usage, "config key '" + key + "': not an integer: '" + v + "'");
  }
  if (pos != v.size())
    fail(ErrorCategory::usage, "config key '" + key + "': not an integer: '" + v + "'");
  return x;
}

double parse_real(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    fail(ErrorCategory::usage, "config key '" + key + "': not a number: '" + v + "'");
  }
  if (pos != v.size())
    fail(ErrorCategory::usage, "config key '" + key + "': not a number: '" + v + "'");
  return x;
}

std::string fmt_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"stage", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.stage = static_cast<int>(parse_int(k, v));
       }},
      {"epochs", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.epochs = static_cast<int>(parse_int(k, v));
       }},
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.batch_size = static_cast<int>(parse_int(k, v));
       }},
      {"lr_encoder", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.lr_encoder = parse_real(k, v);
       }},
      {"lr_decoder", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.lr_decoder = parse_real(k, v);
       }},
      {"decay_epoch", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.decay_epoch = static_cast<int>(parse_int(k, v));
       }},
      {"weight_decay", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.weight_decay = parse_real(k, v);
       }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) {
         long long s = parse_int(k, v);
         if (s < 0) fail(ErrorCategory::usage, "config key 'seed': must be nonnegative");
         c.seed = static_cast<uint64_t>(s);
       }},
      {"theta", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.theta = parse_real(k, v);
       }},
      {"alpha", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.alpha = parse_real(k, v);
       }},
      {"beta", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.beta = parse_real(k, v);
       }},
      {"gamma", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.gamma = parse_real(k, v);
       }},
      {"delta_g", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.delta_g = parse_real(k, v);
       }},
      {"delta_d", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.delta_d = parse_real(k, v);
       }},
      {"ema_momentum", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.ema_momentum = parse_real(k, v);
       }},
      {"num_scales", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.num_scales = static_cast<int>(parse_int(k, v));
       }},
      {"keep_prob", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.keep_prob = parse_real(k, v);
       }},
      {"stage2_consistency", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.stage2_consistency = static_cast<int>(parse_int(k, v));
       }},
      {"arch", [](TrainConfig& c, const std::string&, const std::string& v) { c.arch = v; }},
      {"dataset", [](TrainConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"width", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.width = static_cast<int>(parse_int(k, v));
       }},
      {"height", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.height = static_cast<int>(parse_int(k, v));
       }},
      {"checkpoint_every", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.checkpoint_every = static_cast<int>(parse_int(k, v));
       }},
      {"max_steps", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.max_steps = static_cast<int>(parse_int(k, v));
       }},
  };
  return table;
}

}  // namespace

int decay_boundary(const TrainConfig& cfg) {
  if (cfg.decay_epoch >= 0) return cfg.decay_epoch;
  return cfg.epochs * 3 / 4;
}

void validate_config(const TrainConfig& cfg) {
  auto bad = [](const std::string& msg) { fail(ErrorCategory::usage, "config: " + msg); };
  if (cfg.stage != 1 && cfg.stage != 2) bad("stage must be 1 or 2");
  if (cfg.epochs < 0) bad("epochs must be nonnegative");
  if (cfg.batch_size < 1) bad("batch_size must be positive");
  if (!(cfg.lr_encoder > 0) || !(cfg.lr_decoder > 0)) bad("learning rates must be positive");
  if (cfg.weight_decay < 0) bad("weight_decay must be nonnegative");
  if (!(cfg.theta >= 0 && cfg.theta <= 1)) bad("theta must lie in [0, 1]");
  if (cfg.alpha < 0 || cfg.beta < 0 || cfg.gamma < 0) bad("loss weights must be nonnegative");
  if (!(cfg.delta_g > 0) || !(cfg.delta_d > 0)) bad("filter thresholds must be positive");
  if (!(cfg.ema_momentum >= 0 && cfg.ema_momentum < 1)) bad("ema_momentum must lie in [0, 1)");
  if (cfg.num_scales < 1 || cfg.num_scales > 4) bad("num_scales must lie in 1..4");
  if (!(cfg.keep_prob > 0 && cfg.keep_prob <= 1)) bad("keep_prob must lie in (0, 1]");
  if (cfg.stage2_consistency != 0 && cfg.stage2_consistency != 1)
    bad("stage2_consistency must be 0 or 1");
  if (cfg.width <= 0 || cfg.height <= 0) bad("width/height must be positive");
  if (cfg.width % 16 != 0 || cfg.height % 16 != 0) bad("width/height must be divisible by 16");
  if (cfg.checkpoint_every < 0) bad("checkpoint_every must be nonnegative");
  if (cfg.max_steps < 0) bad("max_steps must be nonnegative");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      fail(ErrorCategory::usage,
           "config line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end())
      fail(ErrorCategory::usage, "config line " + std::to_string(line_no) + ": unknown key '" +
                                     key + "'");
    if (!seen.insert(key).second)
      fail(ErrorCategory::usage, "config line " + std::to_string(line_no) + ": duplicate key '" +
                                     key + "'");
    it->second(cfg, key, value);
  }
  validate_config(cfg);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCategory::io, "cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"alpha", fmt_real(cfg.alpha)},
      {"arch", cfg.arch},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"beta", fmt_real(cfg.beta)},
      {"checkpoint_every", std::to_string(cfg.checkpoint_every)},
      {"dataset", cfg.dataset},
      {"decay_epoch", std::to_string(cfg.decay_epoch)},
      {"delta_d", fmt_real(cfg.delta_d)},
      {"delta_g", fmt_real(cfg.delta_g)},
      {"ema_momentum", fmt_real(cfg.ema_momentum)},
      {"epochs", std::to_string(cfg.epochs)},
      {"gamma", fmt_real(cfg.gamma)},
      {"height", std::to_string(cfg.height)},
      {"keep_prob", fmt_real(cfg.keep_prob)},
      {"lr_decoder", fmt_real(cfg.lr_decoder)},
      {"lr_encoder", fmt_real(cfg.lr_encoder)},
      {"max_steps", std::to_string(cfg.max_steps)},
      {"num_scales", std::to_string(cfg.num_scales)},
      {"seed", std::to_string(cfg.seed)},
      {"stage", std::to_string(cfg.stage)},
      {"stage2_consistency", std::to_string(cfg.stage2_consistency)},
      {"theta", fmt_real(cfg.theta)},
      {"weight_decay", fmt_real(cfg.weight_decay)},
      {"width", std::to_string(cfg.width)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ecdepth
