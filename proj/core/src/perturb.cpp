#include "ecdepth/perturb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <vector>

#include "ecdepth/error.hpp"
#include "ecdepth/rng.hpp"
#include "image_util.hpp"

namespace ecdepth {

namespace {

// Byte-identical to core/data/corruption_severity.txt (golden-tested).
const char kSeverityTable[] = R"TBL(# Corruption severity constants, version 1.
# One line per (kind, severity): kind severity key=value [key=value ...]
# Pixel-unit parameters (radius, sigma, delta, length, alpha, field_sigma)
# are expressed at a reference minimum image dimension of 64 and are scaled
# by min(H,W)/64 when applied. The pixelate block size is absolute.
gaussian_noise 1 sigma=0.08
gaussian_noise 2 sigma=0.12
gaussian_noise 3 sigma=0.18
gaussian_noise 4 sigma=0.26
gaussian_noise 5 sigma=0.38
shot_noise 1 lambda=60
shot_noise 2 lambda=25
shot_noise 3 lambda=12
shot_noise 4 lambda=5
shot_noise 5 lambda=3
impulse_noise 1 amount=0.03
impulse_noise 2 amount=0.06
impulse_noise 3 amount=0.09
impulse_noise 4 amount=0.17
impulse_noise 5 amount=0.27
defocus_blur 1 radius=1.0
defocus_blur 2 radius=1.5
defocus_blur 3 radius=2.0
defocus_blur 4 radius=3.0
defocus_blur 5 radius=4.0
glass_blur 1 sigma=0.30 delta=1 prob=0.20
glass_blur 2 sigma=0.55 delta=1 prob=0.35
glass_blur 3 sigma=0.80 delta=2 prob=0.50
glass_blur 4 sigma=1.05 delta=2 prob=0.65
glass_blur 5 sigma=1.30 delta=3 prob=0.80
motion_blur 1 length=3
motion_blur 2 length=5
motion_blur 3 length=7
motion_blur 4 length=10
motion_blur 5 length=14
zoom_blur 1 zmax=1.06
zoom_blur 2 zmax=1.11
zoom_blur 3 zmax=1.16
zoom_blur 4 zmax=1.21
zoom_blur 5 zmax=1.26
gaussian_blur 1 sigma=0.5
gaussian_blur 2 sigma=0.8
gaussian_blur 3 sigma=1.2
gaussian_blur 4 sigma=1.8
gaussian_blur 5 sigma=2.6
snow 1 density=0.010 whiten=0.10 length=2
snow 2 density=0.020 whiten=0.15 length=3
snow 3 density=0.030 whiten=0.20 length=4
snow 4 density=0.045 whiten=0.25 length=5
snow 5 density=0.060 whiten=0.30 length=6
fog 1 tmax=0.15
fog 2 tmax=0.25
fog 3 tmax=0.35
fog 4 tmax=0.45
fog 5 tmax=0.55
spatter 1 density=0.05
spatter 2 density=0.08
spatter 3 density=0.12
spatter 4 density=0.16
spatter 5 density=0.20
brightness 1 delta=0.1
brightness 2 delta=0.2
brightness 3 delta=0.3
brightness 4 delta=0.4
brightness 5 delta=0.5
contrast 1 factor=0.60
contrast 2 factor=0.45
contrast 3 factor=0.30
contrast 4 factor=0.20
contrast 5 factor=0.10
saturate 1 factor=0.50
saturate 2 factor=0.30
saturate 3 factor=2.0
saturate 4 factor=4.0
saturate 5 factor=8.0
elastic_transform 1 alpha=1.0 field_sigma=6.0
elastic_transform 2 alpha=1.5 field_sigma=6.0
elastic_transform 3 alpha=2.0 field_sigma=6.0
elastic_transform 4 alpha=2.5 field_sigma=6.0
elastic_transform 5 alpha=3.0 field_sigma=6.0
pixelate 1 block=2
pixelate 2 block=3
pixelate 3 block=4
pixelate 4 block=6
pixelate 5 block=8
)TBL";

const char* const kKindNames[kNumCorruptionKinds] = {
    "gaussian_noise", "shot_noise", "impulse_noise",  "defocus_blur",
    "glass_blur",     "motion_blur", "zoom_blur",      "gaussian_blur",
    "snow",           "fog",         "spatter",        "brightness",
    "contrast",       "saturate",    "elastic_transform", "pixelate"};

using ParamRow = std::map<std::string, double>;

const std::map<std::pair<int, int>, ParamRow>& severity_params() {
  static const std::map<std::pair<int, int>, ParamRow> table = [] {
    std::map<std::pair<int, int>, ParamRow> t;
    std::istringstream in(kSeverityTable);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string kind_name, tok;
      int sev = 0;
      ls >> kind_name >> sev;
      CorruptionKind kind = corruption_kind_from_string(kind_name);
      ParamRow row;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
          fail(ErrorCategory::format, "severity table: bad token '" + tok + "'");
        row[tok.substr(0, eq)] = std::stod(tok.substr(eq + 1));
      }
      t[{static_cast<int>(kind), sev}] = std::move(row);
    }
    return t;
  }();
  return table;
}

double sev_param(CorruptionKind kind, int severity, const char* name) {
  const auto& table = severity_params();
  auto it = table.find({static_cast<int>(kind), severity});
  if (it == table.end())
    fail(ErrorCategory::usage, std::string("no severity entry for ") + to_string(kind) + " at level " +
                                   std::to_string(severity));
  auto pit = it->second.find(name);
  if (pit == it->second.end())
    fail(ErrorCategory::format, std::string("severity table: missing parameter '") + name + "'");
  return pit->second;
}

void check_image(const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    fail(ErrorCategory::shape, "expected a (3,H,W) image, got " + shape_str(img.shape()));
}

void clamp01(Tensor<float>& t) {
  for (int64_t i = 0; i < t.size(); ++i) t[i] = std::min(1.0f, std::max(0.0f, t[i]));
}

// Separable Gaussian blur with reflect-101 borders; sigma in pixels.
Tensor<float> gauss_blur(const Tensor<float>& img, double sigma) {
  if (sigma <= 1e-6) return img;
  int C = static_cast<int>(img.dim(0)), H = static_cast<int>(img.dim(1)),
      W = static_cast<int>(img.dim(2));
  int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;

  Tensor<float> tmp(img.shape(), 0.0f), out(img.shape(), 0.0f);
  for (int c = 0; c < C; ++c) {
    const float* src = img.data() + static_cast<size_t>(c) * H * W;
    float* mid = tmp.data() + static_cast<size_t>(c) * H * W;
    float* dst = out.data() + static_cast<size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * src[y * W + imgu::reflect1(x + i, W)];
        mid[y * W + x] = static_cast<float>(acc);
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * mid[imgu::reflect1(y + i, H) * W + x];
        dst[y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

// Dense 2D kernel convolution (odd kernel), reflect-101 borders.
Tensor<float> conv_reflect(const Tensor<float>& img, const std::vector<double>& kern, int kh, int kw) {
  int C = static_cast<int>(img.dim(0)), H = static_cast<int>(img.dim(1)),
      W = static_cast<int>(img.dim(2));
  int ry = kh / 2, rx = kw / 2;
  Tensor<float> out(img.shape(), 0.0f);
  for (int c = 0; c < C; ++c) {
    const float* src = img.data() + static_cast<size_t>(c) * H * W;
    float* dst = out.data() + static_cast<size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0;
        for (int dy = -ry; dy <= ry; ++dy) {
          int yy = imgu::reflect1(y + dy, H);
          for (int dx = -rx; dx <= rx; ++dx)
            acc += kern[(dy + ry) * kw + (dx + rx)] * src[yy * W + imgu::reflect1(x + dx, W)];
        }
        dst[y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

// Multi-octave value noise in [0,1]: bilinearly upsampled random grids.
Tensor<float> noise_field(int H, int W, Rng& rng) {
  Tensor<float> acc({1, H, W}, 0.0f);
  double amp = 1.0;
  for (int o = 0; o < 4; ++o) {
    int gh = std::min(H, 4 << o), gw = std::min(W, 4 << o);
    Tensor<float> grid({1, gh, gw}, 0.0f);
    for (int64_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<float>(rng.uniform());
    Tensor<float> up = imgu::resize_chw(grid, H, W);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(amp) * up[i];
    amp *= 0.5;
  }
  float lo = acc[0], hi = acc[0];
  for (int64_t i = 0; i < acc.size(); ++i) {
    lo = std::min(lo, acc[i]);
    hi = std::max(hi, acc[i]);
  }
  float span = std::max(1e-12f, hi - lo);
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] = (acc[i] - lo) / span;
  return acc;
}

float quantile(std::vector<float> v, double q) {
  size_t k = static_cast<size_t>(q * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(k), v.end());
  return v[k];
}

std::array<double, 3> channel_means(const Tensor<float>& img) {
  size_t hw = img.dim(1) * img.dim(2);
  std::array<double, 3> mu{0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    const float* p = img.data() + static_cast<size_t>(c) * hw;
    double s = 0;
    for (size_t i = 0; i < hw; ++i) s += p[i];
    mu[static_cast<size_t>(c)] = s / static_cast<double>(hw);
  }
  return mu;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  double d = mx - mn;
  s = mx <= 0 ? 0 : d / mx;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h *= 60.0;
  if (h < 0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  double c = v * s;
  double hp = h / 60.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  if (hp < 1) {
    r1 = c; g1 = x;
  } else if (hp < 2) {
    r1 = x; g1 = c;
  } else if (hp < 3) {
    g1 = c; b1 = x;
  } else if (hp < 4) {
    g1 = x; b1 = c;
  } else if (hp < 5) {
    r1 = x; b1 = c;
  } else {
    r1 = c; b1 = x;
  }
  double m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

// Line kernel through the center, bilinearly splatted; normalized.
std::vector<double> motion_kernel(int length, double angle, int& kdim) {
  kdim = length | 1;  // odd
  std::vector<double> k(static_cast<size_t>(kdim) * kdim, 0.0);
  double cx = (kdim - 1) / 2.0, cy = (kdim - 1) / 2.0;
  double dx = std::cos(angle), dy = std::sin(angle);
  int taps = 2 * length;
  double sum = 0;
  for (int i = 0; i <= taps; ++i) {
    double t = (static_cast<double>(i) / taps - 0.5) * (length - 1);
    double x = cx + t * dx, y = cy + t * dy;
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    double wx = x - x0, wy = y - y0;
    for (int oy = 0; oy <= 1; ++oy)
      for (int ox = 0; ox <= 1; ++ox) {
        int xx = x0 + ox, yy = y0 + oy;
        if (xx < 0 || xx >= kdim || yy < 0 || yy >= kdim) continue;
        double w = (ox ? wx : 1 - wx) * (oy ? wy : 1 - wy);
        k[static_cast<size_t>(yy) * kdim + xx] += w;
        sum += w;
      }
  }
  for (auto& v : k) v /= sum;
  return k;
}

// ---- individual corruptions ------------------------------------------------

Tensor<float> do_gaussian_noise(const Tensor<float>& img, double sigma, Rng& rng) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += static_cast<float>(sigma * rng.normal());
  return out;
}

Tensor<float> do_shot_noise(const Tensor<float>& img, double lambda, Rng& rng) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(rng.poisson(static_cast<double>(img[i]) * lambda) / lambda);
  return out;
}

Tensor<float> do_impulse_noise(const Tensor<float>& img, double amount, Rng& rng) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i) {
    double u = rng.uniform();
    if (u < amount) out[i] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

Tensor<float> do_defocus_blur(const Tensor<float>& img, double radius) {
  int r = static_cast<int>(std::ceil(radius));
  int kdim = 2 * r + 1;
  std::vector<double> k(static_cast<size_t>(kdim) * kdim, 0.0);
  double sum = 0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      double d = std::sqrt(static_cast<double>(x * x + y * y));
      double w = std::min(1.0, std::max(0.0, radius + 0.5 - d));  // anti-aliased disk
      k[static_cast<size_t>(y + r) * kdim + (x + r)] = w;
      sum += w;
    }
  for (auto& v : k) v /= sum;
  return conv_reflect(img, k, kdim, kdim);
}

Tensor<float> do_glass_blur(const Tensor<float>& img, double sigma, int delta, double prob, Rng& rng) {
  Tensor<float> out = gauss_blur(img, sigma);
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  size_t hw = static_cast<size_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (rng.uniform() >= prob) continue;
      int dy = rng.uniform_int(-delta, delta), dx = rng.uniform_int(-delta, delta);
      int yy = std::min(H - 1, std::max(0, y + dy));
      int xx = std::min(W - 1, std::max(0, x + dx));
      for (int c = 0; c < 3; ++c)
        std::swap(out.data()[c * hw + static_cast<size_t>(y) * W + x],
                  out.data()[c * hw + static_cast<size_t>(yy) * W + xx]);
    }
  return gauss_blur(out, sigma);
}

Tensor<float> do_motion_blur(const Tensor<float>& img, int length, Rng& rng) {
  double angle = rng.uniform(0.0, 3.14159265358979323846);
  int kdim = 0;
  std::vector<double> k = motion_kernel(length, angle, kdim);
  return conv_reflect(img, k, kdim, kdim);
}

Tensor<float> do_zoom_blur(const Tensor<float>& img, double zmax) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Tensor<float> acc(img.shape(), 0.0f);
  int n = 0;
  for (double z = 1.0; z < zmax + 1e-9; z += 0.01) {
    int ch = std::max(2, static_cast<int>(std::lround(H / z)));
    int cw = std::max(2, static_cast<int>(std::lround(W / z)));
    int oy = (H - ch) / 2, ox = (W - cw) / 2;
    Tensor<float> crop({3, ch, cw}, 0.0f);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < ch; ++y)
        std::memcpy(crop.data() + (static_cast<size_t>(c) * ch + y) * cw,
                    img.data() + (static_cast<size_t>(c) * H + (y + oy)) * W + ox,
                    sizeof(float) * static_cast<size_t>(cw));
    Tensor<float> zoomed = imgu::resize_chw(crop, H, W);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += zoomed[i];
    ++n;
  }
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] /= static_cast<float>(n);
  return acc;
}

Tensor<float> do_snow(const Tensor<float>& img, double density, double whiten, int length, Rng& rng) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Tensor<float> specks({1, H, W}, 0.0f);
  for (int64_t i = 0; i < specks.size(); ++i) {
    double u = rng.uniform();
    specks[i] = u < density ? static_cast<float>(0.8 + 0.2 * rng.uniform()) : 0.0f;
  }
  double angle = 3.14159265358979323846 / 2.0 + rng.uniform(-0.4, 0.4);  // near-vertical fall
  int kdim = 0;
  std::vector<double> k = motion_kernel(std::max(2, length), angle, kdim);
  Tensor<float> streaks = conv_reflect(specks, k, kdim, kdim);
  float mx = 0;
  for (int64_t i = 0; i < streaks.size(); ++i) mx = std::max(mx, streaks[i]);
  float gain = mx > 0 ? 0.95f / mx : 0.0f;
  Tensor<float> out = img;
  size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < hw; ++i) {
      float base = out.data()[c * hw + i] * static_cast<float>(1.0 - whiten) +
                   static_cast<float>(whiten) * 0.9f;
      out.data()[c * hw + i] = std::max(base, streaks[i] * gain);
    }
  return out;
}

Tensor<float> do_fog(const Tensor<float>& img, double tmax, Rng& rng) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Tensor<float> field = noise_field(H, W, rng);
  Tensor<float> out = img;
  size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < hw; ++i) {
      double t = tmax * field[i];
      out.data()[c * hw + i] =
          static_cast<float>(out.data()[c * hw + i] * (1.0 - t) + 0.95 * t);
    }
  return out;
}

Tensor<float> do_spatter(const Tensor<float>& img, double density, double scale, Rng& rng) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Tensor<float> field({1, H, W}, 0.0f);
  for (int64_t i = 0; i < field.size(); ++i) field[i] = static_cast<float>(rng.uniform());
  field = gauss_blur(field, 1.5 * scale);
  float tau = quantile(std::vector<float>(field.data(), field.data() + field.size()),
                       1.0 - 2.5 * density);
  Tensor<float> mask({1, H, W}, 0.0f);
  for (int64_t i = 0; i < mask.size(); ++i) mask[i] = field[i] > tau ? 1.0f : 0.0f;
  mask = gauss_blur(mask, 0.5 * scale);
  const double color[3] = {0.25, 0.17, 0.10};  // mud
  Tensor<float> out = img;
  size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < hw; ++i) {
      double m = 0.7 * mask[i];
      out.data()[c * hw + i] =
          static_cast<float>(out.data()[c * hw + i] * (1.0 - m) + color[c] * m);
    }
  return out;
}

Tensor<float> do_brightness(const Tensor<float>& img, double delta) {
  Tensor<float> out = img;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += static_cast<float>(delta);
  return out;
}

Tensor<float> do_contrast(const Tensor<float>& img, double factor) {
  auto mu = channel_means(img);
  Tensor<float> out = img;
  size_t hw = img.dim(1) * img.dim(2);
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < hw; ++i) {
      double v = out.data()[c * hw + i];
      out.data()[c * hw + i] = static_cast<float>((v - mu[static_cast<size_t>(c)]) * factor +
                                                  mu[static_cast<size_t>(c)]);
    }
  return out;
}

Tensor<float> do_saturate(const Tensor<float>& img, double factor) {
  Tensor<float> out = img;
  size_t hw = img.dim(1) * img.dim(2);
  for (size_t i = 0; i < hw; ++i) {
    double r = img[i], g = img[hw + i], b = img[2 * hw + i];
    double gray = 0.299 * r + 0.587 * g + 0.114 * b;
    out[i] = static_cast<float>(gray + (r - gray) * factor);
    out[hw + i] = static_cast<float>(gray + (g - gray) * factor);
    out[2 * hw + i] = static_cast<float>(gray + (b - gray) * factor);
  }
  return out;
}

Tensor<float> do_elastic(const Tensor<float>& img, double alpha_px, double field_sigma, Rng& rng) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Shape fshape{1, H, W};
  Tensor<float> dx(fshape, 0.0f), dy(fshape, 0.0f);
  for (int64_t i = 0; i < dx.size(); ++i) dx[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (int64_t i = 0; i < dy.size(); ++i) dy[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  dx = gauss_blur(dx, field_sigma);
  dy = gauss_blur(dy, field_sigma);
  auto rms = [](const Tensor<float>& t) {
    double s = 0;
    for (int64_t i = 0; i < t.size(); ++i) s += static_cast<double>(t[i]) * t[i];
    return std::sqrt(s / static_cast<double>(t.size()));
  };
  double gx = alpha_px / std::max(1e-8, rms(dx)), gy = alpha_px / std::max(1e-8, rms(dy));
  Tensor<float> out(img.shape(), 0.0f);
  size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < 3; ++c) {
    const float* src = img.data() + static_cast<size_t>(c) * hw;
    float* dst = out.data() + static_cast<size_t>(c) * hw;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double sx = x + gx * dx[static_cast<size_t>(y) * W + x];
        double sy = y + gy * dy[static_cast<size_t>(y) * W + x];
        dst[static_cast<size_t>(y) * W + x] = imgu::sample_clamped(src, H, W, sy, sx);
      }
  }
  return out;
}

Tensor<float> do_pixelate(const Tensor<float>& img, int block) {
  int H = static_cast<int>(img.dim(1)), W = static_cast<int>(img.dim(2));
  Tensor<float> out = img;
  size_t hw = static_cast<size_t>(H) * W;
  for (int c = 0; c < 3; ++c) {
    float* p = out.data() + static_cast<size_t>(c) * hw;
    for (int by = 0; by < H; by += block)
      for (int bx = 0; bx < W; bx += block) {
        int ye = std::min(H, by + block), xe = std::min(W, bx + block);
        double acc = 0;
        for (int y = by; y < ye; ++y)
          for (int x = bx; x < xe; ++x) acc += p[static_cast<size_t>(y) * W + x];
        float mean = static_cast<float>(acc / ((ye - by) * (xe - bx)));
        for (int y = by; y < ye; ++y)
          for (int x = bx; x < xe; ++x) p[static_cast<size_t>(y) * W + x] = mean;
      }
  }
  return out;
}

}  // namespace

const char* to_string(CorruptionKind kind) {
  int i = static_cast<int>(kind);
  if (i < 0 || i >= kNumCorruptionKinds)
    fail(ErrorCategory::usage, "invalid corruption kind index " + std::to_string(i));
  return kKindNames[i];
}

CorruptionKind corruption_kind_from_string(const std::string& name) {
  for (int i = 0; i < kNumCorruptionKinds; ++i)
    if (name == kKindNames[i]) return static_cast<CorruptionKind>(i);
  fail(ErrorCategory::usage, "unknown corruption kind '" + name + "'");
}

JitterSpec draw_jitter(uint64_t seed) {
  Rng rng(seed);
  JitterSpec spec;
  spec.brightness = rng.uniform(-0.2, 0.2);
  spec.contrast = rng.uniform(-0.2, 0.2);
  spec.saturation = rng.uniform(-0.2, 0.2);
  spec.hue = rng.uniform(-0.05, 0.05);
  spec.seed = seed;
  return spec;
}

Tensor<float> weak_perturb(const Tensor<float>& image, const JitterSpec& spec) {
  check_image(image);
  Tensor<float> out = image;
  size_t hw = image.dim(1) * image.dim(2);

  for (int64_t i = 0; i < out.size(); ++i) out[i] += static_cast<float>(spec.brightness);

  auto mu = channel_means(out);
  double cf = 1.0 + spec.contrast;
  for (int c = 0; c < 3; ++c)
    for (size_t i = 0; i < hw; ++i) {
      double v = out.data()[c * hw + i];
      out.data()[c * hw + i] = static_cast<float>((v - mu[static_cast<size_t>(c)]) * cf +
                                                  mu[static_cast<size_t>(c)]);
    }

  double sf = 1.0 + spec.saturation;
  for (size_t i = 0; i < hw; ++i) {
    double r = out[i], g = out[hw + i], b = out[2 * hw + i];
    double gray = 0.299 * r + 0.587 * g + 0.114 * b;
    out[i] = static_cast<float>(gray + (r - gray) * sf);
    out[hw + i] = static_cast<float>(gray + (g - gray) * sf);
    out[2 * hw + i] = static_cast<float>(gray + (b - gray) * sf);
  }

  // Pre-hue envelope: the combined photometric change never moves a channel
  // by more than 0.25 from the input, for any image.
  for (int64_t i = 0; i < out.size(); ++i) {
    float lo = image[i] - 0.25f, hi = image[i] + 0.25f;
    out[i] = std::min(hi, std::max(lo, out[i]));
  }

  if (spec.hue != 0) {
    double rot = spec.hue * 360.0;
    for (size_t i = 0; i < hw; ++i) {
      double r = std::min(1.0, std::max(0.0, static_cast<double>(out[i])));
      double g = std::min(1.0, std::max(0.0, static_cast<double>(out[hw + i])));
      double b = std::min(1.0, std::max(0.0, static_cast<double>(out[2 * hw + i])));
      double h, s, v;
      rgb_to_hsv(r, g, b, h, s, v);
      h = std::fmod(h + rot + 360.0, 360.0);
      hsv_to_rgb(h, s, v, r, g, b);
      out[i] = static_cast<float>(r);
      out[hw + i] = static_cast<float>(g);
      out[2 * hw + i] = static_cast<float>(b);
    }
  }

  clamp01(out);
  return out;
}

Tensor<float> apply_corruption(const Tensor<float>& image, const CorruptionSpec& spec) {
  check_image(image);
  if (spec.severity < 1 || spec.severity > 5)
    fail(ErrorCategory::usage, "corruption severity must be in 1..5, got " + std::to_string(spec.severity));
  int H = static_cast<int>(image.dim(1)), W = static_cast<int>(image.dim(2));
  double scale = static_cast<double>(std::min(H, W)) / 64.0;  // reference min-dim 64
  Rng rng(spec.seed);
  CorruptionKind k = spec.kind;
  int sv = spec.severity;
  auto p = [&](const char* name) { return sev_param(k, sv, name); };

  Tensor<float> out;
  switch (k) {
    case CorruptionKind::gaussian_noise:
      out = do_gaussian_noise(image, p("sigma"), rng);
      break;
    case CorruptionKind::shot_noise:
      out = do_shot_noise(image, p("lambda"), rng);
      break;
    case CorruptionKind::impulse_noise:
      out = do_impulse_noise(image, p("amount"), rng);
      break;
    case CorruptionKind::defocus_blur:
      out = do_defocus_blur(image, std::max(0.9, p("radius") * scale));
      break;
    case CorruptionKind::glass_blur:
      out = do_glass_blur(image, p("sigma") * scale,
                          std::max(1, static_cast<int>(std::lround(p("delta") * scale))),
                          p("prob"), rng);
      break;
    case CorruptionKind::motion_blur:
      out = do_motion_blur(image, std::max(3, static_cast<int>(std::lround(p("length") * scale))), rng);
      break;
    case CorruptionKind::zoom_blur:
      out = do_zoom_blur(image, p("zmax"));
      break;
    case CorruptionKind::gaussian_blur:
      out = gauss_blur(image, p("sigma") * scale);
      break;
    case CorruptionKind::snow:
      out = do_snow(image, p("density"), p("whiten"),
                    std::max(2, static_cast<int>(std::lround(p("length") * scale))), rng);
      break;
    case CorruptionKind::fog:
      out = do_fog(image, p("tmax"), rng);
      break;
    case CorruptionKind::spatter:
      out = do_spatter(image, p("density"), scale, rng);
      break;
    case CorruptionKind::brightness:
      out = do_brightness(image, p("delta"));
      break;
    case CorruptionKind::contrast:
      out = do_contrast(image, p("factor"));
      break;
    case CorruptionKind::saturate:
      out = do_saturate(image, p("factor"));
      break;
    case CorruptionKind::elastic_transform:
      out = do_elastic(image, p("alpha") * scale, p("field_sigma") * scale, rng);
      break;
    case CorruptionKind::pixelate:
      out = do_pixelate(image, static_cast<int>(p("block")));
      break;
  }
  clamp01(out);
  return out;
}

Triplet make_triplet(const Tensor<float>& image, uint64_t seed) {
  check_image(image);
  Triplet t;
  t.jitter = draw_jitter(Rng::derive(seed, "jitter"));
  t.weak = weak_perturb(image, t.jitter);
  CorruptionSpec* specs[2] = {&t.spec1, &t.spec2};
  Tensor<float>* outs[2] = {&t.strong1, &t.strong2};
  for (uint64_t i = 0; i < 2; ++i) {
    Rng draw(Rng::derive(seed, "strong-draw", i));
    specs[i]->kind = static_cast<CorruptionKind>(draw.uniform_int(0, kNumCorruptionKinds - 1));
    specs[i]->severity = draw.uniform_int(1, 5);
    specs[i]->seed = Rng::derive(seed, "strong-apply", i);
    *outs[i] = apply_corruption(image, *specs[i]);
  }
  return t;
}

const std::string& severity_table_text() {
  static const std::string text(kSeverityTable);
  return text;
}

}  // namespace ecdepth
