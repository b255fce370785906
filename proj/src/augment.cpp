#include "resseg/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "resseg/dihedral.hpp"

namespace resseg {

namespace {

double between(UniformSource& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

double standard_normal(UniformSource& rng) {
  const double u1 = 1.0 - rng.uniform();  // (0,1]
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Inverse-maps every output pixel through a rotation about the centre plus
/// a translation; samples outside the source are zero.
Tensor<float> affine(const Tensor<float>& t, double degrees, double ty, double tx, bool nearest) {
  const Shape s = t.shape();
  Tensor<float> out(s);
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = (s.h - 1) / 2.0, cx = (s.w - 1) / 2.0;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const double dy = y - cy - ty, dx = x - cx - tx;
      const double sy = cs * dy + sn * dx + cy;
      const double sx = -sn * dy + cs * dx + cx;
      for (int c = 0; c < s.c; ++c) {
        const float* src = t.plane_ptr(0, c);
        float v = 0.0f;
        if (nearest) {
          const long iy = std::lround(sy), ix = std::lround(sx);
          if (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w) v = src[iy * s.w + ix];
        } else {
          const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
          const double fy = sy - y0, fx = sx - x0;
          auto at = [&](int yy, int xx) -> double {
            return (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) ? src[yy * s.w + xx] : 0.0;
          };
          v = static_cast<float>((1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                                 fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)));
        }
        out(0, c, y, x) = v;
      }
    }
  return out;
}

}  // namespace

Tensor<float> flip_cols(const Tensor<float>& t) { return apply_dihedral(t, {false, false, true}); }

Tensor<float> resize_bilinear(const Tensor<float>& t, int y0, int x0, int h, int w, int out_h, int out_w) {
  const Shape s = t.shape();
  Tensor<float> out(Shape{s.n, s.c, out_h, out_w});
  // Half-pixel centres, edge clamped.
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int iy = static_cast<int>(fy);
    const int iy1 = std::min(iy + 1, h - 1);
    const double wy = fy - iy;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int ix = static_cast<int>(fx);
      const int ix1 = std::min(ix + 1, w - 1);
      const double wx = fx - ix;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const float* p = t.plane_ptr(n, c);
          auto at = [&](int yy, int xx) { return static_cast<double>(p[(y0 + yy) * s.w + x0 + xx]); };
          out(n, c, y, x) = static_cast<float>((1 - wy) * ((1 - wx) * at(iy, ix) + wx * at(iy, ix1)) +
                                               wy * ((1 - wx) * at(iy1, ix) + wx * at(iy1, ix1)));
        }
    }
  }
  return out;
}

Tensor<float> resize_nearest(const Tensor<float>& t, int y0, int x0, int h, int w, int out_h, int out_w) {
  const Shape s = t.shape();
  Tensor<float> out(Shape{s.n, s.c, out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const int iy = std::min(static_cast<int>((y + 0.5) * h / out_h), h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int ix = std::min(static_cast<int>((x + 0.5) * w / out_w), w - 1);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) out(n, c, y, x) = t(n, c, y0 + iy, x0 + ix);
    }
  }
  return out;
}

Tensor<float> median3x3(const Tensor<float>& t) {
  const Shape s = t.shape();
  Tensor<float> out(s);
  std::array<float, 9> win{};
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* p = t.plane_ptr(n, c);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          int k = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = std::clamp(y + dy, 0, s.h - 1), xx = std::clamp(x + dx, 0, s.w - 1);
              win[k++] = p[yy * s.w + xx];
            }
          std::nth_element(win.begin(), win.begin() + 4, win.end());
          out(n, c, y, x) = win[4];
        }
    }
  return out;
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0f;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r) h = (g - b) / d;
  else if (mx == g) h = 2.0f + (b - r) / d;
  else h = 4.0f + (r - g) / d;
  h /= 6.0f;
  if (h < 0) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = static_cast<int>(hh) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

Sample augment_train(const Sample& in, UniformSource& rng, const AugmentParams& p) {
  Sample s = in;
  const int H = s.image.shape().h, W = s.image.shape().w;

  if (rng.uniform() < p.p_hflip) {
    s.image = flip_cols(s.image);
    s.mask = flip_cols(s.mask);
  }
  if (rng.uniform() < p.p_vflip) {
    const DihedralTransform v{false, true, false};
    s.image = apply_dihedral(s.image, v);
    s.mask = apply_dihedral(s.mask, v);
  }
  if (rng.uniform() < p.p_rot90) {
    const int k = 1 + std::min(2, static_cast<int>(rng.uniform() * 3));
    static const DihedralTransform rot[3] = {{true, true, false}, {false, true, true}, {true, false, true}};
    s.image = apply_dihedral(s.image, rot[k - 1]);
    s.mask = apply_dihedral(s.mask, rot[k - 1]);
  }
  if (rng.uniform() < p.p_crop) {
    const int h = s.image.shape().h, w = s.image.shape().w;
    const double area = between(rng, p.crop_scale_min, p.crop_scale_max) * h * w;
    const double ratio = std::exp(between(rng, std::log(p.crop_ratio_min), std::log(p.crop_ratio_max)));
    const int cw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * ratio))), 1, w);
    const int ch = std::clamp(static_cast<int>(std::lround(std::sqrt(area / ratio))), 1, h);
    const int y0 = std::min(h - ch, static_cast<int>(rng.uniform() * (h - ch + 1)));
    const int x0 = std::min(w - cw, static_cast<int>(rng.uniform() * (w - cw + 1)));
    s.image = resize_bilinear(s.image, y0, x0, ch, cw, H, W);
    s.mask = resize_nearest(s.mask, y0, x0, ch, cw, H, W);
  }
  if (rng.uniform() < p.p_affine) {
    const double deg = between(rng, -p.affine_degrees, p.affine_degrees);
    const double ty = between(rng, -p.affine_translate, p.affine_translate) * H;
    const double tx = between(rng, -p.affine_translate, p.affine_translate) * W;
    s.image = affine(s.image, deg, ty, tx, false);
    s.mask = affine(s.mask, deg, ty, tx, true);
  }
  if (rng.uniform() < p.p_hsv && s.image.shape().c == 3) {
    const float dh = static_cast<float>(between(rng, -p.hue_shift, p.hue_shift));
    const float ks = static_cast<float>(between(rng, 1 - p.saturation_scale, 1 + p.saturation_scale));
    const float kv = static_cast<float>(between(rng, 1 - p.value_scale, 1 + p.value_scale));
    const std::size_t plane = s.image.shape().plane();
    float* r = s.image.plane_ptr(0, 0);
    float* g = s.image.plane_ptr(0, 1);
    float* b = s.image.plane_ptr(0, 2);
    for (std::size_t i = 0; i < plane; ++i) {
      float h, sat, v;
      rgb_to_hsv(r[i], g[i], b[i], h, sat, v);
      hsv_to_rgb(h + dh, std::clamp(sat * ks, 0.0f, 1.0f), std::clamp(v * kv, 0.0f, 1.0f), r[i], g[i], b[i]);
    }
  }
  if (rng.uniform() < p.p_blur) s.image = median3x3(s.image);
  if (rng.uniform() < p.p_noise) {
    const double sigma = p.noise_sigma * rng.uniform();
    for (auto& v : s.image.span()) v += static_cast<float>(sigma * standard_normal(rng));
  }
  s.image.array() = s.image.array().max(0.0f).min(1.0f);
  return s;
}

}  // namespace resseg
