#include "resseg/accounting.hpp"

#include <cstdio>
#include <numeric>

#include "resseg/error.hpp"
#include "resseg/ops.hpp"

namespace resseg {

namespace {

struct Planner {
  const ModelConfig& cfg;
  std::vector<LayerCost> rows;

  long long elems(int c, int h, int w) const { return static_cast<long long>(c) * h * w; }

  void conv(const std::string& name, const Conv2dSpec& s, int h, int w) {
    const int oh = s.out_extent(h);
    const int ow = s.out_extent_w(w);
    const long long out = elems(s.out_channels, oh, ow);
    rows.push_back({name, s.kh == 1 ? "conv1x1" : "conv" + std::to_string(s.kh) + "x" +
                                                     std::to_string(s.kw) + "/g" +
                                                     std::to_string(s.groups),
                    Shape{1, s.out_channels, oh, ow}, s.param_count(),
                    out * (s.in_channels / s.groups) * s.kh * s.kw, 0});
  }

  void tconv(const std::string& name, const Conv2dSpec& s, int h, int w) {
    const int oh = s.transposed_out_extent(h);
    const int ow = s.transposed_out_extent_w(w);
    rows.push_back({name, "tconv2x2", Shape{1, s.out_channels, oh, ow}, s.param_count(),
                    elems(s.in_channels, h, w) * (s.out_channels / s.groups) * s.kh * s.kw, 0});
  }

  void elementwise(const std::string& name, const std::string& kind, int c, int h, int w,
                   long long ops, long long params = 0) {
    rows.push_back({name, kind, Shape{1, c, h, w}, params, 0, ops});
  }

  void bn_act(const std::string& name, const char* act, int c, int h, int w) {
    elementwise(name + ".bn", "batchnorm", c, h, w, elems(c, h, w), 2LL * c);
    elementwise(name + ".act", act, c, h, w, elems(c, h, w));
  }

  void block(const std::string& name, int f_in, int f_out, int h, int w) {
    const bool bias = cfg.conv_bias;
    if (cfg.block == BlockKind::ResAttn) {
      const int g = cfg.groups_for(f_out);
      conv(name + ".conv1", {f_in, f_out, 1, 1, 1, 0, 1, bias}, h, w);
      bn_act(name + ".conv1", "gelu", f_out, h, w);
      conv(name + ".conv2", {f_out, f_out, 3, 3, 1, 1, g, bias}, h, w);
      bn_act(name + ".conv2", "gelu", f_out, h, w);
      conv(name + ".conv3", {f_out, f_out, 1, 1, 1, 0, 1, bias}, h, w);
      bn_act(name + ".conv3", "gelu", f_out, h, w);
      if (f_in != f_out) conv(name + ".proj", {f_in, f_out, 1, 1, 1, 0, 1, bias}, h, w);
      const long long e = elems(f_out, h, w);
      // channel max + sigmoid, channel mean + softmax, two gated products,
      // two scalar scalings and two merges.
      const long long attn = (e + f_out) + (e + 2LL * h * w) + 2 * e + 2 * e + 2 * e;
      elementwise(name + ".attention", "attention", f_out, h, w, attn, 2);
    } else {
      const int g = cfg.groups_for(f_out);
      conv(name + ".conv1", {f_in, f_out, 3, 3, 1, 1, std::gcd(g, f_in), bias}, h, w);
      bn_act(name + ".conv1", "relu", f_out, h, w);
      conv(name + ".conv2", {f_out, f_out, 3, 3, 1, 1, g, bias}, h, w);
      bn_act(name + ".conv2", "relu", f_out, h, w);
    }
  }
};

}  // namespace

std::vector<LayerCost> describe_layers(const ModelConfig& cfg, int height, int width) {
  cfg.validate();
  const int f = cfg.downsample_factor();
  if (height <= 0 || width <= 0 || height % f != 0 || width % f != 0) {
    throw ShapeError("accounting: input " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be a positive multiple of " + std::to_string(f));
  }
  Planner p{cfg, {}};
  const auto& enc = cfg.encoder_widths;
  const std::size_t levels = enc.size();
  int c = cfg.input_channels;
  int h = height, w = width;
  for (std::size_t i = 0; i < levels; ++i) {
    for (int b = 0; b < cfg.encoder_blocks[i]; ++b) {
      p.block("enc" + std::to_string(i) + "." + std::to_string(b), c, enc[i], h, w);
      c = enc[i];
    }
    if (i + 1 < levels) {
      h /= 2;
      w /= 2;
      p.elementwise("pool" + std::to_string(i), "maxpool", c, h, w, p.elems(c, h, w));
    }
  }
  for (std::size_t j = 0; j + 1 < levels; ++j) {
    const int skip_width = enc[levels - 2 - j];
    p.tconv("up" + std::to_string(j), {c, skip_width, 2, 2, 2, 0, 1, true}, h, w);
    h *= 2;
    w *= 2;
    if (cfg.skip == SkipMode::Sum) {
      p.elementwise("merge" + std::to_string(j), "skip-sum", skip_width, h, w,
                    p.elems(skip_width, h, w));
      c = skip_width;
    } else {
      c = 2 * skip_width;
      p.elementwise("merge" + std::to_string(j), "skip-concat", c, h, w, 0);
    }
    for (int b = 0; b < cfg.decoder_blocks[j]; ++b) {
      p.block("dec" + std::to_string(j) + "." + std::to_string(b), c, cfg.decoder_widths[j], h, w);
      c = cfg.decoder_widths[j];
    }
  }
  p.conv("head", {c, cfg.output_channels, 1, 1, 1, 0, 1, true}, h, w);
  p.elementwise("head.sigmoid", "sigmoid", cfg.output_channels, h, w,
                p.elems(cfg.output_channels, h, w));
  return p.rows;
}

long long param_count(const ModelConfig& cfg) {
  long long total = 0;
  for (const auto& r : describe_layers(cfg, cfg.downsample_factor(), cfg.downsample_factor()))
    total += r.params;
  return total;
}

long long flops_count(const ModelConfig& cfg, int height, int width) {
  long long total = 0;
  for (const auto& r : describe_layers(cfg, height, width)) total += r.flops();
  return total;
}

std::string format_layer_table(const std::vector<LayerCost>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-14s %-18s %12s %16s\n", "layer", "kind", "output",
                "params", "flops");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %-14s %-18s %12lld %16lld\n", r.name.c_str(),
                  r.kind.c_str(), r.output.str().c_str(), r.params, r.flops());
    out += line;
  }
  return out;
}

}  // namespace resseg
