#include "resseg/model.hpp"

#include <numeric>

namespace resseg {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

template <typename Scalar>
ConvLayer<Scalar> ConvLayer<Scalar>::make(const Conv2dSpec& spec, bool transposed,
                                          std::uint64_t seed) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  layer.transposed = transposed;
  const Shape ws = transposed ? spec.transposed_weight_shape() : spec.weight_shape();
  const int area = spec.kh * spec.kw;
  layer.weight = Var<Scalar>(xavier_init<Scalar>(ws, ws.c * area, ws.n * area, seed), true);
  if (spec.has_bias) layer.bias = Var<Scalar>(Tensor<Scalar>::zeros(spec.bias_shape()), true);
  return layer;
}

template <typename Scalar>
Var<Scalar> ConvLayer<Scalar>::operator()(const Var<Scalar>& x) const {
  return transposed ? transpose_conv2d(x, spec, weight, bias) : conv2d(x, spec, weight, bias);
}

template <typename Scalar>
ResAttnBlock<Scalar> ResAttnBlock<Scalar>::make(int f_in, int f_out, const ModelConfig& cfg,
                                                const std::function<std::uint64_t()>& next_seed) {
  ResAttnBlock b;
  b.f_in = f_in;
  b.f_out = f_out;
  b.groups_mid = cfg.groups_for(f_out);
  const bool bias = cfg.conv_bias;
  b.conv1 = ConvLayer<Scalar>::make({f_in, f_out, 1, 1, 1, 0, 1, bias}, false, next_seed());
  b.conv2 = ConvLayer<Scalar>::make({f_out, f_out, 3, 3, 1, 1, b.groups_mid, bias}, false,
                                    next_seed());
  b.conv3 = ConvLayer<Scalar>::make({f_out, f_out, 1, 1, 1, 0, 1, bias}, false, next_seed());
  const auto mom = static_cast<Scalar>(cfg.bn_momentum);
  const auto eps = static_cast<Scalar>(cfg.bn_epsilon);
  b.bn1 = BatchNormState<Scalar>::make(f_out, mom, eps);
  b.bn2 = BatchNormState<Scalar>::make(f_out, mom, eps);
  b.bn3 = BatchNormState<Scalar>::make(f_out, mom, eps);
  if (f_in != f_out) {
    b.projection = ConvLayer<Scalar>::make({f_in, f_out, 1, 1, 1, 0, 1, bias}, false, next_seed());
  }
  b.alpha = Var<Scalar>(Tensor<Scalar>::scalar(static_cast<Scalar>(cfg.alpha_init)), true);
  b.beta = Var<Scalar>(Tensor<Scalar>::scalar(static_cast<Scalar>(cfg.beta_init)), true);
  return b;
}

template <typename Scalar>
Var<Scalar> ResAttnBlock<Scalar>::main_path(const Var<Scalar>& x, Mode mode) {
  Var<Scalar> h = gelu(batchnorm2d(conv1(x), bn1, mode));
  h = gelu(batchnorm2d(conv2(h), bn2, mode));
  return gelu(batchnorm2d(conv3(h), bn3, mode));
}

template <typename Scalar>
Var<Scalar> ResAttnBlock<Scalar>::residual(const Var<Scalar>& x) const {
  return projection ? (*projection)(x) : x;
}

template <typename Scalar>
Var<Scalar> resattn_forward(const Var<Scalar>& x, ResAttnBlock<Scalar>& block, Mode mode) {
  if (x.shape().c != block.f_in) {
    throw ShapeError("resattn: input has " + std::to_string(x.shape().c) +
                     " channels, block expects " + std::to_string(block.f_in));
  }
  const Var<Scalar> conv_out = block.main_path(x, mode);
  const Var<Scalar> r = block.residual(x);
  const Var<Scalar> gated_c = scale(mul(r, channel_attention(r)), block.alpha);
  const Var<Scalar> gated_s = scale(mul(r, spatial_attention(r)), block.beta);
  return add(add(conv_out, gated_c), gated_s);
}

template <typename Scalar>
DoubleConvBlock<Scalar> DoubleConvBlock<Scalar>::make(
    int f_in, int f_out, const ModelConfig& cfg, const std::function<std::uint64_t()>& next_seed) {
  DoubleConvBlock b;
  b.f_in = f_in;
  b.f_out = f_out;
  const int g = cfg.groups_for(f_out);
  b.conv1 = ConvLayer<Scalar>::make({f_in, f_out, 3, 3, 1, 1, std::gcd(g, f_in), cfg.conv_bias},
                                    false, next_seed());
  b.conv2 = ConvLayer<Scalar>::make({f_out, f_out, 3, 3, 1, 1, g, cfg.conv_bias}, false,
                                    next_seed());
  const auto mom = static_cast<Scalar>(cfg.bn_momentum);
  const auto eps = static_cast<Scalar>(cfg.bn_epsilon);
  b.bn1 = BatchNormState<Scalar>::make(f_out, mom, eps);
  b.bn2 = BatchNormState<Scalar>::make(f_out, mom, eps);
  return b;
}

template <typename Scalar>
Var<Scalar> DoubleConvBlock<Scalar>::forward(const Var<Scalar>& x, Mode mode) {
  const Var<Scalar> h = relu(batchnorm2d(conv1(x), bn1, mode));
  return relu(batchnorm2d(conv2(h), bn2, mode));
}

namespace {

template <typename Scalar>
Block<Scalar> make_block(int f_in, int f_out, const ModelConfig& cfg,
                         const std::function<std::uint64_t()>& next_seed) {
  if (cfg.block == BlockKind::ResAttn) return ResAttnBlock<Scalar>::make(f_in, f_out, cfg, next_seed);
  return DoubleConvBlock<Scalar>::make(f_in, f_out, cfg, next_seed);
}

template <typename Scalar>
Var<Scalar> run_block(Block<Scalar>& block, const Var<Scalar>& x, Mode mode) {
  return std::visit(
      [&](auto& b) -> Var<Scalar> {
        if constexpr (std::is_same_v<std::decay_t<decltype(b)>, ResAttnBlock<Scalar>>) {
          return resattn_forward(x, b, mode);
        } else {
          return b.forward(x, mode);
        }
      },
      block);
}

template <typename Scalar>
void collect_conv(std::vector<Parameter<Scalar>>& out, const std::string& prefix,
                  ConvLayer<Scalar>& c) {
  out.push_back({prefix + ".weight", c.weight, true});
  if (c.bias) out.push_back({prefix + ".bias", *c.bias, false});
}

template <typename Scalar>
void collect_bn(std::vector<Parameter<Scalar>>& out, const std::string& prefix,
                BatchNormState<Scalar>& bn) {
  out.push_back({prefix + ".gamma", bn.gamma, false});
  out.push_back({prefix + ".beta", bn.beta, false});
}

template <typename Scalar>
void collect_block(std::vector<Parameter<Scalar>>& out, const std::string& prefix,
                   Block<Scalar>& block) {
  if (auto* r = std::get_if<ResAttnBlock<Scalar>>(&block)) {
    collect_conv(out, prefix + ".conv1", r->conv1);
    collect_bn(out, prefix + ".bn1", r->bn1);
    collect_conv(out, prefix + ".conv2", r->conv2);
    collect_bn(out, prefix + ".bn2", r->bn2);
    collect_conv(out, prefix + ".conv3", r->conv3);
    collect_bn(out, prefix + ".bn3", r->bn3);
    if (r->projection) collect_conv(out, prefix + ".proj", *r->projection);
    out.push_back({prefix + ".alpha", r->alpha, false});
    out.push_back({prefix + ".beta", r->beta, false});
  } else {
    auto& d = std::get<DoubleConvBlock<Scalar>>(block);
    collect_conv(out, prefix + ".conv1", d.conv1);
    collect_bn(out, prefix + ".bn1", d.bn1);
    collect_conv(out, prefix + ".conv2", d.conv2);
    collect_bn(out, prefix + ".bn2", d.bn2);
  }
}

template <typename Scalar>
void collect_bn_buffers(std::vector<std::pair<std::string, Tensor<Scalar>*>>& out,
                        const std::string& prefix, BatchNormState<Scalar>& bn) {
  out.emplace_back(prefix + ".running_mean", &bn.running_mean);
  out.emplace_back(prefix + ".running_var", &bn.running_var);
}

template <typename Scalar>
void collect_block_buffers(std::vector<std::pair<std::string, Tensor<Scalar>*>>& out,
                           const std::string& prefix, Block<Scalar>& block) {
  if (auto* r = std::get_if<ResAttnBlock<Scalar>>(&block)) {
    collect_bn_buffers(out, prefix + ".bn1", r->bn1);
    collect_bn_buffers(out, prefix + ".bn2", r->bn2);
    collect_bn_buffers(out, prefix + ".bn3", r->bn3);
  } else {
    auto& d = std::get<DoubleConvBlock<Scalar>>(block);
    collect_bn_buffers(out, prefix + ".bn1", d.bn1);
    collect_bn_buffers(out, prefix + ".bn2", d.bn2);
  }
}

std::string stage_name(const char* part, std::size_t stage, std::size_t block) {
  return std::string(part) + std::to_string(stage) + "." + std::to_string(block);
}

}  // namespace

template <typename Scalar>
Model<Scalar>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::uint64_t state = seed;
  const std::function<std::uint64_t()> next_seed = [&state] { return splitmix64(state); };

  const auto& enc = config_.encoder_widths;
  int channels = config_.input_channels;
  for (std::size_t i = 0; i < enc.size(); ++i) {
    std::vector<Block<Scalar>> stage;
    for (int b = 0; b < config_.encoder_blocks[i]; ++b) {
      stage.push_back(make_block<Scalar>(channels, enc[i], config_, next_seed));
      channels = enc[i];
    }
    encoder_.push_back(std::move(stage));
  }
  const std::size_t levels = enc.size();
  for (std::size_t j = 0; j + 1 < levels; ++j) {
    const int skip_width = enc[levels - 2 - j];
    ups_.push_back(
        ConvLayer<Scalar>::make({channels, skip_width, 2, 2, 2, 0, 1, true}, true, next_seed()));
    channels = config_.skip == SkipMode::Sum ? skip_width : 2 * skip_width;
    std::vector<Block<Scalar>> stage;
    for (int b = 0; b < config_.decoder_blocks[j]; ++b) {
      stage.push_back(make_block<Scalar>(channels, config_.decoder_widths[j], config_, next_seed));
      channels = config_.decoder_widths[j];
    }
    decoder_.push_back(std::move(stage));
  }
  head_ = ConvLayer<Scalar>::make({channels, config_.output_channels, 1, 1, 1, 0, 1, true}, false,
                                  next_seed());
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::forward(const Var<Scalar>& x, Mode mode) {
  const Shape xs = x.shape();
  if (xs.c != config_.input_channels) {
    throw ShapeError("model: input " + xs.str() + " has " + std::to_string(xs.c) +
                     " channels, expected " + std::to_string(config_.input_channels));
  }
  const int f = config_.downsample_factor();
  if (xs.h % f != 0 || xs.w % f != 0 || xs.h == 0 || xs.w == 0) {
    throw ShapeError("model: spatial dims of " + xs.str() + " must be positive multiples of " +
                     std::to_string(f));
  }

  std::vector<Var<Scalar>> skips;
  Var<Scalar> h = x;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    for (auto& block : encoder_[i]) h = run_block(block, h, mode);
    if (i + 1 < encoder_.size()) {
      skips.push_back(h);
      h = maxpool2d(h, 2, 2);
    }
  }
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const Var<Scalar> up = ups_[j](h);
    const Var<Scalar>& skip = skips[skips.size() - 1 - j];
    if (up.shape() != skip.shape()) {
      throw ShapeError("model: decoder stage " + std::to_string(j) + " upsampled " +
                       up.shape().str() + " does not match skip " + skip.shape().str());
    }
    h = config_.skip == SkipMode::Sum ? add(up, skip) : concat_channels(up, skip);
    for (auto& block : decoder_[j]) h = run_block(block, h, mode);
  }
  return sigmoid(head_(h));
}

template <typename Scalar>
Tensor<Scalar> Model<Scalar>::predict(const Tensor<Scalar>& x) {
  return forward(Var<Scalar>(x, false), Mode::Eval).value();
}

template <typename Scalar>
std::vector<Parameter<Scalar>> Model<Scalar>::parameters() {
  std::vector<Parameter<Scalar>> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    for (std::size_t b = 0; b < encoder_[i].size(); ++b)
      collect_block(out, stage_name("enc", i, b), encoder_[i][b]);
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    collect_conv(out, "up" + std::to_string(j), ups_[j]);
    for (std::size_t b = 0; b < decoder_[j].size(); ++b)
      collect_block(out, stage_name("dec", j, b), decoder_[j][b]);
  }
  collect_conv(out, "head", head_);
  return out;
}

template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>*>> Model<Scalar>::buffers() {
  std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    for (std::size_t b = 0; b < encoder_[i].size(); ++b)
      collect_block_buffers(out, stage_name("enc", i, b), encoder_[i][b]);
  for (std::size_t j = 0; j < decoder_.size(); ++j)
    for (std::size_t b = 0; b < decoder_[j].size(); ++b)
      collect_block_buffers(out, stage_name("dec", j, b), decoder_[j][b]);
  return out;
}

template <typename Scalar>
long long Model<Scalar>::param_count() {
  long long total = 0;
  for (const auto& p : parameters()) total += static_cast<long long>(p.var.value().size());
  return total;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for (auto& p : parameters()) p.var.zero_grad();
}

template struct ConvLayer<float>;
template struct ConvLayer<double>;
template struct ResAttnBlock<float>;
template struct ResAttnBlock<double>;
template struct DoubleConvBlock<float>;
template struct DoubleConvBlock<double>;
template Var<float> resattn_forward(const Var<float>&, ResAttnBlock<float>&, Mode);
template Var<double> resattn_forward(const Var<double>&, ResAttnBlock<double>&, Mode);
template class Model<float>;
template class Model<double>;

}  // namespace resseg
