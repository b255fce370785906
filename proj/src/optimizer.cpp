#include "resseg/optimizer.hpp"

#include <cmath>
#include <random>

namespace resseg {

double trust_ratio(double weight_norm, double update_norm) {
  if (weight_norm == 0.0 || update_norm == 0.0) return 1.0;
  return weight_norm / update_norm;
}

template <typename Scalar>
void lamb_step(std::span<Parameter<Scalar>> params, LambState<Scalar>& state) {
  for (const auto& p : params) {
    if (p.var.has_grad() && !p.var.grad().all_finite()) {
      throw NumericError("lamb_step: non-finite gradient in " + p.name);
    }
  }

  const LambHyper& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);

  std::vector<double> update;
  for (auto& p : params) {
    Tensor<Scalar>& w = p.var.mutable_value();
    auto [it, fresh] = state.moments.try_emplace(p.name);
    auto& mom = it->second;
    if (fresh || mom.m.shape() != w.shape()) {
      mom.m = Tensor<Scalar>(w.shape());
      mom.v = Tensor<Scalar>(w.shape());
    }
    const bool has_grad = p.var.has_grad();
    update.assign(w.size(), 0.0);
    double w_sq = 0, u_sq = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? static_cast<double>(p.var.grad()[i]) : 0.0;
      const double m = h.beta1 * mom.m[i] + (1.0 - h.beta1) * g;
      const double v = h.beta2 * mom.v[i] + (1.0 - h.beta2) * g * g;
      mom.m[i] = static_cast<Scalar>(m);
      mom.v[i] = static_cast<Scalar>(v);
      const double u = (m / c1) / (std::sqrt(v / c2) + h.epsilon) + h.weight_decay * w[i];
      update[i] = u;
      w_sq += static_cast<double>(w[i]) * w[i];
      u_sq += u * u;
    }
    const double r = p.layer_adaptive ? trust_ratio(std::sqrt(w_sq), std::sqrt(u_sq)) : 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<Scalar>(w[i] - h.lr * r * update[i]);
    }
  }
}

template <typename Scalar>
Tensor<Scalar> xavier_init(Shape shape, int fan_in, int fan_out, std::uint64_t seed) {
  if (fan_in <= 0 || fan_out <= 0) throw ConfigError("xavier_init: fans must be positive");
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor<Scalar> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  return t;
}

template void lamb_step(std::span<Parameter<float>>, LambState<float>&);
template void lamb_step(std::span<Parameter<double>>, LambState<double>&);
template Tensor<float> xavier_init(Shape, int, int, std::uint64_t);
template Tensor<double> xavier_init(Shape, int, int, std::uint64_t);

}  // namespace resseg
