#include "topicmatch/nn.h"

#include <cmath>

namespace topicmatch {

ag::Matrix fan_in_uniform(Rng& rng, ag::Index rows, ag::Index cols, ag::Index fan_in,
                          double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  ag::Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Linear::Linear(Rng& rng, int in, int out, double gain)
    : weight(fan_in_uniform(rng, in, out, in, gain)), bias(ag::Matrix::Zero(1, out)) {}

ag::Var Linear::operator()(const ag::Var& x) const {
  return ag::add_row(ag::matmul(x, weight.var()), bias.var());
}

void Linear::set_identity() {
  weight.value().setIdentity();
  bias.value().setZero();
}

void Linear::set_zero() {
  weight.value().setZero();
  bias.value().setZero();
}

void Linear::collect(const std::string& prefix, NamedParameters& out) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

LayerNorm::LayerNorm(int dim)
    : gain(ag::Matrix::Ones(1, dim)), shift(ag::Matrix::Zero(1, dim)) {}

ag::Var LayerNorm::operator()(const ag::Var& x) const {
  return ag::add_row(ag::mul_row(ag::normalize_rows(x, 1e-5), gain.var()), shift.var());
}

void LayerNorm::collect(const std::string& prefix, NamedParameters& out) {
  out.emplace_back(prefix + ".gain", &gain);
  out.emplace_back(prefix + ".shift", &shift);
}

Mlp::Mlp(Rng& rng, int in, int hidden, int out, double out_gain)
    : fc1(rng, in, hidden), fc2(rng, hidden, out, out_gain) {}

void Mlp::set_zero() {
  fc1.set_zero();
  fc2.set_zero();
}

void Mlp::collect(const std::string& prefix, NamedParameters& out) {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

std::size_t parameter_count(const NamedParameters& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += static_cast<std::size_t>(p->value().size());
  return n;
}

}  // namespace topicmatch
