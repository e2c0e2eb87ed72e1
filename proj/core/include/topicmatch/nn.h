#pragma once

#include <string>
#include <utility>
#include <vector>

#include "topicmatch/autograd.h"
#include "topicmatch/rng.h"

namespace topicmatch {

enum class Mode { kTrain, kEval };

// Flat, ordered views over a model's tensors. Names are stable and used as
// checkpoint keys.
using NamedParameters = std::vector<std::pair<std::string, ag::Parameter*>>;
using NamedBuffers = std::vector<std::pair<std::string, ag::Matrix*>>;

// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)).
ag::Matrix fan_in_uniform(Rng& rng, ag::Index rows, ag::Index cols, ag::Index fan_in,
                          double gain = 1.0);

// y = x W + b, with W stored (in x out).
struct Linear {
  ag::Parameter weight;
  ag::Parameter bias;

  Linear() = default;
  Linear(Rng& rng, int in, int out, double gain = 1.0);

  int in_features() const { return static_cast<int>(weight.value().rows()); }
  int out_features() const { return static_cast<int>(weight.value().cols()); }
  ag::Var operator()(const ag::Var& x) const;
  void set_identity();
  void set_zero();
  void collect(const std::string& prefix, NamedParameters& out);
};

// Per-row normalization over the feature axis with learned gain and shift.
struct LayerNorm {
  ag::Parameter gain;
  ag::Parameter shift;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  ag::Var operator()(const ag::Var& x) const;
  void collect(const std::string& prefix, NamedParameters& out);
};

// Two-layer perceptron with GELU in between.
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(Rng& rng, int in, int hidden, int out, double out_gain = 1.0);

  ag::Var operator()(const ag::Var& x) const { return fc2(ag::gelu(fc1(x))); }
  void set_zero();
  void collect(const std::string& prefix, NamedParameters& out);
};

std::size_t parameter_count(const NamedParameters& params);

}  // namespace topicmatch
