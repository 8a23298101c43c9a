#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2t/numerics/array.hpp"
#include "s2t/numerics/rng.hpp"

namespace s2t {

/// A named trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  std::string name;
  Array value;
  Array gradient;
  bool trainable = true;
  Array adam_m;
  Array adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Array v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(value.shape(), 0.0),
        trainable(train),
        adam_m(value.shape(), 0.0),
        adam_v(value.shape(), 0.0) {}

  void zero_grad() { gradient.fill(0.0); }

  /// Replace value and reset optimizer state; used when restoring weights.
  void assign(const Array& v) {
    if (!v.same_shape(value)) {
      throw std::invalid_argument("parameter " + name + ": shape " + shape_string(v.shape()) +
                                  " does not match " + shape_string(value.shape()));
    }
    value = v;
  }
};

/// Glorot-uniform matrix: entries in +/- sqrt(6 / (fan_in + fan_out)).
inline Array glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Array out = Array::matrix(fan_in, fan_out);
  for (auto& v : out.data()) v = rng.uniform(-limit, limit);
  return out;
}

struct AdamSettings {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. Increments step_count and clears the gradient.
inline void adam_step(Parameter& p, const AdamSettings& s) {
  if (!p.trainable) throw std::logic_error("adam_step: parameter " + p.name + " is not trainable");
  if (!p.gradient.same_shape(p.value) || !p.adam_m.same_shape(p.value) || !p.adam_v.same_shape(p.value)) {
    throw std::invalid_argument("adam_step: shape mismatch in parameter " + p.name);
  }
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  auto value = p.value.data();
  auto grad = p.gradient.data();
  auto m = p.adam_m.data();
  auto v = p.adam_v.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    value[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    grad[i] = 0.0;
  }
}

/// Round every entry to the nearest float; checkpoints persist 32-bit values.
inline void round_to_float(Array& a) {
  for (auto& v : a.data()) v = static_cast<double>(static_cast<float>(v));
}

/// FNV-1a over the raw bytes of a parameter set's values.
inline std::uint64_t hash_parameters(const std::vector<const Parameter*>& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const Parameter* p : params) {
    h = fnv1a(p->name, h);
    for (double v : p->value.data()) {
      char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      h = fnv1a(std::string_view(bytes, sizeof(double)), h);
    }
  }
  return h;
}

inline std::uint64_t hash_parameters(const std::vector<Parameter*>& params) {
  return hash_parameters(std::vector<const Parameter*>(params.begin(), params.end()));
}

}  // namespace s2t
