#pragma once

// Helpers shared by the test suites.

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "s2t/numerics/gradcheck.hpp"
#include "s2t/numerics/layers.hpp"

namespace s2t::test_support {

inline Array random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Array a = Array::matrix(rows, cols);
  for (auto& v : a.data()) v = scale * rng.normal();
  return a;
}

// Scalar probe: sum(out * w) for a fixed random w, so every output entry
// contributes a distinct weight to the checked gradient.
inline ad::Var probe(const ad::Var& out, std::uint64_t seed) {
  Rng rng(seed);
  return ad::dot_const(out, random_matrix(rng, out.rows(), out.cols()));
}

inline constexpr double kTol = 1e-4;
inline constexpr double kStep = 1e-5;

/// Gradient-check a parameterised forward function with respect to its
/// input and every listed parameter, at `points` random inputs.
template <typename Forward>
void check_gradients(const std::vector<Parameter*>& params, Forward forward, std::size_t rows, std::size_t cols,
                     std::uint64_t seed, int points = 10, bool check_input = true) {
  Rng rng(seed);
  for (int point = 0; point < points; ++point) {
    const Array x = random_matrix(rng, rows, cols);
    const std::uint64_t probe_seed = seed * 31 + point;
    if (check_input) {
      EXPECT_LT(grad_check([&](const ad::Var& v) { return probe(forward(v), probe_seed); }, x, kStep), kTol);
    }
    for (Parameter* p : params) {
      for (auto& v : p->value.data()) v += 0.05 * rng.normal();
      const double err = grad_check([&]() { return probe(forward(ad::constant(x)), probe_seed); }, *p, kStep);
      EXPECT_LT(err, kTol) << p->name;
    }
  }
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("s2t_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace s2t::test_support
