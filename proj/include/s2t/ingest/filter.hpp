#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace s2t::ingest {

/// Second-order section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Digital Butterworth low-pass (even order) via the prewarped bilinear
/// transform, as a cascade of biquads.
inline std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double sample_hz) {
  if (order < 2 || order % 2 != 0) throw std::invalid_argument("butterworth_lowpass: order must be even and >= 2");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_hz / 2.0)) {
    throw std::invalid_argument("butterworth_lowpass: cutoff must lie in (0, Nyquist)");
  }
  const double k = 2.0 * sample_hz;
  const double wc = k * std::tan(std::numbers::pi * cutoff_hz / sample_hz);
  std::vector<Biquad> sections;
  for (int i = 0; i < order / 2; ++i) {
    // Analog prototype pole in the upper-left quadrant; its conjugate pairs with it.
    const double theta = std::numbers::pi * (2.0 * i + order + 1) / (2.0 * order);
    const double c = -2.0 * std::cos(theta) * wc;
    const double a0 = k * k + c * k + wc * wc;
    const double g = wc * wc / a0;
    sections.push_back({g, 2.0 * g, g, (2.0 * wc * wc - 2.0 * k * k) / a0, (k * k - c * k + wc * wc) / a0});
  }
  return sections;
}

namespace detail {

// Transposed direct form II, starting from state (z1, z2).
inline void run_biquad(const Biquad& s, std::vector<double>& x, double z1, double z2) {
  for (double& v : x) {
    const double y = s.b0 * v + z1;
    z1 = s.b1 * v - s.a1 * y + z2;
    z2 = s.b2 * v - s.a2 * y;
    v = y;
  }
}

// Steady-state section states for a constant input of 1, cascaded.
inline std::vector<std::array<double, 2>> steady_states(const std::vector<Biquad>& sos) {
  std::vector<std::array<double, 2>> zi;
  double level = 1.0;
  for (const Biquad& s : sos) {
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = gain * level;
    const double z2 = s.b2 * level - s.a2 * y;
    const double z1 = s.b1 * level - s.a1 * y + z2;
    zi.push_back({z1, z2});
    level = y;
  }
  return zi;
}

inline void filter_with_initial(const std::vector<Biquad>& sos, const std::vector<std::array<double, 2>>& zi,
                                std::vector<double>& x) {
  const double x0 = x.front();
  for (std::size_t i = 0; i < sos.size(); ++i) run_biquad(sos[i], x, zi[i][0] * x0, zi[i][1] * x0);
}

}  // namespace detail

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions.
inline std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  if (x.empty()) return {};
  const std::size_t padlen = std::min<std::size_t>(3 * (2 * sos.size() + 1), x.size() - 1);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  const auto zi = detail::steady_states(sos);
  detail::filter_with_initial(sos, zi, ext);
  std::reverse(ext.begin(), ext.end());
  detail::filter_with_initial(sos, zi, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen), ext.end() - static_cast<std::ptrdiff_t>(padlen)};
}

}  // namespace s2t::ingest
