#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>

namespace lwce {

/// Goertzel power |X(f)|^2 of `x` at an arbitrary (not necessarily bin-centred)
/// frequency.
inline double goertzel_power(std::span<const double> x, double freq_hz, int sample_rate) {
  const double w = 2.0 * std::numbers::pi * freq_hz / static_cast<double>(sample_rate);
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    const double s0 = v + coeff * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return std::max(0.0, s1 * s1 + s2 * s2 - coeff * s1 * s2);
}

/// Frequency in [lo, hi] (scanned every `step` Hz) with the largest Goertzel
/// power over the whole of `x`.
inline double dominant_frequency(std::span<const double> x, int sample_rate, double lo = 50.0,
                                 double hi = 4000.0, double step = 1.0) {
  if (x.empty()) throw std::invalid_argument("dominant_frequency: empty signal");
  double best_f = lo;
  double best_p = -1.0;
  for (double f = lo; f <= hi + 1e-9; f += step) {
    const double p = goertzel_power(x, f, sample_rate);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

}  // namespace lwce
