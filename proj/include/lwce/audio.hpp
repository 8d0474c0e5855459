#pragma once

// Deterministic waveform augmentations: gain, additive Gaussian noise,
// overlap-add time stretching and pitch shifting, and their composition.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lwce/common.hpp"
#include "lwce/wav.hpp"

namespace lwce {

namespace detail {

inline void require_valid(const AudioClip& clip, const char* op) {
  if (clip.sample_rate <= 0) throw std::invalid_argument(std::string(op) + ": sample rate must be positive");
}

inline double clip_unit(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace detail

inline AudioClip apply_gain(const AudioClip& clip, double gain_db) {
  detail::require_valid(clip, "apply_gain");
  if (!std::isfinite(gain_db)) throw std::invalid_argument("apply_gain: non-finite gain");
  const double g = std::pow(10.0, gain_db / 20.0);
  AudioClip out = clip;
  for (double& s : out.samples) s = detail::clip_unit(s * g);
  return out;
}

inline AudioClip add_gaussian_noise(const AudioClip& clip, double sigma, std::uint64_t seed) {
  detail::require_valid(clip, "add_gaussian_noise");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
  }
  AudioClip out = clip;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& s : out.samples) s = detail::clip_unit(s + normal(rng));
  return out;
}

/// Analysis geometry of the overlap-add stretcher.
struct StretchGeometry {
  std::size_t frame;         // Hann window length (25 ms)
  std::size_t hop;           // analysis hop (10 ms)
  std::size_t search;        // max alignment offset, each side (5 ms)

  static StretchGeometry for_rate(int sample_rate) {
    const auto ms = [&](double v) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(v * sample_rate / 1000.0)));
    };
    return {ms(25.0), ms(10.0), ms(5.0)};
  }
};

/// Changes duration by 1/rate while keeping pitch. Windowed overlap-add:
/// frames taken every `hop` samples of input are laid down every hop/rate
/// samples of output; each frame may slide up to `search` samples to best
/// continue the waveform already written (waveform-similarity alignment).
inline AudioClip time_stretch(const AudioClip& clip, double rate) {
  detail::require_valid(clip, "time_stretch");
  if (!(rate >= 0.5 && rate <= 2.0)) {
    throw std::invalid_argument("time_stretch: rate must lie in [0.5, 2.0], got " + std::to_string(rate));
  }
  const auto g = StretchGeometry::for_rate(clip.sample_rate);
  const auto& x = clip.samples;
  const auto n_in = static_cast<std::int64_t>(x.size());
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) / rate));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(n_out, 0.0);
  if (n_out == 0) return out;

  const std::size_t n = g.frame;
  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) /
                                     static_cast<double>(n));
  }
  auto at = [&](std::int64_t i) { return (i >= 0 && i < n_in) ? x[static_cast<std::size_t>(i)] : 0.0; };

  const double syn_hop = static_cast<double>(g.hop) / rate;
  std::vector<double> norm(n_out, 0.0);
  const auto search = static_cast<std::int64_t>(g.search);
  std::int64_t prev_ana = 0;
  std::int64_t prev_syn = 0;
  for (std::size_t k = 0;; ++k) {
    const auto syn = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * syn_hop));
    if (syn >= static_cast<std::int64_t>(n_out)) break;
    const auto nominal = static_cast<std::int64_t>(k * g.hop);
    std::int64_t ana = nominal;
    if (k > 0) {
      // Natural continuation of the previously placed frame.
      const std::int64_t cont = prev_ana + (syn - prev_syn);
      double best = -2.0;
      for (std::int64_t d = 0; d <= 2 * search; ++d) {
        // Visit offsets 0, -1, +1, -2, +2, ... so ties keep the smaller shift.
        const std::int64_t delta = (d % 2 == 0) ? d / 2 : -(d + 1) / 2;
        const std::int64_t cand = nominal + delta;
        if (cand < 0) continue;
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < n; i += 2) {
          const double a = at(cand + static_cast<std::int64_t>(i));
          const double b = at(cont + static_cast<std::int64_t>(i));
          xy += a * b;
          xx += a * a;
          yy += b * b;
        }
        const double denom = std::sqrt(xx * yy);
        const double corr = denom > 1e-12 ? xy / denom : 0.0;
        if (corr > best + 1e-9) {
          best = corr;
          ana = cand;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto o = static_cast<std::size_t>(syn) + i;
      if (o >= n_out) break;
      out.samples[o] += window[i] * at(ana + static_cast<std::int64_t>(i));
      norm[o] += window[i];
    }
    prev_ana = ana;
    prev_syn = syn;
  }
  for (std::size_t i = 0; i < n_out; ++i) {
    out.samples[i] = norm[i] > 0.0 ? detail::clip_unit(out.samples[i] / norm[i]) : 0.0;
  }
  return out;
}

/// Linear-interpolation resampling that plays `clip` `factor` times faster.
inline AudioClip resample_linear(const AudioClip& clip, double factor) {
  detail::require_valid(clip, "resample_linear");
  if (!(factor > 0.0)) throw std::invalid_argument("resample_linear: factor must be positive");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  const auto& x = clip.samples;
  if (x.empty()) return out;
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(x.size() - 1) / factor)) + 1;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto j = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(j);
    const double a = x[j];
    const double b = j + 1 < x.size() ? x[j + 1] : a;
    out.samples[i] = a + (b - a) * frac;
  }
  return out;
}

/// Shifts pitch by whole semitones, keeping duration: resample by
/// 2^(semitones/12), then stretch back by the inverse rate.
inline AudioClip pitch_shift(const AudioClip& clip, int semitones) {
  detail::require_valid(clip, "pitch_shift");
  if (semitones < -12 || semitones > 12) {
    throw std::invalid_argument("pitch_shift: semitones must lie in [-12, 12], got " + std::to_string(semitones));
  }
  if (semitones == 0) return clip;
  const double factor = std::pow(2.0, semitones / 12.0);
  return time_stretch(resample_linear(clip, factor), 1.0 / factor);
}

struct AugmentSpec {
  std::pair<double, double> stretch_range{0.9, 1.1};
  std::pair<double, double> gain_range_db{-6.0, 6.0};
  std::pair<int, int> pitch_range_semitones{-2, 2};
  std::pair<double, double> noise_sigma_range{0.001, 0.01};
  std::uint64_t seed = 0;

  void validate() const {
    auto ordered = [](auto r, const char* name) {
      if (!(r.first <= r.second)) throw std::invalid_argument(std::string("augment spec: ") + name + " min > max");
    };
    ordered(stretch_range, "stretch_range");
    ordered(gain_range_db, "gain_range_db");
    ordered(pitch_range_semitones, "pitch_range_semitones");
    ordered(noise_sigma_range, "noise_sigma_range");
    if (!(stretch_range.first > 0.0)) throw std::invalid_argument("augment spec: stretch rates must be positive");
    if (noise_sigma_range.first < 0.0) throw std::invalid_argument("augment spec: noise sigma must be >= 0");
  }
};

/// Parameters drawn for one clip.
struct AugmentDraw {
  double stretch_rate = 1.0;
  int pitch_semitones = 0;
  double gain_db = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

inline AugmentDraw draw_augment(const AugmentSpec& spec, std::uint64_t sample_seed) {
  spec.validate();
  std::mt19937_64 rng(sample_seed);
  auto uniform = [&](std::pair<double, double> r) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return r.first + (r.second - r.first) * u;
  };
  AugmentDraw d;
  d.stretch_rate = uniform(spec.stretch_range);
  d.pitch_semitones = std::uniform_int_distribution<int>(spec.pitch_range_semitones.first,
                                                         spec.pitch_range_semitones.second)(rng);
  d.gain_db = uniform(spec.gain_range_db);
  d.noise_sigma = uniform(spec.noise_sigma_range);
  d.noise_seed = rng();
  return d;
}

/// stretch -> pitch -> gain -> noise, one parameter per transform drawn from
/// the `AugmentSpec` ranges with a generator seeded by `sample_seed`.
inline AudioClip augment_clip(const AudioClip& clip, const AugmentSpec& spec, std::uint64_t sample_seed) {
  const AugmentDraw d = draw_augment(spec, sample_seed);
  AudioClip out = time_stretch(clip, d.stretch_rate);
  out = pitch_shift(out, d.pitch_semitones);
  out = apply_gain(out, d.gain_db);
  return add_gaussian_noise(out, d.noise_sigma, d.noise_seed);
}

}  // namespace lwce
