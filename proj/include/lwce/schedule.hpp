#pragma once

// Weight for the low-resource language at each training step: constant,
// linear progression after a warm-up step, or adapted from the ratio of
// per-batch average losses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lwce {

enum class WeightBranch {
  Constant,
  BeforeTMin,
  Progressing,
  BelowThreshold,
  RatioDominates,
  AlphaFloor,
  Capped,
  Degenerate,  // high-resource loss vanished; no ratio is formed
};

inline const char* to_string(WeightBranch b) {
  switch (b) {
    case WeightBranch::Constant: return "constant";
    case WeightBranch::BeforeTMin: return "before_t_min";
    case WeightBranch::Progressing: return "progressing";
    case WeightBranch::BelowThreshold: return "below_threshold";
    case WeightBranch::RatioDominates: return "ratio_dominates";
    case WeightBranch::AlphaFloor: return "alpha_floor";
    case WeightBranch::Capped: return "capped";
    case WeightBranch::Degenerate: return "degenerate";
  }
  return "?";
}

struct WeightDecision {
  double value = 1.0;
  WeightBranch branch = WeightBranch::Constant;
};

struct LinearSchedule {
  double alpha_ini = 1.0;
  double alpha_fin = 1.0;
  std::int64_t t_min = 0;
  std::int64_t t_total = 1;

  void validate() const {
    if (!(alpha_ini >= 1.0)) throw std::invalid_argument("linear schedule: alpha_ini must be >= 1");
    if (!(alpha_fin >= alpha_ini)) {
      throw std::invalid_argument("linear schedule: alpha_fin must be >= alpha_ini");
    }
    if (t_min < 0) throw std::invalid_argument("linear schedule: t_min must be >= 0");
    if (t_min >= t_total) throw std::invalid_argument("linear schedule: t_min must be < t_total");
  }
};

struct DynamicSchedule {
  double alpha = 1.0;
  double weight_cap = 10.0;

  void validate() const {
    if (!(alpha >= 1.0)) throw std::invalid_argument("dynamic schedule: alpha must be >= 1");
    if (!(weight_cap > alpha)) {
      throw std::invalid_argument("dynamic schedule: weight_cap must exceed alpha");
    }
  }
};

/// Below this average high-resource loss the ratio is not formed.
inline constexpr double kDegenerateHighLoss = 1e-9;

inline WeightDecision constant_weight(double w) {
  if (!(w >= 1.0) || !std::isfinite(w)) {
    throw std::invalid_argument("constant weight must be >= 1, got " + std::to_string(w));
  }
  return {w, WeightBranch::Constant};
}

inline WeightDecision linear_weight(const LinearSchedule& s, std::int64_t t) {
  s.validate();
  if (t < 0) throw std::invalid_argument("linear_weight: negative step");
  if (t > s.t_total) {
    throw std::out_of_range("linear_weight: step " + std::to_string(t) + " exceeds t_total " +
                            std::to_string(s.t_total));
  }
  if (t < s.t_min) return {1.0, WeightBranch::BeforeTMin};
  const double progress =
      static_cast<double>(t - s.t_min) / static_cast<double>(s.t_total - s.t_min);
  return {s.alpha_ini + (s.alpha_fin - s.alpha_ini) * progress, WeightBranch::Progressing};
}

inline WeightDecision dynamic_weight(const DynamicSchedule& s, double avg_low, double avg_high) {
  s.validate();
  if (!(avg_low >= 0.0) || !(avg_high >= 0.0) || !std::isfinite(avg_low) ||
      !std::isfinite(avg_high)) {
    throw std::invalid_argument("dynamic_weight: average losses must be finite and >= 0");
  }
  if (avg_high < kDegenerateHighLoss) return {1.0, WeightBranch::Degenerate};
  const double ratio = avg_low / avg_high;
  if (ratio * s.alpha < 1.0) return {1.0, WeightBranch::BelowThreshold};
  const double w = std::max(s.alpha, ratio);
  if (w > s.weight_cap) return {s.weight_cap, WeightBranch::Capped};
  return {w, ratio >= s.alpha ? WeightBranch::RatioDominates : WeightBranch::AlphaFloor};
}

enum class WeightingMode { None, Constant, Linear, Dynamic };

inline const char* to_string(WeightingMode m) {
  switch (m) {
    case WeightingMode::None: return "none";
    case WeightingMode::Constant: return "constant";
    case WeightingMode::Linear: return "linear";
    case WeightingMode::Dynamic: return "dynamic";
  }
  return "?";
}

inline WeightingMode weighting_mode_from_string(const std::string& s) {
  if (s == "none") return WeightingMode::None;
  if (s == "constant") return WeightingMode::Constant;
  if (s == "linear") return WeightingMode::Linear;
  if (s == "dynamic") return WeightingMode::Dynamic;
  throw std::invalid_argument("unknown weighting mode: " + s);
}

/// The scheduler a training run consults once per step that contains a
/// low-resource sentence.
struct WeightScheduler {
  WeightingMode mode = WeightingMode::None;
  double constant = 1.0;
  LinearSchedule linear;
  DynamicSchedule dynamic;

  void validate() const {
    switch (mode) {
      case WeightingMode::None: break;
      case WeightingMode::Constant: constant_weight(constant); break;
      case WeightingMode::Linear: linear.validate(); break;
      case WeightingMode::Dynamic: dynamic.validate(); break;
    }
  }

  WeightDecision decide(std::int64_t step, double avg_low, double avg_high) const {
    switch (mode) {
      case WeightingMode::None: return {1.0, WeightBranch::Constant};
      case WeightingMode::Constant: return constant_weight(constant);
      case WeightingMode::Linear: return linear_weight(linear, step);
      case WeightingMode::Dynamic: return dynamic_weight(dynamic, avg_low, avg_high);
    }
    return {1.0, WeightBranch::Constant};
  }
};

}  // namespace lwce
