#pragma once

// Language-conditioned frame classifier: a (2C+1)-frame context window plus a
// language one-hot feed one tanh layer and a linear output layer. Gradients
// are derived by hand.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lwce/common.hpp"
#include "lwce/schedule.hpp"
#include "lwce/wce_loss.hpp"

namespace lwce {

struct ModelDims {
  int n_langs = 6;
  int context = 2;
  int hidden = 64;
  int vocab = 8;
  int feat_dim = 8;

  int context_dim() const { return feat_dim * (2 * context + 1); }
  int input_dim() const { return context_dim() + n_langs; }

  void validate() const {
    if (n_langs < 1 || context < 0 || hidden < 1 || vocab < 2 || feat_dim < 1) {
      throw std::invalid_argument("invalid model dimensions");
    }
  }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline void to_json(nlohmann::json& j, const ModelDims& d) {
  j = nlohmann::json{{"n_langs", d.n_langs}, {"context", d.context}, {"hidden", d.hidden},
                     {"vocab", d.vocab}, {"feat_dim", d.feat_dim}};
}

inline void from_json(const nlohmann::json& j, ModelDims& d) {
  d.n_langs = j.at("n_langs").get<int>();
  d.context = j.at("context").get<int>();
  d.hidden = j.at("hidden").get<int>();
  d.vocab = j.at("vocab").get<int>();
  d.feat_dim = j.at("feat_dim").get<int>();
}

/// Parameters; the same shape doubles as a gradient accumulator.
struct AcousticModel {
  ModelDims dims;
  Matrix w1;               // [input_dim x hidden]
  std::vector<double> b1;  // [hidden]
  Matrix w2;               // [hidden x vocab]
  std::vector<double> b2;  // [vocab]

  static AcousticModel zeros(const ModelDims& d) {
    d.validate();
    AcousticModel m;
    m.dims = d;
    m.w1 = Matrix(static_cast<std::size_t>(d.input_dim()), static_cast<std::size_t>(d.hidden));
    m.b1.assign(static_cast<std::size_t>(d.hidden), 0.0);
    m.w2 = Matrix(static_cast<std::size_t>(d.hidden), static_cast<std::size_t>(d.vocab));
    m.b2.assign(static_cast<std::size_t>(d.vocab), 0.0);
    return m;
  }

  /// Visits every parameter tensor as a flat span, in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(std::span<double>(w1.data()));
    f(std::span<double>(b1));
    f(std::span<double>(w2.data()));
    f(std::span<double>(b2));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(std::span<const double>(w1.data()));
    f(std::span<const double>(b1));
    f(std::span<const double>(w2.data()));
    f(std::span<const double>(b2));
  }

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  friend bool operator==(const AcousticModel&, const AcousticModel&) = default;
};

/// Glorot-uniform weights, zero biases.
inline AcousticModel init_model(const ModelDims& dims, std::uint64_t seed) {
  AcousticModel m = AcousticModel::zeros(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&](Matrix& w) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& v : w.data()) v = u(rng);
  };
  fill(m.w1);
  fill(m.w2);
  return m;
}

/// A featurized utterance with per-frame targets.
struct TrainExample {
  Matrix features;          // [frames x feat_dim]
  std::vector<int> labels;  // per frame
  int language = 0;
  std::string id;
  std::string text;
};

/// Hidden activations kept for backpropagation.
struct ForwardCache {
  Matrix hidden;  // [frames x H], post-tanh
  Matrix logits;  // [frames x V]
};

namespace detail {

inline void check_forward_inputs(const AcousticModel& m, const Matrix& features, int language) {
  if (features.rows() < 1) throw std::invalid_argument("forward: no frames");
  if (static_cast<int>(features.cols()) != m.dims.feat_dim) {
    throw std::invalid_argument("forward: feature dimension " + std::to_string(features.cols()) +
                                " does not match model " + std::to_string(m.dims.feat_dim));
  }
  if (language < 0 || language >= m.dims.n_langs) {
    throw std::invalid_argument("forward: unknown language id " + std::to_string(language));
  }
}

/// Row of `features` feeding context slot `c` of frame `t`; edges replicate.
inline std::size_t context_row(std::size_t t, int c, std::size_t frames) {
  const auto r = static_cast<std::int64_t>(t) + c;
  return static_cast<std::size_t>(std::clamp<std::int64_t>(r, 0, static_cast<std::int64_t>(frames) - 1));
}

}  // namespace detail

inline ForwardCache forward_cached(const AcousticModel& m, const Matrix& features, int language) {
  detail::check_forward_inputs(m, features, language);
  const std::size_t frames = features.rows();
  const auto H = static_cast<std::size_t>(m.dims.hidden);
  const auto V = static_cast<std::size_t>(m.dims.vocab);
  const auto D = static_cast<std::size_t>(m.dims.feat_dim);
  const int C = m.dims.context;
  ForwardCache cache{Matrix(frames, H), Matrix(frames, V)};
  const double* lang_row = m.w1.row(static_cast<std::size_t>(m.dims.context_dim() + language));
  for (std::size_t t = 0; t < frames; ++t) {
    double* h = cache.hidden.row(t);
    for (std::size_t k = 0; k < H; ++k) h[k] = m.b1[k] + lang_row[k];
    for (int c = -C; c <= C; ++c) {
      const double* x = features.row(detail::context_row(t, c, frames));
      const std::size_t base = static_cast<std::size_t>(c + C) * D;
      for (std::size_t i = 0; i < D; ++i) {
        const double xi = x[i];
        const double* w = m.w1.row(base + i);
        for (std::size_t k = 0; k < H; ++k) h[k] += xi * w[k];
      }
    }
    for (std::size_t k = 0; k < H; ++k) h[k] = std::tanh(h[k]);
    double* z = cache.logits.row(t);
    for (std::size_t v = 0; v < V; ++v) z[v] = m.b2[v];
    for (std::size_t k = 0; k < H; ++k) {
      const double hk = h[k];
      const double* w = m.w2.row(k);
      for (std::size_t v = 0; v < V; ++v) z[v] += hk * w[v];
    }
  }
  return cache;
}

inline Matrix forward(const AcousticModel& m, const Matrix& features, int language) {
  return forward_cached(m, features, language).logits;
}

/// Accumulates into `grad` the parameter gradient given d(loss)/d(logits).
inline void backward(const AcousticModel& m, const Matrix& features, int language, const ForwardCache& cache,
                     const Matrix& dlogits, AcousticModel& grad) {
  const std::size_t frames = features.rows();
  const auto H = static_cast<std::size_t>(m.dims.hidden);
  const auto V = static_cast<std::size_t>(m.dims.vocab);
  const auto D = static_cast<std::size_t>(m.dims.feat_dim);
  const int C = m.dims.context;
  std::vector<double> dpre(H);
  double* glang = grad.w1.row(static_cast<std::size_t>(m.dims.context_dim() + language));
  for (std::size_t t = 0; t < frames; ++t) {
    const double* dz = dlogits.row(t);
    bool any = false;
    for (std::size_t v = 0; v < V; ++v) any = any || dz[v] != 0.0;
    if (!any) continue;
    const double* h = cache.hidden.row(t);
    for (std::size_t v = 0; v < V; ++v) grad.b2[v] += dz[v];
    for (std::size_t k = 0; k < H; ++k) {
      double* gw = grad.w2.row(k);
      const double* w = m.w2.row(k);
      double acc = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        gw[v] += h[k] * dz[v];
        acc += w[v] * dz[v];
      }
      dpre[k] = acc * (1.0 - h[k] * h[k]);
    }
    for (std::size_t k = 0; k < H; ++k) {
      grad.b1[k] += dpre[k];
      glang[k] += dpre[k];
    }
    for (int c = -C; c <= C; ++c) {
      const double* x = features.row(detail::context_row(t, c, frames));
      const std::size_t base = static_cast<std::size_t>(c + C) * D;
      for (std::size_t i = 0; i < D; ++i) {
        const double xi = x[i];
        double* gw = grad.w1.row(base + i);
        for (std::size_t k = 0; k < H; ++k) gw[k] += xi * dpre[k];
      }
    }
  }
}

/// Loss and parameter gradient of the language-weighted batch loss.
struct BatchGradient {
  BatchLoss loss;
  AcousticModel grad;
};

inline BatchGradient batch_gradient(const AcousticModel& m, std::span<const TrainExample* const> batch,
                                    const LanguageWeights& weights, Reduction mode = Reduction::MeanTokens) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  std::vector<ForwardCache> caches;
  std::vector<SentenceSample> samples;
  caches.reserve(batch.size());
  samples.reserve(batch.size());
  for (const TrainExample* ex : batch) {
    caches.push_back(forward_cached(m, ex->features, ex->language));
    samples.push_back({caches.back().logits, ex->labels, ex->language});
  }
  BatchGradient out{weighted_batch_loss(samples, weights, mode), AcousticModel::zeros(m.dims)};
  const auto dlogits = loss_gradient(samples, weights, mode);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    backward(m, batch[j]->features, batch[j]->language, caches[j], dlogits[j], out.grad);
  }
  return out;
}

/// What one optimizer step did.
struct StepRecord {
  BatchLoss loss;
  WeightDecision decision;
  bool low_present = false;
};

/// Weight for the low-resource language given the unweighted per-sentence
/// losses of this batch. Batches without a low-resource sentence never reach
/// the scheduler; the averages are constants as far as gradients go.
inline StepRecord decide_batch_weight(std::span<const SentenceSample> samples, std::span<const double> losses,
                                      std::int64_t step, const WeightScheduler& scheduler, int low_lang) {
  StepRecord rec;
  double low_sum = 0.0, high_sum = 0.0;
  std::size_t low_n = 0, high_n = 0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j].language == low_lang) {
      low_sum += losses[j];
      ++low_n;
    } else {
      high_sum += losses[j];
      ++high_n;
    }
  }
  rec.low_present = low_n > 0;
  if (!rec.low_present) {
    rec.decision = {1.0, WeightBranch::Constant};
  } else if (scheduler.mode == WeightingMode::Dynamic && high_n == 0) {
    rec.decision = {1.0, WeightBranch::Degenerate};
  } else {
    const double avg_low = low_sum / static_cast<double>(low_n);
    const double avg_high = high_n ? high_sum / static_cast<double>(high_n) : 0.0;
    rec.decision = scheduler.decide(step, avg_low, avg_high);
  }
  return rec;
}

/// One SGD step on the language-weighted batch loss (per-sentence
/// frame-mean cross-entropy). Throws DivergenceError without touching the
/// model if the loss is not finite.
inline StepRecord train_step(AcousticModel& m, std::span<const TrainExample* const> batch, std::int64_t step,
                             const WeightScheduler& scheduler, int low_lang, double learning_rate) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<ForwardCache> caches;
  std::vector<SentenceSample> samples;
  caches.reserve(batch.size());
  samples.reserve(batch.size());
  for (const TrainExample* ex : batch) {
    caches.push_back(forward_cached(m, ex->features, ex->language));
    for (double v : caches.back().logits.data()) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite logits at step " + std::to_string(step));
    }
    samples.push_back({caches.back().logits, ex->labels, ex->language});
  }
  const BatchLoss unweighted = weighted_batch_loss(samples, LanguageWeights{}, Reduction::MeanTokens);
  StepRecord rec = decide_batch_weight(samples, unweighted.per_sentence, step, scheduler, low_lang);

  LanguageWeights weights;
  if (rec.low_present) weights.set(low_lang, rec.decision.value);
  rec.loss = unweighted;
  double acc = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) acc += weights.at(samples[j].language) * unweighted.per_sentence[j];
  rec.loss.weighted_mean = acc / static_cast<double>(samples.size());
  rec.loss.applied_weight = rec.decision.value;
  if (!std::isfinite(rec.loss.weighted_mean)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step));
  }

  AcousticModel grad = AcousticModel::zeros(m.dims);
  const auto dlogits = loss_gradient(samples, weights, Reduction::MeanTokens);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    backward(m, batch[j]->features, batch[j]->language, caches[j], dlogits[j], grad);
  }
  auto sgd = [&](std::span<double> p, std::span<const double> g) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
  };
  sgd(m.w1.data(), grad.w1.data());
  sgd(m.b1, grad.b1);
  sgd(m.w2.data(), grad.w2.data());
  sgd(m.b2, grad.b2);
  return rec;
}

/// Frames per symbol in clean synthesized speech.
inline constexpr std::size_t kFramesPerSymbol = 10;

/// Majority vote of per-frame argmax over consecutive 10-frame blocks; ties go
/// to the lowest symbol index.
inline std::vector<int> decode_symbols(const Matrix& logits) {
  const std::size_t frames = logits.rows();
  if (frames < kFramesPerSymbol) throw std::invalid_argument("decode: fewer than 10 frames");
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(frames) / kFramesPerSymbol));
  const std::size_t V = logits.cols();
  std::vector<int> out;
  out.reserve(n);
  std::vector<int> votes(V);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(votes.begin(), votes.end(), 0);
    const std::size_t end = std::min(frames, (j + 1) * kFramesPerSymbol);
    for (std::size_t t = j * kFramesPerSymbol; t < end; ++t) {
      const double* z = logits.row(t);
      ++votes[static_cast<std::size_t>(std::max_element(z, z + V) - z)];
    }
    out.push_back(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
  }
  return out;
}

inline std::string decode(const AcousticModel& m, const Matrix& features, int language) {
  std::string text;
  for (int s : decode_symbols(forward(m, features, language))) text.push_back(static_cast<char>('A' + s));
  return text;
}

inline constexpr int kCheckpointVersion = 1;

/// Everything stored beside the parameters.
struct CheckpointMeta {
  std::int64_t step = 0;
  std::uint64_t corpus_seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json languages = nlohmann::json::array();
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r), m.row(r) + m.cols()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols, const char* name) {
  if (!j.is_array() || j.size() != rows) throw DataError(std::string("checkpoint: ") + name + " has wrong row count");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) throw DataError(std::string("checkpoint: ") + name + " has wrong column count");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline std::vector<double> vector_from_json(const nlohmann::json& j, std::size_t n, const char* name) {
  if (!j.is_array() || j.size() != n) throw DataError(std::string("checkpoint: ") + name + " has wrong length");
  return j.get<std::vector<double>>();
}

}  // namespace detail

inline std::string checkpoint_to_string(const AcousticModel& m, const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["dims"] = nlohmann::json(m.dims);
  j["step"] = meta.step;
  j["corpus_seed"] = meta.corpus_seed;
  j["config"] = meta.config;
  j["languages"] = meta.languages;
  j["params"] = {{"w1", detail::matrix_to_json(m.w1)},
                 {"b1", m.b1},
                 {"w2", detail::matrix_to_json(m.w2)},
                 {"b2", m.b2}};
  return j.dump() + "\n";
}

inline void save_checkpoint(const AcousticModel& m, const CheckpointMeta& meta, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(m, meta);
}

struct LoadedCheckpoint {
  AcousticModel model;
  CheckpointMeta meta;
};

/// Parses a checkpoint; if `expected` is given the stored dimensions must
/// match it.
inline LoadedCheckpoint parse_checkpoint(const std::string& text, const ModelDims* expected = nullptr,
                                         const std::string& what = "<checkpoint>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(what + ": " + ex.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError(what + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
    }
    const auto dims = j.at("dims").get<ModelDims>();
    dims.validate();
    if (expected && !(dims == *expected)) {
      throw DataError(what + ": checkpoint dimensions (hidden " + std::to_string(dims.hidden) +
                      ") do not match configuration (hidden " + std::to_string(expected->hidden) + ")");
    }
    LoadedCheckpoint out{AcousticModel::zeros(dims), {}};
    const auto& p = j.at("params");
    out.model.w1 = detail::matrix_from_json(p.at("w1"), out.model.w1.rows(), out.model.w1.cols(), "w1");
    out.model.b1 = detail::vector_from_json(p.at("b1"), out.model.b1.size(), "b1");
    out.model.w2 = detail::matrix_from_json(p.at("w2"), out.model.w2.rows(), out.model.w2.cols(), "w2");
    out.model.b2 = detail::vector_from_json(p.at("b2"), out.model.b2.size(), "b2");
    out.meta.step = j.at("step").get<std::int64_t>();
    out.meta.corpus_seed = j.at("corpus_seed").get<std::uint64_t>();
    out.meta.config = j.value("config", nlohmann::json::object());
    out.meta.languages = j.value("languages", nlohmann::json::array());
    return out;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(what + ": " + ex.what());
  }
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelDims* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(text, expected, path.string());
}

}  // namespace lwce
