#pragma once

// Cross-entropy and language-weighted cross-entropy over batches of
// sentences, with analytic gradients with respect to the logits.

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lwce/common.hpp"

namespace lwce {

/// Label value for padded positions; they contribute no loss and no gradient.
inline constexpr int kIgnoreLabel = -1;

enum class Reduction { SumTokens, MeanTokens };

/// One sentence: logits [T x V], T labels, and the language it belongs to.
struct SentenceSample {
  Matrix logits;
  std::vector<int> labels;
  int language = 0;
};

/// Per-language loss weights. Languages without an entry weigh 1.
class LanguageWeights {
 public:
  LanguageWeights() = default;

  void set(int language, double weight) {
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw std::invalid_argument("language weight must be positive and finite, got " +
                                  std::to_string(weight));
    }
    weights_[language] = weight;
  }

  double at(int language) const {
    auto it = weights_.find(language);
    return it == weights_.end() ? 1.0 : it->second;
  }

  const std::map<int, double>& entries() const { return weights_; }

 private:
  std::map<int, double> weights_;
};

struct BatchLoss {
  std::vector<double> per_sentence;       // unweighted
  std::map<int, double> per_language_avg;  // unweighted
  double weighted_mean = 0.0;
  double applied_weight = 1.0;
};

/// Writes log-softmax of `row` into `out` (which may alias `row`).
inline void log_softmax_into(std::span<const double> row, std::span<double> out) {
  if (row.empty()) throw std::invalid_argument("log_softmax: empty row");
  double mx = row[0];
  for (double v : row) {
    if (!std::isfinite(v)) throw std::invalid_argument("log_softmax: non-finite input");
    if (v > mx) mx = v;
  }
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
}

inline std::vector<double> log_softmax(std::span<const double> row) {
  std::vector<double> out(row.size());
  log_softmax_into(row, out);
  return out;
}

namespace detail {

inline std::size_t validate_sample(const SentenceSample& s) {
  const auto& lg = s.logits;
  if (lg.rows() < 1) throw std::invalid_argument("sentence has no positions");
  if (lg.cols() < 2) throw std::invalid_argument("vocabulary size must be at least 2");
  if (s.labels.size() != lg.rows()) {
    throw std::invalid_argument("labels length " + std::to_string(s.labels.size()) +
                                " does not match logits rows " + std::to_string(lg.rows()));
  }
  std::size_t scored = 0;
  const int vocab = static_cast<int>(lg.cols());
  for (int y : s.labels) {
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= vocab) throw std::invalid_argument("label out of range: " + std::to_string(y));
    ++scored;
  }
  if (scored == 0) throw std::invalid_argument("sentence has only ignored positions");
  return scored;
}

inline double normalizer(Reduction mode, std::size_t scored) {
  return mode == Reduction::MeanTokens ? static_cast<double>(scored) : 1.0;
}

}  // namespace detail

inline double sentence_cross_entropy(const SentenceSample& sample, Reduction mode) {
  const std::size_t scored = detail::validate_sample(sample);
  const std::size_t vocab = sample.logits.cols();
  std::vector<double> lp(vocab);
  double total = 0.0;
  for (std::size_t t = 0; t < sample.labels.size(); ++t) {
    const int y = sample.labels[t];
    if (y == kIgnoreLabel) continue;
    log_softmax_into({sample.logits.row(t), vocab}, lp);
    total -= lp[static_cast<std::size_t>(y)];
  }
  return total / detail::normalizer(mode, scored);
}

/// Arithmetic mean of the losses of each language.
inline std::map<int, double> per_language_average(std::span<const std::pair<int, double>> losses) {
  if (losses.empty()) throw std::invalid_argument("per_language_average: no losses");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& [lang, loss] : losses) {
    auto& a = acc[lang];
    a.first += loss;
    ++a.second;
  }
  std::map<int, double> out;
  for (const auto& [lang, a] : acc) out[lang] = a.first / static_cast<double>(a.second);
  return out;
}

/// Batch loss as the mean over sentences of w_{language} * loss(sentence).
/// applied_weight reports the largest weight among languages in the batch.
inline BatchLoss weighted_batch_loss(std::span<const SentenceSample> batch,
                                     const LanguageWeights& weights, Reduction mode) {
  if (batch.empty()) throw std::invalid_argument("weighted_batch_loss: empty batch");
  BatchLoss out;
  out.per_sentence.reserve(batch.size());
  std::vector<std::pair<int, double>> tagged;
  tagged.reserve(batch.size());
  double acc = 0.0;
  double max_w = 0.0;
  for (const auto& s : batch) {
    const double loss = sentence_cross_entropy(s, mode);
    const double w = weights.at(s.language);
    out.per_sentence.push_back(loss);
    tagged.emplace_back(s.language, loss);
    acc += w * loss;
    if (w > max_w) max_w = w;
  }
  out.weighted_mean = acc / static_cast<double>(batch.size());
  out.per_language_avg = per_language_average(tagged);
  out.applied_weight = max_w;
  return out;
}

/// Gradient of weighted_batch_loss(...).weighted_mean with respect to every
/// logit, one [T x V] matrix per sentence.
inline std::vector<Matrix> loss_gradient(std::span<const SentenceSample> batch,
                                         const LanguageWeights& weights, Reduction mode) {
  if (batch.empty()) throw std::invalid_argument("loss_gradient: empty batch");
  std::vector<Matrix> grads;
  grads.reserve(batch.size());
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const std::size_t scored = detail::validate_sample(s);
    const std::size_t vocab = s.logits.cols();
    const double scale = weights.at(s.language) * inv_batch / detail::normalizer(mode, scored);
    Matrix g(s.logits.rows(), vocab);
    for (std::size_t t = 0; t < s.labels.size(); ++t) {
      const int y = s.labels[t];
      if (y == kIgnoreLabel) continue;
      double* gr = g.row(t);
      log_softmax_into({s.logits.row(t), vocab}, {gr, vocab});
      for (std::size_t v = 0; v < vocab; ++v) gr[v] = scale * std::exp(gr[v]);
      gr[static_cast<std::size_t>(y)] -= scale;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace lwce
