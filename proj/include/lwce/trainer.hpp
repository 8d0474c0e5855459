#pragma once

// Training phases over a featurized corpus, validation logging, and test-set
// evaluation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lwce/manifest.hpp"
#include "lwce/metrics.hpp"
#include "lwce/model.hpp"
#include "lwce/synthlang.hpp"

namespace lwce {

inline int language_id_from_name(const std::string& name) {
  if (name.size() < 2 || name[0] != 'L') throw DataError("bad language name: " + name);
  try {
    return std::stoi(name.substr(1));
  } catch (const std::exception&) {
    throw DataError("bad language name: " + name);
  }
}

/// Featurizes every manifest entry of `split` (skipping augmented copies
/// unless asked for). WAV paths are relative to `root`.
inline std::vector<TrainExample> load_examples(const Manifest& manifest, const std::filesystem::path& root, Split split,
                                               bool include_augmented) {
  std::vector<TrainExample> out;
  for (const auto& e : manifest) {
    if (e.split != split || (e.augmented && !include_augmented)) continue;
    TrainExample ex;
    ex.features = featurize(read_wav(root / e.wav));
    ex.labels = frame_labels(e.text, ex.features.rows());
    ex.language = language_id_from_name(e.lang);
    ex.id = e.id;
    ex.text = e.text;
    out.push_back(std::move(ex));
  }
  return out;
}

struct TrainConfig {
  std::int64_t total_steps = 8000;
  int batch_size = 16;
  std::int64_t eval_every = 1000;
  double learning_rate = 0.1;
  WeightScheduler scheduler;
  int low_lang = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (total_steps < 1 || eval_every < 1 || total_steps < eval_every) {
      throw std::invalid_argument("train config: need total_steps >= eval_every >= 1");
    }
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
    scheduler.validate();
    if (scheduler.mode == WeightingMode::Linear && scheduler.linear.t_total < total_steps) {
      throw std::invalid_argument("train config: linear schedule t_total is shorter than total_steps");
    }
  }
};

inline void to_json(nlohmann::json& j, const WeightScheduler& s) {
  j = nlohmann::json{{"mode", to_string(s.mode)}};
  switch (s.mode) {
    case WeightingMode::None: break;
    case WeightingMode::Constant: j["weight"] = s.constant; break;
    case WeightingMode::Linear:
      j["alpha_ini"] = s.linear.alpha_ini;
      j["alpha_fin"] = s.linear.alpha_fin;
      j["t_min"] = s.linear.t_min;
      j["t_total"] = s.linear.t_total;
      break;
    case WeightingMode::Dynamic:
      j["alpha"] = s.dynamic.alpha;
      j["weight_cap"] = s.dynamic.weight_cap;
      break;
  }
}

inline void from_json(const nlohmann::json& j, WeightScheduler& s) {
  s.mode = weighting_mode_from_string(j.value("mode", std::string("none")));
  s.constant = j.value("weight", s.constant);
  s.linear.alpha_ini = j.value("alpha_ini", s.linear.alpha_ini);
  s.linear.alpha_fin = j.value("alpha_fin", s.linear.alpha_fin);
  s.linear.t_min = j.value("t_min", s.linear.t_min);
  s.linear.t_total = j.value("t_total", s.linear.t_total);
  s.dynamic.alpha = j.value("alpha", s.dynamic.alpha);
  s.dynamic.weight_cap = j.value("weight_cap", s.dynamic.weight_cap);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"total_steps", c.total_steps}, {"batch_size", c.batch_size},
                     {"eval_every", c.eval_every},   {"learning_rate", c.learning_rate},
                     {"weighting", c.scheduler},     {"low_lang", c.low_lang},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.total_steps = j.value("total_steps", c.total_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("weighting")) c.scheduler = j.at("weighting").get<WeightScheduler>();
  c.low_lang = j.value("low_lang", c.low_lang);
  c.seed = j.value("seed", c.seed);
}

/// One line of the metrics log.
struct MetricsRow {
  std::int64_t step = 0;
  std::string split;     // "train" or "valid"
  std::string language;  // "all" for the weighted training loss
  double loss = 0.0;
  double applied_weight = 1.0;
};

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "step,split,language,loss,applied_weight\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.step << ',' << r.split << ',' << r.language << ',';
    std::snprintf(buf, sizeof buf, "%.10g", r.loss);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.10g", r.applied_weight);
    os << buf << '\n';
  }
  return os.str();
}

/// Mean per-utterance cross-entropy for each language.
inline std::map<int, double> language_losses(const AcousticModel& m, const std::vector<TrainExample>& examples) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& ex : examples) {
    const SentenceSample s{forward(m, ex.features, ex.language), ex.labels, ex.language};
    auto& a = acc[ex.language];
    a.first += sentence_cross_entropy(s, Reduction::MeanTokens);
    ++a.second;
  }
  std::map<int, double> out;
  for (const auto& [lang, a] : acc) out[lang] = a.first / static_cast<double>(a.second);
  return out;
}

struct PhaseResult {
  AcousticModel model;
  std::vector<MetricsRow> log;
};

/// Runs `cfg.total_steps` SGD steps from `start`, drawing batches uniformly
/// with replacement from `train`. Steps are numbered from 1.
inline PhaseResult run_phase(const AcousticModel& start, const std::vector<TrainExample>& train,
                             const std::vector<TrainExample>& valid, const TrainConfig& cfg,
                             const std::function<void(std::int64_t, const StepRecord&)>& on_step = {}) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("run_phase: empty training split");
  PhaseResult result{start, {}};
  std::mt19937_64 rng(derive_seed(cfg.seed, "batches"));
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::vector<const TrainExample*> batch(static_cast<std::size_t>(cfg.batch_size));
  result.log.reserve(static_cast<std::size_t>(cfg.total_steps + cfg.total_steps / cfg.eval_every * 8));
  for (std::int64_t t = 1; t <= cfg.total_steps; ++t) {
    for (auto& b : batch) b = &train[pick(rng)];
    const StepRecord rec = train_step(result.model, batch, t, cfg.scheduler, cfg.low_lang, cfg.learning_rate);
    result.log.push_back({t, "train", "all", rec.loss.weighted_mean, rec.loss.applied_weight});
    if (on_step) on_step(t, rec);
    if (t % cfg.eval_every == 0 && !valid.empty()) {
      for (const auto& [lang, loss] : language_losses(result.model, valid)) {
        result.log.push_back({t, "valid", "L" + std::to_string(lang), loss, rec.loss.applied_weight});
      }
    }
  }
  return result;
}

/// Per-language decoding result over a test split.
struct LanguageEval {
  std::string language;
  std::int64_t n_utts = 0;
  std::int64_t total_ref_tokens = 0;
  std::int64_t total_edits = 0;

  double wer_percent() const {
    return total_ref_tokens ? 100.0 * static_cast<double>(total_edits) / static_cast<double>(total_ref_tokens) : 0.0;
  }
};

inline std::map<std::string, LanguageEval> evaluate_model(const AcousticModel& m, const std::vector<TrainExample>& test) {
  std::map<std::string, LanguageEval> out;
  for (const auto& ex : test) {
    const std::string name = "L" + std::to_string(ex.language);
    auto& e = out[name];
    e.language = name;
    const auto counts = edit_distance(ex.text, decode(m, ex.features, ex.language));
    ++e.n_utts;
    e.total_ref_tokens += counts.ref_len;
    e.total_edits += counts.edits();
  }
  return out;
}

inline std::string format_eval_csv(const std::string& run, const LanguageEval& e) {
  return "run,language,n_utts,total_ref_tokens,total_edits,wer_percent\n" + run + "," + e.language + "," +
         std::to_string(e.n_utts) + "," + std::to_string(e.total_ref_tokens) + "," + std::to_string(e.total_edits) +
         "," + format_2dp(e.wer_percent()) + "\n";
}

inline LanguageEval parse_eval_csv(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string header, line;
  if (!std::getline(in, header) || header != "run,language,n_utts,total_ref_tokens,total_edits,wer_percent") {
    throw DataError(what + ": unexpected evaluation CSV header");
  }
  if (!std::getline(in, line)) throw DataError(what + ": no evaluation row");
  std::vector<std::string> f;
  std::string cell;
  std::istringstream row(line);
  while (std::getline(row, cell, ',')) f.push_back(cell);
  if (f.size() != 6) throw DataError(what + ": malformed evaluation row");
  try {
    LanguageEval e;
    e.language = f[1];
    e.n_utts = std::stoll(f[2]);
    e.total_ref_tokens = std::stoll(f[3]);
    e.total_edits = std::stoll(f[4]);
    return e;
  } catch (const std::exception&) {
    throw DataError(what + ": malformed evaluation row");
  }
}

}  // namespace lwce
