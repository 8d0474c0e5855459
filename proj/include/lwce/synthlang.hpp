#pragma once

// Synthetic multilingual benchmark. Every language speaks the same 8-symbol
// alphabet A..H as 100 ms tones, but each maps symbols to the frequency grid
// through its own permutation, so the right transcription depends on knowing
// the language.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lwce/common.hpp"
#include "lwce/dsp.hpp"
#include "lwce/manifest.hpp"
#include "lwce/wav.hpp"

namespace lwce {

inline constexpr int kNumSymbols = 8;
inline constexpr std::array<double, kNumSymbols> kFrequencyGrid{500, 700, 900, 1100, 1300, 1500, 1700, 1900};

enum class ResourceClass { High, Low };

struct LanguageSpec {
  int id = 0;
  std::string token;  // "<|Lk|>"
  std::array<int, kNumSymbols> freq_index{};  // symbol -> index into kFrequencyGrid
  ResourceClass resource = ResourceClass::High;

  std::string name() const { return "L" + std::to_string(id); }
  double frequency(int symbol) const { return kFrequencyGrid[static_cast<std::size_t>(freq_index[static_cast<std::size_t>(symbol)])]; }
  friend bool operator==(const LanguageSpec&, const LanguageSpec&) = default;
};

inline int symbol_index(char c) {
  if (c < 'A' || c >= 'A' + kNumSymbols) throw std::invalid_argument(std::string("unknown symbol '") + c + "'");
  return c - 'A';
}

inline char symbol_char(int s) { return static_cast<char>('A' + s); }

inline std::vector<LanguageSpec> make_languages(int n, int low_id, std::uint64_t seed) {
  if (n < 2 || n > 8) throw std::invalid_argument("make_languages: need 2..8 languages, got " + std::to_string(n));
  if (low_id < 0 || low_id >= n) throw std::invalid_argument("make_languages: low language id out of range");
  std::vector<LanguageSpec> langs;
  for (int k = 0; k < n; ++k) {
    LanguageSpec spec;
    spec.id = k;
    spec.token = "<|L" + std::to_string(k) + "|>";
    spec.resource = k == low_id ? ResourceClass::Low : ResourceClass::High;
    for (int s = 0; s < kNumSymbols; ++s) spec.freq_index[static_cast<std::size_t>(s)] = s;
    if (k > 0) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      auto taken = [&] {
        return std::any_of(langs.begin(), langs.end(),
                           [&](const LanguageSpec& o) { return o.freq_index == spec.freq_index; });
      };
      do {
        std::shuffle(spec.freq_index.begin(), spec.freq_index.end(), rng);
      } while (taken());
    }
    langs.push_back(spec);
  }
  return langs;
}

inline int find_low_language(const std::vector<LanguageSpec>& langs) {
  for (const auto& l : langs)
    if (l.resource == ResourceClass::Low) return l.id;
  throw std::invalid_argument("no low-resource language");
}

struct SynthesisParams {
  int sample_rate = 16000;
  double symbol_ms = 100.0;
  double amplitude = 0.3;
  double ramp_ms = 5.0;

  std::size_t symbol_samples() const { return static_cast<std::size_t>(std::lround(symbol_ms * sample_rate / 1000.0)); }
};

/// Concatenated per-symbol tones with raised-cosine on/off ramps. The seed
/// only picks each segment's starting phase.
inline AudioClip synthesize_utterance(const LanguageSpec& lang, const std::string& text, std::uint64_t seed,
                                      const SynthesisParams& p = {}) {
  if (text.empty()) throw std::invalid_argument("synthesize_utterance: empty text");
  for (char c : text) symbol_index(c);
  const std::size_t seg = p.symbol_samples();
  const auto ramp = static_cast<std::size_t>(std::lround(p.ramp_ms * p.sample_rate / 1000.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  AudioClip clip;
  clip.sample_rate = p.sample_rate;
  clip.samples.reserve(seg * text.size());
  for (char c : text) {
    const double w = 2.0 * std::numbers::pi * lang.frequency(symbol_index(c)) / p.sample_rate;
    const double phase = phase_dist(rng);
    for (std::size_t i = 0; i < seg; ++i) {
      double env = 1.0;
      if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) / ramp);
      else if (i >= seg - ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(seg - i) - 0.5) / ramp);
      clip.samples.push_back(p.amplitude * env * std::sin(w * static_cast<double>(i) + phase));
    }
  }
  return clip;
}

struct CorpusConfig {
  int n_langs = 6;
  int low_lang = 1;
  int finetune_per_lang = 500;
  double low_pretrain_fraction = 0.02;
  int pretrain_per_high = 2000;
  int valid_per_lang = 100;
  int test_per_lang = 200;
  int sample_rate = 16000;
  double symbol_ms = 100.0;
  int min_len = 2;
  int max_len = 12;
  std::uint64_t seed = 1;

  int low_pretrain_count() const {
    return static_cast<int>(std::lround(low_pretrain_fraction * pretrain_per_high));
  }

  int count(Split s, bool low) const {
    switch (s) {
      case Split::Pretrain: return low ? low_pretrain_count() : pretrain_per_high;
      case Split::Finetune: return finetune_per_lang;
      case Split::Valid: return valid_per_lang;
      case Split::Test: return test_per_lang;
    }
    return 0;
  }

  void validate() const {
    if (n_langs < 2 || n_langs > 8) throw std::invalid_argument("corpus: n_langs must be in [2, 8]");
    if (low_lang < 0 || low_lang >= n_langs) throw std::invalid_argument("corpus: low_lang out of range");
    if (finetune_per_lang <= 0 || pretrain_per_high <= 0 || valid_per_lang <= 0 || test_per_lang <= 0) {
      throw std::invalid_argument("corpus: counts must be positive");
    }
    if (!(low_pretrain_fraction > 0.0 && low_pretrain_fraction <= 1.0) || low_pretrain_count() <= 0) {
      throw std::invalid_argument("corpus: low_pretrain_fraction must give a positive count");
    }
    if (sample_rate <= 0 || symbol_ms <= 0.0) throw std::invalid_argument("corpus: bad audio geometry");
    if (min_len < 1 || max_len < min_len) throw std::invalid_argument("corpus: bad text length range");
  }

  SynthesisParams synthesis() const {
    SynthesisParams p;
    p.sample_rate = sample_rate;
    p.symbol_ms = symbol_ms;
    return p;
  }
};

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = nlohmann::json{{"n_langs", c.n_langs},
                     {"low_lang", c.low_lang},
                     {"finetune_per_lang", c.finetune_per_lang},
                     {"low_pretrain_fraction", c.low_pretrain_fraction},
                     {"pretrain_per_high", c.pretrain_per_high},
                     {"valid_per_lang", c.valid_per_lang},
                     {"test_per_lang", c.test_per_lang},
                     {"sample_rate", c.sample_rate},
                     {"symbol_ms", c.symbol_ms},
                     {"min_len", c.min_len},
                     {"max_len", c.max_len},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c.n_langs = j.value("n_langs", c.n_langs);
  c.low_lang = j.value("low_lang", c.low_lang);
  c.finetune_per_lang = j.value("finetune_per_lang", c.finetune_per_lang);
  c.low_pretrain_fraction = j.value("low_pretrain_fraction", c.low_pretrain_fraction);
  c.pretrain_per_high = j.value("pretrain_per_high", c.pretrain_per_high);
  c.valid_per_lang = j.value("valid_per_lang", c.valid_per_lang);
  c.test_per_lang = j.value("test_per_lang", c.test_per_lang);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.symbol_ms = j.value("symbol_ms", c.symbol_ms);
  c.min_len = j.value("min_len", c.min_len);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const LanguageSpec& l) {
  j = nlohmann::json{{"id", l.id},
                     {"token", l.token},
                     {"freq_index", l.freq_index},
                     {"resource", l.resource == ResourceClass::Low ? "low" : "high"}};
}

inline void from_json(const nlohmann::json& j, LanguageSpec& l) {
  l.id = j.at("id").get<int>();
  l.token = j.at("token").get<std::string>();
  l.freq_index = j.at("freq_index").get<std::array<int, kNumSymbols>>();
  l.resource = j.at("resource").get<std::string>() == "low" ? ResourceClass::Low : ResourceClass::High;
}

inline std::string utterance_id(Split split, int lang, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return std::string(to_string(split)) + "-L" + std::to_string(lang) + "-" + buf;
}

/// Random text for utterance `id`: i.i.d. symbols, length uniform in
/// [min_len, max_len].
inline std::string draw_text(const CorpusConfig& cfg, const std::string& id) {
  std::mt19937_64 rng(derive_seed(cfg.seed, "text:" + id));
  const int len = std::uniform_int_distribution<int>(cfg.min_len, cfg.max_len)(rng);
  std::uniform_int_distribution<int> sym(0, kNumSymbols - 1);
  std::string text;
  for (int i = 0; i < len; ++i) text.push_back(symbol_char(sym(rng)));
  return text;
}

struct Corpus {
  CorpusConfig config;
  std::vector<LanguageSpec> languages;
  Manifest manifest;
};

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kCorpusMetaFile = "corpus.json";

/// Writes WAVs under `root/<split>/<lang>/<id>.wav`, plus manifest.jsonl and
/// corpus.json. The manifest is sorted by id.
inline Corpus generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  corpus.languages = make_languages(cfg.n_langs, cfg.low_lang, cfg.seed);
  const auto synth = cfg.synthesis();
  for (Split split : {Split::Pretrain, Split::Finetune, Split::Valid, Split::Test}) {
    for (const auto& lang : corpus.languages) {
      const int n = cfg.count(split, lang.resource == ResourceClass::Low);
      for (int i = 0; i < n; ++i) {
        ManifestEntry e;
        e.id = utterance_id(split, lang.id, i);
        e.lang = lang.name();
        e.text = draw_text(cfg, e.id);
        e.split = split;
        e.wav = (fs::path(to_string(split)) / e.lang / (e.id + ".wav")).generic_string();
        write_wav(root / e.wav, synthesize_utterance(lang, e.text, derive_seed(cfg.seed, "audio:" + e.id), synth));
        corpus.manifest.push_back(std::move(e));
      }
    }
  }
  std::sort(corpus.manifest.begin(), corpus.manifest.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  write_manifest(root / kManifestFile, corpus.manifest);
  nlohmann::json meta{{"config", cfg}, {"languages", corpus.languages}};
  std::ofstream(root / kCorpusMetaFile) << meta.dump(2) << '\n';
  return corpus;
}

struct CorpusMeta {
  CorpusConfig config;
  std::vector<LanguageSpec> languages;
};

inline CorpusMeta read_corpus_meta(const std::filesystem::path& root) {
  std::ifstream in(root / kCorpusMetaFile);
  if (!in) throw DataError("missing " + (root / kCorpusMetaFile).string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("config").get<CorpusConfig>(), j.at("languages").get<std::vector<LanguageSpec>>()};
  } catch (const nlohmann::json::exception& ex) {
    throw DataError((root / kCorpusMetaFile).string() + ": " + ex.what());
  }
}

inline std::size_t frame_length(int sample_rate) { return static_cast<std::size_t>(sample_rate / 100); }

/// ln(1 + Goertzel energy) at each grid frequency, per 10 ms frame.
inline Matrix raw_features(const AudioClip& clip) {
  const std::size_t flen = frame_length(clip.sample_rate);
  if (flen == 0 || clip.size() < flen) throw std::invalid_argument("featurize: clip shorter than one frame");
  const std::size_t frames = clip.size() / flen;
  Matrix f(frames, kNumSymbols);
  for (std::size_t t = 0; t < frames; ++t) {
    std::span<const double> seg(clip.samples.data() + t * flen, flen);
    for (std::size_t j = 0; j < kNumSymbols; ++j) {
      f(t, j) = std::log1p(goertzel_power(seg, kFrequencyGrid[j], clip.sample_rate));
    }
  }
  return f;
}

/// Per-coordinate mean/variance normalization over the utterance; constant
/// coordinates are only centred.
inline void normalize_features(Matrix& f) {
  const std::size_t n = f.rows();
  for (std::size_t j = 0; j < f.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += f(t, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) var += (f(t, j) - mean) * (f(t, j) - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    const double inv = sd > 1e-8 ? 1.0 / sd : 1.0;
    for (std::size_t t = 0; t < n; ++t) f(t, j) = (f(t, j) - mean) * inv;
  }
}

inline Matrix featurize(const AudioClip& clip) {
  Matrix f = raw_features(clip);
  normalize_features(f);
  return f;
}

/// Proportional alignment of `text` over `n_frames` frames.
inline std::vector<int> frame_labels(const std::string& text, std::size_t n_frames) {
  if (text.empty()) throw std::invalid_argument("frame_labels: empty text");
  if (n_frames < 1) throw std::invalid_argument("frame_labels: need at least one frame");
  std::vector<int> labels(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) labels[f] = symbol_index(text[f * text.size() / n_frames]);
  return labels;
}

}  // namespace lwce
