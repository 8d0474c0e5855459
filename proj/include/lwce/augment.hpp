#pragma once

// Dataset-level augmentation: one perturbed copy per selected utterance.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lwce/audio.hpp"
#include "lwce/manifest.hpp"
#include "lwce/wav.hpp"

namespace lwce {

struct AugmentOptions {
  AugmentSpec spec;
  std::uint64_t seed = 0;
  /// Language to augment; nullopt selects every language.
  std::optional<std::string> language;
  Split split = Split::Finetune;
  int copies = 1;
};

struct AugmentFailure {
  std::string id;
  std::string message;
};

struct AugmentResult {
  Manifest manifest;  // originals followed by augmented copies
  std::size_t selected = 0;
  std::size_t written = 0;
  std::vector<AugmentFailure> failures;
};

inline bool selected_for_augment(const ManifestEntry& e, const AugmentOptions& opt) {
  return !e.augmented && e.split == opt.split && (!opt.language || e.lang == *opt.language);
}

/// Seed for the `copy`-th augmented version of entry `id`; independent of
/// processing order.
inline std::uint64_t augment_file_seed(std::uint64_t seed, const std::string& id, int copy) {
  return derive_seed(seed, id + "#" + std::to_string(copy));
}

/// Augments entries of `in` (whose wav paths are relative to `in_root`),
/// writing new WAVs under `out_dir/<split>/<lang>/` and returning a manifest
/// whose paths are relative to `out_dir`.
inline AugmentResult augment_dataset(const Manifest& in, const std::filesystem::path& in_root,
                                     const std::filesystem::path& out_dir, const AugmentOptions& opt) {
  namespace fs = std::filesystem;
  opt.spec.validate();
  if (opt.copies < 1) throw std::invalid_argument("augment_dataset: copies must be >= 1");
  fs::create_directories(out_dir);
  const fs::path out_abs = fs::absolute(out_dir).lexically_normal();
  const fs::path in_abs = fs::absolute(in_root).lexically_normal();

  AugmentResult result;
  result.manifest.reserve(in.size());
  for (auto e : in) {
    if (in_abs != out_abs) e.wav = (in_abs / e.wav).lexically_normal().lexically_relative(out_abs).generic_string();
    result.manifest.push_back(std::move(e));
  }

  for (const auto& e : in) {
    if (!selected_for_augment(e, opt)) continue;
    ++result.selected;
    AudioClip clip;
    try {
      clip = read_wav(in_abs / e.wav);
    } catch (const std::exception& ex) {
      result.failures.push_back({e.id, ex.what()});
      continue;
    }
    for (int c = 1; c <= opt.copies; ++c) {
      ManifestEntry aug = e;
      aug.id = e.id + (opt.copies == 1 ? "-aug" : "-aug" + std::to_string(c));
      aug.augmented = true;
      const fs::path rel = fs::path(to_string(e.split)) / e.lang / (aug.id + ".wav");
      aug.wav = rel.generic_string();
      try {
        write_wav(out_abs / rel, augment_clip(clip, opt.spec, augment_file_seed(opt.seed, e.id, c)));
      } catch (const std::exception& ex) {
        result.failures.push_back({aug.id, ex.what()});
        continue;
      }
      ++result.written;
      result.manifest.push_back(std::move(aug));
    }
  }
  return result;
}

}  // namespace lwce
