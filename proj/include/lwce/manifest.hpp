#pragma once

// JSONL corpus manifests: one utterance record per line.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lwce/common.hpp"

namespace lwce {

enum class Split { Pretrain, Finetune, Valid, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Pretrain: return "pretrain";
    case Split::Finetune: return "finetune";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "pretrain") return Split::Pretrain;
  if (s == "finetune") return Split::Finetune;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw DataError("unknown split: " + s);
}

struct ManifestEntry {
  std::string id;
  std::string lang;
  std::string text;
  std::string wav;  // relative to the manifest's directory
  Split split = Split::Pretrain;
  bool augmented = false;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

inline std::string to_jsonl_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["lang"] = e.lang;
  j["text"] = e.text;
  j["wav"] = e.wav;
  j["split"] = to_string(e.split);
  j["augmented"] = e.augmented;
  return j.dump();
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.lang = j.at("lang").get<std::string>();
  e.text = j.at("text").get<std::string>();
  e.wav = j.at("wav").get<std::string>();
  e.split = split_from_string(j.at("split").get<std::string>());
  e.augmented = j.value("augmented", false);
  return e;
}

inline std::string format_manifest(const Manifest& m) {
  std::string out;
  for (const auto& e : m) {
    out += to_jsonl_line(e);
    out += '\n';
  }
  return out;
}

inline Manifest parse_manifest(std::istream& in, const std::string& what = "<manifest>") {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(what + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << format_manifest(m);
}

/// Counts per (split, language), ordered for stable printing.
inline std::map<std::pair<std::string, std::string>, std::size_t> count_by_split_lang(const Manifest& m) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& e : m) ++counts[{to_string(e.split), e.lang}];
  return counts;
}

}  // namespace lwce
