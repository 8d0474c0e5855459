#pragma once

// Experiment plumbing: configuration files, the fixed preset table, run
// directories, and the corpus -> pretrain -> fine-tune -> evaluate -> report
// pipeline behind the command-line tool.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lwce/augment.hpp"
#include "lwce/manifest.hpp"
#include "lwce/metrics.hpp"
#include "lwce/model.hpp"
#include "lwce/synthlang.hpp"
#include "lwce/trainer.hpp"

namespace lwce {

namespace fs = std::filesystem;

inline void to_json(nlohmann::json& j, const AugmentSpec& a) {
  j = nlohmann::json{{"stretch_range", {a.stretch_range.first, a.stretch_range.second}},
                     {"gain_range_db", {a.gain_range_db.first, a.gain_range_db.second}},
                     {"pitch_range_semitones", {a.pitch_range_semitones.first, a.pitch_range_semitones.second}},
                     {"noise_sigma_range", {a.noise_sigma_range.first, a.noise_sigma_range.second}},
                     {"seed", a.seed}};
}

inline void from_json(const nlohmann::json& j, AugmentSpec& a) {
  auto range = [&](const char* key, auto& r) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw DataError(std::string("config: ") + key + " must be [min, max]");
    v.at(0).get_to(r.first);
    v.at(1).get_to(r.second);
  };
  range("stretch_range", a.stretch_range);
  range("gain_range_db", a.gain_range_db);
  range("pitch_range_semitones", a.pitch_range_semitones);
  range("noise_sigma_range", a.noise_sigma_range);
  a.seed = j.value("seed", a.seed);
}

/// Everything a run depends on. Mirrors the JSON config file.
struct ExperimentConfig {
  CorpusConfig corpus;
  TrainConfig train;
  AugmentSpec augment;
  ModelDims model;
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"corpus", c.corpus},
                     {"train", c.train},
                     {"augment", c.augment},
                     {"model", {{"context", c.model.context}, {"hidden", c.model.hidden}}}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("corpus")) j.at("corpus").get_to(c.corpus);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
  if (j.contains("model")) {
    c.model.context = j.at("model").value("context", c.model.context);
    c.model.hidden = j.at("model").value("hidden", c.model.hidden);
  }
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(path.string() + ": " + ex.what());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline std::string file_digest(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

struct ExperimentPreset {
  std::string name;
  bool finetune = true;
  bool augmented = false;
  WeightScheduler scheduler;
};

/// The six systems compared in the study, in table order.
inline std::vector<ExperimentPreset> preset_table() {
  auto linear = [](double ini, double fin) {
    WeightScheduler s;
    s.mode = WeightingMode::Linear;
    s.linear = {ini, fin, 4000, 8000};
    return s;
  };
  WeightScheduler dynamic;
  dynamic.mode = WeightingMode::Dynamic;
  dynamic.dynamic = {1.5, 10.0};
  return {
      {"WS", false, false, {}},
      {"WS-FT", true, false, {}},
      {"WS-FT-LP-WCE", true, false, linear(4.0, 5.0)},
      {"WS-FT-GL+", true, true, {}},
      {"WS-FT-LP-WCE-GL+", true, true, linear(2.0, 5.0)},
      {"WS-FT-DA-WCE-GL+", true, true, dynamic},
  };
}

inline ExperimentPreset find_preset(const std::string& name) {
  for (auto& p : preset_table())
    if (p.name == name) return p;
  throw std::invalid_argument("unknown preset: " + name);
}

inline constexpr const char* kBaselinePreset = "WS-FT";
inline constexpr const char* kAugmentedDir = "augmented";

inline void log_line(bool quiet, const std::string& s) {
  if (!quiet) std::cout << s << std::endl;
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- corpus

inline std::string format_counts(const Manifest& m) {
  std::string s;
  for (const auto& [key, n] : count_by_split_lang(m)) s += key.first + " " + key.second + " " + std::to_string(n) + "\n";
  return s;
}

inline Corpus cmd_synth(const CorpusConfig& cfg, const fs::path& out, bool force, bool quiet = true) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw std::invalid_argument("output directory " + out.string() + " is not empty (use --force)");
    fs::remove_all(out);
  }
  Corpus c = generate_corpus(cfg, out);
  log_line(quiet, format_counts(c.manifest));
  return c;
}

/// Augments the fine-tune split of a corpus. With `low_only`, only the
/// low-resource language is touched. Writes `out/manifest.jsonl` and copies
/// corpus.json alongside.
inline AugmentResult cmd_augment(const fs::path& manifest_path, const fs::path& out, bool low_only,
                                 const AugmentSpec& spec, std::uint64_t seed, bool quiet = true) {
  const fs::path root = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  const Manifest in = read_manifest(manifest_path);
  const CorpusMeta meta = read_corpus_meta(root);
  AugmentOptions opt;
  opt.spec = spec;
  opt.seed = seed;
  if (low_only) opt.language = "L" + std::to_string(meta.config.low_lang);
  AugmentResult res = augment_dataset(in, root, out, opt);
  write_manifest(out / kManifestFile, res.manifest);
  if (fs::absolute(out).lexically_normal() != fs::absolute(root).lexically_normal()) {
    fs::copy_file(root / kCorpusMetaFile, out / kCorpusMetaFile, fs::copy_options::overwrite_existing);
  }
  log_line(quiet, "before:\n" + format_counts(in) + "after:\n" + format_counts(res.manifest));
  for (const auto& f : res.failures) log_line(quiet, "failed " + f.id + ": " + f.message);
  return res;
}

/// Featurized splits of one corpus, loaded on first use.
class CorpusData {
 public:
  explicit CorpusData(fs::path root) : root_(std::move(root)), meta_(read_corpus_meta(root_)) {
    manifest_ = read_manifest(root_ / kManifestFile);
  }

  const CorpusMeta& meta() const { return meta_; }
  const fs::path& root() const { return root_; }

  const std::vector<TrainExample>& split(Split s) {
    auto it = cache_.find(s);
    if (it == cache_.end()) it = cache_.emplace(s, load_examples(manifest_, root_, s, false)).first;
    return it->second;
  }

  /// Fine-tune split including augmented copies from `<root>/augmented`.
  const std::vector<TrainExample>& augmented_finetune() {
    if (!augmented_) {
      const fs::path dir = root_ / kAugmentedDir;
      if (!fs::exists(dir / kManifestFile)) {
        throw DataError("no augmented corpus at " + dir.string() + " (run the augment command first)");
      }
      augmented_ = load_examples(read_manifest(dir / kManifestFile), dir, Split::Finetune, true);
    }
    return *augmented_;
  }

  std::string test_digest() const {
    std::string lines;
    for (const auto& e : manifest_)
      if (e.split == Split::Test) lines += to_jsonl_line(e) + "\n";
    return hex64(fnv1a64(lines));
  }

 private:
  fs::path root_;
  CorpusMeta meta_;
  Manifest manifest_;
  std::map<Split, std::vector<TrainExample>> cache_;
  std::optional<std::vector<TrainExample>> augmented_;
};

// ---------------------------------------------------------------- training

inline ModelDims model_dims(const ExperimentConfig& cfg, const CorpusMeta& meta) {
  ModelDims d = cfg.model;
  d.n_langs = meta.config.n_langs;
  d.vocab = kNumSymbols;
  d.feat_dim = kNumSymbols;
  return d;
}

struct RunRecord {
  std::string run_id;
  std::string preset;
  std::uint64_t seed = 0;
  std::uint64_t corpus_seed = 0;
  std::string start_checkpoint_digest;
  std::string checkpoint_digest;
  std::string test_digest;
  std::string started_at;
  std::string finished_at;
};

inline void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"preset", r.preset},
                     {"seed", r.seed},
                     {"corpus_seed", r.corpus_seed},
                     {"checkpoint", "ckpt.json"},
                     {"metrics", "metrics.csv"},
                     {"eval_dir", "eval"},
                     {"start_checkpoint_digest", r.start_checkpoint_digest},
                     {"checkpoint_digest", r.checkpoint_digest},
                     {"test_digest", r.test_digest},
                     {"started_at", r.started_at},
                     {"finished_at", r.finished_at}};
}

inline void from_json(const nlohmann::json& j, RunRecord& r) {
  r.run_id = j.value("run_id", "");
  r.preset = j.value("preset", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.corpus_seed = j.value("corpus_seed", std::uint64_t{0});
  r.start_checkpoint_digest = j.value("start_checkpoint_digest", "");
  r.checkpoint_digest = j.value("checkpoint_digest", "");
  r.test_digest = j.value("test_digest", "");
  r.started_at = j.value("started_at", "");
  r.finished_at = j.value("finished_at", "");
}

inline RunRecord read_run_record(const fs::path& run_dir) {
  try {
    return nlohmann::json::parse(read_file(run_dir / "run.json")).get<RunRecord>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError((run_dir / "run.json").string() + ": " + ex.what());
  }
}

/// Frozen effective configuration of one run.
inline nlohmann::json frozen_config(const ExperimentConfig& cfg, const ExperimentPreset& preset, const TrainConfig& train,
                                    const std::string& phase) {
  nlohmann::json j = cfg;
  j["phase"] = phase;
  j["preset"] = {{"name", preset.name},
                 {"finetune", preset.finetune},
                 {"augmented", preset.augmented},
                 {"weighting", preset.scheduler}};
  j["train"] = train;
  return j;
}

inline void write_run(const fs::path& dir, const nlohmann::json& config, const AcousticModel& model,
                      const CheckpointMeta& meta, const std::vector<MetricsRow>& log, RunRecord rec) {
  fs::create_directories(dir);
  write_file(dir / "config.json", config.dump(2) + "\n");
  save_checkpoint(model, meta, dir / "ckpt.json");
  write_file(dir / "metrics.csv", format_metrics_csv(log));
  rec.checkpoint_digest = file_digest(dir / "ckpt.json");
  rec.finished_at = timestamp_utc();
  write_file(dir / "run.json", nlohmann::json(rec).dump(2) + "\n");
}

/// Trains from a fresh model on the pretrain split.
inline RunRecord cmd_pretrain(CorpusData& data, const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& run_dir,
                              bool quiet = true) {
  RunRecord rec;
  rec.run_id = run_dir.filename().string();
  rec.preset = "pretrain";
  rec.seed = seed;
  rec.corpus_seed = data.meta().config.seed;
  rec.started_at = timestamp_utc();
  rec.test_digest = data.test_digest();
  TrainConfig train = cfg.train;
  train.scheduler = {};
  train.low_lang = data.meta().config.low_lang;
  train.seed = derive_seed(seed, "pretrain");
  const auto dims = model_dims(cfg, data.meta());
  const AcousticModel init = init_model(dims, derive_seed(seed, "init"));
  log_line(quiet, "pretrain: " + std::to_string(data.split(Split::Pretrain).size()) + " utterances, " +
                      std::to_string(train.total_steps) + " steps");
  auto res = run_phase(init, data.split(Split::Pretrain), data.split(Split::Valid), train);
  CheckpointMeta meta{train.total_steps, data.meta().config.seed, frozen_config(cfg, {"pretrain", false, false, {}}, train, "pretrain"),
                      nlohmann::json(data.meta().languages)};
  write_run(run_dir, meta.config, res.model, meta, res.log, rec);
  return read_run_record(run_dir);
}

/// Fine-tunes (or, for WS, copies) the shared pretrain checkpoint.
inline RunRecord cmd_finetune(CorpusData& data, const ExperimentConfig& cfg, const ExperimentPreset& preset,
                              std::uint64_t seed, const fs::path& from_checkpoint, const fs::path& run_dir,
                              bool quiet = true) {
  if (!fs::exists(from_checkpoint)) throw DataError("missing pretrain checkpoint " + from_checkpoint.string());
  const auto dims = model_dims(cfg, data.meta());
  const auto start = load_checkpoint(from_checkpoint, &dims);
  RunRecord rec;
  rec.run_id = run_dir.filename().string();
  rec.preset = preset.name;
  rec.seed = seed;
  rec.corpus_seed = data.meta().config.seed;
  rec.started_at = timestamp_utc();
  rec.start_checkpoint_digest = file_digest(from_checkpoint);
  rec.test_digest = data.test_digest();
  TrainConfig train = cfg.train;
  train.scheduler = preset.scheduler;
  train.low_lang = data.meta().config.low_lang;
  train.seed = derive_seed(seed, "finetune");
  CheckpointMeta meta{start.meta.step, data.meta().config.seed,
                      frozen_config(cfg, preset, train, preset.finetune ? "finetune" : "pretrain-only"),
                      nlohmann::json(data.meta().languages)};
  if (!preset.finetune) {
    write_run(run_dir, meta.config, start.model, meta, {}, rec);
    return read_run_record(run_dir);
  }
  const auto& split = preset.augmented ? data.augmented_finetune() : data.split(Split::Finetune);
  log_line(quiet, preset.name + ": " + std::to_string(split.size()) + " utterances, " +
                      std::to_string(train.total_steps) + " steps");
  auto res = run_phase(start.model, split, data.split(Split::Valid), train);
  meta.step = start.meta.step + train.total_steps;
  write_run(run_dir, meta.config, res.model, meta, res.log, rec);
  return read_run_record(run_dir);
}

/// Decodes the test split with the run's final checkpoint and writes one
/// evaluation CSV per language under `run_dir/eval/`.
inline std::map<std::string, LanguageEval> cmd_evaluate(CorpusData& data, const ExperimentConfig& cfg,
                                                        const fs::path& run_dir, Split split = Split::Test) {
  if (!fs::exists(run_dir)) throw DataError("no such run: " + run_dir.string());
  if (!fs::exists(run_dir / "ckpt.json")) throw DataError("run " + run_dir.string() + " has no checkpoint");
  const auto dims = model_dims(cfg, data.meta());
  const auto ck = load_checkpoint(run_dir / "ckpt.json", &dims);
  auto evals = evaluate_model(ck.model, data.split(split));
  const std::string run = run_dir.filename().string();
  for (const auto& [lang, e] : evals) write_file(run_dir / "eval" / (lang + ".csv"), format_eval_csv(run, e));
  return evals;
}

// ---------------------------------------------------------------- reports

/// Reads `<run>/eval/<lang>.csv` for every run subdirectory of `runs_dir`.
/// Returns raw WER percentages keyed by run then language.
inline std::map<std::string, std::map<std::string, double>> load_evaluations(const fs::path& runs_dir) {
  std::map<std::string, std::map<std::string, double>> out;
  if (!fs::is_directory(runs_dir)) throw DataError("no runs directory " + runs_dir.string());
  for (const auto& d : fs::directory_iterator(runs_dir)) {
    const fs::path eval = d.path() / "eval";
    if (!fs::is_directory(eval)) continue;
    for (const auto& f : fs::directory_iterator(eval)) {
      if (f.path().extension() != ".csv") continue;
      const auto e = parse_eval_csv(read_file(f.path()), f.path().string());
      out[d.path().filename().string()][e.language] = e.wer_percent();
    }
  }
  return out;
}

/// Orders runs as the preset table does, unknown names last alphabetically.
inline std::vector<std::string> ordered_runs(const std::map<std::string, std::map<std::string, double>>& evals) {
  std::vector<std::string> names;
  for (const auto& p : preset_table())
    if (evals.count(p.name)) names.push_back(p.name);
  for (const auto& [name, _] : evals)
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  return names;
}

inline WerTable build_table(const std::map<std::string, std::map<std::string, double>>& evals) {
  if (evals.empty()) throw DataError("no evaluations found");
  std::vector<std::string> columns;
  for (const auto& [lang, _] : evals.begin()->second) columns.push_back(lang);
  WerTable t(columns);
  for (const auto& name : ordered_runs(evals)) {
    std::vector<double> row;
    for (const auto& c : columns) {
      auto it = evals.at(name).find(c);
      if (it == evals.at(name).end()) throw DataError("run " + name + " has no evaluation for " + c);
      row.push_back(it->second);
    }
    t.add_row(name, row);
  }
  return t;
}

struct Report {
  WerTable table;
  std::vector<ReductionRow> reductions;
  std::string markdown;
};

inline Report render_report(WerTable table, const std::string& baseline, const std::string& low_column,
                            const std::string& title) {
  auto red = reduction_table(table, baseline, low_column);
  std::string md = "# " + title + "\n\n## Word error rate (%)\n\n" + render_table1_markdown(table) +
                   "\n## Relative WER reduction against " + baseline + "\n\n" + render_table2_markdown(red, low_column);
  return {std::move(table), std::move(red), std::move(md)};
}

inline void write_report(const Report& r, const std::string& low_column, const fs::path& out_dir) {
  write_file(out_dir / "report.md", r.markdown);
  write_file(out_dir / "table1.csv", render_table1_csv(r.table));
  write_file(out_dir / "table2.csv", render_table2_csv(r.reductions, low_column));
}

inline Report cmd_report(const fs::path& runs_dir, const fs::path& out_dir, const std::string& low_column,
                         const std::string& baseline = kBaselinePreset) {
  auto evals = load_evaluations(runs_dir);
  if (!evals.count(baseline)) throw DataError("baseline run " + baseline + " missing under " + runs_dir.string());
  Report r = render_report(build_table(evals), baseline, low_column, "Results: " + runs_dir.filename().string());
  write_report(r, low_column, out_dir);
  return r;
}

/// Cell-wise median over several per-seed tables of identical shape.
inline WerTable median_table(const std::vector<WerTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("median_table: no tables");
  WerTable out(tables.front().columns());
  for (const auto& row : tables.front().rows()) {
    std::vector<double> values;
    for (std::size_t c = 0; c < row.values.size(); ++c) {
      std::vector<double> cell;
      for (const auto& t : tables) cell.push_back(t.find(row.name)->values[c]);
      values.push_back(median(cell));
    }
    std::vector<double> means;
    for (const auto& t : tables) means.push_back(t.find(row.name)->mean);
    out.add_row(row.name, values, median(means));
  }
  return out;
}

struct MatrixResult {
  std::vector<std::uint64_t> seeds;
  std::vector<WerTable> per_seed;
  WerTable median{{"-"}};
  std::string low_column;
};

/// All presets for every seed from one shared pretrain checkpoint per seed;
/// writes `runs_root/<seed>/...` plus per-seed and median reports.
inline MatrixResult cmd_matrix(const fs::path& corpus, const std::vector<std::uint64_t>& seeds,
                               const ExperimentConfig& cfg, const fs::path& runs_root, bool quiet = true) {
  if (!fs::exists(corpus / kManifestFile)) throw DataError("no corpus at " + corpus.string());
  if (seeds.empty()) throw std::invalid_argument("matrix: no seeds");
  if (!fs::exists(corpus / kAugmentedDir / kManifestFile)) {
    log_line(quiet, "augmenting low-resource fine-tune split");
    cmd_augment(corpus / kManifestFile, corpus / kAugmentedDir, true, cfg.augment, cfg.augment.seed, quiet);
  }
  CorpusData data(corpus);
  MatrixResult result;
  result.seeds = seeds;
  result.low_column = "L" + std::to_string(data.meta().config.low_lang);
  std::vector<std::string> completed;
  for (std::uint64_t seed : seeds) {
    const fs::path seed_dir = runs_root / std::to_string(seed);
    try {
      cmd_pretrain(data, cfg, seed, seed_dir / "pretrain", quiet);
      for (const auto& preset : preset_table()) {
        const fs::path dir = seed_dir / preset.name;
        cmd_finetune(data, cfg, preset, seed, seed_dir / "pretrain" / "ckpt.json", dir, quiet);
        cmd_evaluate(data, cfg, dir);
        completed.push_back(std::to_string(seed) + "/" + preset.name);
      }
    } catch (const std::exception& ex) {
      std::string summary = "matrix aborted (seed " + std::to_string(seed) + "): " + ex.what() + "\ncompleted:";
      for (const auto& c : completed) summary += " " + c;
      if (dynamic_cast<const DivergenceError*>(&ex)) throw DivergenceError(summary);
      if (dynamic_cast<const DataError*>(&ex)) throw DataError(summary);
      throw std::runtime_error(summary);
    }
    auto r = cmd_report(seed_dir, seed_dir, result.low_column);
    log_line(quiet, r.markdown);
    result.per_seed.push_back(r.table);
  }
  result.median = median_table(result.per_seed);
  Report med = render_report(result.median, kBaselinePreset, result.low_column,
                             "Median over " + std::to_string(seeds.size()) + " seeds");
  write_report(med, result.low_column, runs_root / "median");
  log_line(quiet, med.markdown);
  return result;
}

}  // namespace lwce
