// Command-line front end: synth, augment, pretrain, finetune, evaluate,
// report, matrix.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lwce/harness.hpp"

namespace fs = std::filesystem;
using namespace lwce;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw std::invalid_argument("--seeds needs at least one value");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-weighted cross-entropy experiments on a synthetic multilingual benchmark"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::uint64_t seed = 1;
  bool seed_given = false;
  bool force = false;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_option("--out", out, "output directory");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& v) { seed = v; seed_given = true; }, "random seed");
  app.add_flag("--force", force, "overwrite a non-empty output directory");
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  int low_lang = -1;
  double low_fraction = -1.0;
  synth->add_option("--low-lang", low_lang, "id of the low-resource language");
  synth->add_option("--low-fraction", low_fraction, "low-resource share of the per-language pretrain count");

  auto* augment = app.add_subcommand("augment", "add one augmented copy per selected fine-tune utterance");
  std::string manifest;
  std::string filter = "low";
  std::vector<double> stretch, gain, sigma;
  std::vector<int> pitch;
  augment->add_option("--manifest", manifest, "input manifest.jsonl")->required();
  augment->add_option("--filter", filter, "low|all")->check(CLI::IsMember({"low", "all"}));
  augment->add_option("--stretch-range", stretch, "min max time-stretch rate")->expected(2);
  augment->add_option("--gain-range-db", gain, "min max gain in dB")->expected(2);
  augment->add_option("--pitch-range", pitch, "min max pitch shift in semitones")->expected(2);
  augment->add_option("--noise-sigma-range", sigma, "min max Gaussian noise sigma")->expected(2);

  std::string corpus;
  std::string preset;
  std::string from;
  std::string run;
  std::string weighting;
  double weight = 1.0;
  std::int64_t steps = -1;
  auto* pretrain = app.add_subcommand("pretrain", "train the shared starting checkpoint");
  pretrain->add_option("--corpus", corpus, "corpus directory")->required();
  pretrain->add_option("--steps", steps, "number of SGD steps");

  auto* finetune = app.add_subcommand("finetune", "fine-tune from the pretrain checkpoint");
  finetune->add_option("--corpus", corpus, "corpus directory")->required();
  finetune->add_option("--preset", preset, "one of the preset names");
  finetune->add_option("--from", from, "starting checkpoint (ckpt.json)")->required();
  finetune->add_option("--weighting", weighting, "none|constant|linear|dynamic (instead of --preset)");
  finetune->add_option("--weight", weight, "weight for --weighting constant");
  finetune->add_option("--steps", steps, "number of SGD steps");

  auto* evaluate = app.add_subcommand("evaluate", "decode a split with a run's checkpoint");
  std::string split_name = "test";
  evaluate->add_option("--corpus", corpus, "corpus directory")->required();
  evaluate->add_option("--run", run, "run directory")->required();
  evaluate->add_option("--split", split_name, "split to decode")->check(CLI::IsMember({"test", "valid"}));

  auto* report = app.add_subcommand("report", "tabulate the runs of one seed directory");
  std::string runs;
  std::string baseline = kBaselinePreset;
  std::string low_column;
  report->add_option("--runs", runs, "directory holding one subdirectory per run")->required();
  report->add_option("--baseline", baseline, "baseline run name");
  report->add_option("--low-lang", low_column, "column name of the low-resource language (e.g. L1)")->required();

  auto* matrix = app.add_subcommand("matrix", "run every preset for each seed and report");
  std::string seeds = "1,2,3";
  matrix->add_option("--corpus", corpus, "corpus directory")->required();
  matrix->add_option("--seeds", seeds, "comma-separated seeds");
  matrix->add_option("--steps", steps, "number of SGD steps per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (steps > 0) {
      cfg.train.total_steps = steps;
      cfg.train.eval_every = std::min(cfg.train.eval_every, steps);
    }

    if (*synth) {
      if (out.empty()) throw std::invalid_argument("synth needs --out");
      if (seed_given) cfg.corpus.seed = seed;
      if (low_lang >= 0) cfg.corpus.low_lang = low_lang;
      if (low_fraction > 0) cfg.corpus.low_pretrain_fraction = low_fraction;
      cmd_synth(cfg.corpus, out, force, quiet);
    } else if (*augment) {
      if (out.empty()) throw std::invalid_argument("augment needs --out");
      if (!stretch.empty()) cfg.augment.stretch_range = {stretch[0], stretch[1]};
      if (!gain.empty()) cfg.augment.gain_range_db = {gain[0], gain[1]};
      if (!pitch.empty()) cfg.augment.pitch_range_semitones = {pitch[0], pitch[1]};
      if (!sigma.empty()) cfg.augment.noise_sigma_range = {sigma[0], sigma[1]};
      if (seed_given) cfg.augment.seed = seed;
      const auto res = cmd_augment(manifest, out, filter == "low", cfg.augment, cfg.augment.seed, quiet);
      if (!res.failures.empty()) {
        std::cerr << res.failures.size() << " of " << res.selected << " entries failed\n";
        return kData;
      }
    } else if (*pretrain) {
      if (out.empty()) throw std::invalid_argument("pretrain needs --out (run directory)");
      CorpusData data(corpus);
      cmd_pretrain(data, cfg, seed, out, quiet);
    } else if (*finetune) {
      if (out.empty()) throw std::invalid_argument("finetune needs --out (run directory)");
      ExperimentPreset p;
      if (!preset.empty()) {
        p = find_preset(preset);
      } else if (!weighting.empty()) {
        p.name = fs::path(out).filename().string();
        p.scheduler.mode = weighting_mode_from_string(weighting);
        p.scheduler.constant = weight;
        p.scheduler.linear = cfg.train.scheduler.linear;
        p.scheduler.dynamic = cfg.train.scheduler.dynamic;
      } else {
        throw std::invalid_argument("finetune needs --preset or --weighting");
      }
      CorpusData data(corpus);
      cmd_finetune(data, cfg, p, seed, from, out, quiet);
    } else if (*evaluate) {
      CorpusData data(corpus);
      const Split s = split_name == "valid" ? Split::Valid : Split::Test;
      for (const auto& [lang, e] : cmd_evaluate(data, cfg, run, s)) {
        log_line(quiet, lang + " " + format_2dp(e.wer_percent()) + "%");
      }
    } else if (*report) {
      const fs::path dest = out.empty() ? fs::path(runs) : fs::path(out);
      log_line(quiet, cmd_report(runs, dest, low_column, baseline).markdown);
    } else if (*matrix) {
      const fs::path dest = out.empty() ? fs::path("runs") : fs::path(out);
      cmd_matrix(corpus, parse_seeds(seeds), cfg, dest, quiet);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
