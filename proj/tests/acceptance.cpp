// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "lwce/harness.hpp"
#include "reference_tables.hpp"
#include "test_util.hpp"

using namespace lwce;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// --------------------------------------------------------------- 1

Outcome loss_equivalence() {
  Outcome o;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    std::vector<SentenceSample> batch;
    const int n = 1 + static_cast<int>(rng() % 16);
    for (int i = 0; i < n; ++i) batch.push_back(lwce::testing::random_sample(rng, 20, 12, 6));
    LanguageWeights ones;
    for (int l = 0; l < 6; ++l) ones.set(l, 1.0);
    for (Reduction r : {Reduction::MeanTokens, Reduction::SumTokens}) {
      double plain = 0.0;
      for (const auto& s : batch) plain += sentence_cross_entropy(s, r);
      plain /= n;
      worst = std::max(worst, std::fabs(weighted_batch_loss(batch, ones, r).weighted_mean - plain));
    }
  }
  o.check(worst <= 1e-12, "max deviation " + fmt(worst));
  o.detail = o.pass ? "100 batches, max |diff| " + fmt(worst) : o.detail;
  return o;
}

// --------------------------------------------------------------- 2

WeightScheduler scheduler_for(WeightingMode mode) {
  WeightScheduler s;
  s.mode = mode;
  s.constant = 3.0;
  s.linear = {4.0, 5.0, 4000, 8000};
  s.dynamic = {1.5, 10.0};
  return s;
}

double rel_err(double a, double n) { return lwce::testing::max_relative_error(a, n, 1e-6); }

Outcome gradient_fidelity() {
  Outcome o;
  const double h = 1e-5;
  std::mt19937_64 rng(202);
  double worst_loss = 0.0, worst_model = 0.0;
  int instances = 0;
  for (WeightingMode mode : {WeightingMode::None, WeightingMode::Constant, WeightingMode::Linear, WeightingMode::Dynamic}) {
    const auto sched = scheduler_for(mode);
    for (int k = 0; k < 20; ++k, ++instances) {
      // loss module: logits -> weighted batch loss
      std::vector<SentenceSample> batch;
      const int n = 2 + static_cast<int>(rng() % 3);
      for (int i = 0; i < n; ++i) batch.push_back(lwce::testing::random_sample(rng, 6, 6, 3, 5));
      batch[0].language = 1;
      batch[1].language = 0;
      std::vector<double> per;
      for (const auto& s : batch) per.push_back(sentence_cross_entropy(s, Reduction::MeanTokens));
      const auto dec = decide_batch_weight(batch, per, 4000 + static_cast<std::int64_t>(rng() % 4001), sched, 1);
      LanguageWeights w;
      w.set(1, dec.decision.value);
      const Reduction red = k % 2 ? Reduction::SumTokens : Reduction::MeanTokens;
      const auto g = loss_gradient(batch, w, red);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        for (std::size_t i = 0; i < batch[j].logits.size(); ++i) {
          double& v = batch[j].logits.data()[i];
          const double keep = v;
          v = keep + h;
          const double up = weighted_batch_loss(batch, w, red).weighted_mean;
          v = keep - h;
          const double down = weighted_batch_loss(batch, w, red).weighted_mean;
          v = keep;
          worst_loss = std::max(worst_loss, rel_err(g[j].data()[i], (up - down) / (2 * h)));
        }
      }

      // end to end: parameter change of one train_step against the loss surface
      ModelDims d;
      d.n_langs = 3;
      d.context = static_cast<int>(rng() % 2);
      d.hidden = 2 + static_cast<int>(rng() % 7);
      auto m = init_model(d, rng());
      std::vector<TrainExample> exs;
      const int ne = 2 + static_cast<int>(rng() % 2);
      for (int i = 0; i < ne; ++i) {
        TrainExample ex;
        const std::size_t t = 2 + rng() % 8;
        ex.features = lwce::testing::random_matrix(rng, t, 8, 1.5);
        for (std::size_t f = 0; f < t; ++f) ex.labels.push_back(static_cast<int>(rng() % 8));
        ex.language = i == 0 ? 1 : static_cast<int>(rng() % 3);
        exs.push_back(std::move(ex));
      }
      exs[1].language = 0;
      std::vector<const TrainExample*> ptrs;
      for (const auto& e : exs) ptrs.push_back(&e);
      const std::int64_t step = 4000 + static_cast<std::int64_t>(rng() % 4001);
      auto stepped = m;
      const auto rec = train_step(stepped, ptrs, step, sched, 1, 1.0);
      LanguageWeights wm;
      wm.set(1, rec.decision.value);
      auto loss_at = [&](const AcousticModel& mm) {
        std::vector<SentenceSample> s;
        for (const auto* e : ptrs) s.push_back({forward(mm, e->features, e->language), e->labels, e->language});
        return weighted_batch_loss(s, wm, Reduction::MeanTokens).weighted_mean;
      };
      std::vector<double> before, after;
      m.for_each_tensor([&](std::span<const double> t) { before.insert(before.end(), t.begin(), t.end()); });
      stepped.for_each_tensor([&](std::span<const double> t) { after.insert(after.end(), t.begin(), t.end()); });
      std::size_t idx = 0;
      m.for_each_tensor([&](std::span<double> p) {
        for (double& v : p) {
          const double keep = v;
          v = keep + h;
          const double up = loss_at(m);
          v = keep - h;
          const double down = loss_at(m);
          v = keep;
          worst_model = std::max(worst_model, rel_err(before[idx] - after[idx], (up - down) / (2 * h)));
          ++idx;
        }
      });
    }
  }
  o.check(worst_loss < 1e-4, "loss-module rel err " + fmt(worst_loss));
  o.check(worst_model < 1e-4, "train_step rel err " + fmt(worst_model));
  if (o.pass) {
    o.detail = std::to_string(instances) + " instances (20 per mode); max rel err loss " + fmt(worst_loss, 3) +
               ", train_step " + fmt(worst_model, 3);
  }
  return o;
}

// --------------------------------------------------------------- 3

Outcome linear_presets() {
  Outcome o;
  const LinearSchedule lp{4.0, 5.0, 4000, 8000};
  const LinearSchedule lp_gl{2.0, 5.0, 4000, 8000};
  auto near = [&](double got, double want, const std::string& what) {
    o.check(std::fabs(got - want) <= 1e-12, what + " = " + fmt(got, 17) + ", want " + fmt(want));
  };
  near(linear_weight(lp, 3999).value, 1.0, "LP(3999)");
  near(linear_weight(lp, 4000).value, 4.0, "LP(4000)");
  near(linear_weight(lp, 8000).value, 5.0, "LP(8000)");
  near(linear_weight(lp_gl, 6000).value, 3.5, "LP-GL+(6000)");
  if (o.pass) o.detail = "1 @3999, 4 @4000, 5 @8000, 3.5 @6000";
  return o;
}

// --------------------------------------------------------------- 4

Outcome dynamic_branches() {
  Outcome o;
  const DynamicSchedule da{1.5, 10.0};
  const std::vector<std::tuple<double, double, double>> cases{{0.5, 1.0, 1.0}, {2.0, 1.0, 2.0}, {1.0, 1.0, 1.5}};
  for (const auto& [low, high, want] : cases) {
    for (double c : {0.01, 1.0, 100.0}) {
      const double got = dynamic_weight(da, low * c, high * c).value;
      o.check(got == want, "(" + fmt(low) + ", " + fmt(high) + ") x " + fmt(c) + " -> " + fmt(got, 17));
    }
  }
  if (o.pass) o.detail = "(0.5,1)->1, (2,1)->2, (1,1)->1.5; exact under x0.01, x1, x100";
  return o;
}

// --------------------------------------------------------------- 5

Outcome table_reproduction() {
  Outcome o;
  using lwce::testing::kReferenceTable1;
  using lwce::testing::kReferenceTable2;
  const double tol = 0.02;
  for (const auto& r : kReferenceTable1) {
    const double m = row_mean(r.wers);
    o.check(std::fabs(m - r.mean) <= tol, r.name + " mean " + fmt(m) + " vs " + fmt(r.mean));
  }
  const auto rows = reduction_table(lwce::testing::reference_wer_table(true), "WS-FT", "Galician");
  for (const auto& want : kReferenceTable2) {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.name == want.name; });
    if (it == rows.end()) {
      o.check(false, "missing row " + want.name);
      continue;
    }
    o.check(std::fabs(it->target_reduction - want.target) <= tol,
            want.name + " target " + format_2dp(it->target_reduction) + " vs " + fmt(want.target));
    o.check(std::fabs(it->average_reduction - want.average) <= tol,
            want.name + " average " + format_2dp(it->average_reduction) + " vs " + fmt(want.average));
  }
  const double vs_ws = relative_reduction(41.20, 21.07);
  const double avg_vs_ws = relative_reduction(19.17, 12.94);
  o.check(std::fabs(vs_ws - 48.86) <= tol, "48.86 -> " + format_2dp(vs_ws));
  o.check(std::fabs(avg_vs_ws - 32.5) <= tol, "32.5 -> " + format_2dp(avg_vs_ws));
  if (o.pass) o.detail = "6 row means, 10 reduction cells, 48.86% and 32.50% within 0.02 pp";
  return o;
}

// --------------------------------------------------------------- 6

std::int64_t dp_oracle(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::int64_t>> d(a.size() + 1, std::vector<std::int64_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

Outcome wer_oracle() {
  Outcome o;
  std::mt19937_64 rng(606);
  int mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    auto draw = [&](std::size_t lo) {
      std::string s;
      const std::size_t n = lo + rng() % (11 - lo);
      for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('A' + rng() % 5));
      return s;
    };
    const auto ref = draw(1), hyp = draw(0);
    const auto c = edit_distance(ref, hyp);
    if (c.edits() != dp_oracle(ref, hyp) ||
        c.ref_len - c.deletions + c.insertions != static_cast<std::int64_t>(hyp.size()))
      ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " of 1000 pairs disagree");
  if (o.pass) o.detail = "1000 random pairs agree";
  return o;
}

// --------------------------------------------------------------- 7

AudioClip tone(double f, double seconds) {
  AudioClip c;
  for (std::size_t i = 0; i < static_cast<std::size_t>(seconds * 16000); ++i)
    c.samples.push_back(0.3 * std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 16000.0));
  return c;
}

Outcome dsp_invariants() {
  Outcome o;
  const double frame = static_cast<double>(StretchGeometry::for_rate(16000).frame);
  auto dom = [](const AudioClip& c) { return dominant_frequency(c.samples, c.sample_rate, 100.0, 3000.0, 1.0); };

  const auto t = tone(440, 1.0);
  const auto g = apply_gain(t, 6.0206);
  double gerr = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) gerr = std::max(gerr, std::fabs(g.samples[i] - 2.0 * t.samples[i]));
  o.check(gerr <= 1e-8, "gain 6.0206 dB max err " + fmt(gerr));
  // 10^(6.0206/20) = 2 + 2e-8; the 1e-9 bound uses 20*log10(2)
  const auto g2 = apply_gain(t, 20.0 * std::log10(2.0));
  double gerr2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) gerr2 = std::max(gerr2, std::fabs(g2.samples[i] - 2.0 * t.samples[i]));
  o.check(gerr2 <= 1e-9, "exact doubling gain err " + fmt(gerr2));

  const auto base = tone(500, 1.0);
  const auto up = pitch_shift(base, 12);
  o.check(std::fabs(dom(up) - 1000.0) <= 20.0, "pitch +12 dominant " + fmt(dom(up)));
  o.check(std::fabs(static_cast<double>(up.size()) - 16000.0) <= 160.0, "pitch +12 length " + std::to_string(up.size()));

  const auto fast = time_stretch(tone(600, 1.0), 2.0);
  o.check(std::fabs(static_cast<double>(fast.size()) - 8000.0) <= frame, "stretch x2 length " + std::to_string(fast.size()));
  o.check(std::fabs(dom(fast) - 600.0) <= 12.0, "stretch x2 dominant " + fmt(dom(fast)));

  const AugmentSpec spec;
  bool same = add_gaussian_noise(base, 0.01, 9) == add_gaussian_noise(base, 0.01, 9) &&
              time_stretch(base, 1.07) == time_stretch(base, 1.07) && pitch_shift(base, -2) == pitch_shift(base, -2) &&
              apply_gain(base, -3.0) == apply_gain(base, -3.0) && augment_clip(base, spec, 4) == augment_clip(base, spec, 4);
  o.check(same, "transforms not bit-deterministic");
  if (o.pass) o.detail = "gain x2 err " + fmt(gerr2, 3) + ", pitch +12 -> " + fmt(dom(up), 5) + " Hz, stretch x2 -> " +
                         std::to_string(fast.size()) + " samples";
  return o;
}

// --------------------------------------------------------------- 8, 9, 10

bool corpus_matches(const fs::path& dir, const CorpusConfig& cfg) {
  if (!fs::exists(dir / kManifestFile) || !fs::exists(dir / kCorpusMetaFile)) return false;
  try {
    return nlohmann::json(read_corpus_meta(dir).config) == nlohmann::json(cfg);
  } catch (const std::exception&) {
    return false;
  }
}

Outcome dataset_doubling(const fs::path& corpus, const ExperimentConfig& cfg) {
  Outcome o;
  const auto res = cmd_augment(corpus / kManifestFile, corpus / kAugmentedDir, true, cfg.augment, cfg.augment.seed);
  const auto before = count_by_split_lang(read_manifest(corpus / kManifestFile));
  const auto after = count_by_split_lang(res.manifest);
  const std::string low = "L" + std::to_string(cfg.corpus.low_lang);
  const auto low_key = std::make_pair(std::string("finetune"), low);
  o.check(before.at(low_key) == 500, "LOW fine-tune before " + std::to_string(before.at(low_key)));
  o.check(after.at(low_key) == 1000, "LOW fine-tune after " + std::to_string(after.at(low_key)));
  o.check(res.failures.empty(), std::to_string(res.failures.size()) + " augmentation failures");
  for (const auto& [k, n] : before) {
    if (k == low_key) continue;
    o.check(after.count(k) && after.at(k) == n, k.first + "/" + k.second + " changed");
  }
  o.check(after.size() == before.size(), "new split/language groups appeared");
  if (o.pass) o.detail = low + " fine-tune 500 -> 1000, " + std::to_string(before.size() - 1) + " other groups unchanged";
  return o;
}

double high_mean(const WerTable::Row& r, const std::vector<std::string>& cols, const std::string& low) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i] != low) s += r.values[i], ++n;
  return s / n;
}

Outcome replication(const MatrixResult& mr) {
  Outcome o;
  const std::string low = mr.low_column;
  std::ostringstream info;
  // (a)
  bool a = true;
  for (std::size_t k = 0; k < mr.per_seed.size(); ++k) {
    const auto& t = mr.per_seed[k];
    const auto* ws = t.find("WS");
    const std::size_t li = t.column_index(low);
    for (std::size_t i = 0; i < ws->values.size(); ++i)
      if (i != li && ws->values[i] >= ws->values[li]) a = false;
    info << " seed " << mr.seeds[k] << " WS " << low << "=" << format_2dp(ws->values[li]) << ";";
  }
  o.check(a, "(a) WS low-resource WER is not the worst entry for every seed");

  const auto& med = mr.median;
  const std::size_t li = med.column_index(low);
  const double ft_low = med.find("WS-FT")->values[li];
  const double da_low = med.find("WS-FT-DA-WCE-GL+")->values[li];
  const double lp_low = med.find("WS-FT-LP-WCE")->values[li];
  info << " median " << low << ": WS-FT " << format_2dp(ft_low) << ", DA-GL+ " << format_2dp(da_low) << ", LP "
       << format_2dp(lp_low) << ";";
  // (b)
  if (ft_low <= 0.0) {
    o.check(false, "(b) WS-FT low-resource median WER is 0, no reduction possible");
  } else {
    const double red = relative_reduction(ft_low, da_low);
    o.check(da_low < ft_low && red >= 5.0, "(b) DA-GL+ low-resource reduction " + format_2dp(red) + "% < 5%");
  }
  // (c)
  std::vector<double> ft_high, da_high;
  for (const auto& t : mr.per_seed) {
    ft_high.push_back(high_mean(*t.find("WS-FT"), t.columns(), low));
    da_high.push_back(high_mean(*t.find("WS-FT-DA-WCE-GL+"), t.columns(), low));
  }
  const double dh = median(da_high) - median(ft_high);
  info << " HIGH mean: WS-FT " << format_2dp(median(ft_high)) << ", DA-GL+ " << format_2dp(median(da_high));
  o.check(dh <= 1.0, "(c) DA-GL+ HIGH mean exceeds WS-FT by " + format_2dp(dh) + " pp");
  // (d)
  o.check(lp_low < ft_low, "(d) LP-WCE low-resource median " + format_2dp(lp_low) + " not below WS-FT " +
                                format_2dp(ft_low));
  o.detail = o.pass ? info.str().substr(1) : o.detail + " |" + info.str();
  return o;
}

Outcome determinism(const fs::path& corpus, const ExperimentConfig& cfg, const fs::path& runs, const fs::path& work,
                    std::uint64_t seed) {
  Outcome o;
  CorpusData data(corpus);
  const std::string preset = "WS-FT-DA-WCE-GL+";
  const fs::path again = work / "repeat" / std::to_string(seed) / preset;
  fs::remove_all(work / "repeat");
  cmd_finetune(data, cfg, find_preset(preset), seed, runs / std::to_string(seed) / "pretrain" / "ckpt.json", again);
  const auto evals = cmd_evaluate(data, cfg, again);
  int differing = 0;
  for (const auto& [lang, _] : evals) {
    const auto name = lang + ".csv";
    if (read_file(again / "eval" / name) != read_file(runs / std::to_string(seed) / preset / "eval" / name)) ++differing;
  }
  o.check(differing == 0, std::to_string(differing) + " evaluation CSVs differ");
  if (o.pass) o.detail = preset + " seed " + std::to_string(seed) + ": " + std::to_string(evals.size()) + " CSVs byte-identical";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  std::string seeds = "1,2,3";
  app.add_option("--work", work, "working directory for the end-to-end criteria");
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--seeds", seeds, "seeds for the replication matrix");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  const ExperimentConfig cfg;
  const fs::path work_dir = fs::absolute(work);
  const fs::path corpus = work_dir / "corpus";
  const fs::path runs = work_dir / "runs";
  std::vector<std::uint64_t> seed_list;
  {
    std::stringstream ss(seeds);
    for (std::string s; std::getline(ss, s, ',');) seed_list.push_back(std::stoull(s));
  }

  int failed = 0;
  auto report = [&](int k, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k, name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "loss equivalence", loss_equivalence);
  report(2, "gradient fidelity", gradient_fidelity);
  report(3, "linear schedule presets", linear_presets);
  report(4, "dynamic weight branches", dynamic_branches);
  report(5, "table reproduction", table_reproduction);
  report(6, "WER oracle", wer_oracle);
  report(7, "DSP invariants", dsp_invariants);

  if (wanted(8) || wanted(9) || wanted(10)) {
    if (!corpus_matches(corpus, cfg.corpus)) {
      std::printf("generating default corpus under %s\n", corpus.string().c_str());
      std::fflush(stdout);
      cmd_synth(cfg.corpus, corpus, true);
    }
  }
  report(8, "dataset doubling", [&] { return dataset_doubling(corpus, cfg); });

  MatrixResult mr;
  bool have_matrix = false;
  if (wanted(9) || wanted(10)) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fs::remove_all(runs);
      mr = cmd_matrix(corpus, seed_list, cfg, runs);
      have_matrix = true;
    } catch (const std::exception& ex) {
      std::printf("matrix failed: %s\n", ex.what());
    }
    std::printf("matrix over seeds %s finished in %.0fs; median report at %s\n", seeds.c_str(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                (runs / "median" / "report.md").string().c_str());
    std::fflush(stdout);
  }
  report(9, "end-to-end replication", [&] {
    if (!have_matrix) return Outcome{false, "matrix did not complete"};
    return replication(mr);
  });
  report(10, "determinism", [&] {
    if (!have_matrix) return Outcome{false, "matrix did not complete"};
    return determinism(corpus, cfg, runs, work_dir, seed_list.front());
  });

  std::printf("%d criteria failed\n", failed);
  return failed;
}
