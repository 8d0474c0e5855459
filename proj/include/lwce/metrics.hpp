#pragma once

// Word error rate via unit-cost edit distance, table aggregation and the
// relative-reduction arithmetic used to compare runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lwce {

struct EditCounts {
  std::int64_t substitutions = 0;
  std::int64_t deletions = 0;
  std::int64_t insertions = 0;
  std::int64_t ref_len = 0;

  std::int64_t edits() const { return substitutions + deletions + insertions; }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

/// Minimal edits turning `hyp` into `ref`. Among equal-cost alignments the
/// backtrace prefers substitution, then insertion, then deletion.
template <typename T>
EditCounts edit_distance(std::span<const T> ref, std::span<const T> hyp) {
  if (ref.empty()) throw std::invalid_argument("edit_distance: empty reference");
  const std::size_t m = ref.size(), n = hyp.size();
  std::vector<std::int64_t> d((m + 1) * (n + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::int64_t& { return d[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = static_cast<std::int64_t>(i);
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::int64_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }
  EditCounts c;
  c.ref_len = static_cast<std::int64_t>(m);
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    const std::int64_t cur = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && cur == at(i - 1, j - 1)) {
      --i, --j;
    } else if (i > 0 && j > 0 && cur == at(i - 1, j - 1) + 1) {
      ++c.substitutions;
      --i, --j;
    } else if (j > 0 && cur == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

inline EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return edit_distance(std::span<const std::string>(ref), std::span<const std::string>(hyp));
}

/// Symbol-level distance between two strings (each character is a token).
inline EditCounts edit_distance(const std::string& ref, const std::string& hyp) {
  return edit_distance(std::span<const char>(ref.data(), ref.size()), std::span<const char>(hyp.data(), hyp.size()));
}

/// Error rate as a fraction; may exceed 1 with many insertions.
inline double wer(const EditCounts& c) {
  if (c.ref_len <= 0) throw std::invalid_argument("wer: empty reference");
  return static_cast<double>(c.edits()) / static_cast<double>(c.ref_len);
}

/// Pooled error rate over (ref, hyp) pairs: total edits / total reference
/// length.
template <typename Seq>
double corpus_wer(std::span<const std::pair<Seq, Seq>> pairs) {
  if (pairs.empty()) throw std::invalid_argument("corpus_wer: no pairs");
  std::int64_t edits = 0, len = 0;
  for (const auto& [ref, hyp] : pairs) {
    const auto c = edit_distance(ref, hyp);
    edits += c.edits();
    len += c.ref_len;
  }
  return static_cast<double>(edits) / static_cast<double>(len);
}

/// (base - new) / base in percent; negative when `new_wer` is worse.
inline double relative_reduction(double base_wer, double new_wer) {
  if (!(base_wer > 0.0)) throw std::invalid_argument("relative_reduction: base WER must be positive");
  return (base_wer - new_wer) / base_wer * 100.0;
}

inline double row_mean(std::span<const double> wers) {
  if (wers.empty()) throw std::invalid_argument("row_mean: empty row");
  double s = 0.0;
  for (double w : wers) s += w;
  return s / static_cast<double>(wers.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Rounds to two decimals, ties to even. Values within 1e-9 of a decimal tie
/// (13.015 stored as 13.01499...) count as ties.
inline double round_2dp(double x) {
  const double scaled = x * 100.0;
  const double fl = std::floor(scaled);
  const double frac = scaled - fl;
  double r;
  if (std::fabs(frac - 0.5) < 1e-9) {
    r = std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
  } else {
    r = std::round(scaled);
  }
  return r / 100.0;
}

inline std::string format_2dp(double x) {
  if (std::isnan(x)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round_2dp(x));
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

/// Per-model rows of per-language WER (%) with a Mean column.
class WerTable {
 public:
  struct Row {
    std::string name;
    std::vector<double> values;
    double mean = 0.0;
  };

  explicit WerTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
    if (columns_.empty()) throw std::invalid_argument("WerTable: no columns");
  }

  /// Adds a row; the Mean is the row average unless given explicitly (as when
  /// transcribing a reference table).
  void add_row(std::string name, std::vector<double> values, std::optional<double> mean = std::nullopt) {
    if (values.size() != columns_.size()) throw std::invalid_argument("WerTable: row width mismatch for " + name);
    if (find(name)) throw std::invalid_argument("WerTable: duplicate row " + name);
    const double m = mean ? *mean : row_mean(values);
    rows_.push_back({std::move(name), std::move(values), m});
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<Row>& rows() const { return rows_; }

  const Row* find(const std::string& name) const {
    for (const auto& r : rows_)
      if (r.name == name) return &r;
    return nullptr;
  }

  std::size_t column_index(const std::string& col) const {
    auto it = std::find(columns_.begin(), columns_.end(), col);
    if (it == columns_.end()) throw std::invalid_argument("WerTable: no column " + col);
    return static_cast<std::size_t>(it - columns_.begin());
  }

 private:
  std::vector<std::string> columns_;
  std::vector<Row> rows_;
};

/// Reductions of one row against the baseline row, computed from the
/// two-decimal values a reader of Table 1 sees. NaN where the baseline is 0.
struct ReductionRow {
  std::string name;
  double target_reduction = 0.0;   // on the designated column
  double average_reduction = 0.0;  // on the Mean column
};

inline std::vector<ReductionRow> reduction_table(const WerTable& t, const std::string& baseline,
                                                 const std::string& target_column) {
  const auto* base = t.find(baseline);
  if (!base) throw std::invalid_argument("reduction table: missing baseline row " + baseline);
  const std::size_t col = t.column_index(target_column);
  std::vector<ReductionRow> out;
  for (const auto& r : t.rows()) {
    auto reduce = [](double b, double v) {
      b = round_2dp(b);
      return b > 0.0 ? relative_reduction(b, round_2dp(v)) : std::numeric_limits<double>::quiet_NaN();
    };
    out.push_back({r.name, reduce(base->values[col], r.values[col]), reduce(base->mean, r.mean)});
  }
  return out;
}

inline std::string render_table1_markdown(const WerTable& t) {
  std::string s = "| Model |";
  for (const auto& c : t.columns()) s += " " + c + " |";
  s += " Mean |\n|---|";
  for (std::size_t i = 0; i < t.columns().size(); ++i) s += "---|";
  s += "---|\n";
  for (const auto& r : t.rows()) {
    s += "| " + r.name + " |";
    for (double v : r.values) s += " " + format_2dp(v) + " |";
    s += " " + format_2dp(r.mean) + " |\n";
  }
  return s;
}

inline std::string render_table1_csv(const WerTable& t) {
  std::string s = "model";
  for (const auto& c : t.columns()) s += "," + c;
  s += ",mean\n";
  for (const auto& r : t.rows()) {
    s += r.name;
    for (double v : r.values) s += "," + format_2dp(v);
    s += "," + format_2dp(r.mean) + "\n";
  }
  return s;
}

inline std::string render_table2_markdown(const std::vector<ReductionRow>& rows, const std::string& target_column) {
  std::string s = "| Model | " + target_column + " Reduction | Average Reduction |\n|---|---|---|\n";
  for (const auto& r : rows) {
    auto pct = [](double v) { return std::isnan(v) ? std::string("n/a") : format_2dp(v) + "%"; };
    s += "| " + r.name + " | " + pct(r.target_reduction) + " | " + pct(r.average_reduction) + " |\n";
  }
  return s;
}

inline std::string render_table2_csv(const std::vector<ReductionRow>& rows, const std::string& target_column) {
  std::string s = "model," + target_column + "_reduction,average_reduction\n";
  for (const auto& r : rows) {
    s += r.name + "," + format_2dp(r.target_reduction) + "," + format_2dp(r.average_reduction) + "\n";
  }
  return s;
}

}  // namespace lwce
