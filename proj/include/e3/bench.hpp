#pragma once

// Benchmark harness: per-query trimmed-mean latencies of original and
// rewritten SQL, equivalence and improvement flags, aggregate statistics and
// report files.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "e3/db.hpp"

namespace e3::bench {

struct CorpusEntry {
  std::string query_id;
  std::string sql;
  std::vector<std::string> tags;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::string source;
};

// One {"query_id","sql","tags"?} object per line. Throws Schema on
// malformed lines, duplicate ids, unparsable SQL or an empty corpus; Io when
// unreadable.
Corpus load_corpus(const std::string& path);

struct SystemOutput {
  std::string sql;
  bool used_original = false;
};

using RewriteSystem = std::function<SystemOutput(const CorpusEntry&)>;

RewriteSystem identity_system();

// Replay file: {"query_id","rewritten_sql"} per line; ids absent from the
// file keep the original. Throws Schema / Io.
RewriteSystem replay_system(const std::string& path);

struct QueryRecord {
  std::string query_id;
  std::string original_sql;
  std::string rewritten_sql;
  bool used_original = false;
  double original_s = 0;   // trimmed mean, capped
  double rewritten_s = 0;  // trimmed mean, capped
  bool original_timed_out = false;
  bool rewritten_timed_out = false;
  bool equivalent = false;
  bool improved = false;
  bool failed = false;  // excluded from latency aggregates
  std::string note;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct LatencySummary {
  double average = 0;
  double median = 0;
  double p90 = 0;

  friend bool operator==(const LatencySummary&, const LatencySummary&) = default;
};

struct BenchReport {
  std::string system_label;
  std::vector<QueryRecord> records;
  LatencySummary original;
  LatencySummary rewritten;
  double equivalence_rate = 0;  // over all records
  int improved_count = 0;
  int failed_count = 0;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

// Nearest rank: the ceil(0.9 n)-th smallest value. Throws EmptyInput.
double percentile_p90(std::vector<double> values);
// Mean of the two middle values for even n. Throws EmptyInput.
double median(std::vector<double> values);
double mean(const std::vector<double>& values);

struct BenchConfig {
  std::string system_label = "system";
  int runs = 5;
  double improve_ratio = 0.9;  // improved iff rewritten <= ratio * original
  bool check_equivalence = true;
};

// Recomputes aggregates, the equivalence rate and counts from the records.
void summarize(BenchReport& report);

// Sequential, in corpus order. Per-query failures are recorded and skipped.
BenchReport run_bench(const Corpus& corpus, db::Database& db, const RewriteSystem& system,
                      const BenchConfig& cfg = {});

// Rows "Origin" and the system label with Average/Median/p90 columns in
// seconds, then the equivalence rate (one decimal) and counts.
std::string render_table(const BenchReport& report);

// Header line plus one line per query record.
std::string render_machine(const BenchReport& report);
BenchReport parse_machine(const std::string& text);

void write_file(const std::string& path, const std::string& content);

}  // namespace e3::bench
