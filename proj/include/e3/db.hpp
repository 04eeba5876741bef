#pragma once

// DBMS access: plan retrieval, execution, timed runs, sampled instances.
//
// Two backends share the Database interface:
//   stub:<dir>                 deterministic fixture DBMS (SQLite executor,
//                              scripted plans and latencies from a manifest)
//   postgresql://u:p@h:port/db live PostgreSQL over the v3 wire protocol
//
// Errors: SyntaxRejected (parse or semantic failure), Connection, Timeout,
// Execution.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace e3::db {

struct DbTarget {
  std::string dsn;
  double statement_timeout_s = 300.0;
  // Password fallback for postgresql:// DSNs without one.
  std::string password_env = "PGPASSWORD";
};

struct PlanDocument {
  std::string payload;  // JSON in the PostgreSQL EXPLAIN (FORMAT JSON) shape
  bool analyzed = false;
};

using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  bool truncated = false;
};

struct RunSample {
  double seconds = 0.0;
  bool timed_out = false;
};

struct LatencyStats {
  std::vector<double> raw_runs_s;  // after capping
  double trimmed_mean_s = 0.0;
  bool timed_out = false;
};

class Database {
 public:
  virtual ~Database() = default;

  virtual const DbTarget& target() const = 0;

  // analyze=true executes the statement; only SELECT/WITH are accepted.
  virtual PlanDocument explain(std::string_view sql, bool analyze) = 0;

  virtual ResultSet execute(std::string_view sql) = 0;

  // One timed execution. `run_index` selects the scripted latency on the
  // stub; live backends ignore it. Runs hitting the statement timeout return
  // timed_out=true instead of throwing.
  virtual RunSample timed_run(std::string_view sql, int run_index) = 0;

  // Independent session over the same data (one connection per worker).
  virtual std::unique_ptr<Database> clone() const = 0;

  // Session over a deterministic row sample of every base table.
  // rate = 1.0 gives the full instance.
  virtual std::unique_ptr<Database> sample_instance(double rate, std::uint64_t seed) const = 0;

  // "table(col type, ...)" lines, for equivalence adapters.
  virtual std::string schema_descriptor() = 0;
};

std::unique_ptr<Database> open_database(const DbTarget& target);

// Runs `runs` times, caps each run at `cap_s`, drops exactly one maximum and
// one minimum, and averages the rest.
LatencyStats measure_latency(const std::function<RunSample(int)>& run, int runs,
                             double cap_s);
LatencyStats measure_latency(Database& db, std::string_view sql, int runs = 5);

// Canonical scalar text: NULL, integers in decimal, reals with 15
// significant digits, strings verbatim (type-tagged to keep '1' != 1).
std::string canonical_scalar(const Value& v);

// ordered: sequence equality; otherwise multiset equality of canonical rows.
// Column names are not compared, arity is.
bool compare_results(const ResultSet& a, const ResultSet& b, bool ordered);

struct SamplingConfig {
  std::vector<double> rates{1.0, 0.1, 0.01};
  std::uint64_t seed = 20240611;
};

// True when the statement is a single read-only query.
bool is_select_statement(std::string_view sql);

}  // namespace e3::db
