#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "db/backends.hpp"
#include "e3/db.hpp"
#include "e3/error.hpp"
#include "e3/sql_ast.hpp"

namespace e3::db {

std::unique_ptr<Database> open_database(const DbTarget& target) {
  if (!(target.statement_timeout_s > 0)) {
    fail(ErrorCode::kConfig, "statement_timeout_s must be positive");
  }
  const std::string_view dsn = target.dsn;
  if (dsn.starts_with("stub:")) return open_stub(target);
  if (dsn.starts_with("postgresql://") || dsn.starts_with("postgres://")) {
    return open_postgres(target);
  }
  fail(ErrorCode::kConfig, "unrecognized DSN scheme: " + target.dsn);
}

LatencyStats measure_latency(const std::function<RunSample(int)>& run, int runs,
                             double cap_s) {
  if (runs < 3) fail(ErrorCode::kInvalidArgument, "measure_latency needs at least 3 runs");
  LatencyStats stats;
  for (int i = 0; i < runs; ++i) {
    RunSample s = run(i);
    if (s.timed_out || s.seconds >= cap_s) {
      s.seconds = cap_s;
      s.timed_out = true;
    }
    stats.timed_out = stats.timed_out || s.timed_out;
    stats.raw_runs_s.push_back(s.seconds);
  }
  std::vector<double> sorted = stats.raw_runs_s;
  std::sort(sorted.begin(), sorted.end());
  const double sum = std::accumulate(sorted.begin() + 1, sorted.end() - 1, 0.0);
  stats.trimmed_mean_s = sum / static_cast<double>(runs - 2);
  return stats;
}

LatencyStats measure_latency(Database& db, std::string_view sql, int runs) {
  const std::string text(sql);
  return measure_latency([&](int i) { return db.timed_run(text, i); }, runs,
                         db.target().statement_timeout_s);
}

std::string canonical_scalar(const Value& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "N"; }
    std::string operator()(std::int64_t i) const { return "I" + std::to_string(i); }
    std::string operator()(double d) const {
      if (std::isnan(d)) return "Fnan";
      if (d == 0.0) d = 0.0;  // -0 == 0
      // integral reals compare equal to integers of the same value
      if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9.0e15) {
        return "I" + std::to_string(static_cast<std::int64_t>(d));
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.15g", d);
      return std::string("F") + buf;
    }
    std::string operator()(const std::string& s) const { return "S" + s; }
  };
  return std::visit(Visitor{}, v);
}

namespace {

std::string canonical_row(const std::vector<Value>& row) {
  std::string out;
  for (const auto& v : row) {
    const std::string s = canonical_scalar(v);
    out += std::to_string(s.size());
    out += ':';
    out += s;
  }
  return out;
}

}  // namespace

bool compare_results(const ResultSet& a, const ResultSet& b, bool ordered) {
  if (a.columns.size() != b.columns.size()) return false;
  if (a.rows.size() != b.rows.size()) return false;
  if (a.truncated != b.truncated) return false;
  if (ordered) {
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      if (canonical_row(a.rows[i]) != canonical_row(b.rows[i])) return false;
    }
    return true;
  }
  std::map<std::string, long> bag;
  for (const auto& r : a.rows) ++bag[canonical_row(r)];
  for (const auto& r : b.rows) {
    auto it = bag.find(canonical_row(r));
    if (it == bag.end() || it->second == 0) return false;
    --it->second;
  }
  return true;
}

bool is_select_statement(std::string_view sql) {
  try {
    const auto ast = sql::parse_sql(sql);
    const auto k = ast.root.kind;
    return k == sql::NodeKind::kSelect || k == sql::NodeKind::kSetOp ||
           k == sql::NodeKind::kWith;
  } catch (const ParseError&) {
    return false;
  }
}

}  // namespace e3::db
