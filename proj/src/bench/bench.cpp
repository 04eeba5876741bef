#include "e3/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "e3/error.hpp"
#include "e3/sql_ast.hpp"
#include "json.hpp"

namespace e3::bench {

using nlohmann::json;

namespace {

constexpr const char* kReportFormat = "e3-bench-report";
constexpr int kReportVersion = 1;

std::vector<std::string> read_lines(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, std::string("cannot read ") + what + " " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

json summary_json(const LatencySummary& s) {
  return {{"average", s.average}, {"median", s.median}, {"p90", s.p90}};
}

LatencySummary summary_from(const json& j) {
  return {j.at("average").get<double>(), j.at("median").get<double>(), j.at("p90").get<double>()};
}

LatencySummary summarize_values(const std::vector<double>& v) {
  if (v.empty()) return {};
  return {mean(v), median(v), percentile_p90(v)};
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}
std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  Corpus c;
  c.source = path;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path, "corpus")) {
    ++line_no;
    CorpusEntry e;
    try {
      const auto j = json::parse(line);
      e.query_id = j.at("query_id").get<std::string>();
      e.sql = j.at("sql").get<std::string>();
      if (j.contains("tags")) e.tags = j["tags"].get<std::vector<std::string>>();
    } catch (const json::exception& ex) {
      fail(ErrorCode::kSchema, path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.query_id.empty()) fail(ErrorCode::kSchema, path + ":" + std::to_string(line_no) + ": empty query_id");
    if (!ids.insert(e.query_id).second) fail(ErrorCode::kSchema, "duplicate query_id " + e.query_id);
    try {
      sql::parse_sql(e.sql);
    } catch (const ParseError& ex) {
      fail(ErrorCode::kSchema, "query " + e.query_id + " does not parse: " + ex.what());
    }
    c.entries.push_back(std::move(e));
  }
  if (c.entries.empty()) fail(ErrorCode::kSchema, "corpus " + path + " is empty");
  return c;
}

RewriteSystem identity_system() {
  return [](const CorpusEntry& e) { return SystemOutput{e.sql, true}; };
}

RewriteSystem replay_system(const std::string& path) {
  auto table = std::make_shared<std::map<std::string, std::string>>();
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path, "replay file")) {
    ++line_no;
    try {
      const auto j = json::parse(line);
      const auto id = j.at("query_id").get<std::string>();
      if (!table->emplace(id, j.at("rewritten_sql").get<std::string>()).second) {
        fail(ErrorCode::kSchema, "duplicate query_id " + id + " in " + path);
      }
    } catch (const json::exception& ex) {
      fail(ErrorCode::kSchema, path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return [table](const CorpusEntry& e) {
    const auto it = table->find(e.query_id);
    if (it == table->end()) return SystemOutput{e.sql, true};
    return SystemOutput{it->second, false};
  };
}

double mean(const std::vector<double>& values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "median of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

double percentile_p90(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "p90 of an empty list");
  std::sort(values.begin(), values.end());
  const auto rank = (9 * values.size() + 9) / 10;  // ceil(0.9 n), 1-based
  return values[rank - 1];
}

void summarize(BenchReport& report) {
  std::vector<double> orig, rew;
  int equivalent = 0;
  report.improved_count = 0;
  report.failed_count = 0;
  for (const auto& r : report.records) {
    if (r.equivalent) ++equivalent;
    if (r.improved) ++report.improved_count;
    if (r.failed) {
      ++report.failed_count;
      continue;
    }
    orig.push_back(r.original_s);
    rew.push_back(r.rewritten_s);
  }
  report.original = summarize_values(orig);
  report.rewritten = summarize_values(rew);
  report.equivalence_rate =
      report.records.empty() ? 0.0 : static_cast<double>(equivalent) / static_cast<double>(report.records.size());
}

BenchReport run_bench(const Corpus& corpus, db::Database& db, const RewriteSystem& system,
                      const BenchConfig& cfg) {
  if (corpus.entries.empty()) fail(ErrorCode::kEmptyInput, "corpus is empty");
  BenchReport report;
  report.system_label = cfg.system_label;
  for (const auto& e : corpus.entries) {
    QueryRecord r;
    r.query_id = e.query_id;
    r.original_sql = e.sql;
    try {
      const auto stats = db::measure_latency(db, e.sql, cfg.runs);
      r.original_s = stats.trimmed_mean_s;
      r.original_timed_out = stats.timed_out;
    } catch (const Error& ex) {
      r.failed = true;
      r.rewritten_sql = e.sql;
      r.note = std::string("original failed: ") + ex.what();
      report.records.push_back(std::move(r));
      continue;
    }

    SystemOutput out;
    try {
      out = system(e);
    } catch (const Error& ex) {
      out = {e.sql, true};
      r.note = std::string("rewrite system failed: ") + ex.what();
    }
    if (out.sql.find_first_not_of(" \t\r\n") == std::string::npos) out = {e.sql, true};
    r.used_original = out.used_original || out.sql == e.sql;
    r.rewritten_sql = r.used_original ? e.sql : out.sql;

    if (r.used_original) {
      r.rewritten_s = r.original_s;
      r.rewritten_timed_out = r.original_timed_out;
      r.equivalent = true;
    } else {
      try {
        const auto stats = db::measure_latency(db, r.rewritten_sql, cfg.runs);
        r.rewritten_s = stats.trimmed_mean_s;
        r.rewritten_timed_out = stats.timed_out;
        if (cfg.check_equivalence) {
          bool ordered = false;
          try {
            ordered = sql::has_order_dependence(sql::parse_sql(e.sql));
          } catch (const ParseError&) {
          }
          r.equivalent = db::compare_results(db.execute(e.sql), db.execute(r.rewritten_sql), ordered);
          if (!r.equivalent) r.note = "results differ";
        } else {
          r.equivalent = true;
        }
      } catch (const Error& ex) {
        if (r.rewritten_s == 0) {
          // unusable rewrite: the original keeps running in its place
          r.rewritten_s = r.original_s;
          r.rewritten_timed_out = r.original_timed_out;
        }
        r.equivalent = false;
        r.note = std::string("rewrite failed: ") + ex.what();
      }
      r.improved = r.equivalent &&
                   r.rewritten_s <= cfg.improve_ratio * r.original_s * (1 + 1e-12);
    }
    report.records.push_back(std::move(r));
  }
  summarize(report);
  return report;
}

std::string render_table(const BenchReport& report) {
  const std::size_t w0 = std::max<std::size_t>({6, report.system_label.size()}) + 2;
  const std::size_t w = 12;
  std::string out = pad_right("System", w0) + pad_left("Average(s)", w) + pad_left("Median(s)", w) +
                    pad_left("p90(s)", w) + "\n";
  const auto row = [&](const std::string& label, const LatencySummary& s) {
    out += pad_right(label, w0) + pad_left(fixed(s.average, 3), w) + pad_left(fixed(s.median, 3), w) +
           pad_left(fixed(s.p90, 3), w) + "\n";
  };
  row("Origin", report.original);
  row(report.system_label, report.rewritten);
  const auto n = report.records.size();
  const auto eq = static_cast<std::size_t>(std::llround(report.equivalence_rate * static_cast<double>(n)));
  out += "\nEquivalence rate: " + fixed(report.equivalence_rate * 100.0, 1) + "% (" + std::to_string(eq) +
         "/" + std::to_string(n) + ")\n";
  out += "Improved queries: " + std::to_string(report.improved_count) + "/" + std::to_string(n) + "\n";
  out += "Failed queries: " + std::to_string(report.failed_count) + "\n";
  return out;
}

std::string render_machine(const BenchReport& report) {
  std::string out = json{{"format", kReportFormat},
                         {"version", kReportVersion},
                         {"system", report.system_label},
                         {"queries", report.records.size()},
                         {"original", summary_json(report.original)},
                         {"rewritten", summary_json(report.rewritten)},
                         {"equivalence_rate", report.equivalence_rate},
                         {"improved_count", report.improved_count},
                         {"failed_count", report.failed_count}}
                        .dump();
  out += '\n';
  for (const auto& r : report.records) {
    out += json{{"query_id", r.query_id},
                {"original_sql", r.original_sql},
                {"rewritten_sql", r.rewritten_sql},
                {"used_original", r.used_original},
                {"original_s", r.original_s},
                {"rewritten_s", r.rewritten_s},
                {"original_timed_out", r.original_timed_out},
                {"rewritten_timed_out", r.rewritten_timed_out},
                {"equivalent", r.equivalent},
                {"improved", r.improved},
                {"failed", r.failed},
                {"note", r.note}}
               .dump();
    out += '\n';
  }
  return out;
}

BenchReport parse_machine(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorCode::kSchema, "empty bench report");
  BenchReport rep;
  try {
    const auto h = json::parse(lines[0]);
    if (h.value("format", "") != kReportFormat || h.value("version", 0) != kReportVersion) {
      fail(ErrorCode::kSchema, "not a bench report");
    }
    rep.system_label = h.at("system").get<std::string>();
    rep.original = summary_from(h.at("original"));
    rep.rewritten = summary_from(h.at("rewritten"));
    rep.equivalence_rate = h.at("equivalence_rate").get<double>();
    rep.improved_count = h.at("improved_count").get<int>();
    rep.failed_count = h.at("failed_count").get<int>();
    if (h.at("queries").get<std::size_t>() != lines.size() - 1) fail(ErrorCode::kSchema, "record count mismatch");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto j = json::parse(lines[i]);
      QueryRecord r;
      r.query_id = j.at("query_id").get<std::string>();
      r.original_sql = j.at("original_sql").get<std::string>();
      r.rewritten_sql = j.at("rewritten_sql").get<std::string>();
      r.used_original = j.at("used_original").get<bool>();
      r.original_s = j.at("original_s").get<double>();
      r.rewritten_s = j.at("rewritten_s").get<double>();
      r.original_timed_out = j.at("original_timed_out").get<bool>();
      r.rewritten_timed_out = j.at("rewritten_timed_out").get<bool>();
      r.equivalent = j.at("equivalent").get<bool>();
      r.improved = j.at("improved").get<bool>();
      r.failed = j.at("failed").get<bool>();
      r.note = j.at("note").get<std::string>();
      rep.records.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::kSchema, std::string("malformed bench report: ") + ex.what());
  }
  return rep;
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + path);
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failed for " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorCode::kIo, "cannot replace " + path);
}

}  // namespace e3::bench
