// Deterministic fixture DBMS.
//
// A fixture directory holds CSV tables and manifest.json. Tables are loaded
// once into an in-memory SQLite image; every session deserializes its own
// copy. Scripted plans and latencies are keyed by the query fingerprint;
// unscripted queries get a plan synthesized from SQLite's query plan and a
// latency derived from its cost (or wall clock, per manifest).

#include <sqlite3.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include "db/backends.hpp"
#include "e3/error.hpp"
#include "e3/sql_ast.hpp"
#include "json.hpp"

namespace e3::db {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Column {
  std::string name;
  std::string type;  // INTEGER, REAL, TEXT, DATE
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  std::vector<std::vector<std::string>> indexes;
  std::int64_t rows = 0;
};

struct Script {
  std::optional<json> plan;
  std::optional<json> analyzed_plan;
  std::vector<double> latencies_s;
  std::optional<double> cost;
};

struct Fixture {
  fs::path dir;
  std::vector<Table> tables;
  std::map<std::string, Script> scripts;  // by fingerprint
  std::string latency_mode = "cost";      // cost | wallclock
  double seconds_per_cost_unit = 0.001;
  std::vector<unsigned char> image;       // serialized SQLite database
};

// ------------------------------------------------------------------ CSV

// RFC 4180 with a header row. Unquoted empty fields are NULL.
std::vector<std::vector<std::optional<std::string>>> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open fixture table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::vector<std::vector<std::optional<std::string>>> rows;
  std::vector<std::optional<std::string>> row;
  std::string field;
  bool quoted = false, in_quotes = false, any = false;
  auto end_field = [&] {
    if (field.empty() && !quoted) {
      row.emplace_back(std::nullopt);
    } else {
      row.emplace_back(field);
    }
    field.clear();
    quoted = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      any = false;
    } else {
      field += c;
    }
  }
  if (in_quotes) fail(ErrorCode::kSchema, "unterminated quote in " + path.string());
  if (any) end_row();
  return rows;
}

// --------------------------------------------------------------- SQLite

struct Conn {
  sqlite3* db = nullptr;
  Conn() = default;
  Conn(const Conn&) = delete;
  Conn& operator=(const Conn&) = delete;
  ~Conn() {
    if (db) sqlite3_close(db);
  }
};

void exec_or_throw(sqlite3* db, const std::string& sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    fail(ErrorCode::kExecution, "fixture setup failed: " + msg);
  }
}

std::string quote_ident(const std::string& name) {
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// e3_keep(table, rowid, rate, seed): deterministic Bernoulli row filter.
void keep_fn(sqlite3_context* ctx, int, sqlite3_value** argv) {
  const auto* table = reinterpret_cast<const char*>(sqlite3_value_text(argv[0]));
  const std::uint64_t rowid = static_cast<std::uint64_t>(sqlite3_value_int64(argv[1]));
  const double rate = sqlite3_value_double(argv[2]);
  const std::uint64_t seed = static_cast<std::uint64_t>(sqlite3_value_int64(argv[3]));
  const std::uint64_t h =
      mix64(sql::fnv1a64(table ? table : "") ^ mix64(rowid ^ mix64(seed)));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  sqlite3_result_int(ctx, u < rate ? 1 : 0);
}

void configure(sqlite3* db) {
  exec_or_throw(db, "PRAGMA case_sensitive_like=ON");
  sqlite3_create_function(db, "e3_keep", 4, SQLITE_UTF8 | SQLITE_DETERMINISTIC, nullptr,
                          keep_fn, nullptr, nullptr);
}

void open_image(Conn& c, const std::vector<unsigned char>& image) {
  if (sqlite3_open(":memory:", &c.db) != SQLITE_OK) {
    fail(ErrorCode::kConnection, "cannot open stub session");
  }
  auto* buf = static_cast<unsigned char*>(sqlite3_malloc64(image.size()));
  if (!buf) fail(ErrorCode::kConnection, "out of memory opening stub session");
  std::memcpy(buf, image.data(), image.size());
  const int rc = sqlite3_deserialize(c.db, "main", buf, static_cast<sqlite3_int64>(image.size()),
                                     static_cast<sqlite3_int64>(image.size()),
                                     SQLITE_DESERIALIZE_FREEONCLOSE |
                                         SQLITE_DESERIALIZE_RESIZEABLE);
  if (rc != SQLITE_OK) fail(ErrorCode::kConnection, "cannot load stub image");
  configure(c.db);
}

std::vector<unsigned char> serialize(sqlite3* db) {
  sqlite3_int64 size = 0;
  unsigned char* data = sqlite3_serialize(db, "main", &size, 0);
  if (!data) fail(ErrorCode::kExecution, "cannot serialize stub image");
  std::vector<unsigned char> out(data, data + size);
  sqlite3_free(data);
  return out;
}

// -------------------------------------------------------------- fixture

std::string sqlite_decl(const std::string& type) {
  if (type == "INTEGER") return "INTEGER";
  if (type == "REAL") return "REAL";
  return "TEXT";  // TEXT, DATE
}

std::shared_ptr<const Fixture> load_fixture(const fs::path& dir) {
  auto fx = std::make_shared<Fixture>();
  fx->dir = dir;
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::kConnection, "stub fixture not found: " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, "invalid stub manifest: " + std::string(e.what()));
  }

  Conn c;
  if (sqlite3_open(":memory:", &c.db) != SQLITE_OK) {
    fail(ErrorCode::kConnection, "cannot create stub image");
  }
  try {
    for (const auto& t : m.at("tables")) {
      Table table;
      table.name = t.at("name").get<std::string>();
      for (const auto& col : t.at("columns")) {
        table.columns.push_back({col.at("name").get<std::string>(),
                                 col.value("type", std::string("TEXT"))});
      }
      if (t.contains("indexes")) {
        table.indexes = t.at("indexes").get<std::vector<std::vector<std::string>>>();
      }

      std::string ddl = "CREATE TABLE " + quote_ident(table.name) + " (";
      for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) ddl += ", ";
        ddl += quote_ident(table.columns[i].name) + " " + sqlite_decl(table.columns[i].type);
      }
      exec_or_throw(c.db, ddl + ")");

      const auto rows = read_csv(dir / t.at("file").get<std::string>());
      std::string ins = "INSERT INTO " + quote_ident(table.name) + " VALUES (";
      for (std::size_t i = 0; i < table.columns.size(); ++i) ins += i ? ",?" : "?";
      ins += ")";
      sqlite3_stmt* st = nullptr;
      sqlite3_prepare_v2(c.db, ins.c_str(), -1, &st, nullptr);
      exec_or_throw(c.db, "BEGIN");
      for (std::size_t r = 1; r < rows.size(); ++r) {  // row 0 is the header
        if (rows[r].size() != table.columns.size()) {
          sqlite3_finalize(st);
          fail(ErrorCode::kSchema, "arity mismatch in " + table.name + " row " +
                                       std::to_string(r));
        }
        for (std::size_t i = 0; i < rows[r].size(); ++i) {
          const auto& v = rows[r][i];
          const int pos = static_cast<int>(i) + 1;
          if (!v) {
            sqlite3_bind_null(st, pos);
          } else if (table.columns[i].type == "INTEGER") {
            sqlite3_bind_int64(st, pos, std::stoll(*v));
          } else if (table.columns[i].type == "REAL") {
            sqlite3_bind_double(st, pos, std::stod(*v));
          } else {
            sqlite3_bind_text(st, pos, v->c_str(), static_cast<int>(v->size()),
                              SQLITE_TRANSIENT);
          }
        }
        sqlite3_step(st);
        sqlite3_reset(st);
        ++table.rows;
      }
      sqlite3_finalize(st);
      exec_or_throw(c.db, "COMMIT");
      int n = 0;
      for (const auto& idx : table.indexes) {
        std::string cols;
        for (const auto& col : idx) cols += (cols.empty() ? "" : ", ") + quote_ident(col);
        exec_or_throw(c.db, "CREATE INDEX " +
                                quote_ident(table.name + "_idx" + std::to_string(n++)) +
                                " ON " + quote_ident(table.name) + " (" + cols + ")");
      }
      fx->tables.push_back(std::move(table));
    }

    if (m.contains("queries")) {
      for (const auto& q : m.at("queries")) {
        Script s;
        if (q.contains("plan")) s.plan = q.at("plan");
        if (q.contains("analyzed_plan")) s.analyzed_plan = q.at("analyzed_plan");
        if (q.contains("latencies_s")) s.latencies_s = q.at("latencies_s").get<std::vector<double>>();
        if (q.contains("cost")) s.cost = q.at("cost").get<double>();
        fx->scripts[sql::fingerprint_sql(q.at("sql").get<std::string>())] = std::move(s);
      }
    }
    if (m.contains("latency_model")) {
      const auto& lm = m.at("latency_model");
      fx->latency_mode = lm.value("mode", fx->latency_mode);
      fx->seconds_per_cost_unit = lm.value("seconds_per_cost_unit", fx->seconds_per_cost_unit);
      if (fx->latency_mode != "cost" && fx->latency_mode != "wallclock") {
        fail(ErrorCode::kSchema, "latency_model.mode must be cost or wallclock");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, "invalid stub manifest: " + std::string(e.what()));
  } catch (const ParseError& e) {
    fail(ErrorCode::kSchema, "unparseable scripted query in manifest: " + std::string(e.what()));
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kSchema, "non-numeric value in a numeric fixture column");
  }
  exec_or_throw(c.db, "ANALYZE");
  fx->image = serialize(c.db);
  return fx;
}

std::shared_ptr<const Fixture> cached_fixture(const fs::path& dir) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const Fixture>> cache;
  const std::string key = fs::weakly_canonical(dir).string();
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto fx = load_fixture(dir);
  cache.emplace(key, fx);
  return fx;
}

// --------------------------------------------------------- plan synthesis

struct QpRow {
  int id;
  int parent;
  std::string detail;
};

struct Synth {
  json node;
  double cost = 0;
  double rows = 0;
};

class StubDatabase final : public Database {
 public:
  StubDatabase(DbTarget target, std::shared_ptr<const Fixture> fx,
               std::vector<unsigned char> image, std::string label)
      : target_(std::move(target)), fx_(std::move(fx)), image_(std::move(image)),
        label_(std::move(label)) {
    open_image(conn_, image_);
  }

  const DbTarget& target() const override { return target_; }

  PlanDocument explain(std::string_view sql, bool analyze) override {
    const auto prepared = check(sql);
    const Script* script = find_script(prepared.fingerprint);
    PlanDocument doc;
    doc.analyzed = analyze;
    if (analyze && script && script->analyzed_plan) {
      doc.payload = script->analyzed_plan->dump();
      return doc;
    }
    if (!analyze && script && script->plan) {
      doc.payload = script->plan->dump();
      return doc;
    }
    json plan = synthesize(prepared.sqlite_sql);
    if (script && script->cost) plan["Total Cost"] = *script->cost;
    json top = json::object();
    if (analyze) {
      const auto start = std::chrono::steady_clock::now();
      const ResultSet rs = run(prepared.sqlite_sql);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start).count();
      annotate_actual(plan, static_cast<double>(rs.rows.size()));
      const double modeled_ms = latency_for(prepared, plan, 0, ms / 1000.0) * 1000.0;
      plan["Actual Total Time"] = round4(modeled_ms);
      top["Execution Time"] = round4(modeled_ms);
    }
    top["Plan"] = std::move(plan);
    doc.payload = json::array({top}).dump();
    return doc;
  }

  ResultSet execute(std::string_view sql) override {
    const auto prepared = check(sql);
    return run(prepared.sqlite_sql);
  }

  RunSample timed_run(std::string_view sql, int run_index) override {
    const auto prepared = check(sql);
    const Script* script = find_script(prepared.fingerprint);
    if (script && !script->latencies_s.empty()) {
      const auto& l = script->latencies_s;
      const double s = l[static_cast<std::size_t>(run_index) % l.size()];
      return {s, s >= target_.statement_timeout_s};
    }
    if (fx_->latency_mode == "wallclock") {
      const auto start = std::chrono::steady_clock::now();
      try {
        run(prepared.sqlite_sql);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kTimeout) return {target_.statement_timeout_s, true};
        throw;
      }
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return {s, false};
    }
    json plan = synthesize(prepared.sqlite_sql);
    if (script && script->cost) plan["Total Cost"] = *script->cost;
    const double s = latency_for(prepared, plan, run_index, 0.0);
    return {s, s >= target_.statement_timeout_s};
  }

  std::unique_ptr<Database> clone() const override {
    return std::make_unique<StubDatabase>(target_, fx_, image_, label_);
  }

  std::unique_ptr<Database> sample_instance(double rate, std::uint64_t seed) const override {
    if (!(rate > 0 && rate <= 1)) fail(ErrorCode::kInvalidArgument, "sample rate must be in (0,1]");
    if (rate >= 1.0) return clone();
    Conn c;
    open_image(c, image_);
    for (const auto& t : fx_->tables) {
      sqlite3_stmt* st = nullptr;
      const std::string del = "DELETE FROM " + quote_ident(t.name) +
                              " WHERE e3_keep(?, rowid, ?, ?) = 0";
      sqlite3_prepare_v2(c.db, del.c_str(), -1, &st, nullptr);
      sqlite3_bind_text(st, 1, t.name.c_str(), -1, SQLITE_TRANSIENT);
      sqlite3_bind_double(st, 2, rate);
      sqlite3_bind_int64(st, 3, static_cast<sqlite3_int64>(seed));
      const int rc = sqlite3_step(st);
      sqlite3_finalize(st);
      if (rc != SQLITE_DONE) fail(ErrorCode::kExecution, "sampling failed on " + t.name);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s@%g", label_.c_str(), rate);
    return std::make_unique<StubDatabase>(target_, fx_, serialize(c.db), buf);
  }

  std::string schema_descriptor() override {
    std::string out;
    for (const auto& t : fx_->tables) {
      out += t.name + "(";
      for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ", ";
        out += t.columns[i].name + " " + t.columns[i].type;
      }
      out += ")\n";
    }
    return out;
  }

 private:
  struct Prepared {
    std::string fingerprint;
    std::string sqlite_sql;
  };

  static double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

  const Script* find_script(const std::string& fp) const {
    auto it = fx_->scripts.find(fp);
    return it == fx_->scripts.end() ? nullptr : &it->second;
  }

  // Parse with our grammar, then let SQLite resolve names and types.
  Prepared check(std::string_view sql) {
    sql::QueryAst ast;
    try {
      ast = sql::parse_sql(sql);
    } catch (const ParseError& e) {
      fail(ErrorCode::kSyntaxRejected, e.what());
    }
    Prepared p{sql::fingerprint(ast), sql::render(ast, sql::Dialect::kSqlite)};
    sqlite3_stmt* st = nullptr;
    const int rc = sqlite3_prepare_v2(conn_.db, p.sqlite_sql.c_str(), -1, &st, nullptr);
    if (rc != SQLITE_OK) {
      std::string msg = sqlite3_errmsg(conn_.db);
      sqlite3_finalize(st);
      fail(ErrorCode::kSyntaxRejected, "semantic analysis failed: " + msg);
    }
    const bool read_only = sqlite3_stmt_readonly(st) != 0;
    sqlite3_finalize(st);
    if (!read_only) fail(ErrorCode::kSyntaxRejected, "only read-only queries are accepted");
    return p;
  }

  ResultSet run(const std::string& sqlite_sql) {
    sqlite3_stmt* st = nullptr;
    if (sqlite3_prepare_v2(conn_.db, sqlite_sql.c_str(), -1, &st, nullptr) != SQLITE_OK) {
      std::string msg = sqlite3_errmsg(conn_.db);
      sqlite3_finalize(st);
      fail(ErrorCode::kSyntaxRejected, msg);
    }
    struct Deadline {
      std::chrono::steady_clock::time_point at;
    } deadline{std::chrono::steady_clock::now() +
               std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                   std::chrono::duration<double>(target_.statement_timeout_s))};
    sqlite3_progress_handler(
        conn_.db, 1000,
        [](void* p) -> int {
          return std::chrono::steady_clock::now() > static_cast<Deadline*>(p)->at ? 1 : 0;
        },
        &deadline);

    ResultSet rs;
    const int ncol = sqlite3_column_count(st);
    for (int i = 0; i < ncol; ++i) rs.columns.emplace_back(sqlite3_column_name(st, i));
    int rc;
    while ((rc = sqlite3_step(st)) == SQLITE_ROW) {
      std::vector<Value> row;
      row.reserve(ncol);
      for (int i = 0; i < ncol; ++i) {
        switch (sqlite3_column_type(st, i)) {
          case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
          case SQLITE_INTEGER: row.emplace_back(std::int64_t{sqlite3_column_int64(st, i)}); break;
          case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(st, i)); break;
          default: {
            const auto* t = reinterpret_cast<const char*>(sqlite3_column_text(st, i));
            row.emplace_back(std::string(t ? t : "", sqlite3_column_bytes(st, i)));
          }
        }
      }
      rs.rows.push_back(std::move(row));
    }
    sqlite3_progress_handler(conn_.db, 0, nullptr, nullptr);
    std::string msg = rc == SQLITE_DONE ? "" : sqlite3_errmsg(conn_.db);
    sqlite3_finalize(st);
    if (rc == SQLITE_INTERRUPT) {
      fail(ErrorCode::kTimeout, "statement exceeded " +
                                    std::to_string(target_.statement_timeout_s) + " s");
    }
    if (rc != SQLITE_DONE) fail(ErrorCode::kExecution, msg);
    return rs;
  }

  double latency_for(const Prepared& p, const json& plan, int run_index, double wall_s) const {
    const Script* script = find_script(p.fingerprint);
    if (script && !script->latencies_s.empty()) {
      const auto& l = script->latencies_s;
      return l[static_cast<std::size_t>(run_index) % l.size()];
    }
    if (fx_->latency_mode == "wallclock") return wall_s;
    return plan.at("Total Cost").get<double>() * fx_->seconds_per_cost_unit;
  }

  // -------------------------------------------------- plan synthesis
  std::int64_t table_rows(const std::string& name) const {
    for (const auto& t : fx_->tables) {
      if (t.name == name) return t.rows;
    }
    return -1;
  }

  std::vector<QpRow> query_plan(const std::string& sqlite_sql) {
    const std::string eqp = "EXPLAIN QUERY PLAN " + sqlite_sql;
    sqlite3_stmt* st = nullptr;
    if (sqlite3_prepare_v2(conn_.db, eqp.c_str(), -1, &st, nullptr) != SQLITE_OK) {
      std::string msg = sqlite3_errmsg(conn_.db);
      sqlite3_finalize(st);
      fail(ErrorCode::kSyntaxRejected, msg);
    }
    std::vector<QpRow> rows;
    while (sqlite3_step(st) == SQLITE_ROW) {
      rows.push_back({sqlite3_column_int(st, 0), sqlite3_column_int(st, 1),
                      reinterpret_cast<const char*>(sqlite3_column_text(st, 3))});
    }
    sqlite3_finalize(st);
    return rows;
  }

  static std::string word_after(const std::string& s, const std::string& prefix) {
    if (s.rfind(prefix, 0) != 0) return {};
    const auto start = prefix.size();
    const auto end = s.find(' ', start);
    return s.substr(start, end == std::string::npos ? std::string::npos : end - start);
  }

  Synth scan_node(const std::string& detail) const {
    Synth s;
    const bool search = detail.rfind("SEARCH ", 0) == 0;
    std::string rel = word_after(detail, search ? "SEARCH " : "SCAN ");
    const auto n = table_rows(rel);
    const double base = n >= 0 ? static_cast<double>(n) : 1000.0;
    std::string index;
    if (const auto pos = detail.find("USING "); pos != std::string::npos) {
      if (detail.find("INTEGER PRIMARY KEY", pos) != std::string::npos) {
        index = rel + "_pkey";
      } else if (const auto ip = detail.find("INDEX ", pos); ip != std::string::npos) {
        index = word_after(detail.substr(ip), "INDEX ");
      }
    }
    if (search) {
      s.rows = std::max(1.0, std::ceil(base * 0.01));
      s.cost = 4.0 + s.rows * 4.0;
      s.node["Node Type"] = "Index Scan";
    } else if (!index.empty()) {
      s.rows = base;
      s.cost = base * 0.02 + std::ceil(base / 100.0);
      s.node["Node Type"] = "Index Only Scan";
    } else {
      s.rows = base;
      s.cost = base * 0.01 + std::ceil(base / 100.0);
      s.node["Node Type"] = n >= 0 ? "Seq Scan" : "Subquery Scan";
    }
    s.node["Relation Name"] = rel;
    if (!index.empty()) s.node["Index Name"] = index;
    return s;
  }

  static void finish(Synth& s) {
    s.node["Total Cost"] = round4(s.cost);
    s.node["Plan Rows"] = std::round(s.rows);
  }

  Synth build(const std::vector<QpRow>& all, int parent) const {
    std::vector<const QpRow*> kids;
    for (const auto& r : all) {
      if (r.parent == parent) kids.push_back(&r);
    }
    std::vector<Synth> inputs;
    std::vector<std::string> wrappers;
    for (const QpRow* r : kids) {
      const std::string& d = r->detail;
      const bool has_children = std::any_of(all.begin(), all.end(),
                                            [&](const QpRow& x) { return x.parent == r->id; });
      if (d.rfind("USE TEMP B-TREE FOR ", 0) == 0) {
        wrappers.push_back(d.substr(20));
      } else if ((d.rfind("SCAN ", 0) == 0 || d.rfind("SEARCH ", 0) == 0) && !has_children) {
        Synth s = scan_node(d);
        finish(s);
        inputs.push_back(std::move(s));
      } else if (has_children) {
        Synth inner = build(all, r->id);
        Synth s;
        std::string type = "Subquery Scan";
        if (d.rfind("MATERIALIZE", 0) == 0) type = "Materialize";
        if (d.rfind("COMPOUND", 0) == 0) type = "Append";
        if (d.find("SUBQUERY") != std::string::npos && d.rfind("CORRELATED", 0) == 0) {
          type = "SubPlan";
        }
        s.node["Node Type"] = type;
        s.cost = inner.cost;
        s.rows = inner.rows;
        s.node["Plans"] = json::array({std::move(inner.node)});
        finish(s);
        inputs.push_back(std::move(s));
      }
    }

    Synth acc;
    if (inputs.empty()) {
      acc.node["Node Type"] = "Result";
      acc.cost = 0.01;
      acc.rows = 1;
      finish(acc);
    } else {
      acc = std::move(inputs.front());
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        Synth& inner = inputs[i];
        Synth join;
        join.node["Node Type"] = "Nested Loop";
        join.cost = acc.cost + std::max(1.0, acc.rows) * inner.cost;
        join.rows = std::max(acc.rows, inner.rows);
        join.node["Plans"] = json::array({std::move(acc.node), std::move(inner.node)});
        finish(join);
        acc = std::move(join);
      }
    }
    for (const auto& w : wrappers) {
      Synth s;
      s.node["Node Type"] = w.rfind("GROUP BY", 0) == 0 ? "HashAggregate"
                            : w.rfind("DISTINCT", 0) == 0 ? "Unique"
                                                          : "Sort";
      const double r = std::max(2.0, acc.rows);
      s.cost = acc.cost + r * std::log2(r) * 0.01;
      s.rows = acc.rows;
      s.node["Plans"] = json::array({std::move(acc.node)});
      finish(s);
      acc = std::move(s);
    }
    return acc;
  }

  json synthesize(const std::string& sqlite_sql) {
    return build(query_plan(sqlite_sql), 0).node;
  }

  static void annotate_actual(json& node, double root_rows) {
    node["Actual Rows"] = root_rows;
    if (node.contains("Plans")) {
      for (auto& c : node["Plans"]) annotate_actual(c, c.at("Plan Rows").get<double>());
    }
  }

  DbTarget target_;
  std::shared_ptr<const Fixture> fx_;
  std::vector<unsigned char> image_;
  std::string label_;
  Conn conn_;
};

}  // namespace

std::unique_ptr<Database> open_stub(const DbTarget& target) {
  const fs::path dir = target.dsn.substr(std::strlen("stub:"));
  auto fx = cached_fixture(dir);
  return std::make_unique<StubDatabase>(target, fx, fx->image, dir.filename().string());
}

}  // namespace e3::db
