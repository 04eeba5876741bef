// Command-line front end over the C interface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "e3rewrite.h"
#include "json.hpp"

using nlohmann::json;

namespace {

struct Failure {
  int status;
};

void check(e3_status s, const std::string& what) {
  if (s == E3_OK) return;
  std::cerr << "e3rewrite: " << what << ": " << e3_status_name(s) << ": " << e3_last_error() << "\n";
  throw Failure{static_cast<int>(s)};
}

std::string slurp(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "e3rewrite: cannot read " << path << "\n";
    throw Failure{E3_ERR_IO};
  }
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    std::cerr << "e3rewrite: cannot write " << path << "\n";
    throw Failure{E3_ERR_IO};
  }
}

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  e3_string_free(s);
  return out;
}

struct Handles {
  e3_db* db = nullptr;
  e3_pool* pool = nullptr;
  e3_engine* engine = nullptr;
  ~Handles() {
    e3_engine_destroy(engine);
    e3_pool_close(pool);
    e3_db_close(db);
  }
};

// Settings file plus command-line overrides.
struct Common {
  std::string config_path;
  std::string db;
  double timeout = 300;
  std::optional<int> k;
  std::optional<double> alpha;
  std::optional<int> n;
  bool confirm_latency = false;
  std::string generator, checker, judge, embedder, eval_log;

  std::string settings() const {
    json j = config_path.empty() ? json::object() : json::parse(slurp(config_path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      std::cerr << "e3rewrite: " << config_path << " is not a JSON object\n";
      throw Failure{E3_ERR_CONFIG};
    }
    if (k) j["k"] = *k;
    if (alpha) j["pool"]["alpha"] = *alpha;
    if (n) j["generator"]["n"] = *n;
    if (confirm_latency) j["confirm_latency"] = true;
    if (!generator.empty()) j["generator"]["endpoint"] = generator;
    if (!checker.empty()) j["checker"] = checker;
    if (!judge.empty()) j["judge"] = judge;
    if (!embedder.empty()) j["embedder"] = embedder;
    if (!eval_log.empty()) j["eval_log"] = eval_log;
    return j.dump();
  }
};

void add_db(CLI::App* app, Common& c) {
  app->add_option("--db", c.db, "stub:<dir> or postgresql://...")->required();
  app->add_option("--timeout", c.timeout, "statement timeout in seconds")->capture_default_str();
}

void add_engine(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON settings file");
  app->add_option("--generator", c.generator, "generator endpoint: http://... or cmd:<command>");
  app->add_option("--checker", c.checker, "formal checker endpoint");
  app->add_option("--judge", c.judge, "equivalence judge endpoint");
  app->add_option("--embedder", c.embedder, "hash-ngram[:dim], http:<url> or cmd:<command>");
  app->add_option("--eval-log", c.eval_log, "append per-candidate rewards as JSON lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SQL rewrite harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(e3_version()));

  Common c;
  std::string sql_path, pool_path, corpus_path, out_path, system, table_path;
  bool as_json = false, analyze = false;
  int runs = 5;
  int group_size = 0;
  std::string sql_a, sql_b;

  auto* rw = app.add_subcommand("rewrite", "rewrite one query");
  rw->add_option("--sql", sql_path, "file with the query, or - for stdin")->required();
  add_db(rw, c);
  rw->add_option("--pool", pool_path, "demonstration pool file (created if missing)")->required();
  rw->add_option("--k", c.k, "demonstrations retrieved (default 3)");
  rw->add_option("--alpha", c.alpha, "structural weight of the hybrid similarity (default 0.5)");
  rw->add_option("--n", c.n, "samples per query (default 8)");
  rw->add_flag("--confirm-latency", c.confirm_latency, "admit on measured latency");
  rw->add_flag("--json", as_json, "print the full outcome as JSON");
  add_engine(rw, c);

  auto* bn = app.add_subcommand("bench", "measure a system over a corpus");
  bn->add_option("--corpus", corpus_path, "JSON-lines corpus")->required();
  add_db(bn, c);
  bn->add_option("--system", system, "e3, identity or replay:<file>")->required();
  bn->add_option("--out", out_path, "machine report (JSON lines)")->required();
  bn->add_option("--table", table_path, "also write the table report here");
  bn->add_option("--runs", runs, "timed runs per query")->capture_default_str();
  bn->add_option("--pool", pool_path, "demonstration pool for the e3 system");
  bn->add_option("--k", c.k);
  bn->add_option("--alpha", c.alpha);
  bn->add_option("--n", c.n);
  bn->add_flag("--confirm-latency", c.confirm_latency);
  add_engine(bn, c);

  auto* hn = app.add_subcommand("hint", "print the execution hint of a query");
  hn->add_option("--sql", sql_path, "file with the query, or - for stdin")->required();
  add_db(hn, c);
  hn->add_flag("--analyze", analyze, "execute for runtime counters");
  hn->add_option("--config", c.config_path, "JSON settings file");

  auto* sm = app.add_subcommand("similarity", "structural similarity of two queries");
  sm->add_option("a", sql_a, "first query text")->required();
  sm->add_option("b", sql_b, "second query text")->required();

  auto* co = app.add_subcommand("collect", "sample GRPO groups and write a training batch");
  co->add_option("--corpus", corpus_path, "JSON-lines corpus")->required();
  add_db(co, c);
  co->add_option("--pool", pool_path, "demonstration pool file")->required();
  co->add_option("--out", out_path, "training batch file")->required();
  co->add_option("--group-size", group_size, "samples per group");
  co->add_option("--k", c.k);
  co->add_option("--alpha", c.alpha);
  add_engine(co, c);

  CLI11_PARSE(app, argc, argv);

  try {
    Handles h;
    if (*sm) {
      double s = 0;
      check(e3_struct_similarity(sql_a.c_str(), sql_b.c_str(), &s), "similarity");
      std::printf("%.6f\n", s);
      return 0;
    }

    check(e3_db_open(c.db.c_str(), c.timeout, &h.db), "open database");

    if (*hn) {
      const auto settings = c.settings();
      char* text = nullptr;
      check(e3_hint(h.db, slurp(sql_path).c_str(), analyze ? 1 : 0, settings.c_str(), &text), "hint");
      const auto t = take(text);
      std::cout << t << (t.empty() || t.back() != '\n' ? "\n" : "");
      return 0;
    }

    auto settings = c.settings();
    if (*bn) {
      auto j = json::parse(settings);
      j["bench"]["runs"] = runs;
      settings = j.dump();
    }
    if (*co && group_size > 0) {
      auto j = json::parse(settings);
      j["grpo"]["group_size"] = group_size;
      settings = j.dump();
    }

    const bool needs_engine = *rw || *co || (*bn && system == "e3");
    if (needs_engine) {
      check(e3_engine_create(settings.c_str(), &h.engine), "configure");
      if (pool_path.empty()) {
        std::cerr << "e3rewrite: --pool is required for this command\n";
        return E3_ERR_INVALID_ARGUMENT;
      }
      check(e3_pool_load(pool_path.c_str(), settings.c_str(), &h.pool), "load pool");
    }

    if (*rw) {
      char* out = nullptr;
      check(e3_rewrite(h.engine, h.db, h.pool, slurp(sql_path).c_str(), &out), "rewrite");
      const auto j = json::parse(take(out));
      check(e3_pool_save(h.pool, pool_path.c_str()), "save pool");
      if (as_json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << j["sql"].get<std::string>() << "\n";
      }
    } else if (*bn) {
      char* table = nullptr;
      char* machine = nullptr;
      check(e3_bench(h.db, corpus_path.c_str(), system.c_str(), h.engine, h.pool, settings.c_str(), &table,
                     &machine),
            "bench");
      const auto t = take(table);
      spit(out_path, take(machine));
      if (!table_path.empty()) spit(table_path, t);
      if (h.pool) check(e3_pool_save(h.pool, pool_path.c_str()), "save pool");
      std::cout << t;
    } else if (*co) {
      char* summary = nullptr;
      check(e3_collect(h.engine, h.db, h.pool, corpus_path.c_str(), out_path.c_str(), &summary), "collect");
      std::cout << take(summary) << "\n";
    }
  } catch (const Failure& f) {
    return f.status;
  }
  return 0;
}
