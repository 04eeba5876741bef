#include "e3rewrite.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "capi/settings.hpp"
#include "e3/bench.hpp"
#include "e3/error.hpp"
#include "e3/grpo.hpp"
#include "e3/pipeline.hpp"
#include "e3/plan_hint.hpp"
#include "e3/structsim.hpp"
#include "json.hpp"

using nlohmann::json;

struct e3_db {
  std::unique_ptr<e3::db::Database> db;
};

struct e3_pool {
  e3::retrieval::DemoPool pool;
};

struct e3_engine {
  e3::capi::Settings settings;
  std::unique_ptr<e3::pipeline::Generator> generator;
  std::unique_ptr<e3::reward::FormalChecker> checker;
  std::unique_ptr<e3::reward::EquivalenceJudge> judge;
  std::unique_ptr<e3::retrieval::EmbeddingProvider> embedder;
  std::unique_ptr<e3::reward::EvalLog> log;
};

namespace {

thread_local std::string g_last_error;

template <class F>
e3_status guard(F&& f) noexcept {
  try {
    f();
    return E3_OK;
  } catch (const e3::Error& e) {
    g_last_error = e.what();
    return static_cast<e3_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return E3_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) e3::fail(e3::ErrorCode::kInvalidArgument, what);
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

e3::pipeline::RewriteContext make_context(e3_engine& e, e3_db& db, e3_pool& pool, std::string query_id) {
  e3::pipeline::RewriteContext ctx;
  ctx.db = db.db.get();
  ctx.pool = &pool.pool;
  ctx.embedder = e.embedder.get();
  ctx.generator = e.generator.get();
  ctx.checker = e.checker.get();
  ctx.judge = e.judge.get();
  ctx.log = e.log.get();
  if (e.settings.fixed_clock_ms) {
    const auto t = *e.settings.fixed_clock_ms;
    ctx.clock = [t] { return t; };
  }
  ctx.query_id = std::move(query_id);
  return ctx;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

extern "C" {

const char* e3_version(void) { return "0.1.0"; }

const char* e3_status_name(e3_status status) {
  if (status == E3_OK) return "Ok";
  if (status == E3_ERR_INTERNAL) return "Internal";
  const auto name = e3::error_code_name(static_cast<e3::ErrorCode>(status));
  return name.empty() ? "Unknown" : name.data();
}

const char* e3_last_error(void) { return g_last_error.c_str(); }

void e3_string_free(char* s) { std::free(s); }

e3_status e3_db_open(const char* dsn, double statement_timeout_s, e3_db** out) {
  return guard([&] {
    require(dsn && out, "dsn and out are required");
    require(statement_timeout_s > 0, "statement timeout must be positive");
    *out = nullptr;
    auto h = std::make_unique<e3_db>();
    h->db = e3::db::open_database({dsn, statement_timeout_s});
    *out = h.release();
  });
}

void e3_db_close(e3_db* db) { delete db; }

e3_status e3_hint(e3_db* db, const char* sql, int analyze, const char* config_json, char** out_text) {
  return guard([&] {
    require(db && sql && out_text, "db, sql and out_text are required");
    const auto s = e3::capi::parse_settings(config_json);
    const auto plan = e3::plan::parse_plan(db->db->explain(sql, analyze != 0));
    put(out_text, e3::plan::build_hint(plan, s.rewrite.thresholds).hint_text);
  });
}

e3_status e3_struct_similarity(const char* sql_a, const char* sql_b, double* out) {
  return guard([&] {
    require(sql_a && sql_b && out, "two queries and out are required");
    *out = e3::structsim::struct_similarity(e3::sql::parse_sql(sql_a), e3::sql::parse_sql(sql_b));
  });
}

e3_status e3_pool_load(const char* path, const char* config_json, e3_pool** out) {
  return guard([&] {
    require(path && out, "path and out are required");
    *out = nullptr;
    const auto s = e3::capi::parse_settings(config_json);
    auto h = std::make_unique<e3_pool>();
    h->pool = e3::retrieval::load_pool(path, s.pool);
    *out = h.release();
  });
}

e3_status e3_pool_save(const e3_pool* pool, const char* path) {
  return guard([&] {
    require(pool && path, "pool and path are required");
    e3::retrieval::save_pool(pool->pool, path);
  });
}

size_t e3_pool_size(const e3_pool* pool) { return pool ? pool->pool.size() : 0; }

void e3_pool_close(e3_pool* pool) { delete pool; }

e3_status e3_engine_create(const char* config_json, e3_engine** out) {
  return guard([&] {
    require(out, "out is required");
    *out = nullptr;
    auto e = std::make_unique<e3_engine>();
    e->settings = e3::capi::parse_settings(config_json);
    const auto& s = e->settings;
    e->generator = e3::pipeline::make_endpoint_generator();
    e->embedder = e3::retrieval::make_cached_provider(e3::retrieval::make_provider(s.embedder));
    if (!s.checker.empty()) e->checker = e3::reward::make_endpoint_checker(s.checker, s.endpoint_timeout_s);
    if (!s.judge.empty()) e->judge = e3::reward::make_endpoint_judge(s.judge, s.endpoint_timeout_s);
    if (!s.eval_log.empty()) e->log = std::make_unique<e3::reward::EvalLog>(s.eval_log);
    *out = e.release();
  });
}

void e3_engine_destroy(e3_engine* engine) { delete engine; }

e3_status e3_rewrite(e3_engine* engine, e3_db* db, e3_pool* pool, const char* sql, char** out_json) {
  return guard([&] {
    require(engine && db && pool && sql && out_json, "engine, db, pool, sql and out_json are required");
    if (engine->settings.rewrite.generator.endpoint.empty()) {
      e3::fail(e3::ErrorCode::kConfig, "generator.endpoint is not configured");
    }
    auto ctx = make_context(*engine, *db, *pool, "q");
    const auto o = e3::pipeline::rewrite(sql, ctx, engine->settings.rewrite);
    json cands = json::array();
    for (std::size_t i = 0; i < o.candidates.size(); ++i) {
      const auto& b = o.breakdowns[i];
      cands.push_back({{"sql", o.candidates[i].sql},
                       {"r_exec", b.r_exec},
                       {"r_eq", b.r_eq},
                       {"r_perf", b.r_perf},
                       {"r_total", b.r_total},
                       {"unresolved", b.unresolved},
                       {"decided_by", b.verdict ? json(e3::reward::eq_stage_name(b.verdict->decided_by))
                                                : json(nullptr)}});
    }
    const json j = {{"sql", o.chosen_sql},
                    {"used_original", o.used_original},
                    {"chosen_index", o.chosen_index ? json(*o.chosen_index) : json(nullptr)},
                    {"pool_admitted", o.pool_admitted},
                    {"speedup", optional_number(o.admission_speedup)},
                    {"candidates", cands},
                    {"prompt", o.prompt}};
    put(out_json, j.dump());
  });
}

e3_status e3_bench(e3_db* db, const char* corpus_path, const char* system, e3_engine* engine,
                   e3_pool* pool, const char* config_json, char** out_table, char** out_machine) {
  return guard([&] {
    require(db && corpus_path && system, "db, corpus_path and system are required");
    const auto s = config_json || !engine ? e3::capi::parse_settings(config_json) : engine->settings;
    const std::string sys = system;
    e3::bench::RewriteSystem fn;
    if (sys == "identity") {
      fn = e3::bench::identity_system();
    } else if (sys.rfind("replay:", 0) == 0) {
      fn = e3::bench::replay_system(sys.substr(7));
    } else if (sys == "e3") {
      require(engine && pool, "the e3 system needs an engine and a pool");
      if (engine->settings.rewrite.generator.endpoint.empty()) {
        e3::fail(e3::ErrorCode::kConfig, "generator.endpoint is not configured");
      }
      fn = [engine, db, pool](const e3::bench::CorpusEntry& entry) {
        auto ctx = make_context(*engine, *db, *pool, entry.query_id);
        const auto o = e3::pipeline::rewrite(entry.sql, ctx, engine->settings.rewrite);
        return e3::bench::SystemOutput{o.chosen_sql, o.used_original};
      };
    } else {
      e3::fail(e3::ErrorCode::kInvalidArgument, "unknown system " + sys);
    }
    auto cfg = s.bench;
    if (cfg.system_label == e3::bench::BenchConfig{}.system_label) {
      cfg.system_label = sys.rfind("replay:", 0) == 0 ? "replay" : sys;
    }
    const auto corpus = e3::bench::load_corpus(corpus_path);
    const auto rep = e3::bench::run_bench(corpus, *db->db, fn, cfg);
    put(out_table, e3::bench::render_table(rep));
    put(out_machine, e3::bench::render_machine(rep));
  });
}

e3_status e3_collect(e3_engine* engine, e3_db* db, e3_pool* pool, const char* corpus_path,
                     const char* batch_path, char** out_summary) {
  return guard([&] {
    require(engine && db && pool && corpus_path && batch_path,
            "engine, db, pool, corpus_path and batch_path are required");
    const auto& s = engine->settings;
    if (s.rewrite.generator.endpoint.empty()) {
      e3::fail(e3::ErrorCode::kConfig, "generator.endpoint is not configured");
    }
    auto cfg = s.rewrite;
    cfg.generator.samples_n = s.grpo.group_size;
    const auto corpus = e3::bench::load_corpus(corpus_path);

    e3::grpo::CurriculumScheduler scheduler(s.curriculum_window, s.curriculum_threshold);
    std::vector<e3::grpo::CandidateGroup> stage1, stage2;
    std::optional<std::size_t> transition_at;
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
      const auto& entry = corpus.entries[i];
      e3::grpo::CurriculumStage stage{scheduler.stage(), cfg.weights, 0};
      auto ctx = make_context(*engine, *db, *pool, entry.query_id);
      auto collected = e3::pipeline::collect_group(entry.sql, ctx, cfg, stage);
      const bool correct = e3::grpo::group_correct(collected.breakdowns);
      (stage.stage == e3::grpo::Stage::kCorrectnessFirst ? stage1 : stage2)
          .push_back(std::move(collected.group));
      if (scheduler.record(correct)) transition_at = i;
    }
    auto groups = stage1;
    if (!stage2.empty()) {
      const auto mixed = e3::grpo::mix_rehearsal(stage2, stage1, s.rehearsal_fraction, s.rehearsal_seed);
      groups.insert(groups.end(), mixed.begin(), mixed.end());
    }
    e3::grpo::emit_batch(groups, s.grpo, batch_path);
    const json summary = {{"groups", groups.size()},
                          {"final_stage", e3::grpo::stage_name(scheduler.stage())},
                          {"transition_at", transition_at ? json(*transition_at) : json(nullptr)},
                          {"window_rate", scheduler.window_rate()}};
    put(out_summary, summary.dump());
  });
}

}  // extern "C"
