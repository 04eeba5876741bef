#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "e3rewrite.h"

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  e3_string_free(s);
  return out;
}

const std::string kStub = std::string("stub:") + E3_FIXTURE_DIR + "/stubdb";

}  // namespace

TEST_CASE("status names mirror the error taxonomy") {
  CHECK(std::string(e3_status_name(E3_OK)) == "Ok");
  CHECK(std::string(e3_status_name(E3_ERR_CONFIG)) == "ConfigError");
  CHECK(std::string(e3_status_name(E3_ERR_PARSE)) == "ParseError");
  CHECK(std::string(e3_status_name(E3_ERR_INTERNAL)) == "Internal");
}

TEST_CASE("argument and configuration errors") {
  e3_engine* engine = nullptr;
  CHECK(e3_engine_create("{\"k\": 3, \"bogus\": 1}", &engine) == E3_ERR_CONFIG);
  CHECK(engine == nullptr);
  CHECK(std::string(e3_last_error()).find("bogus") != std::string::npos);
  CHECK(e3_engine_create("not json", &engine) == E3_ERR_CONFIG);
  CHECK(e3_engine_create("{\"weights\": {\"lambda_eq\": -1}}", &engine) == E3_ERR_CONFIG);
  CHECK(e3_engine_create("{\"generator\": {\"n\": \"eight\"}}", &engine) == E3_ERR_CONFIG);
  CHECK(e3_engine_create(nullptr, nullptr) == E3_ERR_INVALID_ARGUMENT);

  double s = 0;
  CHECK(e3_struct_similarity("SELECT a FROM t", nullptr, &s) == E3_ERR_INVALID_ARGUMENT);
  CHECK(e3_struct_similarity("SELEC 1", "SELECT 1", &s) == E3_ERR_PARSE);
  CHECK(e3_struct_similarity("SELECT a FROM t", "SELECT a FROM t", &s) == E3_OK);
  CHECK(s == 1.0);

  e3_db* db = nullptr;
  CHECK(e3_db_open("mysql://nowhere", 300, &db) != E3_OK);
  CHECK(db == nullptr);
  CHECK(e3_db_open(kStub.c_str(), 0, &db) == E3_ERR_INVALID_ARGUMENT);
}

TEST_CASE("handles round trip") {
  e3_db* db = nullptr;
  REQUIRE(e3_db_open(kStub.c_str(), 300, &db) == E3_OK);
  char* hint = nullptr;
  REQUIRE(e3_hint(db, "SELECT count(*) FROM items", 0, nullptr, &hint) == E3_OK);
  CHECK_FALSE(take(hint).empty());
  CHECK(e3_hint(db, "SELECT * FROM missing", 0, nullptr, &hint) == E3_ERR_SYNTAX_REJECTED);

  const auto path = (std::filesystem::temp_directory_path() / "e3_capi_pool.jsonl").string();
  std::filesystem::remove(path);
  e3_pool* pool = nullptr;
  REQUIRE(e3_pool_load(path.c_str(), "{\"pool\": {\"alpha\": 0.25}}", &pool) == E3_OK);
  CHECK(e3_pool_size(pool) == 0);
  CHECK(e3_pool_save(pool, path.c_str()) == E3_OK);
  e3_pool_close(pool);
  CHECK(std::filesystem::exists(path));

  e3_engine* engine = nullptr;
  REQUIRE(e3_engine_create("{}", &engine) == E3_OK);
  REQUIRE(e3_pool_load(path.c_str(), nullptr, &pool) == E3_OK);
  char* out = nullptr;
  CHECK(e3_rewrite(engine, db, pool, "SELECT 1", &out) == E3_ERR_CONFIG);  // no generator endpoint
  char* table = nullptr;
  CHECK(e3_bench(db, (std::string(E3_FIXTURE_DIR) + "/bench/corpus.jsonl").c_str(), "e3", nullptr, nullptr,
                 nullptr, &table, nullptr) == E3_ERR_INVALID_ARGUMENT);
  e3_pool_close(pool);
  e3_engine_destroy(engine);
  e3_db_close(db);
  std::filesystem::remove(path);
}
