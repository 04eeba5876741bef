#pragma once

// In-memory Database double: scripted optimizer costs and result sets keyed
// by exact SQL text, optional forced error.

#include <map>
#include <optional>
#include <string>

#include "e3/db.hpp"
#include "e3/error.hpp"
#include "json.hpp"

namespace testing {

class FakeDb final : public e3::db::Database {
 public:
  std::map<std::string, double> costs;
  std::map<std::string, e3::db::ResultSet> results;
  std::map<std::string, double> latencies;
  std::optional<e3::ErrorCode> forced;
  e3::db::DbTarget tgt{"fake", 300};

  const e3::db::DbTarget& target() const override { return tgt; }

  e3::db::PlanDocument explain(std::string_view sql, bool analyze) override {
    maybe_throw();
    auto it = costs.find(std::string(sql));
    if (it == costs.end()) e3::fail(e3::ErrorCode::kSyntaxRejected, "unknown statement");
    nlohmann::json node{{"Node Type", "Result"}, {"Total Cost", it->second}, {"Plan Rows", 1}};
    if (analyze) node["Actual Rows"] = 1;
    return {nlohmann::json::array({{{"Plan", node}}}).dump(), analyze};
  }

  e3::db::ResultSet execute(std::string_view sql) override {
    maybe_throw();
    auto it = results.find(std::string(sql));
    if (it == results.end()) e3::fail(e3::ErrorCode::kSyntaxRejected, "unknown statement");
    return it->second;
  }

  e3::db::RunSample timed_run(std::string_view sql, int) override {
    maybe_throw();
    const double s = latencies.at(std::string(sql));
    if (s >= tgt.statement_timeout_s) return {tgt.statement_timeout_s, true};
    return {s, false};
  }

  std::unique_ptr<e3::db::Database> clone() const override { return std::make_unique<FakeDb>(*this); }
  std::unique_ptr<e3::db::Database> sample_instance(double, std::uint64_t) const override {
    return clone();
  }
  std::string schema_descriptor() override { return "fake()"; }

 private:
  void maybe_throw() const {
    if (forced) e3::fail(*forced, "forced failure");
  }
};

}  // namespace testing
