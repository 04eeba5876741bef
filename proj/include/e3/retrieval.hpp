#pragma once

// Hybrid structural/semantic demonstration retrieval over a persisted pool.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "e3/sql_ast.hpp"
#include "e3/structsim.hpp"

namespace e3::retrieval {

struct EmbeddingVector {
  std::vector<double> values;
  std::string provider_id;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual EmbeddingVector embed(std::string_view sql) = 0;
};

// Built-in deterministic encoder: hashed word unigrams/bigrams and character
// trigrams of the canonical SQL text, signed and L2-normalized.
std::unique_ptr<EmbeddingProvider> make_hash_ngram_provider(int dimension = 256);

// POST {"input": sql} -> {"embedding": [...]} or {"data": [{"embedding": [...]}]}.
std::unique_ptr<EmbeddingProvider> make_http_provider(std::string url, double timeout_s = 30,
                                                      int retries = 2);

// Runs a shell command with the SQL on stdin; stdout must be a JSON array.
std::unique_ptr<EmbeddingProvider> make_subprocess_provider(std::string command,
                                                            double timeout_s = 30,
                                                            int retries = 2);

// Memoizes by SQL text hash. Thread-safe.
std::unique_ptr<EmbeddingProvider> make_cached_provider(std::unique_ptr<EmbeddingProvider> inner);

// Provider spec: "hash-ngram[:dim]", "http:<url>", "cmd:<command>".
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec);

// cos(a, b). Throws DimensionMismatch, ZeroVector.
double sem_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct Query {
  std::string sql;
  sql::QueryAst ast;
  EmbeddingVector embedding;
};

Query make_query(std::string_view sql, EmbeddingProvider& provider);

struct Demonstration {
  std::string original_sql;
  std::string rewritten_sql;
  double speedup = 0;
  EmbeddingVector embedding;  // of original_sql
  std::string ast_fingerprint;  // of original_sql
  std::int64_t created_at = 0;  // milliseconds since the Unix epoch

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct PoolConfig {
  double alpha = 0.5;
  std::optional<std::size_t> capacity;
  double admit_speedup = 1.5;
  structsim::TreeOptions tree_options;
};

struct ScoredDemo {
  Demonstration demo;
  double score = 0;
  double structural = 0;
  double semantic = 0;
};

class DemoPool {
 public:
  struct Entry {
    Demonstration demo;
    structsim::LabeledTree tree;  // of demo.original_sql
  };
  using Snapshot = std::vector<std::shared_ptr<const Entry>>;

  explicit DemoPool(PoolConfig config = {});
  DemoPool(const DemoPool& other);
  DemoPool& operator=(const DemoPool& other);

  const PoolConfig& config() const noexcept { return config_; }
  double alpha() const noexcept { return config_.alpha; }

  std::size_t size() const;
  std::vector<Demonstration> entries() const;
  Snapshot snapshot() const;
  bool contains(std::string_view original, std::string_view rewrite) const;

  // Rejects duplicates (false). Enforces one embedding dimension per pool.
  // Over capacity, the lowest-speedup entry is evicted (ties: oldest, then
  // lexicographically largest original); returns whether `d` remains.
  bool add(Demonstration d);

 private:
  PoolConfig config_;
  mutable std::shared_mutex mu_;
  Snapshot entries_;
};

double hybrid_similarity(const Query& q, const Demonstration& d, double alpha,
                         structsim::TreeOptions options = {});

// Highest hybrid score first; ties: newer created_at, then original_sql,
// then rewritten_sql ascending.
std::vector<ScoredDemo> retrieve_top_k(const Query& q, const DemoPool& pool, int k);

using Clock = std::function<std::int64_t()>;
Clock system_clock_ms();

// Admits iff equivalent and t_orig / t_new > admit_speedup. Returns whether
// the pair was added.
bool maybe_admit(DemoPool& pool, std::string_view original, std::string_view rewrite,
                 double t_orig, double t_new, bool equivalent, EmbeddingProvider& provider,
                 const Clock& clock);

// Line-delimited JSON with a versioned header line.
void save_pool(const DemoPool& pool, const std::string& path);
// Missing or empty file -> empty pool with `defaults`. Header settings
// (alpha) override defaults. Throws Schema on corruption or version
// mismatch, Io on read failure.
DemoPool load_pool(const std::string& path, PoolConfig defaults = {});

}  // namespace e3::retrieval
