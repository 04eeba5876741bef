#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "e3/error.hpp"
#include "e3/retrieval.hpp"
#include "json.hpp"
#include "util/http.hpp"
#include "util/subprocess.hpp"

namespace e3::retrieval {
namespace {

using nlohmann::json;

constexpr const char* kPoolFormat = "e3-demo-pool";
constexpr int kPoolVersion = 1;

EmbeddingVector parse_vector(const json& arr, const std::string& provider) {
  if (!arr.is_array() || arr.empty()) fail(ErrorCode::kEmbedding, "embedding is not a non-empty array");
  EmbeddingVector v;
  v.provider_id = provider;
  for (const auto& x : arr) {
    if (!x.is_number()) fail(ErrorCode::kEmbedding, "embedding holds a non-number");
    const double d = x.get<double>();
    if (!std::isfinite(d)) fail(ErrorCode::kEmbedding, "embedding holds a non-finite value");
    v.values.push_back(d);
  }
  return v;
}

class HashNgramProvider final : public EmbeddingProvider {
 public:
  explicit HashNgramProvider(int dim) : dim_(dim) {
    if (dim < 8) fail(ErrorCode::kConfig, "hash-ngram dimension must be >= 8");
  }
  std::string id() const override { return "hash-ngram-v1/" + std::to_string(dim_); }

  EmbeddingVector embed(std::string_view sql_text) override {
    std::string text;
    try {
      text = sql::render(sql::parse_sql(sql_text));
    } catch (const ParseError&) {
      text = std::string(sql_text);
    }
    for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
        cur += c;
      } else {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
        if (!std::isspace(static_cast<unsigned char>(c))) words.emplace_back(1, c);
      }
    }
    if (!cur.empty()) words.push_back(cur);

    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    auto add = [&](const std::string& feature, double weight) {
      const std::uint64_t h = sql::fnv1a64(feature);
      const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim_));
      v[bucket] += ((h >> 63) ? -1.0 : 1.0) * weight;
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add("w:" + words[i], 1.0);
      if (i + 1 < words.size()) add("b:" + words[i] + " " + words[i + 1], 0.5);
    }
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) add("c:" + text.substr(i, 3), 0.25);

    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& x : v) x /= norm;
    }
    return {std::move(v), id()};
  }

 private:
  int dim_;
};

template <typename Fn>
EmbeddingVector with_retries(int retries, Fn&& fn) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (attempt >= retries) {
        fail(ErrorCode::kEmbedding, "embedding provider failed after " +
                                        std::to_string(attempt + 1) + " attempts: " + e.what());
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
  }
}

class HttpProvider final : public EmbeddingProvider {
 public:
  HttpProvider(std::string url, double timeout, int retries)
      : url_(std::move(url)), timeout_(timeout), retries_(retries) {}
  std::string id() const override { return "http:" + url_; }

  EmbeddingVector embed(std::string_view sql_text) override {
    return with_retries(retries_, [&] {
      const auto res = util::post_json(url_, json{{"input", sql_text}}.dump(), timeout_);
      if (res.status < 200 || res.status >= 300) {
        fail(ErrorCode::kEmbedding, "HTTP status " + std::to_string(res.status));
      }
      json body;
      try {
        body = json::parse(res.body);
      } catch (const json::exception&) {
        fail(ErrorCode::kEmbedding, "response is not JSON");
      }
      if (body.contains("embedding")) return parse_vector(body["embedding"], id());
      if (body.contains("data") && body["data"].is_array() && !body["data"].empty()) {
        return parse_vector(body["data"][0].value("embedding", json()), id());
      }
      fail(ErrorCode::kEmbedding, "response lacks an embedding");
    });
  }

 private:
  std::string url_;
  double timeout_;
  int retries_;
};

class SubprocessProvider final : public EmbeddingProvider {
 public:
  SubprocessProvider(std::string cmd, double timeout, int retries)
      : cmd_(std::move(cmd)), timeout_(timeout), retries_(retries) {}
  std::string id() const override { return "cmd:" + cmd_; }

  EmbeddingVector embed(std::string_view sql_text) override {
    return with_retries(retries_, [&] {
      const auto r = util::run_command(cmd_, std::string(sql_text), timeout_);
      if (r.exit_code != 0) fail(ErrorCode::kEmbedding, "exit status " + std::to_string(r.exit_code));
      try {
        return parse_vector(json::parse(r.out), id());
      } catch (const json::exception&) {
        fail(ErrorCode::kEmbedding, "output is not a JSON array");
      }
    });
  }

 private:
  std::string cmd_;
  double timeout_;
  int retries_;
};

class CachedProvider final : public EmbeddingProvider {
 public:
  explicit CachedProvider(std::unique_ptr<EmbeddingProvider> inner) : inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id(); }

  EmbeddingVector embed(std::string_view sql_text) override {
    const std::uint64_t key = sql::fnv1a64(sql_text);
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end() && it->second.first == sql_text) return it->second.second;
    }
    EmbeddingVector v = inner_->embed(sql_text);
    std::lock_guard lock(mu_);
    cache_[key] = {std::string(sql_text), v};
    return v;
  }

 private:
  std::unique_ptr<EmbeddingProvider> inner_;
  std::mutex mu_;
  std::unordered_map<std::uint64_t, std::pair<std::string, EmbeddingVector>> cache_;
};

bool score_order(const ScoredDemo& a, const ScoredDemo& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.demo.created_at != b.demo.created_at) return a.demo.created_at > b.demo.created_at;
  if (a.demo.original_sql != b.demo.original_sql) return a.demo.original_sql < b.demo.original_sql;
  return a.demo.rewritten_sql < b.demo.rewritten_sql;
}

// Ascending "keep" priority: the first element is evicted first.
bool evict_order(const DemoPool::Entry& a, const DemoPool::Entry& b) {
  if (a.demo.speedup != b.demo.speedup) return a.demo.speedup < b.demo.speedup;
  if (a.demo.created_at != b.demo.created_at) return a.demo.created_at < b.demo.created_at;
  return a.demo.original_sql > b.demo.original_sql;
}

json demo_to_json(const Demonstration& d) {
  return json{{"original_sql", d.original_sql},   {"rewritten_sql", d.rewritten_sql},
              {"speedup", d.speedup},             {"embedding", d.embedding.values},
              {"provider_id", d.embedding.provider_id}, {"fingerprint", d.ast_fingerprint},
              {"created_at", d.created_at}};
}

Demonstration demo_from_json(const json& j) {
  Demonstration d;
  d.original_sql = j.at("original_sql").get<std::string>();
  d.rewritten_sql = j.at("rewritten_sql").get<std::string>();
  d.speedup = j.at("speedup").get<double>();
  d.embedding.values = j.at("embedding").get<std::vector<double>>();
  d.embedding.provider_id = j.at("provider_id").get<std::string>();
  d.ast_fingerprint = j.at("fingerprint").get<std::string>();
  d.created_at = j.at("created_at").get<std::int64_t>();
  if (!(d.speedup > 0)) fail(ErrorCode::kSchema, "speedup must be positive");
  return d;
}

}  // namespace

std::unique_ptr<EmbeddingProvider> make_hash_ngram_provider(int dimension) {
  return std::make_unique<HashNgramProvider>(dimension);
}
std::unique_ptr<EmbeddingProvider> make_http_provider(std::string url, double timeout_s, int retries) {
  return std::make_unique<HttpProvider>(std::move(url), timeout_s, retries);
}
std::unique_ptr<EmbeddingProvider> make_subprocess_provider(std::string command, double timeout_s,
                                                            int retries) {
  return std::make_unique<SubprocessProvider>(std::move(command), timeout_s, retries);
}
std::unique_ptr<EmbeddingProvider> make_cached_provider(std::unique_ptr<EmbeddingProvider> inner) {
  return std::make_unique<CachedProvider>(std::move(inner));
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec) {
  std::unique_ptr<EmbeddingProvider> p;
  if (spec == "hash-ngram") {
    p = make_hash_ngram_provider();
  } else if (spec.starts_with("hash-ngram:")) {
    p = make_hash_ngram_provider(std::stoi(spec.substr(11)));
  } else if (spec.starts_with("http:")) {
    p = make_http_provider(spec.substr(5));
  } else if (spec.starts_with("cmd:")) {
    p = make_subprocess_provider(spec.substr(4));
  } else {
    fail(ErrorCode::kConfig, "unknown embedding provider: " + spec);
  }
  return make_cached_provider(std::move(p));
}

double sem_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size()) {
    fail(ErrorCode::kDimensionMismatch, "embedding dimensions differ: " +
                                            std::to_string(a.values.size()) + " vs " +
                                            std::to_string(b.values.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) fail(ErrorCode::kZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Query make_query(std::string_view sql_text, EmbeddingProvider& provider) {
  return Query{std::string(sql_text), sql::parse_sql(sql_text), provider.embed(sql_text)};
}

// ------------------------------------------------------------------ pool

DemoPool::DemoPool(PoolConfig config) : config_(config) {
  if (!(config_.alpha >= 0 && config_.alpha <= 1)) fail(ErrorCode::kConfig, "alpha must be in [0,1]");
  if (config_.capacity && *config_.capacity == 0) fail(ErrorCode::kConfig, "capacity must be positive");
}

DemoPool::DemoPool(const DemoPool& other) : config_(other.config_), entries_(other.snapshot()) {}

DemoPool& DemoPool::operator=(const DemoPool& other) {
  if (this != &other) {
    auto snap = other.snapshot();
    std::unique_lock lock(mu_);
    config_ = other.config_;
    entries_ = std::move(snap);
  }
  return *this;
}

std::size_t DemoPool::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

DemoPool::Snapshot DemoPool::snapshot() const {
  std::shared_lock lock(mu_);
  return entries_;
}

std::vector<Demonstration> DemoPool::entries() const {
  std::vector<Demonstration> out;
  for (const auto& e : snapshot()) out.push_back(e->demo);
  return out;
}

bool DemoPool::contains(std::string_view original, std::string_view rewrite) const {
  std::shared_lock lock(mu_);
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) {
    return e->demo.original_sql == original && e->demo.rewritten_sql == rewrite;
  });
}

bool DemoPool::add(Demonstration d) {
  auto entry = std::make_shared<Entry>();
  entry->tree = structsim::to_labeled_tree(sql::parse_sql(d.original_sql), config_.tree_options);
  sql::parse_sql(d.rewritten_sql);
  if (!(d.speedup > 0)) fail(ErrorCode::kInvalidArgument, "speedup must be positive");
  entry->demo = std::move(d);

  std::unique_lock lock(mu_);
  for (const auto& e : entries_) {
    if (e->demo.original_sql == entry->demo.original_sql &&
        e->demo.rewritten_sql == entry->demo.rewritten_sql) {
      return false;
    }
  }
  if (!entries_.empty() &&
      entries_.front()->demo.embedding.values.size() != entry->demo.embedding.values.size()) {
    fail(ErrorCode::kDimensionMismatch, "embedding dimension differs from the pool's");
  }
  const Entry* added = entry.get();
  entries_.push_back(std::move(entry));
  if (config_.capacity && entries_.size() > *config_.capacity) {
    auto victim = std::min_element(entries_.begin(), entries_.end(),
                                   [](const auto& a, const auto& b) { return evict_order(*a, *b); });
    const bool evicted_new = victim->get() == added;
    entries_.erase(victim);
    return !evicted_new;
  }
  return true;
}

double hybrid_similarity(const Query& q, const Demonstration& d, double alpha,
                         structsim::TreeOptions options) {
  if (!(alpha >= 0 && alpha <= 1)) fail(ErrorCode::kInvalidArgument, "alpha must be in [0,1]");
  const double s = structsim::struct_similarity(q.ast, sql::parse_sql(d.original_sql), options);
  const double e = sem_similarity(q.embedding, d.embedding);
  return alpha * s + (1 - alpha) * e;
}

std::vector<ScoredDemo> retrieve_top_k(const Query& q, const DemoPool& pool, int k) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  const auto snap = pool.snapshot();
  const double alpha = pool.alpha();
  const auto qtree = structsim::to_labeled_tree(q.ast, pool.config().tree_options);
  std::vector<ScoredDemo> scored;
  scored.reserve(snap.size());
  for (const auto& e : snap) {
    ScoredDemo s;
    s.demo = e->demo;
    s.structural = structsim::struct_similarity(qtree, e->tree);
    s.semantic = sem_similarity(q.embedding, e->demo.embedding);
    s.score = alpha * s.structural + (1 - alpha) * s.semantic;
    scored.push_back(std::move(s));
  }
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    score_order);
  scored.resize(n);
  return scored;
}

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

bool maybe_admit(DemoPool& pool, std::string_view original, std::string_view rewrite,
                 double t_orig, double t_new, bool equivalent, EmbeddingProvider& provider,
                 const Clock& clock) {
  if (!(t_orig > 0) || !(t_new > 0)) {
    fail(ErrorCode::kInvalidArgument, "latencies must be positive");
  }
  if (!equivalent) return false;
  const double speedup = t_orig / t_new;
  if (!(speedup > pool.config().admit_speedup)) return false;
  if (pool.contains(original, rewrite)) return false;
  Demonstration d;
  d.original_sql = std::string(original);
  d.rewritten_sql = std::string(rewrite);
  d.speedup = speedup;
  d.embedding = provider.embed(original);
  d.ast_fingerprint = sql::fingerprint_sql(original);
  d.created_at = clock();
  return pool.add(std::move(d));
}

void save_pool(const DemoPool& pool, const std::string& path) {
  const auto snap = pool.snapshot();
  json header{{"format", kPoolFormat},
              {"version", kPoolVersion},
              {"alpha", pool.alpha()},
              {"admit_speedup", pool.config().admit_speedup},
              {"entries", snap.size()}};
  if (pool.config().capacity) header["capacity"] = *pool.config().capacity;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write pool file " + path);
    out << header.dump() << '\n';
    for (const auto& e : snap) out << demo_to_json(e->demo).dump() << '\n';
    if (!out) fail(ErrorCode::kIo, "write failed for pool file " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorCode::kIo, "cannot replace " + path);
}

DemoPool load_pool(const std::string& path, PoolConfig defaults) {
  if (!std::filesystem::exists(path)) return DemoPool(defaults);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read pool file " + path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) return DemoPool(defaults);
  try {
    const json header = json::parse(lines[0]);
    if (header.value("format", "") != kPoolFormat) fail(ErrorCode::kSchema, "not a demonstration pool file");
    if (header.value("version", -1) != kPoolVersion) {
      fail(ErrorCode::kSchema, "unsupported pool version " + header.value("version", json()).dump());
    }
    PoolConfig cfg = defaults;
    cfg.alpha = header.at("alpha").get<double>();
    if (header.contains("admit_speedup")) cfg.admit_speedup = header["admit_speedup"].get<double>();
    if (header.contains("capacity")) cfg.capacity = header["capacity"].get<std::size_t>();
    DemoPool pool(cfg);
    const auto expected = header.at("entries").get<std::size_t>();
    if (expected != lines.size() - 1) fail(ErrorCode::kSchema, "pool file entry count mismatch");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (!pool.add(demo_from_json(json::parse(lines[i])))) {
        fail(ErrorCode::kSchema, "duplicate entry in pool file");
      }
    }
    return pool;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("corrupted pool file: ") + e.what());
  } catch (const ParseError& e) {
    fail(ErrorCode::kSchema, std::string("unparseable SQL in pool file: ") + e.what());
  }
}

}  // namespace e3::retrieval
