// PostgreSQL backend over the frontend/backend protocol v3 (simple query
// flow). Authentication: trust, cleartext, MD5, SCRAM-SHA-256. No TLS.

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "db/backends.hpp"
#include "db/pg_protocol.hpp"
#include "e3/error.hpp"

namespace e3::db {
namespace pg {

// ------------------------------------------------------------------- DSN

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const int hi = hex_value(s[i + 1]);
      const int lo = hex_value(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

}  // namespace

ConnInfo parse_dsn(std::string_view dsn) {
  ConnInfo ci;
  std::string_view rest = dsn;
  for (std::string_view scheme : {"postgresql://", "postgres://"}) {
    if (rest.starts_with(scheme)) {
      rest.remove_prefix(scheme.size());
      break;
    }
  }
  if (rest.size() == dsn.size()) fail(ErrorCode::kConfig, "not a postgresql:// DSN");
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    std::string_view params = rest.substr(q + 1);
    rest = rest.substr(0, q);
    while (!params.empty()) {
      const auto amp = params.find('&');
      const std::string_view kv = params.substr(0, amp);
      const auto eq = kv.find('=');
      const std::string key(kv.substr(0, eq));
      const std::string val = eq == std::string_view::npos ? "" : percent_decode(kv.substr(eq + 1));
      if (key == "sslmode" && val != "disable" && val != "allow" && val != "prefer") {
        fail(ErrorCode::kConfig, "TLS is not supported; use sslmode=disable");
      }
      if (key == "application_name") ci.application_name = val;
      if (amp == std::string_view::npos) break;
      params.remove_prefix(amp + 1);
    }
  }
  std::string_view hostpart = rest;
  if (const auto slash = rest.find('/'); slash != std::string_view::npos) {
    ci.database = percent_decode(rest.substr(slash + 1));
    hostpart = rest.substr(0, slash);
  }
  if (const auto at = hostpart.rfind('@'); at != std::string_view::npos) {
    const std::string_view userinfo = hostpart.substr(0, at);
    hostpart = hostpart.substr(at + 1);
    const auto colon = userinfo.find(':');
    ci.user = percent_decode(userinfo.substr(0, colon));
    if (colon != std::string_view::npos) {
      ci.password = percent_decode(userinfo.substr(colon + 1));
      ci.has_password = true;
    }
  }
  if (!hostpart.empty() && hostpart.front() == '[') {
    const auto close = hostpart.find(']');
    ci.host = std::string(hostpart.substr(1, close - 1));
    hostpart = hostpart.substr(close + 1);
    if (hostpart.starts_with(":")) ci.port = std::string(hostpart.substr(1));
  } else {
    const auto colon = hostpart.rfind(':');
    ci.host = std::string(hostpart.substr(0, colon));
    if (colon != std::string_view::npos) ci.port = std::string(hostpart.substr(colon + 1));
  }
  if (ci.host.empty()) ci.host = "localhost";
  if (ci.port.empty()) ci.port = "5432";
  if (ci.user.empty()) {
    const char* u = std::getenv("PGUSER");
    ci.user = u ? u : "postgres";
  }
  if (ci.database.empty()) ci.database = ci.user;
  return ci;
}

// ---------------------------------------------------------------- crypto

std::string base64_encode(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                  static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::string base64_decode(std::string_view s) {
  std::string out(3 * s.size() / 4 + 3, '\0');
  const int len = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(s.data()),
                                  static_cast<int>(s.size()));
  if (len < 0) fail(ErrorCode::kConnection, "malformed base64 from server");
  std::size_t pad = 0;
  if (!s.empty() && s.back() == '=') ++pad;
  if (s.size() > 1 && s[s.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(len) - pad);
  return out;
}

namespace {

std::string md5_hex(std::string_view in) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(in.data(), in.size(), digest, &len, EVP_md5(), nullptr);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

using Digest = std::array<unsigned char, 32>;

Digest hmac256(const void* key, std::size_t key_len, std::string_view msg) {
  Digest out{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key, static_cast<int>(key_len),
       reinterpret_cast<const unsigned char*>(msg.data()), msg.size(), out.data(), &len);
  return out;
}

Digest sha256(const Digest& in) {
  Digest out{};
  unsigned int len = 0;
  EVP_Digest(in.data(), in.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

}  // namespace

std::string md5_password(std::string_view user, std::string_view password,
                         std::string_view salt) {
  return "md5" + md5_hex(md5_hex(std::string(password) + std::string(user)) + std::string(salt));
}

ScramClient::ScramClient(std::string password, std::string client_nonce, std::string user)
    : password_(std::move(password)), nonce_(std::move(client_nonce)) {
  if (nonce_.empty()) {
    unsigned char raw[18];
    RAND_bytes(raw, sizeof raw);
    nonce_ = base64_encode(raw, sizeof raw);
  }
  first_bare_ = "n=" + user + ",r=" + nonce_;
}

std::string ScramClient::client_first() const { return "n,," + first_bare_; }

std::string ScramClient::client_final(std::string_view server_first) {
  std::string nonce, salt_b64;
  int iterations = 0;
  std::size_t pos = 0;
  while (pos < server_first.size()) {
    auto comma = server_first.find(',', pos);
    if (comma == std::string_view::npos) comma = server_first.size();
    const std::string_view attr = server_first.substr(pos, comma - pos);
    if (attr.size() >= 2 && attr[1] == '=') {
      const std::string_view val = attr.substr(2);
      if (attr[0] == 'r') nonce = val;
      if (attr[0] == 's') salt_b64 = val;
      if (attr[0] == 'i') iterations = std::atoi(std::string(val).c_str());
    }
    pos = comma + 1;
  }
  if (nonce.rfind(nonce_, 0) != 0 || nonce.size() == nonce_.size() || salt_b64.empty() ||
      iterations <= 0) {
    fail(ErrorCode::kConnection, "invalid SCRAM server-first message");
  }
  const std::string salt = base64_decode(salt_b64);
  Digest salted{};
  PKCS5_PBKDF2_HMAC(password_.data(), static_cast<int>(password_.size()),
                    reinterpret_cast<const unsigned char*>(salt.data()),
                    static_cast<int>(salt.size()), iterations, EVP_sha256(),
                    static_cast<int>(salted.size()), salted.data());
  const Digest client_key = hmac256(salted.data(), salted.size(), "Client Key");
  const Digest stored_key = sha256(client_key);
  const std::string without_proof = "c=biws,r=" + nonce;
  const std::string auth_message =
      first_bare_ + "," + std::string(server_first) + "," + without_proof;
  const Digest signature = hmac256(stored_key.data(), stored_key.size(), auth_message);
  Digest proof{};
  for (std::size_t i = 0; i < proof.size(); ++i) proof[i] = client_key[i] ^ signature[i];
  const Digest server_key = hmac256(salted.data(), salted.size(), "Server Key");
  const Digest server_sig = hmac256(server_key.data(), server_key.size(), auth_message);
  expected_server_signature_ = base64_encode(server_sig.data(), server_sig.size());
  return without_proof + ",p=" + base64_encode(proof.data(), proof.size());
}

void ScramClient::verify_server_final(std::string_view server_final) const {
  if (server_final.starts_with("e=")) {
    fail(ErrorCode::kConnection, "SCRAM authentication failed: " + std::string(server_final));
  }
  if (!server_final.starts_with("v=") || server_final.substr(2) != expected_server_signature_) {
    fail(ErrorCode::kConnection, "SCRAM server signature mismatch");
  }
}

// ------------------------------------------------------------ connection

namespace {

class Socket {
 public:
  Socket() = default;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }

  void connect(const std::string& host, const std::string& port, double timeout_s) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
      fail(ErrorCode::kConnection, "cannot resolve " + host + ":" + port);
    }
    std::string last = "no address";
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
        fd_ = fd;
        break;
      }
      last = std::strerror(errno);
      ::close(fd);
    }
    freeaddrinfo(res);
    if (fd_ < 0) fail(ErrorCode::kConnection, "cannot connect to " + host + ":" + port + ": " + last);
    timeout_s_ = timeout_s;
  }

  void set_timeout(double s) { timeout_s_ = s; }

  void write_all(const std::string& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        fail(ErrorCode::kConnection, "connection lost while sending");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void read_exact(char* out, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      pollfd p{fd_, POLLIN, 0};
      const int ms = static_cast<int>(std::min(timeout_s_ * 1000.0, 2.0e9));
      const int pr = ::poll(&p, 1, ms);
      if (pr == 0) fail(ErrorCode::kTimeout, "no response from server");
      if (pr < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::kConnection, "poll failed");
      }
      const ssize_t r = ::recv(fd_, out + off, n - off, 0);
      if (r <= 0) {
        if (r < 0 && errno == EINTR) continue;
        fail(ErrorCode::kConnection, "connection closed by server");
      }
      off += static_cast<std::size_t>(r);
    }
  }

 private:
  int fd_ = -1;
  double timeout_s_ = 30.0;
};

}  // namespace

void put_i32(std::string& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  out += static_cast<char>(u >> 24);
  out += static_cast<char>(u >> 16);
  out += static_cast<char>(u >> 8);
  out += static_cast<char>(u);
}

void put_i16(std::string& out, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  out += static_cast<char>(u >> 8);
  out += static_cast<char>(u);
}

std::int32_t get_i32(std::string_view s, std::size_t& pos) {
  if (pos + 4 > s.size()) fail(ErrorCode::kConnection, "truncated protocol message");
  const auto* p = reinterpret_cast<const unsigned char*>(s.data() + pos);
  pos += 4;
  return static_cast<std::int32_t>((std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                                   (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]});
}

std::int16_t get_i16(std::string_view s, std::size_t& pos) {
  if (pos + 2 > s.size()) fail(ErrorCode::kConnection, "truncated protocol message");
  const auto* p = reinterpret_cast<const unsigned char*>(s.data() + pos);
  pos += 2;
  return static_cast<std::int16_t>((p[0] << 8) | p[1]);
}

std::string get_cstr(std::string_view s, std::size_t& pos) {
  const auto end = s.find('\0', pos);
  if (end == std::string_view::npos) fail(ErrorCode::kConnection, "unterminated string in message");
  std::string out(s.substr(pos, end - pos));
  pos = end + 1;
  return out;
}

std::string frame(char type, std::string_view body) {
  std::string out;
  if (type) out += type;
  put_i32(out, static_cast<std::int32_t>(body.size() + 4));
  out += body;
  return out;
}

struct Connection::Impl {
  Socket sock;
};

Connection::Connection() : impl_(std::make_unique<Impl>()) {}
Connection::~Connection() {
  if (impl_ && ready_) {
    try {
      impl_->sock.write_all(frame('X', ""));
    } catch (...) {
    }
  }
}

Message Connection::read_message() {
  char header[5];
  impl_->sock.read_exact(header, 5);
  std::size_t pos = 1;
  const std::int32_t len = get_i32(std::string_view(header, 5), pos);
  if (len < 4 || len > (1 << 30)) fail(ErrorCode::kConnection, "invalid message length");
  Message m;
  m.type = header[0];
  m.body.resize(static_cast<std::size_t>(len - 4));
  if (!m.body.empty()) impl_->sock.read_exact(m.body.data(), m.body.size());
  return m;
}

ServerError parse_error_fields(std::string_view body) {
  ServerError e;
  std::size_t pos = 0;
  while (pos < body.size() && body[pos] != '\0') {
    const char field = body[pos++];
    const std::string value = get_cstr(body, pos);
    if (field == 'C') e.sqlstate = value;
    if (field == 'M') e.message = value;
  }
  return e;
}

void Connection::open(const ConnInfo& ci, double io_timeout_s) {
  impl_->sock.connect(ci.host, ci.port, io_timeout_s);

  std::string startup;
  put_i32(startup, 196608);  // protocol 3.0
  for (const auto& [k, v] : {std::pair<std::string, std::string>{"user", ci.user},
                             {"database", ci.database},
                             {"application_name", ci.application_name},
                             {"client_encoding", "UTF8"}}) {
    startup += k;
    startup += '\0';
    startup += v;
    startup += '\0';
  }
  startup += '\0';
  impl_->sock.write_all(frame(0, startup));

  std::optional<ScramClient> scram;
  for (;;) {
    Message m = read_message();
    if (m.type == 'E') {
      const auto err = parse_error_fields(m.body);
      fail(ErrorCode::kConnection, "server refused connection: " + err.message);
    }
    if (m.type == 'Z') {
      ready_ = true;
      return;
    }
    if (m.type != 'R') continue;  // ParameterStatus, BackendKeyData, Notice
    std::size_t pos = 0;
    const std::int32_t code = get_i32(m.body, pos);
    auto need_password = [&] {
      if (!ci.has_password) fail(ErrorCode::kConnection, "server requested a password but none was given");
    };
    switch (code) {
      case 0: break;
      case 3: {
        need_password();
        impl_->sock.write_all(frame('p', ci.password + '\0'));
        break;
      }
      case 5: {
        need_password();
        const std::string salt = m.body.substr(pos, 4);
        impl_->sock.write_all(frame('p', md5_password(ci.user, ci.password, salt) + '\0'));
        break;
      }
      case 10: {
        need_password();
        bool offered = false;
        while (pos < m.body.size() && m.body[pos] != '\0') {
          if (get_cstr(m.body, pos) == "SCRAM-SHA-256") offered = true;
        }
        if (!offered) fail(ErrorCode::kConnection, "no supported SASL mechanism offered");
        scram.emplace(ci.password);
        const std::string first = scram->client_first();
        std::string body = "SCRAM-SHA-256";
        body += '\0';
        put_i32(body, static_cast<std::int32_t>(first.size()));
        body += first;
        impl_->sock.write_all(frame('p', body));
        break;
      }
      case 11: {
        if (!scram) fail(ErrorCode::kConnection, "unexpected SASL continue");
        impl_->sock.write_all(frame('p', scram->client_final(m.body.substr(pos))));
        break;
      }
      case 12: {
        if (!scram) fail(ErrorCode::kConnection, "unexpected SASL final");
        scram->verify_server_final(m.body.substr(pos));
        break;
      }
      default:
        fail(ErrorCode::kConnection, "unsupported authentication method " + std::to_string(code));
    }
  }
}

void Connection::set_io_timeout(double s) { impl_->sock.set_timeout(s); }

QueryResult Connection::query(std::string_view sql) {
  impl_->sock.write_all(frame('Q', std::string(sql) + '\0'));
  QueryResult out;
  std::optional<ServerError> error;
  for (;;) {
    Message m = read_message();
    switch (m.type) {
      case 'T': {
        out = QueryResult{};
        std::size_t pos = 0;
        const int n = get_i16(m.body, pos);
        for (int i = 0; i < n; ++i) {
          out.columns.push_back(get_cstr(m.body, pos));
          pos += 6;  // table oid, attnum
          out.type_oids.push_back(static_cast<std::uint32_t>(get_i32(m.body, pos)));
          pos += 8;  // typlen, typmod, format
        }
        break;
      }
      case 'D': {
        std::size_t pos = 0;
        const int n = get_i16(m.body, pos);
        std::vector<std::optional<std::string>> row;
        for (int i = 0; i < n; ++i) {
          const std::int32_t len = get_i32(m.body, pos);
          if (len < 0) {
            row.emplace_back(std::nullopt);
          } else {
            if (pos + static_cast<std::size_t>(len) > m.body.size()) {
              fail(ErrorCode::kConnection, "truncated data row");
            }
            row.emplace_back(m.body.substr(pos, static_cast<std::size_t>(len)));
            pos += static_cast<std::size_t>(len);
          }
        }
        out.rows.push_back(std::move(row));
        break;
      }
      case 'E':
        if (!error) error = parse_error_fields(m.body);
        break;
      case 'Z':
        if (error) throw *error;
        return out;
      default:
        break;  // C, I, N, S
    }
  }
}

}  // namespace pg

// --------------------------------------------------------------- backend

namespace {

Value convert(std::uint32_t oid, const std::optional<std::string>& text) {
  if (!text) return std::monostate{};
  switch (oid) {
    case 16: return std::int64_t{*text == "t" ? 1 : 0};
    case 20:
    case 21:
    case 23:
    case 26: return std::int64_t{std::stoll(*text)};
    case 700:
    case 701:
    case 1700: {
      if (*text == "NaN") return std::nan("");
      return std::stod(*text);
    }
    default: return *text;
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

class PostgresDatabase final : public Database {
 public:
  explicit PostgresDatabase(DbTarget target) : target_(std::move(target)) {
    info_ = pg::parse_dsn(target_.dsn);
    if (!info_.has_password) {
      if (const char* pw = std::getenv(target_.password_env.c_str())) {
        info_.password = pw;
        info_.has_password = true;
      }
    }
    conn_.open(info_, 30.0);
    conn_.set_io_timeout(target_.statement_timeout_s + 30.0);
    const long ms = std::lround(target_.statement_timeout_s * 1000.0);
    run("SET statement_timeout = " + std::to_string(ms));
  }

  const DbTarget& target() const override { return target_; }

  PlanDocument explain(std::string_view sql, bool analyze) override {
    if (!is_select_statement(sql)) {
      fail(ErrorCode::kSyntaxRejected, "only SELECT statements can be explained");
    }
    const std::string prefix =
        analyze ? "EXPLAIN (ANALYZE, FORMAT JSON) " : "EXPLAIN (FORMAT JSON) ";
    const auto r = run(prefix + std::string(sql), true);
    if (r.rows.empty() || r.rows[0].empty() || !r.rows[0][0]) {
      fail(ErrorCode::kPlanFormat, "empty EXPLAIN output");
    }
    return {*r.rows[0][0], analyze};
  }

  ResultSet execute(std::string_view sql) override {
    if (!is_select_statement(sql)) fail(ErrorCode::kSyntaxRejected, "only SELECT statements are accepted");
    const auto r = run(std::string(sql), true);
    ResultSet rs;
    rs.columns = r.columns;
    for (const auto& row : r.rows) {
      std::vector<Value> out;
      for (std::size_t i = 0; i < row.size(); ++i) out.push_back(convert(r.type_oids[i], row[i]));
      rs.rows.push_back(std::move(out));
    }
    return rs;
  }

  RunSample timed_run(std::string_view sql, int) override {
    const auto start = std::chrono::steady_clock::now();
    try {
      execute(sql);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kTimeout) return {target_.statement_timeout_s, true};
      throw;
    }
    return {std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
            false};
  }

  std::unique_ptr<Database> clone() const override {
    return std::make_unique<PostgresDatabase>(target_);
  }

  std::unique_ptr<Database> sample_instance(double rate, std::uint64_t seed) const override {
    if (!(rate > 0 && rate <= 1)) fail(ErrorCode::kInvalidArgument, "sample rate must be in (0,1]");
    auto db = std::make_unique<PostgresDatabase>(target_);
    if (rate >= 1.0) return db;
    // Temporary tables shadow the base tables for the rest of the session.
    const auto tables = db->run(
        "SELECT schemaname, tablename FROM pg_tables WHERE schemaname = current_schema() "
        "ORDER BY tablename");
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.6f", rate * 100.0);
    const auto repeat = std::to_string(seed % 2147483647ULL);
    for (const auto& row : tables.rows) {
      const std::string schema = row[0].value_or(""), name = row[1].value_or("");
      db->run("CREATE TEMP TABLE " + quote_ident(name) + " AS SELECT * FROM " +
              quote_ident(schema) + "." + quote_ident(name) + " TABLESAMPLE BERNOULLI (" + pct +
              ") REPEATABLE (" + repeat + ")");
    }
    db->run("ANALYZE");
    return db;
  }

  std::string schema_descriptor() override {
    const auto r = run(
        "SELECT table_name, string_agg(column_name || ' ' || data_type, ', ' ORDER BY "
        "ordinal_position) FROM information_schema.columns WHERE table_schema = "
        "current_schema() GROUP BY table_name ORDER BY table_name");
    std::string out;
    for (const auto& row : r.rows) {
      out += row[0].value_or("") + "(" + row[1].value_or("") + ")\n";
    }
    return out;
  }

 private:
  pg::QueryResult run(const std::string& sql, bool classify_syntax = false) {
    try {
      return conn_.query(sql);
    } catch (const pg::ServerError& e) {
      if (e.sqlstate == "57014") fail(ErrorCode::kTimeout, e.message);
      if (classify_syntax && (e.sqlstate.starts_with("42") || e.sqlstate.starts_with("0A"))) {
        fail(ErrorCode::kSyntaxRejected, e.sqlstate + ": " + e.message);
      }
      fail(ErrorCode::kExecution, e.sqlstate + ": " + e.message);
    }
  }

  DbTarget target_;
  pg::ConnInfo info_;
  pg::Connection conn_;
};

}  // namespace

std::unique_ptr<Database> open_postgres(const DbTarget& target) {
  return std::make_unique<PostgresDatabase>(target);
}

}  // namespace e3::db
