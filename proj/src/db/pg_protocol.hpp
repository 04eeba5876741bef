#pragma once

// Minimal PostgreSQL frontend/backend protocol v3 client pieces.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace e3::db::pg {

struct ConnInfo {
  std::string host = "localhost";
  std::string port = "5432";
  std::string user;
  std::string password;
  bool has_password = false;
  std::string database;
  std::string application_name = "e3rewrite";
};

ConnInfo parse_dsn(std::string_view dsn);

std::string base64_encode(const unsigned char* data, std::size_t n);
std::string base64_decode(std::string_view s);
std::string md5_password(std::string_view user, std::string_view password, std::string_view salt);

// SCRAM-SHA-256 without channel binding. PostgreSQL ignores the SCRAM user
// name (the startup packet carries it), so it is empty by default.
class ScramClient {
 public:
  explicit ScramClient(std::string password, std::string client_nonce = {},
                       std::string user = {});
  std::string client_first() const;
  std::string client_final(std::string_view server_first);
  void verify_server_final(std::string_view server_final) const;

 private:
  std::string password_;
  std::string nonce_;
  std::string first_bare_;
  std::string expected_server_signature_;
};

struct Message {
  char type = 0;
  std::string body;
};

struct ServerError {
  std::string sqlstate;
  std::string message;
};

struct QueryResult {
  std::vector<std::string> columns;
  std::vector<std::uint32_t> type_oids;
  std::vector<std::vector<std::optional<std::string>>> rows;
};

void put_i32(std::string& out, std::int32_t v);
void put_i16(std::string& out, std::int16_t v);
std::int32_t get_i32(std::string_view s, std::size_t& pos);
std::int16_t get_i16(std::string_view s, std::size_t& pos);
std::string get_cstr(std::string_view s, std::size_t& pos);
std::string frame(char type, std::string_view body);

class Connection {
 public:
  Connection();
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  // Startup and authentication; returns once the server is ready.
  void open(const ConnInfo& info, double io_timeout_s);
  void set_io_timeout(double seconds);

  // Simple query. Keeps the last statement's rows; throws ServerError.
  QueryResult query(std::string_view sql);

 private:
  Message read_message();

  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool ready_ = false;
};

}  // namespace e3::db::pg
