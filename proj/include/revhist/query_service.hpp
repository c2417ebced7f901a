#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "revhist/temporal_index.hpp"

namespace revhist::service {

struct ServiceConfig {
  std::filesystem::path index_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::int64_t max_range_days = 3650;
  Granularity default_granularity = Granularity::week;
  // "*" allows any origin.
  std::vector<std::string> cors_allowed_origins;
  // Static files served under /ui/ when set.
  std::optional<std::filesystem::path> ui_dir;

  // Throws Error(config_parse_error) when max_range_days < 1.
  void validate() const;
};

// `key = value` lines; `#` starts a comment line. Keys: index_dir, bind
// (host:port), max_range_days, default_granularity, cors_allowed_origins
// (comma separated), ui_dir. Throws Error(config_parse_error).
ServiceConfig parse_config(std::string_view text);
ServiceConfig load_config(const std::filesystem::path& path);

// Replaces index_dir with $REVHIST_INDEX when set.
void apply_environment(ServiceConfig& config);

// "host:port" or ":port". Throws Error(config_parse_error).
std::pair<std::string, int> parse_bind(std::string_view text);

struct Response {
  int status = 200;
  std::string body;
};

using Params = std::multimap<std::string, std::string>;

// Endpoint logic independent of the transport. Responses are canonical
// JSON: sorted keys, no insignificant whitespace.
class QueryService {
public:
  explicit QueryService(ServiceConfig config);
  ~QueryService();
  QueryService(const QueryService&) = delete;
  QueryService& operator=(const QueryService&) = delete;

  // Opens the index read-only and publishes its snapshot. Until the first
  // successful call every data endpoint answers 503.
  void load();
  // Reopens the index and swaps snapshots; in-flight requests keep the old one.
  void reload();
  bool ready() const;

  Response handle(std::string_view path, const Params& params) const;

  std::shared_ptr<const index::Snapshot> snapshot() const;
  const ServiceConfig& config() const { return config_; }

private:
  ServiceConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the HTTP/1.1 front end. The index opens on a background thread so
// /health answers 503 until it is ready.
class HttpServer {
public:
  explicit HttpServer(ServiceConfig config);
  ~HttpServer();

  // Binds config.host:config.port (port 0 picks a free one) and returns the
  // bound port. Throws Error(io_error) on bind failure.
  int bind();
  // Serves until stop(); blocks.
  void serve();
  void stop();
  void wait_until_ready() const;

  QueryService& service();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace revhist::service
