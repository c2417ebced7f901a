#include "revhist/query_service.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "revhist/error.hpp"
#include "revhist/tokenizer.hpp"

namespace revhist::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
std::optional<T> parse_number(std::string_view text)
{
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    return std::nullopt;
  return v;
}

[[noreturn]] void config_error(std::size_t line, const std::string& what)
{
  throw Error(ErrorCode::config_parse_error,
              line ? "line " + std::to_string(line) + ": " + what : what);
}

} // namespace

void ServiceConfig::validate() const
{
  if (max_range_days < 1)
    config_error(0, "max_range_days must be at least 1");
  if (port < 0 || port > 65535)
    config_error(0, "port out of range");
}

std::pair<std::string, int> parse_bind(std::string_view text)
{
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos)
    config_error(0, "bind address needs host:port, got '" + std::string(text) + "'");
  auto port = parse_number<int>(text.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535)
    config_error(0, "bad port in '" + std::string(text) + "'");
  std::string host(text.substr(0, colon));
  if (host.empty())
    host = "0.0.0.0";
  return {host, *port};
}

ServiceConfig parse_config(std::string_view text)
{
  ServiceConfig c;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#')
      continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      config_error(lineno, "expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "index_dir") {
      c.index_dir = std::string(value);
    } else if (key == "bind") {
      std::tie(c.host, c.port) = parse_bind(value);
    } else if (key == "max_range_days") {
      auto n = parse_number<std::int64_t>(value);
      if (!n)
        config_error(lineno, "max_range_days is not an integer");
      c.max_range_days = *n;
    } else if (key == "default_granularity") {
      auto g = parse_granularity(value);
      if (!g)
        config_error(lineno, "granularity must be day or week");
      c.default_granularity = *g;
    } else if (key == "cors_allowed_origins") {
      c.cors_allowed_origins.clear();
      std::size_t start = 0;
      while (start <= value.size()) {
        auto comma = value.find(',', start);
        auto item = trim(value.substr(start, comma - start));
        if (!item.empty())
          c.cors_allowed_origins.emplace_back(item);
        if (comma == std::string_view::npos)
          break;
        start = comma + 1;
      }
    } else if (key == "ui_dir") {
      c.ui_dir = std::string(value);
    } else {
      config_error(lineno, "unknown key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

ServiceConfig load_config(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_config(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void apply_environment(ServiceConfig& config)
{
  if (const char* dir = std::getenv("REVHIST_INDEX"); dir && *dir)
    config.index_dir = dir;
}

// QueryService

struct QueryService::Impl {
  mutable std::mutex mu;
  std::shared_ptr<const index::Snapshot> snap;
};

QueryService::QueryService(ServiceConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>())
{
  config_.validate();
}

QueryService::~QueryService() = default;

void QueryService::load()
{
  auto idx = index::TemporalIndex::open(config_.index_dir, index::OpenMode::read_only);
  auto snap = idx.snapshot();
  std::lock_guard lock(impl_->mu);
  impl_->snap = std::move(snap);
}

void QueryService::reload()
{
  load();
}

bool QueryService::ready() const
{
  std::lock_guard lock(impl_->mu);
  return impl_->snap != nullptr;
}

std::shared_ptr<const index::Snapshot> QueryService::snapshot() const
{
  std::lock_guard lock(impl_->mu);
  return impl_->snap;
}

namespace {

class Args {
public:
  explicit Args(const Params& p) : p_(p) {}

  std::optional<std::string> get(const std::string& name) const
  {
    auto it = p_.find(name);
    if (it == p_.end())
      return std::nullopt;
    return it->second;
  }

  std::string required(const std::string& name) const
  {
    auto v = get(name);
    if (!v || v->empty())
      throw Error(ErrorCode::bad_parameter, "missing parameter '" + name + "'");
    return *v;
  }

  bool flag(const std::string& name) const
  {
    auto v = get(name);
    if (!v)
      return false;
    if (*v == "true" || *v == "1" || v->empty())
      return true;
    if (*v == "false" || *v == "0")
      return false;
    throw Error(ErrorCode::bad_parameter, "parameter '" + name + "' must be true or false");
  }

  std::size_t count(const std::string& name, std::size_t fallback, std::size_t max) const
  {
    auto v = get(name);
    if (!v)
      return fallback;
    auto n = parse_number<std::size_t>(*v);
    if (!n || *n < 1 || *n > max)
      throw Error(ErrorCode::bad_parameter,
                  "parameter '" + name + "' must be an integer in [1, " + std::to_string(max) + "]");
    return *n;
  }

private:
  const Params& p_;
};

struct Context {
  const ServiceConfig& config;
  const index::Snapshot& snap;
  const Args& args;

  Granularity granularity() const
  {
    auto v = args.get("granularity");
    if (!v)
      return config.default_granularity;
    auto g = parse_granularity(*v);
    if (!g)
      throw Error(ErrorCode::bad_parameter, "granularity must be day or week");
    return *g;
  }

  index::Field field() const
  {
    auto v = args.get("field");
    return v ? index::parse_field(*v) : index::Field::anchor;
  }

  // Missing bounds default to the indexed time span, widened to whole days.
  TimeRange range() const
  {
    auto from = args.get("from");
    auto to = args.get("to");
    std::optional<TimeRange> span;
    if (!from || !to)
      span = snap.stats().time_span;
    auto bound = [&](const std::optional<std::string>& v, bool start) -> Timestamp {
      if (v)
        return parse_date_or_instant(*v);
      if (!span)
        throw Error(ErrorCode::bad_range, "index is empty; give from and to");
      if (start)
        return to_timestamp(day_of(span->start));
      return to_timestamp(day_of(span->end - std::chrono::seconds{1}) + std::chrono::days{1});
    };
    TimeRange r{bound(from, true), bound(to, false)};
    if (r.end < r.start)
      throw Error(ErrorCode::bad_range, "from must precede to");
    auto limit = std::chrono::days{config.max_range_days};
    if (r.end - r.start > limit)
      throw Error(ErrorCode::bad_range,
                  "range exceeds max_range_days (" + std::to_string(config.max_range_days) + ")");
    return r;
  }

  void require_nonempty(const TimeRange& r) const
  {
    if (!r.valid())
      throw Error(ErrorCode::bad_range, "from must precede to");
  }

  index::QueryTarget target(const std::string& key) const
  {
    auto by = args.get("by").value_or("term");
    if (by == "term")
      return index::QueryTarget::term(key);
    if (by == "entity")
      return index::QueryTarget::entity(key);
    throw Error(ErrorCode::bad_parameter, "by must be term or entity");
  }
};

int status_for(ErrorCode code)
{
  switch (code) {
    case ErrorCode::bad_range:
    case ErrorCode::bad_parameter:
    case ErrorCode::unknown_field:
    case ErrorCode::bad_timestamp:
    case ErrorCode::unknown_kind:
    case ErrorCode::usage:
      return 400;
    case ErrorCode::unknown_entity:
      return 404;
    default:
      return 500;
  }
}

Response error_response(int status, std::string_view code, std::string_view message)
{
  json j{{"error", {{"code", code}, {"message", message}}}};
  return {status, j.dump()};
}

json handle_timeline(const Context& ctx)
{
  auto q = ctx.args.required("q");
  index::TimelineQuery query{ctx.target(q), ctx.field(), ctx.granularity(), ctx.range(),
                             ctx.args.flag("weighted")};
  ctx.require_nonempty(query.range);
  auto j = index::to_json(ctx.snap.timeline(query));
  return j;
}

json handle_top_terms(const Context& ctx)
{
  index::TopTermsQuery query;
  if (auto q = ctx.args.get("q"); q && !q->empty())
    query.target = ctx.target(*q);
  query.field = ctx.field();
  query.range = ctx.range();
  query.k = ctx.args.count("k", 10, 1000);
  return index::to_json(ctx.snap.top_terms(query));
}

json handle_cooccur(const Context& ctx)
{
  index::CoOccurrenceQuery query;
  query.entity_a = ctx.args.required("a");
  query.entity_b = ctx.args.required("b");
  query.field = ctx.field();
  query.granularity = ctx.granularity();
  query.range = ctx.range();
  query.weighted = ctx.args.flag("weighted");
  ctx.require_nonempty(query.range);
  if (ctx.args.flag("strict")) {
    for (auto* key : {&query.entity_a, &query.entity_b})
      if (!ctx.snap.has_entity(*key))
        throw Error(ErrorCode::unknown_entity, "unknown entity '" + *key + "'");
  }
  return index::to_json(ctx.snap.co_occurrence(query));
}

json handle_entity_search(const Context& ctx)
{
  auto prefix = ctx.args.get("prefix").value_or("");
  auto limit = ctx.args.count("limit", 20, 1000);
  return index::to_json(ctx.snap.entity_search(prefix, limit));
}

} // namespace

Response QueryService::handle(std::string_view path, const Params& params) const
{
  using Handler = json (*)(const Context&);
  static const std::map<std::string_view, Handler> routes{
    {"/timeline", handle_timeline},
    {"/top-terms", handle_top_terms},
    {"/cooccur", handle_cooccur},
    {"/entity-search", handle_entity_search},
  };
  auto route = routes.find(path);
  if (path != "/health" && route == routes.end())
    return error_response(404, "not-found", "no endpoint " + std::string(path));
  auto snap = snapshot();
  if (!snap)
    return error_response(503, "index-opening", "index is still opening");
  if (path == "/health") {
    auto j = index::to_json(snap->stats());
    j["status"] = "ok";
    j["tokenizer"] = kTokenizerId;
    return {200, j.dump()};
  }
  try {
    Args args(params);
    Context ctx{config_, *snap, args};
    return {200, route->second(ctx).dump()};
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

// HttpServer

struct HttpServer::Impl {
  explicit Impl(ServiceConfig c) : service(std::move(c)) {}

  QueryService service;
  httplib::Server server;
  std::thread loader;
  std::mutex mu;
  std::exception_ptr load_error;
  bool bound = false;

  void cors(const httplib::Request& req, httplib::Response& res) const
  {
    auto& allowed = service.config().cors_allowed_origins;
    if (allowed.empty())
      return;
    auto origin = req.get_header_value("Origin");
    bool any = std::find(allowed.begin(), allowed.end(), "*") != allowed.end();
    if (any) {
      res.set_header("Access-Control-Allow-Origin", "*");
    } else if (!origin.empty() &&
               std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
  }
};

HttpServer::HttpServer(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config)))
{
  auto* impl = impl_.get();
  auto handler = [impl](const httplib::Request& req, httplib::Response& res) {
    Params params(req.params.begin(), req.params.end());
    auto out = impl->service.handle(req.path, params);
    res.status = out.status;
    impl->cors(req, res);
    res.set_content(out.body, "application/json");
  };
  for (auto path : {"/health", "/timeline", "/top-terms", "/cooccur", "/entity-search"})
    impl->server.Get(path, handler);
  impl->server.Options(R"(/.*)", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->cors(req, res);
    res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  if (auto& ui = impl->service.config().ui_dir)
    impl->server.set_mount_point("/ui", ui->string());
  impl->server.set_error_handler([impl](const httplib::Request& req, httplib::Response& res) {
    if (res.status != 404 || !res.body.empty())
      return;
    auto out = impl->service.handle(req.path, {});
    impl->cors(req, res);
    res.set_content(out.body, "application/json");
  });
}

HttpServer::~HttpServer()
{
  stop();
  if (impl_->loader.joinable())
    impl_->loader.join();
}

int HttpServer::bind()
{
  auto& c = impl_->service.config();
  int port = c.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(c.host);
    if (port < 0)
      throw Error(ErrorCode::io_error, "cannot bind " + c.host);
  } else if (!impl_->server.bind_to_port(c.host, port)) {
    throw Error(ErrorCode::io_error, "cannot bind " + c.host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return port;
}

void HttpServer::serve()
{
  if (!impl_->bound)
    bind();
  auto* impl = impl_.get();
  impl->loader = std::thread([impl] {
    try {
      impl->service.load();
    } catch (...) {
      {
        std::lock_guard lock(impl->mu);
        impl->load_error = std::current_exception();
      }
      impl->server.wait_until_ready();
      impl->server.stop();
    }
  });
  impl->server.listen_after_bind();
  impl->loader.join();
  std::lock_guard lock(impl->mu);
  if (impl->load_error)
    std::rethrow_exception(impl->load_error);
}

void HttpServer::stop()
{
  impl_->server.stop();
}

void HttpServer::wait_until_ready() const
{
  impl_->server.wait_until_ready();
}

QueryService& HttpServer::service()
{
  return impl_->service;
}

} // namespace revhist::service
