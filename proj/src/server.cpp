#include "embryolab/server.hpp"

#include <httplib.h>

#include "embryolab/trial_log.hpp"

namespace embryolab {
using nlohmann::json;

namespace {

int http_status(SessionError::Code code) {
  switch (code) {
    case SessionError::Code::NotFound: return 404;
    case SessionError::Code::Conflict: return 409;
    case SessionError::Code::BadRequest: return 400;
  }
  return 500;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, {{"protocol_version", kProtocolVersion}, {"error", {{"code", code}, {"message", message}}}}, status);
}

json parse_body(const httplib::Request& req) {
  json body = req.body.empty() ? json::object() : json::parse(req.body);
  if (!body.is_object()) throw SessionError(SessionError::Code::BadRequest, "request body must be a JSON object");
  if (!body.contains("protocol_version") || body["protocol_version"] != kProtocolVersion)
    throw SessionError(SessionError::Code::BadRequest,
                       "protocol_version " + std::to_string(kProtocolVersion) + " required");
  return body;
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const SessionError& e) {
      const char* code = e.code() == SessionError::Code::NotFound ? "not_found"
                         : e.code() == SessionError::Code::Conflict ? "conflict"
                                                                    : "bad_request";
      send_error(res, http_status(e.code()), code, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

struct SessionServer::Impl {
  SessionStore& store;
  httplib::Server http;
  explicit Impl(SessionStore& s) : store(s) {}
};

SessionServer::SessionServer(SessionStore& store) : impl_(std::make_unique<Impl>(store)) {
  auto& http = impl_->http;
  auto& st = impl_->store;

  http.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"protocol_version", kProtocolVersion}, {"status", "ok"}});
  });

  http.Post("/v1/sessions", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("observer_id") || !body["observer_id"].is_string())
      throw SessionError(SessionError::Code::BadRequest, "observer_id (string) required");
    std::optional<std::uint64_t> seed;
    if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
    send_json(res, to_json(st.create_session(body["observer_id"].get<std::string>(), seed)), 201);
  }));

  http.Get("/v1/sessions", guarded([&st](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& info : st.sessions()) list.push_back(to_json(info));
    send_json(res, {{"protocol_version", kProtocolVersion}, {"sessions", list}});
  }));

  http.Get(R"(/v1/sessions/([0-9a-f]+))", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    send_json(res, to_json(st.info(req.matches[1])));
  }));

  http.Post(R"(/v1/sessions/([0-9a-f]+)/next)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    parse_body(req);
    send_json(res, st.next_trial(req.matches[1]));
  }));

  http.Post(R"(/v1/sessions/([0-9a-f]+)/submit)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.contains("trial_id") || !body["trial_id"].is_string())
      throw SessionError(SessionError::Code::BadRequest, "trial_id (string) required");
    if (!body.contains("response_label") || !body["response_label"].is_number_integer())
      throw SessionError(SessionError::Code::BadRequest, "response_label (integer) required");
    ClientReport report;
    if (body.contains("response_time_ms") && body["response_time_ms"].is_number())
      report.response_time_ms = body["response_time_ms"].get<double>();
    if (body.contains("audit")) report.audit = body["audit"];
    const std::string id = req.matches[1];
    const auto directive = st.submit_response(id, body["trial_id"].get<std::string>(), body["response_label"].get<int>(), report);
    const auto info = st.info(id);
    send_json(res, {{"protocol_version", kProtocolVersion},
                    {"accepted", true},
                    {"trial_id", body["trial_id"]},
                    {"directive", to_json(directive)},
                    {"status", status_name(info.status)},
                    {"progress", {{"answered", info.answered}, {"total", info.total}}}});
  }));

  http.Get(R"(/v1/sessions/([0-9a-f]+)/export)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const bool partial = req.has_param("partial") && req.get_param_value("partial") != "0";
    const auto log = st.export_session(req.matches[1], partial);
    std::string body;
    for (const auto& r : log.records) body += to_json(r).dump() + "\n";
    res.set_content(body, "application/x-ndjson");
  }));

  http.Get(R"(/v1/assets/([A-Za-z0-9]+)\.png)", guarded([&st](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = st.asset(req.matches[1]);
    res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
    res.set_header("Cache-Control", "no-store");
  }));
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool SessionServer::listen() { return impl_->http.listen_after_bind(); }

void SessionServer::stop() {
  if (impl_) impl_->http.stop();
}

std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw std::invalid_argument("address must be host:port, got '" + addr + "'");
  std::size_t used = 0;
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1), &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in '" + addr + "'");
  }
  if (used != addr.size() - colon - 1 || port < 0 || port > 65535) throw std::invalid_argument("bad port in '" + addr + "'");
  return {addr.substr(0, colon), port};
}

}  // namespace embryolab
