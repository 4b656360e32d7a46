#pragma once

#include <memory>
#include <string>

#include "embryolab/session.hpp"

namespace embryolab {

/// JSON-over-HTTP front end for a SessionStore.
///
///   POST /v1/sessions                    {observer_id, seed?}           -> session info (201)
///   GET  /v1/sessions                                                    -> [session info]
///   GET  /v1/sessions/{id}                                               -> session info
///   POST /v1/sessions/{id}/next                                          -> trial descriptor
///   POST /v1/sessions/{id}/submit        {trial_id, response_label,
///                                         response_time_ms?, audit?}      -> feedback directive
///   GET  /v1/sessions/{id}/export[?partial=1]                            -> JSON Lines log
///   GET  /v1/assets/{token}.png                                          -> PNG bytes
///   GET  /v1/health
///
/// Every JSON body carries "protocol_version"; requests with another version get 400.
/// Errors are {"protocol_version", "error": {"code", "message"}} with 400/404/409.
class SessionServer {
 public:
  explicit SessionServer(SessionStore& store);
  ~SessionServer();

  /// Binds to host:port (port 0 picks a free port). Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires a successful bind.
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; throws std::invalid_argument on malformed input.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace embryolab
