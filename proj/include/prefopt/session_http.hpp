#pragma once

#include <string>

#include "prefopt/session.hpp"

namespace httplib {
class Server;
}

namespace prefopt {

/// Registers the session endpoints:
///   POST /sessions
///   GET  /sessions/{id}
///   GET  /sessions/{id}/query
///   POST /sessions/{id}/preference   {"label": -1|0|1, "nonce": n}
///   GET  /sessions/{id}/trace
/// Errors come back as {"v":1,"error":...,"field":...} with 400/404/409;
/// a computing session answers 202 with Retry-After.
void mount_session_routes(httplib::Server& server, SessionService& service);

/// Blocks serving on host:port until the process is stopped.
int serve(const std::string& host, int port, SessionService& service);

}  // namespace prefopt
