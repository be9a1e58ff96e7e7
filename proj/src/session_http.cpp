#include "prefopt/session_http.hpp"

#include <iostream>

#include <httplib.h>

namespace prefopt {

using json = nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_header("Access-Control-Allow-Origin", "*");
  res.set_content(body.dump(), "application/json");
}

void send_payload(httplib::Response& res, const json& body, int retry_after) {
  if (body.value("status", "") == "computing") {
    res.set_header("Retry-After", std::to_string(retry_after));
    send(res, 202, body);
    return;
  }
  send(res, 200, body);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    json body = {{"v", 1}, {"error", e.what()}};
    if (!e.field.empty()) body["field"] = e.field;
    send(res, e.status, body);
  } catch (const json::exception& e) {
    send(res, 400, {{"v", 1}, {"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send(res, 500, {{"v", 1}, {"error", e.what()}});
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void mount_session_routes(httplib::Server& server, SessionService& service) {
  const int retry = service.options().retry_after_seconds;

  server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 201, service.create_session(parse_body(req))); });
  });

  server.Get(R"(/sessions/([0-9A-Za-z_-]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, service.get_session(req.matches[1])); });
  });

  server.Get(R"(/sessions/([0-9A-Za-z_-]+)/query)",
             [&service, retry](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_payload(res, service.get_query(req.matches[1]), retry); });
             });

  server.Post(R"(/sessions/([0-9A-Za-z_-]+)/preference)",
              [&service, retry](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const json body = parse_body(req);
                  if (!body.is_object()) throw SessionError(400, "request body must be a JSON object");
                  const json label = body.contains("label") ? body.at("label") : json();
                  const json nonce = body.contains("nonce") ? body.at("nonce") : json();
                  send_payload(res, service.post_preference(req.matches[1], label, nonce), retry);
                });
              });

  server.Get(R"(/sessions/([0-9A-Za-z_-]+)/trace)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, service.get_trace(req.matches[1])); });
  });
}

int serve(const std::string& host, int port, SessionService& service) {
  httplib::Server server;
  mount_session_routes(server, service);
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace prefopt
