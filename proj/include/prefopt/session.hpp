#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "prefopt/loop.hpp"
#include "prefopt/oracles.hpp"

namespace prefopt {

/// Errors surfaced to clients. `status` follows HTTP semantics
/// (400 validation, 404 unknown session, 409 conflict).
struct SessionError : Error {
  SessionError(int status, std::string message, std::string field = {})
      : Error(std::move(message)), status(status), field(std::move(field)) {}
  int status;
  std::string field;
};

enum class SessionStatus { awaiting_preference, computing, finished, failed };

std::string to_string(SessionStatus s);

inline constexpr std::size_t kMaxTracePoints = 500;

/// Validated creation request. `problem` is analytical, susp2d, susp4d or
/// custom (bounds only, baseline mode only).
struct SessionSpec {
  std::string problem = "susp2d";
  std::optional<Bounds> custom_bounds;
  LoopConfig loop;
  nlohmann::json request;  // as received, replayed from the store
};

/// Parses and validates a creation request; throws SessionError(400) with
/// the offending field.
SessionSpec parse_session_spec(const nlohmann::json& request);

/// Append-only JSON-lines event log shared by all sessions.
class EventStore {
 public:
  /// Empty path keeps events in memory only.
  explicit EventStore(std::filesystem::path path = {});

  void append(const nlohmann::json& event);
  std::vector<nlohmann::json> load() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<nlohmann::json> memory_;
  mutable std::mutex mutex_;
};

struct ServiceOptions {
  /// Run advance() on a worker thread; clients poll while status=computing.
  bool async_advance = false;
  int retry_after_seconds = 1;
};

class SessionService {
 public:
  /// Replays every session found in the store.
  explicit SessionService(std::filesystem::path store = {}, ServiceOptions options = {});
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  /// Returns {"v":1, "id", "session", "query"}.
  nlohmann::json create_session(const nlohmann::json& request);
  /// QueryView of the pending comparison.
  nlohmann::json get_query(const std::string& id) const;
  /// Next QueryView, the finished summary, or a computing notice.
  nlohmann::json post_preference(const std::string& id, const nlohmann::json& label, const nlohmann::json& nonce);
  nlohmann::json get_trace(const std::string& id) const;
  nlohmann::json get_session(const std::string& id) const;

  /// Serialized loop state (descriptor evaluators excluded).
  std::string state_json(const std::string& id) const;
  std::vector<std::string> ids() const;
  /// Blocks until no advance is running for the session.
  void wait_idle(const std::string& id) const;
  const ServiceOptions& options() const { return options_; }

  struct Session;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> build(const std::string& id, const SessionSpec& spec, const std::string& created) const;
  void apply_preference(Session& s, int label, const std::string& ts);
  void run_advance(Session& s);
  void publish(Session& s);

  EventStore store_;
  ServiceOptions options_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Current UTC time, ISO-8601 with millisecond precision.
std::string utc_timestamp();

}  // namespace prefopt
