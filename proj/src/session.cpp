#include "prefopt/session.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include "prefopt/bench.hpp"

namespace prefopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_preference: return "awaiting-preference";
    case SessionStatus::computing: return "computing";
    case SessionStatus::finished: return "finished";
    case SessionStatus::failed: return "failed";
  }
  return "unknown";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

template <typename T>
T field(const json& j, const char* name, T fallback) {
  if (!j.contains(name) || j.at(name).is_null()) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw SessionError(400, std::string("invalid value for ") + name, name);
  }
}

int int_field(const json& j, const char* name, int fallback) {
  if (!j.contains(name) || j.at(name).is_null()) return fallback;
  if (!j.at(name).is_number_integer()) throw SessionError(400, std::string(name) + " must be an integer", name);
  return j.at(name).get<int>();
}

Vec vec_field(const json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_array())
    throw SessionError(400, std::string(name) + " must be an array of numbers", name);
  const auto v = field<std::vector<double>>(j, name, {});
  Vec out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = v[i];
  return out;
}

}  // namespace

SessionSpec parse_session_spec(const json& req) {
  if (!req.is_object()) throw SessionError(400, "request body must be a JSON object");
  SessionSpec spec;
  spec.request = req;
  spec.problem = field<std::string>(req, "problem", "susp2d");
  Index dim = 0;
  if (spec.problem == "custom") {
    const Vec lo = vec_field(req, "lower");
    const Vec hi = vec_field(req, "upper");
    if (lo.size() == 0 || lo.size() != hi.size())
      throw SessionError(400, "lower and upper must be nonempty and of equal length", "upper");
    try {
      spec.custom_bounds.emplace(lo, hi);
    } catch (const Error& e) {
      throw SessionError(400, e.what(), "upper");
    }
    dim = lo.size();
  } else {
    try {
      const ProblemKind k = problem_kind_from_string(spec.problem);
      dim = k == ProblemKind::analytical ? 7 : (k == ProblemKind::susp2d ? 2 : 4);
    } catch (const ConfigError&) {
      throw SessionError(400, "unknown problem: " + spec.problem, "problem");
    }
  }

  LoopConfig& c = spec.loop;
  const std::string mode = field<std::string>(req, "mode", spec.problem == "custom" ? "baseline" : "regularized");
  try {
    c.mode = loop_mode_from_string(mode);
  } catch (const ConfigError&) {
    throw SessionError(400, "unknown mode: " + mode, "mode");
  }
  if (spec.problem == "custom" && c.mode == LoopMode::regularized)
    throw SessionError(400, "custom problems have no descriptors; use baseline mode", "mode");
  const int fallback_budget =
      spec.problem == "custom" ? 30 : default_budget(problem_kind_from_string(spec.problem));
  c.budget = int_field(req, "budget", fallback_budget);
  c.n_init = int_field(req, "n_init", 0);
  if (c.n_init < 0) throw SessionError(400, "n_init must be nonnegative", "n_init");
  if (req.contains("seed") && !req.at("seed").is_null() &&
      !(req.at("seed").is_number_integer() && req.at("seed").get<long long>() >= 0))
    throw SessionError(400, "seed must be a nonnegative integer", "seed");
  c.seed = field<std::uint64_t>(req, "seed", 0);
  c.acquisition.delta = field<double>(req, "delta", c.acquisition.delta);
  c.cv.t_cv = int_field(req, "t_cv", c.cv.t_cv);
  c.cv.k = int_field(req, "cv_folds", c.cv.k);
  const std::string kernel = field<std::string>(req, "kernel", to_string(c.kernel));
  try {
    c.kernel = kernel_kind_from_string(kernel);
  } catch (const Error&) {
    throw SessionError(400, "unknown kernel: " + kernel, "kernel");
  }
  const std::string fa = field<std::string>(req, "final_answer", "best_sample");
  if (fa == "best_sample")
    c.final_answer = FinalAnswerMode::best_sample;
  else if (fa == "surrogate_minimizer")
    c.final_answer = FinalAnswerMode::surrogate_minimizer;
  else
    throw SessionError(400, "unknown final_answer: " + fa, "final_answer");

  if (c.budget < c.resolved_n_init(dim))
    throw SessionError(400, "budget must be at least n_init (" + std::to_string(c.resolved_n_init(dim)) + ")",
                       "budget");
  if (!(c.acquisition.delta > 0 && c.acquisition.delta <= 1))
    throw SessionError(400, "delta must lie in (0, 1]", "delta");
  if (c.cv.t_cv < 1) throw SessionError(400, "t_cv must be at least 1", "t_cv");
  if (c.cv.k < 2) throw SessionError(400, "cv_folds must be at least 2", "cv_folds");
  try {
    c.validate(dim);
  } catch (const ConfigError& e) {
    throw SessionError(400, e.what(), "config");
  }
  return spec;
}

// ---- event store ----

EventStore::EventStore(fs::path path) : path_(std::move(path)) {
  if (!path_.empty() && !path_.parent_path().empty()) fs::create_directories(path_.parent_path());
}

void EventStore::append(const json& event) {
  std::lock_guard lock(mutex_);
  if (path_.empty()) {
    memory_.push_back(event);
    return;
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("event store: cannot open " + path_.string());
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error("event store: write failed: " + path_.string());
}

std::vector<json> EventStore::load() const {
  std::lock_guard lock(mutex_);
  if (path_.empty()) return memory_;
  std::vector<json> events;
  std::ifstream in(path_);
  if (!in) return events;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    try {
      events.push_back(json::parse(lines[k]));
    } catch (const json::exception&) {
      // A torn final line from an interrupted write is dropped.
      if (k + 1 == lines.size()) break;
      throw Error("event store: corrupt line " + std::to_string(k + 1) + " in " + path_.string());
    }
  }
  return events;
}

// ---- sessions ----

namespace {

struct Snapshot {
  SessionStatus status = SessionStatus::awaiting_preference;
  json query;
  json summary;
  json trace;
  json session;
  std::string state;
  std::string error;
};

}  // namespace

struct SessionService::Session {
  Session(std::string id_, SessionSpec spec_, Bounds bounds_)
      : id(std::move(id_)), spec(std::move(spec_)), bounds(bounds_), state(Dataset{bounds_}) {}

  std::string id;
  SessionSpec spec;
  Bounds bounds;
  std::shared_ptr<const SuspensionModel> model;
  std::optional<ProblemKind> kind;
  LoopState state;
  std::string created;
  std::string updated;
  SessionStatus status = SessionStatus::awaiting_preference;
  std::string error;
  std::optional<Vec> final_point;

  std::mutex writer;
  std::condition_variable idle;
  std::thread worker;
  std::shared_ptr<const Snapshot> snapshot;

  std::shared_ptr<const Snapshot> read() const { return std::atomic_load(&snapshot); }
  long nonce() const { return static_cast<long>(state.prefs.size()) + 1; }
};

namespace {

std::string random_id() {
  std::random_device rd;
  std::uint64_t a = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::uint64_t b = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

json describe_option(const SessionService::Session& s, const Vec& x, std::size_t index) {
  json o = {{"index", index}, {"x", to_std(x)}};
  json d = json::object();
  if (s.kind == ProblemKind::analytical) {
    const auto bank = hypothesis_bank_for(ProblemKind::analytical);
    const auto t = analytical_terms(x);
    for (std::size_t r = 0; r < t.size(); ++r) d[bank.descriptors[r].name] = t[r];
  } else if (s.model) {
    const auto v = s.model->descriptors(x);
    d["rms_accel"] = v.rms_accel;
    d["rms_pitch_rate"] = v.rms_pitch_rate;
    d["grip_loss"] = v.grip_loss;
    const SignalTrace tr = s.model->trace(x);
    json time = json::array(), az = json::array(), pr = json::array();
    for (auto k : downsample_indices(tr.size(), kMaxTracePoints)) {
      time.push_back(tr.time[k]);
      az.push_back(tr.accel[k]);
      pr.push_back(tr.pitch_rate[k]);
    }
    o["traces"] = {{"time", time}, {"A_z", az}, {"pitch_rate", pr}};
  }
  o["descriptors"] = d;
  return o;
}

json trace_payload(const SessionService::Session& s) {
  return {{"v", 1}, {"id", s.id}, {"entries", to_json(s.state.trace)}, {"csv", trace_csv(s.state.trace)}};
}

}  // namespace

SessionService::SessionService(fs::path store, ServiceOptions options)
    : store_(std::move(store)), options_(options) {
  std::map<std::string, std::shared_ptr<Session>> replayed;
  for (const json& ev : store_.load()) {
    const std::string type = ev.value("type", "");
    const std::string id = ev.value("id", "");
    if (type == "created") {
      auto s = build(id, parse_session_spec(ev.at("request")), ev.value("ts", ""));
      replayed[id] = s;
    } else if (type == "preference") {
      auto it = replayed.find(id);
      if (it == replayed.end()) throw Error("event store: preference for unknown session " + id);
      Session& s = *it->second;
      if (ev.at("nonce").get<long>() != s.nonce()) throw Error("event store: nonce out of order for " + id);
      apply_preference(s, ev.at("label").get<int>(), ev.value("ts", ""));
      if (!s.state.pending && s.status == SessionStatus::awaiting_preference) run_advance(s);
    }
  }
  for (auto& [id, s] : replayed) {
    publish(*s);
    sessions_[id] = s;
  }
}

SessionService::~SessionService() {
  std::lock_guard lock(map_mutex_);
  for (auto& [id, s] : sessions_)
    if (s->worker.joinable()) s->worker.join();
}

std::shared_ptr<SessionService::Session> SessionService::build(const std::string& id, const SessionSpec& spec,
                                                               const std::string& created) const {
  std::optional<DescriptorBank> bank;
  std::shared_ptr<const SuspensionModel> model;
  std::optional<ProblemKind> kind;
  std::optional<Bounds> bounds = spec.custom_bounds;
  if (spec.problem != "custom") {
    kind = problem_kind_from_string(spec.problem);
    if (*kind == ProblemKind::analytical) {
      bounds = analytical_bounds();
    } else {
      model = std::make_shared<SuspensionModel>(*kind);
      bounds = model->bounds();
    }
    bank = hypothesis_bank_for(*kind, model);
  }
  auto s = std::make_shared<Session>(id, spec, *bounds);
  s->model = model;
  s->kind = kind;
  try {
    s->state = initialize(*bounds, spec.loop, bank);
  } catch (const ConfigError& e) {
    throw SessionError(400, e.what(), "config");
  }
  s->created = created;
  s->updated = created;
  return s;
}

void SessionService::apply_preference(Session& s, int label, const std::string& ts) {
  submit_preference(s.state, *s.state.pending, label);
  s.updated = ts;
  if (finished(s.state, s.spec.loop)) {
    s.final_point = final_answer(s.state, s.spec.loop);
    s.status = SessionStatus::finished;
  }
}

void SessionService::run_advance(Session& s) {
  try {
    advance(s.state, s.spec.loop);
    s.status = SessionStatus::awaiting_preference;
  } catch (const std::exception& e) {
    s.status = SessionStatus::failed;
    s.error = e.what();
  }
}

void SessionService::publish(Session& s) {
  auto snap = std::make_shared<Snapshot>();
  snap->status = s.status;
  snap->error = s.error;
  snap->trace = trace_payload(s);
  snap->state = to_json(s.state).dump();
  const auto& cfg = s.spec.loop;
  const int resolved = static_cast<int>(s.state.trace.size());
  if (s.status == SessionStatus::awaiting_preference && s.state.pending) {
    const auto& q = *s.state.pending;
    snap->query = {{"v", 1},
                   {"id", s.id},
                   {"status", to_string(s.status)},
                   {"nonce", s.nonce()},
                   {"iteration", resolved},
                   {"remaining_budget", cfg.budget - resolved},
                   {"phase", s.state.initial_phase() ? "initial" : "acquisition"},
                   {"candidate", describe_option(s, q.candidate, q.candidate_index)},
                   {"incumbent", describe_option(s, q.incumbent, q.incumbent_index)}};
  }
  if (s.status == SessionStatus::finished) {
    snap->summary = {{"v", 1},
                     {"id", s.id},
                     {"status", to_string(s.status)},
                     {"final_answer", describe_option(s, *s.final_point, s.state.best_index)},
                     {"best", describe_option(s, s.state.dataset.point(s.state.best_index), s.state.best_index)},
                     {"trace", trace_payload(s)}};
  }
  json session = {{"v", 1},
                  {"id", s.id},
                  {"status", to_string(s.status)},
                  {"problem", s.spec.problem},
                  {"mode", to_string(cfg.mode)},
                  {"config", s.spec.request},
                  {"created", s.created},
                  {"updated", s.updated},
                  {"budget", cfg.budget},
                  {"n_init", s.state.n_init},
                  {"iteration", resolved},
                  {"remaining_budget", cfg.budget - resolved},
                  {"points", s.state.dataset.size()},
                  {"preferences", s.state.prefs.size()},
                  {"nonce", s.nonce()},
                  {"best", {{"index", s.state.best_index}, {"x", to_std(s.state.dataset.point(s.state.best_index))}}},
                  {"hyper", to_json(s.state.hyper)},
                  {"lower", to_std(s.bounds.lower())},
                  {"upper", to_std(s.bounds.upper())}};
  if (!s.error.empty()) session["error"] = s.error;
  snap->session = std::move(session);
  std::atomic_store(&s.snapshot, std::shared_ptr<const Snapshot>(std::move(snap)));
  s.idle.notify_all();
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionError(404, "unknown session: " + id);
  return it->second;
}

json SessionService::create_session(const json& request) {
  const SessionSpec spec = parse_session_spec(request);
  const std::string id = random_id();
  const std::string ts = utc_timestamp();
  auto s = build(id, spec, ts);
  store_.append({{"v", 1}, {"type", "created"}, {"id", id}, {"ts", ts}, {"request", request}});
  publish(*s);
  {
    std::lock_guard lock(map_mutex_);
    sessions_[id] = s;
  }
  const auto snap = s->read();
  return {{"v", 1}, {"id", id}, {"session", snap->session}, {"query", snap->query}};
}

namespace {

json computing_notice(const std::string& id, int retry) {
  return {{"v", 1}, {"id", id}, {"status", "computing"}, {"retry_after", retry}};
}

}  // namespace

json SessionService::get_query(const std::string& id) const {
  const auto s = find(id);
  const auto snap = s->read();
  switch (snap->status) {
    case SessionStatus::awaiting_preference: return snap->query;
    case SessionStatus::computing: return computing_notice(id, options_.retry_after_seconds);
    case SessionStatus::finished: throw SessionError(409, "session finished");
    case SessionStatus::failed: throw SessionError(409, "session failed: " + snap->error);
  }
  return {};
}

json SessionService::post_preference(const std::string& id, const json& label_in, const json& nonce_in) {
  const auto sp = find(id);
  Session& s = *sp;
  std::unique_lock lock(s.writer);
  if (s.status == SessionStatus::finished) throw SessionError(409, "session finished");
  if (s.status == SessionStatus::computing) throw SessionError(409, "a new query is being computed");
  if (s.status == SessionStatus::failed) throw SessionError(409, "session failed: " + s.error);
  if (!label_in.is_number_integer()) throw SessionError(400, "label must be -1, 0 or 1", "label");
  const int label = label_in.get<int>();
  if (label < -1 || label > 1) throw SessionError(400, "label must be -1, 0 or 1", "label");
  if (!nonce_in.is_number_integer() || nonce_in.get<long>() != s.nonce())
    throw SessionError(409, "stale or unknown query nonce", "nonce");

  const std::string ts = utc_timestamp();
  store_.append({{"v", 1}, {"type", "preference"}, {"id", id}, {"ts", ts}, {"label", label}, {"nonce", s.nonce()}});
  apply_preference(s, label, ts);

  if (s.status == SessionStatus::finished) {
    publish(s);
    return s.read()->summary;
  }
  if (!s.state.pending) {
    if (options_.async_advance) {
      s.status = SessionStatus::computing;
      publish(s);
      if (s.worker.joinable()) s.worker.join();
      s.worker = std::thread([this, sp] {
        std::lock_guard wl(sp->writer);
        run_advance(*sp);
        publish(*sp);
      });
      return computing_notice(id, options_.retry_after_seconds);
    }
    run_advance(s);
  }
  publish(s);
  const auto snap = s.read();
  if (snap->status == SessionStatus::failed) throw SessionError(409, "session failed: " + snap->error);
  return snap->query;
}

json SessionService::get_trace(const std::string& id) const { return find(id)->read()->trace; }

json SessionService::get_session(const std::string& id) const { return find(id)->read()->session; }

std::string SessionService::state_json(const std::string& id) const { return find(id)->read()->state; }

std::vector<std::string> SessionService::ids() const {
  std::lock_guard lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

void SessionService::wait_idle(const std::string& id) const {
  const auto s = find(id);
  std::unique_lock lock(s->writer);
  s->idle.wait(lock, [&] { return s->status != SessionStatus::computing; });
}

}  // namespace prefopt
