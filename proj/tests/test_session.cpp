#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "prefopt/session.hpp"
#include "prefopt/session_http.hpp"
#include "support.hpp"

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

using namespace prefopt;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

double bowl(const Vec& x) { return (x.array() - 0.3).square().sum(); }

json custom_request(int budget, std::uint64_t seed = 3) {
  return {{"problem", "custom"}, {"lower", {0.0, 0.0}}, {"upper", {1.0, 1.0}},
          {"budget", budget},    {"seed", seed},        {"n_init", 4}};
}

Vec point(const json& option) {
  const auto v = option.at("x").get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

int answer(const json& query) {
  return encode_preference(bowl(point(query.at("candidate"))), bowl(point(query.at("incumbent"))));
}

/// Drives a session to completion with the bowl user; returns the summary.
json drive(SessionService& svc, const std::string& id) {
  json q = svc.get_query(id);
  while (q.value("status", "") != "finished") {
    if (q.value("status", "") == "computing") {
      svc.wait_idle(id);
      q = svc.get_query(id);
      continue;
    }
    q = svc.post_preference(id, answer(q), q.at("nonce"));
  }
  return q;
}

fs::path store_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("prefopt-session-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir / "events.jsonl";
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const SessionError& e) {
    return e.status;
  }
  return 200;
}

struct LiveServer {
  explicit LiveServer(SessionService& svc) {
    mount_session_routes(server, svc);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Server server;
  int port = 0;
  std::thread thread;
};

}  // namespace

TEST_SUITE("session") {
  TEST_CASE("creation payload and first query") {
    SessionService svc;
    const json r = svc.create_session(custom_request(8));
    CHECK(r["v"] == 1);
    const std::string id = r["id"];
    CHECK(id.size() == 32);
    CHECK(r["session"]["status"] == "awaiting-preference");
    CHECK(r["session"]["mode"] == "baseline");
    CHECK(r["session"]["iteration"] == 1);
    CHECK(r["session"]["remaining_budget"] == 7);
    CHECK(r["query"]["nonce"] == 1);
    CHECK(r["query"]["phase"] == "initial");
    CHECK(r["query"]["candidate"]["index"] == 1);
    CHECK(r["query"]["incumbent"]["index"] == 0);
    CHECK(svc.get_query(id) == r["query"]);
    CHECK(svc.ids() == std::vector<std::string>{id});
  }

  TEST_CASE("suspension query carries descriptors and downsampled traces") {
    SessionService svc;
    const json r = svc.create_session({{"problem", "susp2d"}, {"budget", 6}, {"seed", 1}});
    const json& c = r["query"]["candidate"];
    CHECK(r["session"]["mode"] == "regularized");
    const SuspensionModel model(ProblemKind::susp2d);
    const auto d = model.descriptors(point(c));
    CHECK(c["descriptors"]["rms_accel"].get<double>() == d.rms_accel);
    CHECK(c["descriptors"]["grip_loss"].get<double>() == d.grip_loss);
    CHECK(c["traces"]["time"].size() <= kMaxTracePoints);
    CHECK(c["traces"]["A_z"].size() == c["traces"]["time"].size());
    CHECK(c["traces"]["time"].back().get<double>() == doctest::Approx(BumpScenario{}.duration));
  }

  TEST_CASE("validation errors name the field") {
    const std::vector<std::pair<json, std::string>> bad = {
        {{{"problem", "nope"}}, "problem"},
        {{{"problem", "susp2d"}, {"mode", "fast"}}, "mode"},
        {{{"problem", "susp2d"}, {"budget", 3}}, "budget"},
        {{{"problem", "susp2d"}, {"budget", "ten"}}, "budget"},
        {{{"problem", "susp2d"}, {"delta", 0.0}}, "delta"},
        {{{"problem", "susp2d"}, {"seed", -4}}, "seed"},
        {{{"problem", "custom"}, {"lower", {0.0}}, {"upper", {1.0, 2.0}}}, "upper"},
        {{{"problem", "custom"}, {"lower", {1.0}}, {"upper", {0.0}}}, "upper"},
        {{{"problem", "custom"}, {"lower", {0.0}}, {"upper", {1.0}}, {"mode", "regularized"}}, "mode"},
        {{{"problem", "analytical"}, {"final_answer", "guess"}}, "final_answer"},
    };
    for (const auto& [req, fieldname] : bad) {
      CAPTURE(req.dump());
      try {
        parse_session_spec(req);
        FAIL("accepted");
      } catch (const SessionError& e) {
        CHECK(e.status == 400);
        CHECK(e.field == fieldname);
      }
    }
    CHECK_THROWS_AS(parse_session_spec(json::array()), SessionError);
  }

  TEST_CASE("preference errors") {
    SessionService svc;
    const std::string id = svc.create_session(custom_request(6))["id"];
    CHECK(status_of([&] { svc.get_query("missing"); }) == 404);
    CHECK(status_of([&] { svc.post_preference("missing", -1, 1); }) == 404);
    CHECK(status_of([&] { svc.post_preference(id, 2, 1); }) == 400);
    CHECK(status_of([&] { svc.post_preference(id, "left", 1); }) == 400);
    CHECK(status_of([&] { svc.post_preference(id, 0.5, 1); }) == 400);
    CHECK(status_of([&] { svc.post_preference(id, -1, 7); }) == 409);
    CHECK(status_of([&] { svc.post_preference(id, -1, json()); }) == 409);
    CHECK(svc.get_session(id)["preferences"] == 0);
    // a replayed nonce is rejected once accepted
    CHECK(status_of([&] { svc.post_preference(id, 1, 1); }) == 200);
    CHECK(status_of([&] { svc.post_preference(id, 1, 1); }) == 409);
    CHECK(svc.get_session(id)["preferences"] == 1);
  }

  TEST_CASE("incumbent moves only on -1") {
    SessionService svc;
    const std::string id = svc.create_session(custom_request(8))["id"];
    json q = svc.get_query(id);
    q = svc.post_preference(id, 1, q["nonce"]);
    CHECK(svc.get_session(id)["best"]["index"] == 0);
    CHECK(q["incumbent"]["index"] == 0);
    q = svc.post_preference(id, 0, q["nonce"]);
    CHECK(svc.get_session(id)["best"]["index"] == 0);
    const std::size_t cand = q["candidate"]["index"];
    q = svc.post_preference(id, -1, q["nonce"]);
    CHECK(svc.get_session(id)["best"]["index"] == cand);
    CHECK(q["incumbent"]["index"] == cand);
    CHECK(q["phase"] == "acquisition");
  }

  TEST_CASE("finished session and trace") {
    SessionService svc;
    const std::string id = svc.create_session(custom_request(7))["id"];
    const json summary = drive(svc, id);
    CHECK(summary["status"] == "finished");
    CHECK(summary["trace"]["entries"].size() == 7);
    CHECK(svc.get_session(id)["remaining_budget"] == 0);
    CHECK(status_of([&] { svc.get_query(id); }) == 409);
    CHECK(status_of([&] { svc.post_preference(id, -1, svc.get_session(id)["nonce"]); }) == 409);
    const json trace = svc.get_trace(id);
    CHECK(trace["entries"] == summary["trace"]["entries"]);
    const std::string csv = trace["csv"];
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
    // best sample is the lowest bowl value seen
    double best = 1e9;
    for (const auto& e : trace["entries"]) {
      const auto v = e["candidate"].get<std::vector<double>>();
      best = std::min(best, bowl(Eigen::Map<const Vec>(v.data(), 2)));
    }
    CHECK(bowl(point(summary["final_answer"])) == best);
  }

  TEST_CASE("session trace matches the autonomous loop") {
    SessionService svc;
    const json req = custom_request(10, 17);
    const std::string id = svc.create_session(req)["id"];
    drive(svc, id);
    const SessionSpec spec = parse_session_spec(req);
    const auto a = run_autonomous(*spec.custom_bounds, spec.loop, bowl);
    REQUIRE(!a.error);
    CHECK(svc.get_trace(id)["csv"].get<std::string>() == trace_csv(a.state.trace));
  }

  TEST_CASE("replay from the event store") {
    const fs::path store = store_path("replay");
    std::string done, half, state_done, state_half;
    {
      SessionService svc(store);
      done = svc.create_session(custom_request(8, 5))["id"].get<std::string>();
      drive(svc, done);
      half = svc.create_session(custom_request(9, 6))["id"].get<std::string>();
      json q = svc.get_query(half);
      for (int k = 0; k < 5; ++k) q = svc.post_preference(half, answer(q), q["nonce"]);
      state_done = svc.state_json(done);
      state_half = svc.state_json(half);
    }
    SessionService again(store);
    CHECK(again.ids().size() == 2);
    CHECK(again.state_json(done) == state_done);
    CHECK(again.state_json(half) == state_half);
    CHECK(again.get_session(done)["status"] == "finished");
    // the replayed session continues where it stopped
    json q = again.get_query(half);
    CHECK(q["nonce"] == 6);
    CHECK(drive(again, half)["status"] == "finished");
  }

  TEST_CASE("torn final line is ignored, corrupt middle line is not") {
    const fs::path store = store_path("torn");
    std::string id;
    {
      SessionService svc(store);
      id = svc.create_session(custom_request(6))["id"].get<std::string>();
    }
    {
      std::ofstream(store, std::ios::app) << R"({"v":1,"type":"pref)";
    }
    CHECK(SessionService(store).ids() == std::vector<std::string>{id});
    {
      std::ofstream(store, std::ios::app) << "\n{}\n";
    }
    CHECK_THROWS_AS(SessionService{store}, Error);
  }

  TEST_CASE("concurrent posts with one nonce") {
    SessionService svc;
    const std::string id = svc.create_session(custom_request(10))["id"];
    for (int round = 0; round < 3; ++round) {
      const json q = svc.get_query(id);
      std::atomic<int> ok{0}, conflict{0};
      std::vector<std::thread> pool;
      for (int t = 0; t < 8; ++t)
        pool.emplace_back([&] {
          const int s = status_of([&] { svc.post_preference(id, -1, q["nonce"]); });
          (s == 200 ? ok : conflict)++;
        });
      for (auto& t : pool) t.join();
      CHECK(ok == 1);
      CHECK(conflict == 7);
    }
    CHECK(svc.get_session(id)["preferences"] == 3);
  }

  TEST_CASE("asynchronous advance") {
    SessionService svc({}, ServiceOptions{true, 2});
    const std::string id = svc.create_session(custom_request(8))["id"];
    json q = svc.get_query(id);
    for (int k = 0; k < 2; ++k) q = svc.post_preference(id, answer(q), q["nonce"]);
    // n_init = 4: the third preference closes the design and starts acquisition
    q = svc.post_preference(id, answer(q), q["nonce"]);
    CHECK(q["status"] == "computing");
    CHECK(q["retry_after"] == 2);
    svc.wait_idle(id);
    q = svc.get_query(id);
    CHECK(q["status"] == "awaiting-preference");
    CHECK(q["phase"] == "acquisition");
    CHECK(drive(svc, id)["status"] == "finished");
  }

  TEST_CASE("http endpoints") {
    SessionService svc({}, ServiceOptions{true, 1});
    LiveServer live(svc);
    REQUIRE(live.port > 0);
    httplib::Client cli("127.0.0.1", live.port);

    auto res = cli.Post("/sessions", custom_request(7).dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    const json created = json::parse(res->body);
    const std::string id = created["id"];

    res = cli.Get("/sessions/" + id + "/query");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body) == created["query"]);

    res = cli.Get("/sessions/nobody/query");
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["v"] == 1);

    res = cli.Post("/sessions", R"({"problem":"susp2d","budget":1})", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["field"] == "budget");
    res = cli.Post("/sessions", "{not json", "application/json");
    CHECK(res->status == 400);

    const std::string pref = "/sessions/" + id + "/preference";
    res = cli.Post(pref, R"({"label":3,"nonce":1})", "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["field"] == "label");
    res = cli.Post(pref, R"({"label":-1,"nonce":9})", "application/json");
    CHECK(res->status == 409);

    json q = created["query"];
    bool saw_202 = false;
    while (true) {
      res = cli.Post(pref, json{{"label", answer(q)}, {"nonce", q["nonce"]}}.dump(), "application/json");
      REQUIRE(res);
      json body = json::parse(res->body);
      if (res->status == 202) {
        saw_202 = true;
        CHECK(res->get_header_value("Retry-After") == "1");
        do {
          std::this_thread::sleep_for(std::chrono::milliseconds(20));
          res = cli.Get("/sessions/" + id + "/query");
        } while (res->status == 202);
        body = json::parse(res->body);
      }
      CHECK(res->status == 200);
      if (body.value("status", "") == "finished") break;
      q = body;
    }
    CHECK(saw_202);
    res = cli.Get("/sessions/" + id);
    CHECK(json::parse(res->body)["status"] == "finished");
    res = cli.Get("/sessions/" + id + "/trace");
    CHECK(json::parse(res->body)["entries"].size() == 7);
    res = cli.Get("/sessions/" + id + "/query");
    CHECK(res->status == 409);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  }
}
