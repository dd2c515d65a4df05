#include <doctest.h>

#include <filesystem>
#include <thread>

#include "aad/harness.hpp"
#include "aad/service.hpp"

#include <httplib.h>

using namespace aad;
using nlohmann::json;

namespace {

json config(const std::string& arm, Index budget, std::uint64_t seed = 2) {
  return {{"arm", arm},
          {"dataset", arm == "glad" ? "benchmark" : "toy"},
          {"n", 300},
          {"budget", budget},
          {"trees", 40},
          {"subsample", 128},
          {"seeds", {seed}}};
}

std::string id_of(const json& created) { return created.at("session").get<std::string>(); }

Index pending(const json& q) { return q.at("query").at("id").get<Index>(); }

// Labels the session to completion with the hidden truth.
void finish(SessionManager& sm, const std::string& id, const Dataset& truth) {
  Oracle o(truth);
  for (json q = sm.query(id); !q.at("query").is_null(); q = sm.query(id)) sm.label(id, pending(q), o.label(pending(q)));
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("fresh session") {
    SessionManager sm;
    const auto a = sm.create(config("bal", 5));
    const auto b = sm.create(config("bal", 5));
    CHECK(id_of(a) != id_of(b));
    CHECK(a.at("status") == "active");
    CHECK(a.at("progress").at("budget") == 5);
    CHECK(a.at("progress").at("spent") == 0);
    CHECK(a.at("progress").at("anomalies_found") == 0);
    CHECK(sm.list().size() == 2);
  }

  TEST_CASE("zero budget completes immediately") {
    SessionManager sm;
    const auto s = sm.create(config("bal", 0));
    CHECK(s.at("status") == "completed");
    CHECK(s.at("query").is_null());
    CHECK_THROWS_AS(sm.label(id_of(s), 0, Label::anomaly), Conflict);
  }

  TEST_CASE("query is the current argmax and stable until labeled") {
    SessionManager sm;
    const auto s = sm.create(config("bal", 5));
    const auto id = id_of(s);
    CHECK(pending(sm.query(id)) == pending(s));
    CHECK(pending(sm.query(id)) == pending(s));
    double best = -1e300;
    RunConfig cfg = RunConfig::from_json(config("bal", 5));
    const Dataset ds = make_dataset(cfg, 2);
    const auto engine = make_engine(cfg, ds, 2);
    for (Index i = 0; i < ds.size(); ++i) best = std::max(best, engine->score(i));
    CHECK(s.at("query").at("score").get<double>() == doctest::Approx(best));
    const auto rules = s.at("query").at("rules");
    CHECK(rules.at("text").is_string());
    CHECK(rules.at("json").is_object());
    CHECK(rules_to_text(rules_from_json(rules.at("json"))) == rules.at("text").get<std::string>());
  }

  TEST_CASE("labels advance the session and stale labels conflict") {
    SessionManager sm;
    const auto s = sm.create(config("bal", 2));
    const auto id = id_of(s);
    const Index first = pending(s);
    const auto p = sm.label(id, first, Label::anomaly);
    CHECK(p.at("anomalies_found") == 1);
    CHECK(p.at("spent") == 1);
    CHECK_THROWS_AS(sm.label(id, first, Label::anomaly), Conflict);
    CHECK(sm.progress(id).at("spent") == 1);
    sm.label(id, pending(sm.query(id)), Label::nominal);
    CHECK(sm.progress(id).at("status") == "completed");
    CHECK(sm.progress(id).at("anomalies_found") == 1);
    CHECK_THROWS_AS(sm.query("ffff"), NotFound);
  }

  TEST_CASE("session trajectory equals the scripted run") {
    RunConfig cfg = RunConfig::from_json(config("bal", 15, 6));
    const Dataset truth = make_dataset(cfg, 6);
    SessionManager sm;
    const auto id = id_of(sm.create(cfg.to_json()));
    finish(sm, id, truth);
    const auto r = run_seed(cfg, 6);
    const auto progress = sm.progress(id);
    const auto curve = progress.at("curve").get<std::vector<Index>>();
    CHECK(curve == r.curve);
    CHECK(rules_to_text(rules_from_json(sm.rules(id).at("rules").at("json"))) == r.rules);
  }

  TEST_CASE("sessions replay from the event log") {
    const auto dir = std::filesystem::temp_directory_path() / "aad_unit_sessions";
    std::filesystem::remove_all(dir);
    std::string id;
    json before;
    {
      SessionManager sm(dir);
      id = id_of(sm.create(config("bal", 6)));
      const Dataset truth = make_dataset(RunConfig::from_json(config("bal", 6)), 2);
      Oracle o(truth);
      for (int k = 0; k < 3; ++k) {
        const Index q = pending(sm.query(id));
        sm.label(id, q, o.label(q));
      }
      before = sm.query(id);
    }
    SessionManager again(dir);
    CHECK(again.query(id) == before);
  }

  TEST_CASE("relevance exists only for glad sessions") {
    SessionManager sm;
    const auto b = sm.create(config("bal", 3));
    CHECK_THROWS_AS(sm.relevance(id_of(b)), NotFound);
    const auto g = sm.create(config("glad", 3));
    const auto r = sm.relevance(id_of(g)).at("relevance");
    CHECK(r.at("members").get<Index>() == 15);
    CHECK(r.at("instances").size() == 300);
    CHECK(r.at("instances")[0].at("most_relevant") == 0);
  }

  TEST_CASE("bad input") {
    SessionManager sm;
    CHECK_THROWS_AS(sm.create({{"arm", "nope"}}), UsageError);
    CHECK_THROWS_AS(sm.create({{"arm", "bal"}, {"bogus", 1}}), UsageError);
    CHECK(parse_label("anomaly") == Label::anomaly);
    CHECK(parse_label(-1) == Label::nominal);
    CHECK_THROWS_AS(parse_label("maybe"), UsageError);
  }

  TEST_CASE("http routes") {
    SessionManager sm;
    httplib::Server server;
    mount_routes(server, sm);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client c("127.0.0.1", port);

    auto created = c.Post("/sessions", config("bal", 2).dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto s = json::parse(created->body);
    const auto id = id_of(s);
    const Index q = pending(s);
    const json body{{"instance", q}, {"label", "anomaly"}};
    CHECK(c.Post("/sessions/" + id + "/label", body.dump(), "application/json")->status == 200);
    const auto dup = c.Post("/sessions/" + id + "/label", body.dump(), "application/json");
    CHECK(dup->status == 409);
    CHECK(json::parse(dup->body).at("error").at("code") == "conflict");
    CHECK(c.Get("/sessions/" + id + "/progress")->status == 200);
    CHECK(c.Get("/sessions/" + id + "/rules")->status == 200);
    CHECK(c.Get("/sessions/" + id + "/relevance")->status == 404);
    CHECK(c.Get("/sessions/abc/query")->status == 404);
    CHECK(c.Post("/sessions", R"({"arm":"x"})", "application/json")->status == 400);
    CHECK(c.Get("/sessions")->status == 200);

    server.stop();
    t.join();
  }
}
