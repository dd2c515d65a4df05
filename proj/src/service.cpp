#include "aad/service.hpp"

#include <fstream>
#include <random>

#include <httplib.h>

namespace aad {

struct SessionManager::Session {
  RunConfig config;
  std::uint64_t seed = 0;
  std::unique_ptr<Dataset> data;
  std::unique_ptr<Engine> engine;
  mutable std::mutex mu;
};

namespace {

const char* status(const Engine& e) { return e.pending() ? "active" : "completed"; }

nlohmann::json rules_payload(const RuleSet& r) {
  return {{"text", rules_to_text(r)}, {"json", rules_to_json(r)}};
}

nlohmann::json progress_payload(const std::string& id, const RunConfig& cfg, const Engine& e) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& h : e.history()) curve.push_back(h.anomalies_so_far);
  nlohmann::json drift = nlohmann::json::array();
  for (const auto& d : e.drift()) drift.push_back(d.to_json());
  return {{"session", id},
          {"mode", to_string(cfg.mode())},
          {"arm", cfg.arm},
          {"status", status(e)},
          {"budget", e.budget()},
          {"spent", e.spent()},
          {"remaining", e.budget() - std::min(e.budget(), e.spent())},
          {"anomalies_found", e.anomalies_found()},
          {"curve", curve},
          {"drift", drift}};
}

}  // namespace

Label parse_label(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "anomaly") return Label::anomaly;
    if (s == "nominal") return Label::nominal;
  } else if (j.is_number_integer()) {
    const auto v = j.get<int>();
    if (v == 1) return Label::anomaly;
    if (v == -1) return Label::nominal;
  }
  throw UsageError("label must be \"anomaly\", \"nominal\", 1 or -1");
}

SessionManager::SessionManager(std::optional<std::filesystem::path> state_dir)
    : dir_(std::move(state_dir)), salt_(std::random_device{}()) {
  if (!dir_) return;
  std::filesystem::create_directories(*dir_);
  for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
    if (entry.path().extension() != ".jsonl") continue;
    const std::string id = entry.path().stem().string();
    std::ifstream in(entry.path());
    std::string line;
    std::shared_ptr<Session> s;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto ev = nlohmann::json::parse(line);
      if (ev.at("event") == "create") {
        s = open(id, RunConfig::from_json(ev.at("config")), ev.at("seed").get<std::uint64_t>());
      } else if (s && ev.at("event") == "label") {
        s->engine->feedback(ev.at("instance").get<Index>(), parse_label(ev.at("label")));
        s->engine->next_query();
      }
    }
    if (s) sessions_[id] = s;
  }
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::Session> SessionManager::open(const std::string&, const RunConfig& cfg,
                                                              std::uint64_t seed) {
  auto s = std::make_shared<Session>();
  s->config = cfg;
  s->seed = seed;
  s->data = std::make_unique<Dataset>(make_dataset(cfg, seed));
  s->engine = make_engine(cfg, *s->data, seed);
  s->engine->next_query();
  return s;
}

void SessionManager::append(const std::string& id, const nlohmann::json& event) const {
  if (!dir_) return;
  std::ofstream out(*dir_ / (id + ".jsonl"), std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot persist session event");
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

nlohmann::json SessionManager::create(const nlohmann::json& config) {
  RunConfig cfg = RunConfig::from_json(config);
  cfg.validate();
  const std::uint64_t seed = cfg.seeds.front();
  std::string id;
  {
    std::unique_lock lock(mu_);
    char buf[17];
    do {
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(salt_, ++counter_)));
      id = buf;
    } while (sessions_.count(id));
  }
  auto s = open(id, cfg, seed);
  append(id, {{"event", "create"}, {"config", cfg.to_json()}, {"seed", seed}});
  {
    std::unique_lock lock(mu_);
    sessions_[id] = s;
  }
  return query(id);
}

nlohmann::json SessionManager::list() const {
  std::shared_lock lock(mu_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, s] : sessions_) {
    std::lock_guard g(s->mu);
    out.push_back({{"session", id}, {"arm", s->config.arm}, {"status", status(*s->engine)}});
  }
  return out;
}

nlohmann::json SessionManager::query(const std::string& id) const {
  auto s = find(id);
  std::lock_guard g(s->mu);
  const Engine& e = *s->engine;
  nlohmann::json q = nullptr;
  if (auto pid = e.pending()) {
    const auto row = s->data->row(*pid);
    q = {{"id", *pid},
         {"features", std::vector<double>(row.begin(), row.end())},
         {"feature_names", s->data->feature_names()},
         {"score", e.score(*pid)},
         {"rules", rules_payload(e.describe(*pid))}};
  }
  return {{"session", id}, {"status", status(e)}, {"query", q}, {"progress", progress_payload(id, s->config, e)}};
}

nlohmann::json SessionManager::label(const std::string& id, Index instance, Label y) {
  auto s = find(id);
  std::lock_guard g(s->mu);
  Engine& e = *s->engine;
  const auto pid = e.pending();
  if (!pid) throw Conflict("session is completed");
  if (*pid != instance)
    throw Conflict("instance " + std::to_string(instance) + " is not the pending query " + std::to_string(*pid));
  append(id, {{"event", "label"}, {"instance", instance}, {"label", sign(y)}});
  e.feedback(instance, y);
  e.next_query();
  return progress_payload(id, s->config, e);
}

nlohmann::json SessionManager::progress(const std::string& id) const {
  auto s = find(id);
  std::lock_guard g(s->mu);
  return progress_payload(id, s->config, *s->engine);
}

nlohmann::json SessionManager::rules(const std::string& id) const {
  auto s = find(id);
  std::lock_guard g(s->mu);
  return {{"session", id}, {"rules", rules_payload(s->engine->rules())}};
}

nlohmann::json SessionManager::relevance(const std::string& id) const {
  auto s = find(id);
  std::lock_guard g(s->mu);
  auto r = s->engine->relevance();
  if (r.is_null()) throw NotFound("session '" + id + "' has no relevance network");
  return {{"session", id}, {"relevance", r}};
}

namespace {

void reply(httplib::Response& res, int code, const nlohmann::json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  auto fail = [&](int code, const char* kind, const std::string& msg) {
    reply(res, code, {{"error", {{"code", kind}, {"message", msg}}}});
  };
  try {
    f();
  } catch (const NotFound& e) {
    fail(404, "not_found", e.what());
  } catch (const Conflict& e) {
    fail(409, "conflict", e.what());
  } catch (const UsageError& e) {
    fail(400, "bad_request", e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(400, "bad_request", e.what());
  } catch (const ContractViolation& e) {
    fail(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    fail(500, "internal", e.what());
  }
}

}  // namespace

void mount_routes(httplib::Server& server, SessionManager& sessions) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      reply(res, 201, sessions.create(body));
    });
  });
  server.Get("/sessions", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions.list()); });
  });
  server.Get(R"(/sessions/([0-9a-f]+)/query)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions.query(req.matches[1])); });
  });
  server.Post(R"(/sessions/([0-9a-f]+)/label)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      reply(res, 200, sessions.label(req.matches[1], body.at("instance").get<Index>(), parse_label(body.at("label"))));
    });
  });
  server.Get(R"(/sessions/([0-9a-f]+)/progress)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions.progress(req.matches[1])); });
  });
  server.Get(R"(/sessions/([0-9a-f]+)/rules)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions.rules(req.matches[1])); });
  });
  server.Get(R"(/sessions/([0-9a-f]+)/relevance)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, sessions.relevance(req.matches[1])); });
  });
}

}  // namespace aad
