#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "aad/config.hpp"
#include "aad/engine.hpp"

namespace httplib {
class Server;
}

namespace aad {

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Stale or mismatched label; the session is left untouched.
struct Conflict : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Analyst sessions. Each session serializes its mutations behind its own
/// mutex; reads take the same lock and see a consistent snapshot. With a
/// state directory every event is appended to <dir>/<id>.jsonl before it
/// is acknowledged, and the constructor replays existing logs.
class SessionManager {
 public:
  explicit SessionManager(std::optional<std::filesystem::path> state_dir = std::nullopt);
  ~SessionManager();

  /// Config JSON as accepted by RunConfig::from_json; the first seed is used.
  nlohmann::json create(const nlohmann::json& config);
  nlohmann::json list() const;
  nlohmann::json query(const std::string& id) const;
  nlohmann::json label(const std::string& id, Index instance, Label y);
  nlohmann::json progress(const std::string& id) const;
  nlohmann::json rules(const std::string& id) const;
  nlohmann::json relevance(const std::string& id) const;

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> open(const std::string& id, const RunConfig& cfg, std::uint64_t seed);
  void append(const std::string& id, const nlohmann::json& event) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
  std::uint64_t salt_;
};

/// Parses "anomaly" / "nominal" / 1 / -1.
Label parse_label(const nlohmann::json& j);

/// Registers the JSON endpoints on `server`.
void mount_routes(httplib::Server& server, SessionManager& sessions);

}  // namespace aad
