#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace sce::service {

using json = nlohmann::json;
using Clock = std::chrono::system_clock;

struct ServiceConfig {
  std::filesystem::path stimulus_dir;  // WAV files referenced by session configs
  std::filesystem::path log_dir;       // one JSON-lines log per session; empty disables
  std::chrono::seconds expiry{2 * 60 * 60};
  std::function<Clock::time_point()> now = [] { return Clock::now(); };
};

// Status code plus JSON body, independent of the HTTP layer.
struct Reply {
  int status = 200;
  json body;
};

class Session;

// Session registry and trial sequencing. Every call is safe to make from
// concurrent request threads; mutations of one session are serialized.
class SessionService {
 public:
  explicit SessionService(ServiceConfig cfg);
  ~SessionService();

  Reply create(const json& request);
  Reply trial(const std::string& id);
  Reply respond(const std::string& id, const json& request);
  Reply results(const std::string& id);
  Reply health() const;

  // WAV bytes for a stimulus token, or nullptr when unknown.
  std::shared_ptr<const std::vector<unsigned char>> stimulus(const std::string& token) const;

  const ServiceConfig& config() const { return cfg_; }

  // Content-addressed stimulus cache; returns the token (SHA-256 of the WAV).
  std::string store_stimulus(std::vector<unsigned char> wav);

 private:
  std::shared_ptr<Session> find(const std::string& id);

  ServiceConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const std::vector<unsigned char>>> stimuli_;
  int next_id_ = 1;
};

// Registers the HTTP routes on `server`.
void mount(httplib::Server& server, SessionService& service);

std::string version();

}  // namespace sce::service
