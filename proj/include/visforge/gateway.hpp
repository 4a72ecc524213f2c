#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "visforge/image.hpp"
#include "visforge/trace.hpp"

namespace visforge {

struct ContentPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;
  ImagePtr image;

  static ContentPart Text(std::string t) { return {Kind::Text, std::move(t), nullptr}; }
  static ContentPart Image(ImagePtr img) { return {Kind::Image, {}, std::move(img)}; }
};

struct Turn {
  Role role = Role::User;
  std::vector<ContentPart> parts;

  std::string text() const;  // concatenated text parts
};

struct Dialogue {
  std::string system;
  std::vector<Turn> turns;
};

/// Splits `text` at image placeholders and interleaves `images`. Throws
/// ArityMismatch when the counts differ.
Turn make_turn(Role role, std::string_view text, std::span<const ImagePtr> images = {});

/// No system-role turns, no two consecutive assistant turns, assistant turns
/// hold text only, every image part has an image. Throws InvalidDialogue.
void validate(const Dialogue& dialogue);

/// Text of the first user turn; scripted backends key scenarios on it.
std::string first_user_text(const Dialogue& dialogue);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RemoteSpec {
  std::string endpoint;  // full URL of the chat-completions route
  std::string model;
  std::string auth_env;  // name of the environment variable holding the token
};

struct ScriptedSpec {
  std::filesystem::path fixture;
};

struct BackendConfig {
  std::variant<RemoteSpec, ScriptedSpec> kind = ScriptedSpec{};
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{8000};
  // Forwarded verbatim into the request body (temperature, top_p, provider flags).
  nlohmann::json sampling = nlohmann::json::object();
};

/// Throws ConfigError unless timeout > 0 and max_retries >= 0.
void validate(const BackendConfig& cfg);

/// Reads a backend block: {"kind":"remote","endpoint",...} or
/// {"kind":"scripted","fixture":"path"}; relative paths resolve against base_dir.
BackendConfig backend_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json backend_config_to_json(const BackendConfig& cfg);

// ---------------------------------------------------------------------------
// Wire form
// ---------------------------------------------------------------------------

/// Chat-completions message list. Images become base64 PNG data URLs; text is
/// passed through. Tool turns travel as user messages because the wire tool
/// role cannot carry images. Throws MissingImage.
nlohmann::json encode_images(const Dialogue& dialogue);

nlohmann::json build_request(const Dialogue& dialogue, const std::string& model, const nlohmann::json& sampling);

/// Extracts choices[0].message.content. Throws ProtocolError.
std::string parse_completion(std::string_view body);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns the next assistant message verbatim.
  virtual std::string complete(const Dialogue& dialogue) = 0;
};

// Replays canned assistant messages. Fixture file:
//   {"format": "visforge-replay/1",
//    "scenarios": [{"id": "s1", "match": "text in first user turn", "responses": ["...", ...]}]}
// A dialogue selects the first scenario whose `match` occurs in its first user
// turn; a scenario with empty `match` is the fallback.
class ScriptedBackend : public Backend {
 public:
  struct Scenario {
    std::string id;
    std::string match;
    std::vector<std::string> responses;
  };

  explicit ScriptedBackend(std::vector<Scenario> scenarios);
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& j);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  std::string complete(const Dialogue& dialogue) override;

  /// Every dialogue received, in call order.
  std::vector<Dialogue> received() const;
  size_t calls() const;

 private:
  const Scenario& select(const Dialogue& dialogue) const;

  std::vector<Scenario> scenarios_;
  mutable std::mutex mu_;
  std::vector<size_t> cursors_;
  std::vector<Dialogue> log_;
};

class CallbackBackend : public Backend {
 public:
  explicit CallbackBackend(std::function<std::string(const Dialogue&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const Dialogue& dialogue) override { return fn_(dialogue); }

 private:
  std::function<std::string(const Dialogue&)> fn_;
};

// HTTP(S) chat-completions client with exponential, jittered backoff.
class RemoteBackend : public Backend {
 public:
  RemoteBackend(RemoteSpec spec, BackendConfig cfg);
  std::string complete(const Dialogue& dialogue) override;

 private:
  RemoteSpec spec_;
  BackendConfig cfg_;
  std::string base_url_;
  std::string path_;
};

/// Backoff before retry `attempt` (0-based): min(cap, base * 2^attempt) scaled by a jitter in [0.5, 1].
std::chrono::milliseconds backoff_delay(const BackendConfig& cfg, int attempt, double jitter);

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg);

// Validates dialogues and bounds the number of concurrent backend calls.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, int max_in_flight = 8);

  std::string complete(const Dialogue& dialogue);

  Backend& backend() { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  int max_in_flight_;
  int in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace visforge
