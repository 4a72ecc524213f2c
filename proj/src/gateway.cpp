#include "visforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "visforge/digest.hpp"
#include "visforge/error.hpp"

namespace visforge {

std::string Turn::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind == ContentPart::Kind::Text) out += p.text;
  }
  return out;
}

Turn make_turn(Role role, std::string_view text, std::span<const ImagePtr> images) {
  Turn turn{role, {}};
  size_t used = 0;
  size_t start = 0;
  while (true) {
    const size_t p = text.find(kImagePad, start);
    const size_t end = p == std::string_view::npos ? text.size() : p;
    if (end > start) turn.parts.push_back(ContentPart::Text(std::string(text.substr(start, end - start))));
    if (p == std::string_view::npos) break;
    if (used >= images.size()) throw Error(ErrorCode::ArityMismatch, "more image placeholders than images");
    turn.parts.push_back(ContentPart::Image(images[used++]));
    start = p + kImagePad.size();
  }
  if (used != images.size()) throw Error(ErrorCode::ArityMismatch, "more images than image placeholders");
  return turn;
}

void validate(const Dialogue& dialogue) {
  for (size_t i = 0; i < dialogue.turns.size(); ++i) {
    const Turn& t = dialogue.turns[i];
    const std::string where = "turn " + std::to_string(i);
    if (t.role == Role::System) throw Error(ErrorCode::InvalidDialogue, where + " uses the system role");
    if (i > 0 && t.role == Role::Assistant && dialogue.turns[i - 1].role == Role::Assistant) {
      throw Error(ErrorCode::InvalidDialogue, where + " is a second consecutive assistant turn");
    }
    for (const auto& p : t.parts) {
      if (p.kind == ContentPart::Kind::Image) {
        if (!p.image) throw Error(ErrorCode::InvalidDialogue, where + " has an empty image part");
        if (t.role == Role::Assistant) throw Error(ErrorCode::InvalidDialogue, where + ": assistant turns are text-only");
      }
    }
  }
}

std::string first_user_text(const Dialogue& dialogue) {
  for (const auto& t : dialogue.turns) {
    if (t.role == Role::User) return t.text();
  }
  return {};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void validate(const BackendConfig& cfg) {
  if (cfg.timeout.count() <= 0) throw Error(ErrorCode::ConfigError, "backend timeout must be positive");
  if (cfg.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (cfg.backoff_base.count() < 0 || cfg.backoff_cap.count() < 0) {
    throw Error(ErrorCode::ConfigError, "backoff durations must be >= 0");
  }
  if (const auto* r = std::get_if<RemoteSpec>(&cfg.kind)) {
    if (r->endpoint.empty()) throw Error(ErrorCode::ConfigError, "remote backend needs an endpoint");
  }
}

BackendConfig backend_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "backend block must be an object");
  BackendConfig cfg;
  try {
    const std::string kind = j.value("kind", std::string("scripted"));
    if (kind == "remote") {
      cfg.kind = RemoteSpec{j.at("endpoint").get<std::string>(), j.value("model", std::string()),
                            j.value("auth_env", std::string())};
    } else if (kind == "scripted") {
      std::filesystem::path fixture = j.at("fixture").get<std::string>();
      if (fixture.is_relative()) fixture = base_dir / fixture;
      cfg.kind = ScriptedSpec{fixture};
    } else {
      throw Error(ErrorCode::ConfigError, "backend kind must be remote or scripted");
    }
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000L));
    cfg.max_retries = j.value("max_retries", 2);
    cfg.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", 500L));
    cfg.backoff_cap = std::chrono::milliseconds(j.value("backoff_cap_ms", 8000L));
    if (j.contains("sampling")) cfg.sampling = j.at("sampling");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("backend block: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

nlohmann::json backend_config_to_json(const BackendConfig& cfg) {
  nlohmann::json j;
  if (const auto* r = std::get_if<RemoteSpec>(&cfg.kind)) {
    j = {{"kind", "remote"}, {"endpoint", r->endpoint}, {"model", r->model}, {"auth_env", r->auth_env}};
  } else {
    j = {{"kind", "scripted"}, {"fixture", std::get<ScriptedSpec>(cfg.kind).fixture.generic_string()}};
  }
  j["timeout_ms"] = cfg.timeout.count();
  j["max_retries"] = cfg.max_retries;
  j["backoff_base_ms"] = cfg.backoff_base.count();
  j["backoff_cap_ms"] = cfg.backoff_cap.count();
  j["sampling"] = cfg.sampling;
  return j;
}

// ---------------------------------------------------------------------------
// Wire form
// ---------------------------------------------------------------------------

nlohmann::json encode_images(const Dialogue& dialogue) {
  nlohmann::json messages = nlohmann::json::array();
  if (!dialogue.system.empty()) messages.push_back({{"role", "system"}, {"content", dialogue.system}});
  for (const auto& turn : dialogue.turns) {
    if (turn.role == Role::Assistant) {
      messages.push_back({{"role", "assistant"}, {"content", turn.text()}});
      continue;
    }
    nlohmann::json content = nlohmann::json::array();
    for (const auto& part : turn.parts) {
      if (part.kind == ContentPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", part.text}});
        continue;
      }
      if (!part.image || !part.image->pixels) {
        throw Error(ErrorCode::MissingImage,
                    "image " + (part.image ? part.image->id : std::string("<null>")) + " has no resolvable content");
      }
      const auto png = encode_png(*part.image->pixels);
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    }
    messages.push_back({{"role", "user"}, {"content", content}});
  }
  return messages;
}

nlohmann::json build_request(const Dialogue& dialogue, const std::string& model, const nlohmann::json& sampling) {
  nlohmann::json body = sampling.is_object() ? sampling : nlohmann::json::object();
  body["model"] = model;
  body["messages"] = encode_images(dialogue);
  body["stream"] = false;
  return body;
}

std::string parse_completion(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ProtocolError, "backend reply is not JSON");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string out;
      for (const auto& part : content) {
        if (part.value("type", "") == "text") out += part.at("text").get<std::string>();
      }
      return out;
    }
  } catch (const nlohmann::json::exception&) {
  }
  throw Error(ErrorCode::ProtocolError, "backend reply lacks choices[0].message.content");
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<Scenario> scenarios)
    : scenarios_(std::move(scenarios)), cursors_(scenarios_.size(), 0) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& j) {
  std::vector<Scenario> scenarios;
  try {
    for (const auto& s : j.at("scenarios")) {
      scenarios.push_back({s.value("id", std::string()), s.value("match", std::string()),
                           s.at("responses").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("replay fixture: ") + e.what());
  }
  return std::make_shared<ScriptedBackend>(std::move(scenarios));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open replay fixture " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ConfigError, "replay fixture " + path.string() + " is not JSON");
  return from_json(j);
}

const ScriptedBackend::Scenario& ScriptedBackend::select(const Dialogue& dialogue) const {
  const std::string key = first_user_text(dialogue);
  const Scenario* fallback = nullptr;
  for (const auto& s : scenarios_) {
    if (s.match.empty()) {
      if (!fallback) fallback = &s;
    } else if (key.find(s.match) != std::string::npos) {
      return s;
    }
  }
  if (fallback) return *fallback;
  throw Error(ErrorCode::FixtureExhausted, "no scripted scenario matches the dialogue");
}

std::string ScriptedBackend::complete(const Dialogue& dialogue) {
  std::lock_guard lock(mu_);
  log_.push_back(dialogue);
  const Scenario& s = select(dialogue);
  const auto idx = static_cast<size_t>(&s - scenarios_.data());
  size_t& cursor = cursors_[idx];
  if (cursor >= s.responses.size()) {
    throw Error(ErrorCode::FixtureExhausted, "scenario '" + s.id + "' has no more responses");
  }
  return s.responses[cursor++];
}

std::vector<Dialogue> ScriptedBackend::received() const {
  std::lock_guard lock(mu_);
  return log_;
}

size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

std::chrono::milliseconds backoff_delay(const BackendConfig& cfg, int attempt, double jitter) {
  const double base = static_cast<double>(cfg.backoff_base.count());
  const double raw = base * std::pow(2.0, attempt);
  const double capped = std::min(raw, static_cast<double>(cfg.backoff_cap.count()));
  return std::chrono::milliseconds(static_cast<long>(capped * std::clamp(jitter, 0.5, 1.0)));
}

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg) {
  validate(cfg);
  if (const auto* r = std::get_if<RemoteSpec>(&cfg.kind)) return std::make_shared<RemoteBackend>(*r, cfg);
  return ScriptedBackend::from_file(std::get<ScriptedSpec>(cfg.kind).fixture);
}

Gateway::Gateway(std::shared_ptr<Backend> backend, int max_in_flight)
    : backend_(std::move(backend)), max_in_flight_(std::max(1, max_in_flight)) {
  if (!backend_) throw Error(ErrorCode::ConfigError, "gateway needs a backend");
}

std::string Gateway::complete(const Dialogue& dialogue) {
  validate(dialogue);
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
  }
  struct Release {
    Gateway* g;
    ~Release() {
      {
        std::lock_guard lock(g->mu_);
        --g->in_flight_;
      }
      g->cv_.notify_one();
    }
  } release{this};
  return backend_->complete(dialogue);
}

}  // namespace visforge
