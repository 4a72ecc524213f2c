#include "visforge/config.hpp"

#include <cstdlib>
#include <fstream>

#include "visforge/error.hpp"

namespace visforge {

namespace {

std::string expand(const std::string& s) {
  std::string out;
  size_t i = 0;
  while (i < s.size()) {
    const size_t open = s.find("${", i);
    if (open == std::string::npos) {
      out.append(s, i);
      break;
    }
    const size_t close = s.find('}', open + 2);
    if (close == std::string::npos) throw Error(ErrorCode::ConfigError, "unterminated ${ in '" + s + "'");
    out.append(s, i, open - i);
    std::string name = s.substr(open + 2, close - open - 2);
    std::optional<std::string> fallback;
    if (const size_t d = name.find(":-"); d != std::string::npos) {
      fallback = name.substr(d + 2);
      name.resize(d);
    }
    if (name.empty()) throw Error(ErrorCode::ConfigError, "empty variable name in '" + s + "'");
    const char* v = std::getenv(name.c_str());
    if (v && *v) {
      out += v;
    } else if (fallback) {
      out += *fallback;
    } else {
      throw Error(ErrorCode::ConfigError, "environment variable " + name + " is not set");
    }
    i = close + 1;
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? base / path : path;
}

CoordinateFrame::Kind frame_kind(const nlohmann::json& j) {
  const std::string s = j.get<std::string>();
  if (s == "normalized") return CoordinateFrame::Kind::Normalized;
  if (s == "absolute") return CoordinateFrame::Kind::Absolute;
  throw Error(ErrorCode::ConfigError, "coordinates must be normalized or absolute");
}

Interpolation kernel_from(const std::string& s) {
  if (s == "bicubic") return Interpolation::Bicubic;
  if (s == "bilinear") return Interpolation::Bilinear;
  throw Error(ErrorCode::ConfigError, "interpolation must be bicubic or bilinear");
}

}  // namespace

nlohmann::json interpolate_env(const nlohmann::json& j) {
  if (j.is_string()) return expand(j.get<std::string>());
  if (j.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : j) out.push_back(interpolate_env(v));
    return out;
  }
  if (j.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, v] : j.items()) out[k] = interpolate_env(v);
    return out;
  }
  return j;
}

AppConfig config_from_json(const nlohmann::json& raw, const std::filesystem::path& base_dir) {
  if (!raw.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  AppConfig cfg;
  cfg.snapshot = raw;
  cfg.base_dir = base_dir;
  const nlohmann::json j = interpolate_env(raw);
  try {
    cfg.workers = j.value("workers", 4);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (cfg.workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");

    PromptTemplates templates = PromptTemplates::builtin();
    if (j.contains("templates_dir")) templates = PromptTemplates::load(resolve(base_dir, j["templates_dir"]));
    ToolboxOptions toolbox;
    toolbox.kernel = kernel_from(j.value("interpolation", std::string("bicubic")));
    toolbox.default_zoom_factor = j.value("default_zoom_factor", 2.0);

    if (j.contains("generation")) {
      const auto& g = j["generation"];
      GenConfig gc;
      gc.max_steps = g.value("max_steps", gc.max_steps);
      gc.max_attempts = g.value("max_attempts", gc.max_attempts);
      gc.iou_match_threshold = g.value("iou_match_threshold", gc.iou_match_threshold);
      if (g.contains("budget")) gc.budget = budget_from_json(g["budget"]);
      if (g.contains("coordinates")) gc.coordinates = frame_kind(g["coordinates"]);
      gc.toolbox = toolbox;
      gc.templates = templates;
      gc.generator = backend_config_from_json(g.at("generator"), base_dir);
      gc.tool_verifier = backend_config_from_json(g.at("tool_verifier"), base_dir);
      gc.answer_verifier = backend_config_from_json(g.at("answer_verifier"), base_dir);
      validate(gc);
      cfg.generation = std::move(gc);
    }
    if (j.contains("inference")) {
      const auto& i = j["inference"];
      DriverConfig dc;
      dc.max_rounds = i.value("max_rounds", dc.max_rounds);
      if (i.contains("budget")) dc.budget = budget_from_json(i["budget"]);
      if (i.contains("coordinates")) dc.coordinates = frame_kind(i["coordinates"]);
      const std::string policy = i.value("on_round_limit", std::string("probe"));
      if (policy == "probe") {
        dc.on_round_limit = RoundLimitPolicy::ForceAnswerProbe;
      } else if (policy == "partial") {
        dc.on_round_limit = RoundLimitPolicy::ReturnPartial;
      } else {
        throw Error(ErrorCode::ConfigError, "on_round_limit must be probe or partial");
      }
      dc.toolbox = toolbox;
      dc.templates = templates;
      dc.backend = backend_config_from_json(i.at("backend"), base_dir);
      validate(dc);
      cfg.inference = std::move(dc);
      cfg.matcher = matcher_from_string(i.value("matcher", std::string("contains")));
    }
    if (j.contains("export")) {
      const auto& e = j["export"];
      auto& ex = cfg.export_settings;
      if (e.contains("convention")) ex.convention = convention_from_string(e["convention"].get<std::string>());
      if (e.contains("quotas")) ex.quotas = resolve(base_dir, e["quotas"].get<std::string>());
      if (e.contains("total")) ex.total = e["total"].get<size_t>();
      for (const auto& p : e.value("passthrough", std::vector<std::string>{})) ex.passthrough.push_back(resolve(base_dir, p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ConfigError, "config " + path.string() + " is not valid JSON");
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

}  // namespace visforge
