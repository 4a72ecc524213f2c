#include "visforge/chain.hpp"

#include <cmath>
#include <map>

#include "visforge/error.hpp"

namespace visforge {

std::string_view to_string(ToolName name) {
  switch (name) {
    case ToolName::FocusArea: return "focus_area";
    case ToolName::ZoomIn: return "zoom_in";
    case ToolName::Reuse: return "reuse";
  }
  return "unknown";
}

ToolName tool_from_string(std::string_view name) {
  if (name == "focus_area") return ToolName::FocusArea;
  if (name == "zoom_in") return ToolName::ZoomIn;
  if (name == "reuse") return ToolName::Reuse;
  throw Error(ErrorCode::UnknownTool, "tool '" + std::string(name) + "' is not in {focus_area, zoom_in, reuse}");
}

ToolCommand ToolCommand::focus_area(BBox box, std::optional<std::string> label) {
  ToolCommand c;
  c.name = ToolName::FocusArea;
  c.bbox = box;
  c.label = std::move(label);
  validate(c);
  return c;
}

ToolCommand ToolCommand::zoom_in(std::optional<double> factor) {
  ToolCommand c;
  c.name = ToolName::ZoomIn;
  c.factor = factor;
  validate(c);
  return c;
}

ToolCommand ToolCommand::reuse() { return ToolCommand{}; }

void validate(const ToolCommand& cmd) {
  switch (cmd.name) {
    case ToolName::FocusArea:
      if (!cmd.bbox) throw Error(ErrorCode::SchemaError, "focus_area requires bbox");
      if (!is_valid(*cmd.bbox)) throw Error(ErrorCode::DegenerateBox, "focus_area bbox is not valid");
      if (cmd.factor) throw Error(ErrorCode::SchemaError, "focus_area takes no factor");
      break;
    case ToolName::ZoomIn:
      if (cmd.bbox || cmd.label) throw Error(ErrorCode::SchemaError, "zoom_in takes only factor");
      if (cmd.factor && !(std::isfinite(*cmd.factor) && *cmd.factor > 1.0)) {
        throw Error(ErrorCode::SchemaError, "zoom_in factor must be > 1");
      }
      break;
    case ToolName::Reuse:
      if (cmd.bbox || cmd.label || cmd.factor) throw Error(ErrorCode::SchemaError, "reuse takes no params");
      break;
  }
}

nlohmann::json command_to_json(const ToolCommand& cmd) {
  nlohmann::json params = nlohmann::json::object();
  if (cmd.bbox) params["bbox"] = *cmd.bbox;
  if (cmd.label) params["label"] = *cmd.label;
  if (cmd.factor) params["factor"] = *cmd.factor;
  return {{"name", to_string(cmd.name)}, {"params", params}};
}

bool operator==(const ReasoningStep& a, const ReasoningStep& b) {
  if (!(a.content == b.content) || a.command != b.command) return false;
  if (a.has_observation() != b.has_observation()) return false;
  return !a.has_observation() || *a.observation == *b.observation;
}

std::vector<ImagePtr> ReasoningChain::observations() const {
  std::vector<ImagePtr> out;
  for (const auto& s : steps) {
    if (s.observation) out.push_back(s.observation);
  }
  return out;
}

bool operator==(const ReasoningChain& a, const ReasoningChain& b) {
  if (a.question != b.question || a.final_reasoning != b.final_reasoning || a.answer != b.answer) return false;
  if ((a.root_image == nullptr) != (b.root_image == nullptr)) return false;
  if (a.root_image && !(*a.root_image == *b.root_image)) return false;
  return a.steps == b.steps;
}

void validate_chain(const ReasoningChain& chain, bool require_answer) {
  if (!chain.root_image) throw Error(ErrorCode::InvalidChain, "chain has no root image");
  if (!chain.root_image->is_original()) throw Error(ErrorCode::InvalidChain, "root image must be an original");
  for (size_t i = 0; i < chain.steps.size(); ++i) {
    const auto& s = chain.steps[i];
    const std::string where = "step " + std::to_string(i);
    if (s.content.atomic_step.empty()) throw Error(ErrorCode::InvalidChain, where + " has empty atomic_step");
    if (s.command.has_value() != s.has_observation()) {
      throw Error(ErrorCode::IncompleteChain, where + " must carry both a command and an observation");
    }
    if (s.command) validate(*s.command);
    if (s.observation) {
      if (s.observation->is_original()) throw Error(ErrorCode::InvalidChain, where + " observation is not derived");
      if (!descends_from(*s.observation, chain.root_image->id)) {
        throw Error(ErrorCode::InvalidChain, where + " observation does not descend from the root image");
      }
    }
  }
  if (require_answer && !chain.completed()) throw Error(ErrorCode::IncompleteChain, "chain has no answer");
}

nlohmann::json chain_to_json(const ReasoningChain& chain) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : chain.steps) {
    steps.push_back({{"reasoning", {{"atomic_step", s.content.atomic_step}, {"visual_plan", s.content.visual_plan}}},
                     {"command", s.command ? command_to_json(*s.command) : nlohmann::json(nullptr)},
                     {"observation", s.observation ? image_to_json(*s.observation) : nlohmann::json(nullptr)}});
  }
  return {{"question", chain.question},
          {"root_image", chain.root_image ? image_to_json(*chain.root_image) : nlohmann::json(nullptr)},
          {"steps", steps},
          {"final_reasoning", chain.final_reasoning},
          {"answer", chain.answer ? nlohmann::json(*chain.answer) : nlohmann::json(nullptr)}};
}

namespace {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::SchemaError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::SchemaError, std::string("field '") + key + "' has the wrong type");
  }
}

ImagePtr image_from_json(const nlohmann::json& j, const std::map<std::string, ImagePtr>& known) {
  auto state = std::make_shared<ImageState>();
  state->id = required<std::string>(j, "id");
  state->width = required<int>(j, "width");
  state->height = required<int>(j, "height");
  state->bytes_ref = required<std::string>(j, "bytes_ref");
  if (state->width < 1 || state->height < 1) throw Error(ErrorCode::SchemaError, "image dimensions must be positive");
  const auto prov = required<nlohmann::json>(j, "provenance");
  const auto kind = required<std::string>(prov, "kind");
  if (kind == "derived") {
    state->provenance.kind = Provenance::Kind::Derived;
    state->provenance.tool = required<std::string>(prov, "tool");
    const auto parent = required<std::string>(prov, "parent");
    auto it = known.find(parent);
    if (it == known.end()) throw Error(ErrorCode::InvalidChain, "image " + state->id + " has unknown parent " + parent);
    state->provenance.parent = it->second;
  } else if (kind != "original") {
    throw Error(ErrorCode::SchemaError, "provenance kind must be original or derived");
  }
  return state;
}

}  // namespace

ReasoningChain chain_from_json(const nlohmann::json& j) {
  ReasoningChain chain;
  chain.question = required<std::string>(j, "question");
  std::map<std::string, ImagePtr> known;
  chain.root_image = image_from_json(required<nlohmann::json>(j, "root_image"), known);
  known[chain.root_image->id] = chain.root_image;
  for (const auto& sj : required<nlohmann::json>(j, "steps")) {
    ReasoningStep step;
    const auto r = required<nlohmann::json>(sj, "reasoning");
    step.content.atomic_step = required<std::string>(r, "atomic_step");
    step.content.visual_plan = required<std::string>(r, "visual_plan");
    const auto cmd = sj.value("command", nlohmann::json(nullptr));
    if (!cmd.is_null()) {
      ToolCommand c;
      c.name = tool_from_string(required<std::string>(cmd, "name"));
      const auto params = required<nlohmann::json>(cmd, "params");
      if (params.contains("bbox")) c.bbox = params.at("bbox").get<BBox>();
      if (params.contains("label")) c.label = required<std::string>(params, "label");
      if (params.contains("factor")) c.factor = required<double>(params, "factor");
      validate(c);
      step.command = c;
    }
    const auto obs = sj.value("observation", nlohmann::json(nullptr));
    if (!obs.is_null()) {
      step.observation = image_from_json(obs, known);
      known[step.observation->id] = step.observation;
    }
    chain.steps.push_back(std::move(step));
  }
  chain.final_reasoning = j.value("final_reasoning", std::string());
  if (j.contains("answer") && !j.at("answer").is_null()) chain.answer = required<std::string>(j, "answer");
  return chain;
}

}  // namespace visforge
