#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "visforge/geometry.hpp"
#include "visforge/image.hpp"

namespace visforge {

enum class ToolName { FocusArea, ZoomIn, Reuse };

std::string_view to_string(ToolName name);
/// Throws UnknownTool for names outside the closed tool set.
ToolName tool_from_string(std::string_view name);

// An executable visual operation. Only the parameters of the named tool are set:
// focus_area carries bbox (+ optional label), zoom_in an optional factor, reuse nothing.
struct ToolCommand {
  ToolName name = ToolName::Reuse;
  std::optional<BBox> bbox;
  std::optional<std::string> label;
  std::optional<double> factor;

  static ToolCommand focus_area(BBox box, std::optional<std::string> label = std::nullopt);
  static ToolCommand zoom_in(std::optional<double> factor = std::nullopt);
  static ToolCommand reuse();

  bool operator==(const ToolCommand&) const = default;
};

/// Throws SchemaError if params do not fit the named tool.
void validate(const ToolCommand& cmd);

/// {"name": ..., "params": {...}}
nlohmann::json command_to_json(const ToolCommand& cmd);

struct ReasoningContent {
  std::string atomic_step;
  std::string visual_plan;

  bool operator==(const ReasoningContent&) const = default;
};

struct ReasoningStep {
  ReasoningContent content;
  std::optional<ToolCommand> command;
  ImagePtr observation;

  bool has_observation() const { return observation != nullptr; }
};

bool operator==(const ReasoningStep& a, const ReasoningStep& b);

struct ReasoningChain {
  std::string question;
  ImagePtr root_image;
  std::vector<ReasoningStep> steps;
  // Summary reasoning emitted alongside the answer; empty when absent.
  std::string final_reasoning;
  std::optional<std::string> answer;

  bool completed() const { return answer.has_value() && !answer->empty(); }
  /// Observations in step order.
  std::vector<ImagePtr> observations() const;
};

bool operator==(const ReasoningChain& a, const ReasoningChain& b);

/// Checks step/observation pairing, nonempty atomic steps, and that every
/// observation descends from the root image. Throws InvalidChain or IncompleteChain.
void validate_chain(const ReasoningChain& chain, bool require_answer = false);

// Interchange records. Images appear by id; chain_from_json resolves lineage
// against the root and earlier observations and reattaches no pixels.
nlohmann::json chain_to_json(const ReasoningChain& chain);
ReasoningChain chain_from_json(const nlohmann::json& j);

}  // namespace visforge
