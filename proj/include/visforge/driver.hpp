#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "visforge/chain.hpp"
#include "visforge/error.hpp"
#include "visforge/gateway.hpp"
#include "visforge/templates.hpp"
#include "visforge/toolbox.hpp"
#include "visforge/trace.hpp"

namespace visforge {

enum class RoundLimitPolicy { ReturnPartial, ForceAnswerProbe };

struct DriverConfig {
  int max_rounds = 6;
  PixelBudget budget = budget_preset("high");
  BackendConfig backend;
  RoundLimitPolicy on_round_limit = RoundLimitPolicy::ForceAnswerProbe;
  CoordinateFrame::Kind coordinates = CoordinateFrame::Kind::Normalized;
  ToolboxOptions toolbox;
  PromptTemplates templates = PromptTemplates::builtin();
};

/// Throws ConfigError when max_rounds < 0 or the budget is invalid.
void validate(const DriverConfig& cfg);

enum class ResponseStatus { Answered, RoundLimit, Failed };
std::string_view to_string(ResponseStatus s);

struct FinalResponse {
  ReasoningChain chain;
  ResponseStatus status = ResponseStatus::Failed;
  std::string failure;  // Failed only
  std::optional<ErrorCode> failure_code;
  int rounds_used = 0;
  int backend_calls = 0;
  // Pixels shown to the model: the resized root plus every observation.
  long visual_area = 0;
};

// One question at a time; many drivers may share a gateway.
class InferenceDriver {
 public:
  InferenceDriver(DriverConfig cfg, std::shared_ptr<Gateway> gateway);

  const DriverConfig& config() const { return cfg_; }

  /// Backend calls are capped at max_rounds + 2 so replies that neither call a
  /// tool nor answer cannot loop forever.
  FinalResponse run(const std::string& question, const ImagePtr& image) const;

 private:
  DriverConfig cfg_;
  std::shared_ptr<Gateway> gateway_;
};

enum class Matcher { Exact, ContainsNormalized };
Matcher matcher_from_string(std::string_view s);

/// Lowercase, punctuation dropped, whitespace collapsed.
std::string normalize_answer(std::string_view s);
bool answer_matches(std::string_view answer, std::string_view reference, Matcher m);

/// Fraction of Answered responses whose answer matches. Throws LengthMismatch.
double score_eval(std::span<const FinalResponse> responses, std::span<const std::string> references, Matcher m);

nlohmann::json response_to_json(const FinalResponse& r);

}  // namespace visforge
