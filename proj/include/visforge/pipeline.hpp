#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "visforge/chain.hpp"
#include "visforge/gateway.hpp"
#include "visforge/templates.hpp"
#include "visforge/toolbox.hpp"
#include "visforge/trace.hpp"

namespace visforge {

struct SeedTriplet {
  std::string question;
  ImagePtr image;
  std::string ground_truth;
  std::string source;   // sub-dataset tag
  std::string subtask;  // optional finer tag used by curation exclusions
};

/// Throws SchemaError unless question, image and ground truth are present.
void validate(const SeedTriplet& seed);

struct GenConfig {
  int max_steps = 8;
  int max_attempts = 2;
  double iou_match_threshold = 0.95;
  PixelBudget budget = training_budget();
  CoordinateFrame::Kind coordinates = CoordinateFrame::Kind::Normalized;
  ToolboxOptions toolbox;
  PromptTemplates templates = PromptTemplates::builtin();
  BackendConfig generator;
  BackendConfig tool_verifier;
  BackendConfig answer_verifier;
};

/// Throws ConfigError on out-of-range values.
void validate(const GenConfig& cfg);

struct Verdict {
  bool pass = false;
  std::string reason;
  std::string raw;              // verifier reply, verbatim
  std::optional<BBox> target;   // focus_area: the verifier's box for the target entity
};

struct AnswerEmitted {
  std::string answer;
  std::string final_reasoning;
};

using StepOutcome = std::variant<ReasoningStep, AnswerEmitted>;

struct VerifiedSample {
  std::string sample_id;
  ReasoningChain chain;
  std::vector<Verdict> tool_verdicts;
  Verdict answer_verdict;
  std::string source;
  std::string subtask;
  int attempts = 0;
  std::string template_hash;
  PixelBudget budget;
};

struct Rejection {
  std::string reason;
  int attempts = 0;
  // The last attempt died on backend transport (timeout or connection), not on data.
  bool backend_failure = false;
};

using GenerationResult = std::variant<VerifiedSample, Rejection>;

/// The image the model is shown: the root resized under the budget.
ImagePtr model_view(const ImagePtr& root, const PixelBudget& budget, const ToolboxOptions& opts = {});

/// Coordinate frame of commands issued against the model view.
CoordinateFrame command_frame(const ImagePtr& root, CoordinateFrame::Kind kind, const PixelBudget& budget);

/// Parses a yes/no verifier reply.
Verdict judge_yes_no(const std::string& raw);

class GenerationPipeline {
 public:
  GenerationPipeline(GenConfig cfg, std::shared_ptr<Gateway> generator, std::shared_ptr<Gateway> tool_verifier,
                     std::shared_ptr<Gateway> answer_verifier);

  /// Builds gateways from the three backend configs.
  static GenerationPipeline from_config(GenConfig cfg, int max_in_flight = 8);

  const GenConfig& config() const { return cfg_; }

  /// Dialogue for step t: system, user (image + question), then the t prior
  /// steps as assistant/tool turns.
  Dialogue generation_dialogue(const SeedTriplet& seed, std::span<const ReasoningStep> history) const;

  /// One generator call. A tool call is executed in Train mode and attached as
  /// the observation. Throws on parse, tool or backend errors.
  StepOutcome gen_step(const SeedTriplet& seed, std::span<const ReasoningStep> history) const;

  Verdict verify_tool_step(const ReasoningStep& step, const SeedTriplet& seed) const;
  Verdict verify_answer(const std::string& predicted, const SeedTriplet& seed) const;

  /// Runs attempts until one passes every verification or max_attempts is spent.
  GenerationResult generate_chain(const SeedTriplet& seed) const;

 private:
  GenConfig cfg_;
  std::shared_ptr<Gateway> generator_;
  std::shared_ptr<Gateway> tool_verifier_;
  std::shared_ptr<Gateway> answer_verifier_;
};

/// Processes seeds on `workers` threads; results keep the input order. Seeds
/// not started before `stop` is raised come back as nullopt.
std::vector<std::optional<GenerationResult>> generate_all(const GenerationPipeline& pipeline,
                                                          std::span<const SeedTriplet> seeds, int workers,
                                                          const std::atomic<bool>* stop = nullptr);

std::string make_sample_id(const SeedTriplet& seed);

// Interchange records (line-delimited JSON).
nlohmann::json sample_to_json(const VerifiedSample& sample);
VerifiedSample sample_from_json(const nlohmann::json& j);
nlohmann::json verdict_to_json(const Verdict& v);
nlohmann::json budget_to_json(const PixelBudget& b);
PixelBudget budget_from_json(const nlohmann::json& j);

}  // namespace visforge
