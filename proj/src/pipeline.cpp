#include "visforge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "visforge/digest.hpp"
#include "visforge/error.hpp"
#include "visforge/parallel.hpp"

namespace visforge {

void validate(const SeedTriplet& seed) {
  if (seed.question.empty()) throw Error(ErrorCode::SchemaError, "seed question is empty");
  if (!seed.image) throw Error(ErrorCode::SchemaError, "seed has no image");
  if (seed.ground_truth.empty()) throw Error(ErrorCode::SchemaError, "seed ground truth is empty");
}

void validate(const GenConfig& cfg) {
  if (cfg.max_steps < 1) throw Error(ErrorCode::ConfigError, "max_steps must be >= 1");
  if (cfg.max_attempts < 1) throw Error(ErrorCode::ConfigError, "max_attempts must be >= 1");
  if (!(cfg.iou_match_threshold > 0.0 && cfg.iou_match_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "iou_match_threshold must be in (0,1]");
  }
  validate(cfg.budget);
}

ImagePtr model_view(const ImagePtr& root, const PixelBudget& budget, const ToolboxOptions& opts) {
  if (!root || !root->pixels) throw Error(ErrorCode::MissingImage, "root image has no pixel content");
  const Dims d = smart_resize(root->width, root->height, budget);
  if (d.width == root->width && d.height == root->height) return root;
  return make_derived(resample(*root->pixels, d.width, d.height, opts.kernel), "view", root);
}

CoordinateFrame command_frame(const ImagePtr& root, CoordinateFrame::Kind kind, const PixelBudget& budget) {
  if (kind == CoordinateFrame::Kind::Normalized) return CoordinateFrame::normalized();
  const Dims d = smart_resize(root->width, root->height, budget);
  return CoordinateFrame::absolute(d.width, d.height);
}

namespace {

std::string lower_trimmed(const std::string& s) {
  size_t b = 0;
  while (b < s.size() && (std::isspace(static_cast<unsigned char>(s[b])) || s[b] == '"' || s[b] == '\'' ||
                          s[b] == '*' || s[b] == '`')) {
    ++b;
  }
  std::string out = s.substr(b);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_backend_failure(ErrorCode c) { return c == ErrorCode::Timeout || c == ErrorCode::TransportError; }

bool is_gateway_error(ErrorCode c) {
  return is_backend_failure(c) || c == ErrorCode::FixtureExhausted || c == ErrorCode::ProtocolError ||
         c == ErrorCode::InvalidDialogue || c == ErrorCode::MissingImage;
}

// First [a, b, c, d] array of numbers in free text.
std::optional<BBox> find_box(const std::string& text) {
  for (size_t open = text.find('['); open != std::string::npos; open = text.find('[', open + 1)) {
    const size_t close = text.find(']', open);
    if (close == std::string::npos) break;
    const auto j = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_array() || j.size() != 4) continue;
    if (!std::all_of(j.begin(), j.end(), [](const nlohmann::json& v) { return v.is_number(); })) continue;
    try {
      return clamp_bbox({j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()});
    } catch (const Error&) {
      continue;
    }
  }
  return std::nullopt;
}

}  // namespace

Verdict judge_yes_no(const std::string& raw) {
  const std::string t = lower_trimmed(raw);
  if (t.rfind("yes", 0) == 0) return {true, "affirmed", raw, std::nullopt};
  if (t.rfind("no", 0) == 0) return {false, "verifier-denied", raw, std::nullopt};
  return {false, "verifier-unparseable", raw, std::nullopt};
}

GenerationPipeline::GenerationPipeline(GenConfig cfg, std::shared_ptr<Gateway> generator,
                                       std::shared_ptr<Gateway> tool_verifier, std::shared_ptr<Gateway> answer_verifier)
    : cfg_(std::move(cfg)),
      generator_(std::move(generator)),
      tool_verifier_(std::move(tool_verifier)),
      answer_verifier_(std::move(answer_verifier)) {
  validate(cfg_);
  if (!generator_ || !tool_verifier_ || !answer_verifier_) {
    throw Error(ErrorCode::ConfigError, "generation needs generator and verifier backends");
  }
}

GenerationPipeline GenerationPipeline::from_config(GenConfig cfg, int max_in_flight) {
  auto gen = std::make_shared<Gateway>(make_backend(cfg.generator), max_in_flight);
  auto tool = std::make_shared<Gateway>(make_backend(cfg.tool_verifier), max_in_flight);
  auto ans = std::make_shared<Gateway>(make_backend(cfg.answer_verifier), max_in_flight);
  return GenerationPipeline(std::move(cfg), gen, tool, ans);
}

Dialogue GenerationPipeline::generation_dialogue(const SeedTriplet& seed,
                                                 std::span<const ReasoningStep> history) const {
  ReasoningChain partial;
  partial.question = seed.question;
  partial.root_image = seed.image;
  partial.steps.assign(history.begin(), history.end());

  Dialogue d;
  d.system = cfg_.templates.generator_system;
  const ImagePtr view = model_view(seed.image, cfg_.budget, cfg_.toolbox);
  size_t step = 0;
  for (const auto& turn : serialize_chain(partial, RenderMode::Dialogue)) {
    if (turn.role == Role::User) {
      const ImagePtr imgs[] = {view};
      d.turns.push_back(make_turn(Role::User, turn.text, imgs));
    } else if (turn.role == Role::Tool) {
      const ImagePtr imgs[] = {history[step++].observation};
      d.turns.push_back(make_turn(Role::Tool, turn.text, imgs));
    } else {
      d.turns.push_back(make_turn(turn.role, turn.text));
    }
  }
  return d;
}

StepOutcome GenerationPipeline::gen_step(const SeedTriplet& seed, std::span<const ReasoningStep> history) const {
  if (static_cast<int>(history.size()) >= cfg_.max_steps) {
    throw Error(ErrorCode::InvalidChain, "history already holds max_steps steps");
  }
  const std::string reply = generator_->complete(generation_dialogue(seed, history));
  const TurnParse turn = parse_turn(reply);
  if (turn.function_raw) {
    if (!turn.reasoning) throw Error(ErrorCode::Malformed, "<function> without preceding <reasoning>");
    ReasoningStep step;
    step.content = split_reasoning(*turn.reasoning);
    if (step.content.atomic_step.empty()) throw Error(ErrorCode::Malformed, "empty <reasoning>");
    step.command = extract_tool_command(*turn.function_raw, command_frame(seed.image, cfg_.coordinates, cfg_.budget));
    step.observation = apply_tool(seed.image, *step.command, ToolMode::Train, cfg_.budget, cfg_.toolbox);
    return step;
  }
  if (turn.answer) {
    if (turn.answer->empty()) throw Error(ErrorCode::ParseError, "empty <answer>");
    return AnswerEmitted{*turn.answer, turn.reasoning.value_or("")};
  }
  throw Error(ErrorCode::ParseError, "generator reply has neither a <function> nor an <answer>");
}

Verdict GenerationPipeline::verify_tool_step(const ReasoningStep& step, const SeedTriplet& seed) const {
  if (!step.command) return {false, "step has no command", "", std::nullopt};
  const ToolCommand& cmd = *step.command;
  Dialogue d;
  d.system = cfg_.templates.verifier_system;
  const std::string plan = step.content.visual_plan.empty() ? step.content.atomic_step : step.content.visual_plan;
  try {
    const ImagePtr view = model_view(seed.image, cfg_.budget, cfg_.toolbox);
    if (cmd.name == ToolName::FocusArea) {
      const std::string prompt = render_template(
          cfg_.templates.verify_focus, {{"question", seed.question}, {"label", cmd.label.value_or(plan)}});
      d.turns.push_back(Turn{Role::User, {ContentPart::Image(view), ContentPart::Text(prompt)}});
      const std::string raw = tool_verifier_->complete(d);
      const auto target = find_box(raw);
      if (!target) return {false, "verifier-unparseable", raw, std::nullopt};
      if (bbox_contains(*cmd.bbox, *target)) return {true, "contains", raw, target};
      const double iou = bbox_iou(*cmd.bbox, *target);
      if (iou >= cfg_.iou_match_threshold) return {true, "match", raw, target};
      std::ostringstream why;
      why << "bbox-mismatch iou=" << iou;
      return {false, why.str(), raw, target};
    }
    const std::string prompt = render_template(
        cfg_.templates.verify_semantic,
        {{"question", seed.question}, {"plan", plan}, {"command", render_command(cmd)}});
    std::vector<ContentPart> parts{ContentPart::Image(view)};
    if (step.observation) parts.push_back(ContentPart::Image(step.observation));
    parts.push_back(ContentPart::Text(prompt));
    d.turns.push_back(Turn{Role::User, std::move(parts)});
    return judge_yes_no(tool_verifier_->complete(d));
  } catch (const Error& e) {
    if (is_gateway_error(e.code())) return {false, "verifier-unavailable", e.what(), std::nullopt};
    throw;
  }
}

Verdict GenerationPipeline::verify_answer(const std::string& predicted, const SeedTriplet& seed) const {
  if (predicted.empty()) return {false, "empty prediction", "", std::nullopt};
  Dialogue d;
  d.system = cfg_.templates.verifier_system;
  d.turns.push_back(make_turn(Role::User, render_template(cfg_.templates.verify_answer,
                                                          {{"question", seed.question},
                                                           {"ground_truth", seed.ground_truth},
                                                           {"predicted", predicted}})));
  try {
    return judge_yes_no(answer_verifier_->complete(d));
  } catch (const Error& e) {
    if (is_gateway_error(e.code())) return {false, "verifier-unavailable", e.what(), std::nullopt};
    throw;
  }
}

std::string make_sample_id(const SeedTriplet& seed) {
  return sha256_hex(seed.source + "\x1f" + seed.question + "\x1f" + (seed.image ? seed.image->id : "") + "\x1f" +
                    seed.ground_truth)
      .substr(0, 16);
}

GenerationResult GenerationPipeline::generate_chain(const SeedTriplet& seed) const {
  validate(seed);
  Rejection rejection;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    rejection.attempts = attempt;
    rejection.backend_failure = false;
    std::vector<ReasoningStep> history;
    std::vector<Verdict> verdicts;
    while (true) {
      if (static_cast<int>(history.size()) >= cfg_.max_steps) {
        rejection.reason = "max-steps reached without an answer";
        break;
      }
      StepOutcome outcome;
      try {
        outcome = gen_step(seed, history);
      } catch (const Error& e) {
        rejection.reason = std::string("generation: ") + e.what();
        rejection.backend_failure = is_backend_failure(e.code());
        break;
      }
      if (auto* step = std::get_if<ReasoningStep>(&outcome)) {
        Verdict v = verify_tool_step(*step, seed);
        const bool pass = v.pass;
        verdicts.push_back(std::move(v));
        if (!pass) {
          rejection.reason = "tool-verification (step " + std::to_string(history.size()) + "): " + verdicts.back().reason;
          break;
        }
        history.push_back(std::move(*step));
        continue;
      }
      auto& emitted = std::get<AnswerEmitted>(outcome);
      Verdict av = verify_answer(emitted.answer, seed);
      if (!av.pass) {
        rejection.reason = "answer-verification: " + av.reason;
        break;
      }
      VerifiedSample sample;
      sample.sample_id = make_sample_id(seed);
      sample.chain.question = seed.question;
      sample.chain.root_image = seed.image;
      sample.chain.steps = std::move(history);
      sample.chain.final_reasoning = emitted.final_reasoning;
      sample.chain.answer = emitted.answer;
      validate_chain(sample.chain, /*require_answer=*/true);
      sample.tool_verdicts = std::move(verdicts);
      sample.answer_verdict = std::move(av);
      sample.source = seed.source;
      sample.subtask = seed.subtask;
      sample.attempts = attempt;
      sample.template_hash = cfg_.templates.hash();
      sample.budget = cfg_.budget;
      return sample;
    }
  }
  return rejection;
}

std::vector<std::optional<GenerationResult>> generate_all(const GenerationPipeline& pipeline,
                                                          std::span<const SeedTriplet> seeds, int workers,
                                                          const std::atomic<bool>* stop) {
  std::vector<std::optional<GenerationResult>> results(seeds.size());
  parallel_for(seeds.size(), workers, stop, [&](size_t i) { results[i] = pipeline.generate_chain(seeds[i]); });
  return results;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

nlohmann::json verdict_to_json(const Verdict& v) {
  nlohmann::json j = {{"pass", v.pass}, {"reason", v.reason}, {"raw", v.raw}};
  if (v.target) j["target"] = *v.target;
  return j;
}

namespace {

Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  v.pass = j.at("pass").get<bool>();
  v.reason = j.value("reason", std::string());
  v.raw = j.value("raw", std::string());
  if (j.contains("target")) v.target = j.at("target").get<BBox>();
  return v;
}

}  // namespace

nlohmann::json budget_to_json(const PixelBudget& b) {
  return {{"min_pixels", b.min_pixels}, {"max_pixels", b.max_pixels}, {"grid", b.grid}};
}

PixelBudget budget_from_json(const nlohmann::json& j) {
  if (j.is_string()) return parse_budget(j.get<std::string>());
  PixelBudget b;
  try {
    b.min_pixels = j.value("min_pixels", b.min_pixels);
    b.max_pixels = j.at("max_pixels").get<long>();
    b.grid = j.value("grid", kGrid);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("budget: ") + e.what());
  }
  validate(b);
  return b;
}

nlohmann::json sample_to_json(const VerifiedSample& s) {
  nlohmann::json tools = nlohmann::json::array();
  for (const auto& v : s.tool_verdicts) tools.push_back(verdict_to_json(v));
  return {{"format", "visforge-sample/1"},
          {"sample_id", s.sample_id},
          {"source", s.source},
          {"subtask", s.subtask},
          {"attempts", s.attempts},
          {"template_hash", s.template_hash},
          {"budget", budget_to_json(s.budget)},
          {"chain", chain_to_json(s.chain)},
          {"verdicts", {{"tools", tools}, {"answer", verdict_to_json(s.answer_verdict)}}}};
}

VerifiedSample sample_from_json(const nlohmann::json& j) {
  VerifiedSample s;
  try {
    if (j.value("format", std::string()) != "visforge-sample/1") {
      throw Error(ErrorCode::SchemaError, "record format is not visforge-sample/1");
    }
    s.sample_id = j.at("sample_id").get<std::string>();
    s.source = j.value("source", std::string());
    s.subtask = j.value("subtask", std::string());
    s.attempts = j.at("attempts").get<int>();
    s.template_hash = j.value("template_hash", std::string());
    s.budget = budget_from_json(j.at("budget"));
    s.chain = chain_from_json(j.at("chain"));
    for (const auto& v : j.at("verdicts").at("tools")) s.tool_verdicts.push_back(verdict_from_json(v));
    s.answer_verdict = verdict_from_json(j.at("verdicts").at("answer"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("sample record: ") + e.what());
  }
  validate_chain(s.chain, /*require_answer=*/true);
  return s;
}

}  // namespace visforge
