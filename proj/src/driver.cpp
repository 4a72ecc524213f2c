#include "visforge/driver.hpp"

#include <cctype>

#include "visforge/error.hpp"
#include "visforge/pipeline.hpp"

namespace visforge {

void validate(const DriverConfig& cfg) {
  if (cfg.max_rounds < 0) throw Error(ErrorCode::ConfigError, "max_rounds must be >= 0");
  validate(cfg.budget);
}

std::string_view to_string(ResponseStatus s) {
  switch (s) {
    case ResponseStatus::Answered: return "answered";
    case ResponseStatus::RoundLimit: return "round_limit";
    case ResponseStatus::Failed: return "failed";
  }
  return "failed";
}

InferenceDriver::InferenceDriver(DriverConfig cfg, std::shared_ptr<Gateway> gateway)
    : cfg_(std::move(cfg)), gateway_(std::move(gateway)) {
  validate(cfg_);
  if (!gateway_) throw Error(ErrorCode::ConfigError, "driver needs a gateway");
}

namespace {

// Reasoning bodies of an assistant reply prefix, joined.
std::string reasoning_of(std::string_view text) {
  std::string out;
  for (const auto& seg : segment_trace(text)) {
    if (seg.kind != SegmentKind::Reasoning) continue;
    if (!out.empty()) out += "\n";
    out += seg.body;
  }
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// First function or answer block in a complete reply.
StreamEvent first_action(std::string_view reply) {
  ScanResult r = scan_stream(reply, 0);
  return r.event;
}

}  // namespace

FinalResponse InferenceDriver::run(const std::string& question, const ImagePtr& image) const {
  FinalResponse out;
  out.chain.question = question;
  out.chain.root_image = image;

  const int max_calls = cfg_.max_rounds + 2;
  Dialogue dialogue;
  std::string pending;  // reasoning carried over from replies without an action
  auto fail = [&](std::string why, std::optional<ErrorCode> code = std::nullopt) {
    out.status = ResponseStatus::Failed;
    out.failure = std::move(why);
    out.failure_code = code;
    return out;
  };
  auto append_reasoning = [&](std::string_view prefix) {
    const std::string r = reasoning_of(prefix);
    if (r.empty()) return;
    if (!pending.empty()) pending += "\n";
    pending += r;
  };
  auto finish_answer = [&](const StreamEvent& ev, std::string_view reply) {
    const std::string_view prefix = reply.substr(0, ev.span.end);
    dialogue.turns.push_back(make_turn(Role::Assistant, prefix));
    append_reasoning(reply.substr(0, ev.span.begin));
    out.chain.final_reasoning = trim(pending);
    out.chain.answer = ev.text;
    out.status = ResponseStatus::Answered;
    return out;
  };

  ImagePtr view;
  CoordinateFrame frame;
  try {
    if (question.empty()) throw Error(ErrorCode::SchemaError, "question is empty");
    if (!image || image->provenance.kind != Provenance::Kind::Original) {
      throw Error(ErrorCode::InvalidImage, "inference input must be an Original image");
    }
    view = model_view(image, cfg_.budget, cfg_.toolbox);
    frame = command_frame(image, cfg_.coordinates, cfg_.budget);
  } catch (const Error& e) {
    return fail(e.what(), e.code());
  }
  out.visual_area = static_cast<long>(view->width) * view->height;
  dialogue.system = cfg_.templates.inference_system;
  {
    const ImagePtr imgs[] = {view};
    dialogue.turns.push_back(make_turn(Role::User, render_user_prompt(question), imgs));
  }

  while (out.rounds_used < cfg_.max_rounds) {
    if (out.backend_calls >= max_calls) return fail("backend call cap of " + std::to_string(max_calls) + " reached");
    std::string reply;
    try {
      reply = gateway_->complete(dialogue);
    } catch (const Error& e) {
      return fail(e.what(), e.code());
    }
    ++out.backend_calls;

    const StreamEvent ev = first_action(reply);
    try {
      switch (ev.kind) {
        case StreamEvent::Kind::Malformed:
          return fail("malformed reply: " + ev.reason);
        case StreamEvent::Kind::AnswerClosed:
          return finish_answer(ev, reply);
        case StreamEvent::Kind::NeedMore:
          append_reasoning(reply);
          dialogue.turns.push_back(make_turn(Role::Assistant, reply));
          dialogue.turns.push_back(make_turn(Role::User, cfg_.templates.inference_continue));
          continue;
        case StreamEvent::Kind::FunctionClosed:
          break;
      }
      const std::string_view prefix = std::string_view(reply).substr(0, ev.span.end);
      append_reasoning(prefix.substr(0, ev.span.begin));
      dialogue.turns.push_back(make_turn(Role::Assistant, prefix));

      ReasoningStep step;
      step.content = split_reasoning(trim(pending));
      pending.clear();
      step.command = extract_tool_command(ev.text, frame);
      step.observation = apply_tool(image, *step.command, ToolMode::Infer, cfg_.budget, cfg_.toolbox);
      out.visual_area += static_cast<long>(step.observation->width) * step.observation->height;
      const ImagePtr imgs[] = {step.observation};
      out.chain.steps.push_back(std::move(step));
      ++out.rounds_used;
      dialogue.turns.push_back(
          make_turn(Role::Tool, "<observation>" + std::string(kImagePad) + "</observation>", imgs));
    } catch (const Error& e) {
      return fail(e.what(), e.code());
    }
  }

  // Round limit reached without an answer.
  if (cfg_.on_round_limit == RoundLimitPolicy::ForceAnswerProbe && out.backend_calls < max_calls) {
    dialogue.turns.push_back(make_turn(Role::User, cfg_.templates.inference_probe));
    std::string reply;
    try {
      reply = gateway_->complete(dialogue);
    } catch (const Error& e) {
      return fail(e.what(), e.code());
    }
    ++out.backend_calls;
    const StreamEvent ev = first_action(reply);
    if (ev.kind == StreamEvent::Kind::AnswerClosed) {
      try {
        return finish_answer(ev, reply);
      } catch (const Error& e) {
        return fail(e.what(), e.code());
      }
    }
  }
  out.status = ResponseStatus::RoundLimit;
  return out;
}

Matcher matcher_from_string(std::string_view s) {
  if (s == "exact") return Matcher::Exact;
  if (s == "contains" || s == "contains-normalized") return Matcher::ContainsNormalized;
  throw Error(ErrorCode::ConfigError, "matcher must be exact or contains, got '" + std::string(s) + "'");
}

std::string normalize_answer(std::string_view s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (space && !out.empty()) out += ' ';
      space = false;
      out += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c) || std::ispunct(c)) {
      space = true;
    } else {
      if (space && !out.empty()) out += ' ';
      space = false;
      out += static_cast<char>(c);  // non-ASCII bytes pass through
    }
  }
  return out;
}

bool answer_matches(std::string_view answer, std::string_view reference, Matcher m) {
  if (m == Matcher::Exact) return trim(answer) == trim(reference);
  const std::string a = normalize_answer(answer);
  const std::string r = normalize_answer(reference);
  if (r.empty()) return a.empty();
  return (" " + a + " ").find(" " + r + " ") != std::string::npos;
}

double score_eval(std::span<const FinalResponse> responses, std::span<const std::string> references, Matcher m) {
  if (responses.size() != references.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(responses.size()) + " responses vs " +
                                               std::to_string(references.size()) + " references");
  }
  if (responses.empty()) return 0.0;
  size_t correct = 0;
  for (size_t i = 0; i < responses.size(); ++i) {
    const auto& r = responses[i];
    if (r.status == ResponseStatus::Answered && r.chain.answer && answer_matches(*r.chain.answer, references[i], m)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(responses.size());
}

nlohmann::json response_to_json(const FinalResponse& r) {
  nlohmann::json j = {{"status", to_string(r.status)},
                      {"rounds_used", r.rounds_used},
                      {"backend_calls", r.backend_calls},
                      {"visual_area", r.visual_area},
                      {"chain", chain_to_json(r.chain)}};
  if (r.status == ResponseStatus::Failed) {
    j["failure"] = r.failure;
    if (r.failure_code) j["failure_code"] = to_string(*r.failure_code);
  }
  return j;
}

}  // namespace visforge
