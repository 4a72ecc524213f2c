#include "visforge/trace.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "visforge/error.hpp"

namespace visforge {

namespace {

constexpr std::array<SegmentKind, 4> kTagged = {SegmentKind::Reasoning, SegmentKind::Function,
                                                 SegmentKind::Observation, SegmentKind::Answer};

std::string_view tag_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Reasoning: return "reasoning";
    case SegmentKind::Function: return "function";
    case SegmentKind::Observation: return "observation";
    case SegmentKind::Answer: return "answer";
    case SegmentKind::PlainText: break;
  }
  return "";
}

std::string open_tag(SegmentKind k) { return "<" + std::string(tag_name(k)) + ">"; }
std::string close_tag(SegmentKind k) { return "</" + std::string(tag_name(k)) + ">"; }

struct TagMatch {
  enum class Result { None, Partial, Open, Close };
  Result result = Result::None;
  SegmentKind kind = SegmentKind::PlainText;
  size_t length = 0;
};

// Classifies the text at `pos` (which holds '<'). Partial means the buffer
// ends inside something that could still become a tag.
TagMatch match_tag_at(std::string_view text, size_t pos) {
  const std::string_view rest = text.substr(pos);
  bool partial = false;
  for (SegmentKind k : kTagged) {
    for (bool closing : {false, true}) {
      const std::string tag = closing ? close_tag(k) : open_tag(k);
      if (rest.size() >= tag.size()) {
        if (rest.substr(0, tag.size()) == tag) {
          return {closing ? TagMatch::Result::Close : TagMatch::Result::Open, k, tag.size()};
        }
      } else if (std::string_view(tag).substr(0, rest.size()) == rest) {
        partial = true;
      }
    }
  }
  return {partial ? TagMatch::Result::Partial : TagMatch::Result::None, SegmentKind::PlainText, 0};
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

[[noreturn]] void malformed(const std::string& reason) { throw Error(ErrorCode::Malformed, reason); }

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "unknown";
}

bool contains_reserved_token(std::string_view text) {
  if (text.find(kImagePad) != std::string_view::npos) return true;
  for (size_t p = text.find('<'); p != std::string_view::npos; p = text.find('<', p + 1)) {
    auto m = match_tag_at(text, p);
    if (m.result == TagMatch::Result::Open || m.result == TagMatch::Result::Close) return true;
  }
  return false;
}

std::vector<TraceSegment> segment_trace(std::string_view text) {
  std::vector<TraceSegment> out;
  size_t plain_start = 0;
  size_t i = 0;
  auto flush_plain = [&](size_t end) {
    if (end > plain_start) {
      out.push_back({SegmentKind::PlainText, std::string(text.substr(plain_start, end - plain_start)),
                     {plain_start, end}, nullptr});
    }
  };
  while (true) {
    size_t p = text.find('<', i);
    if (p == std::string_view::npos) break;
    TagMatch m = match_tag_at(text, p);
    if (m.result == TagMatch::Result::None || m.result == TagMatch::Result::Partial) {
      i = p + 1;
      continue;
    }
    if (m.result == TagMatch::Result::Close) malformed("unmatched close " + close_tag(m.kind));
    // Opener: find its closer, rejecting any other tag in between.
    const size_t body_start = p + m.length;
    size_t q = body_start;
    while (true) {
      size_t r = text.find('<', q);
      if (r == std::string_view::npos) malformed("unclosed " + open_tag(m.kind));
      TagMatch inner = match_tag_at(text, r);
      if (inner.result == TagMatch::Result::Open) {
        malformed("nested " + open_tag(inner.kind) + " inside " + open_tag(m.kind));
      }
      if (inner.result == TagMatch::Result::Close) {
        if (inner.kind != m.kind) malformed("unmatched close " + close_tag(inner.kind));
        flush_plain(p);
        const size_t end = r + inner.length;
        out.push_back({m.kind, std::string(text.substr(body_start, r - body_start)), {p, end}, nullptr});
        plain_start = end;
        i = end;
        break;
      }
      q = r + 1;
    }
  }
  flush_plain(text.size());
  return out;
}

ScanResult scan_stream(std::string_view buffer, size_t cursor) {
  if (cursor > buffer.size()) {
    return {{StreamEvent::Kind::Malformed, "", {}, "cursor past end of buffer"}, cursor};
  }
  std::optional<SegmentKind> inside;
  size_t open_pos = cursor;
  size_t open_len = 0;
  size_t i = cursor;
  while (true) {
    size_t p = buffer.find('<', i);
    if (p == std::string_view::npos) break;
    TagMatch m = match_tag_at(buffer, p);
    switch (m.result) {
      case TagMatch::Result::None:
        i = p + 1;
        continue;
      case TagMatch::Result::Partial:
        return {{StreamEvent::Kind::NeedMore, "", {}, ""}, inside ? open_pos : p};
      case TagMatch::Result::Open:
        if (inside) {
          return {{StreamEvent::Kind::Malformed, "", {p, p + m.length},
                   "nested " + open_tag(m.kind) + " inside " + open_tag(*inside)},
                  p};
        }
        inside = m.kind;
        open_pos = p;
        open_len = m.length;
        i = p + m.length;
        continue;
      case TagMatch::Result::Close: {
        if (!inside || *inside != m.kind) {
          return {{StreamEvent::Kind::Malformed, "", {p, p + m.length}, "unmatched close"}, p};
        }
        const size_t end = p + m.length;
        const std::string body(buffer.substr(open_pos + open_len, p - open_pos - open_len));
        if (m.kind == SegmentKind::Function) {
          return {{StreamEvent::Kind::FunctionClosed, body, {open_pos, end}, ""}, end};
        }
        if (m.kind == SegmentKind::Answer) {
          return {{StreamEvent::Kind::AnswerClosed, std::string(trim(body)), {open_pos, end}, ""}, end};
        }
        inside.reset();
        i = end;
        continue;
      }
    }
  }
  return {{StreamEvent::Kind::NeedMore, "", {}, ""}, inside ? open_pos : buffer.size()};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

ToolCommand extract_tool_command(std::string_view raw, const CoordinateFrame& frame) {
  const auto j = nlohmann::json::parse(trim(raw), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "function body is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "function body must be a JSON object");
  if (!j.contains("name") || !j.at("name").is_string()) throw Error(ErrorCode::SchemaError, "missing string 'name'");
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "params") throw Error(ErrorCode::SchemaError, "unexpected top-level key '" + key + "'");
  }
  ToolCommand cmd;
  cmd.name = tool_from_string(j.at("name").get<std::string>());
  if (!j.contains("params") || !j.at("params").is_object()) {
    throw Error(ErrorCode::SchemaError, "missing object 'params'");
  }
  const auto& params = j.at("params");
  auto allow = [&](std::initializer_list<std::string_view> keys) {
    for (const auto& [key, _] : params.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw Error(ErrorCode::SchemaError, "unexpected param '" + key + "' for " + std::string(to_string(cmd.name)));
      }
    }
  };
  switch (cmd.name) {
    case ToolName::FocusArea: {
      allow({"bbox", "label"});
      if (!params.contains("bbox")) throw Error(ErrorCode::SchemaError, "focus_area requires 'bbox'");
      const auto& b = params.at("bbox");
      if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::SchemaError, "bbox must be four numbers");
      std::array<double, 4> v{};
      for (size_t k = 0; k < 4; ++k) {
        if (!b[k].is_number()) throw Error(ErrorCode::SchemaError, "bbox must be four numbers");
        v[k] = b[k].get<double>();
      }
      if (frame.kind == CoordinateFrame::Kind::Absolute) {
        if (frame.width < 1 || frame.height < 1) {
          throw Error(ErrorCode::UnresolvedImageDims, "absolute coordinates need the image dimensions");
        }
        v[0] /= frame.width;
        v[2] /= frame.width;
        v[1] /= frame.height;
        v[3] /= frame.height;
      }
      cmd.bbox = clamp_bbox(v);
      if (params.contains("label")) {
        if (!params.at("label").is_string()) throw Error(ErrorCode::SchemaError, "label must be a string");
        cmd.label = params.at("label").get<std::string>();
      }
      break;
    }
    case ToolName::ZoomIn:
      allow({"factor"});
      if (params.contains("factor")) {
        if (!params.at("factor").is_number()) throw Error(ErrorCode::SchemaError, "factor must be a number");
        cmd.factor = params.at("factor").get<double>();
      }
      break;
    case ToolName::Reuse:
      allow({});
      break;
  }
  validate(cmd);
  return cmd;
}

std::string render_command(const ToolCommand& cmd) { return command_to_json(cmd).dump(); }

// ---------------------------------------------------------------------------
// Reasoning content
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 10> kToolIntent = {
    "focus_area", "zoom_in", "reuse", "zoom", "crop", "focus", "magnif", "original image", "bounding box", "bbox"};

bool names_tool_intent(std::string_view sentence) {
  std::string lower(sentence);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(kToolIntent.begin(), kToolIntent.end(),
                     [&](std::string_view k) { return lower.find(k) != std::string::npos; });
}

// Sentence ranges: a sentence ends after . ! or ? followed by whitespace or the
// end of text, or at a newline.
std::vector<Span> sentences(std::string_view text) {
  std::vector<Span> out;
  size_t start = 0;
  auto push = [&](size_t end) {
    std::string_view s = text.substr(start, end - start);
    if (!is_blank(s)) out.push_back({start, end});
    start = end;
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      push(i);
      start = i + 1;
    } else if ((c == '.' || c == '!' || c == '?') &&
               (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      push(i + 1);
    }
  }
  push(text.size());
  return out;
}

}  // namespace

ReasoningContent split_reasoning(std::string_view body) {
  const std::string_view text = trim(body);
  const auto parts = sentences(text);
  ReasoningContent out;
  if (parts.size() >= 2) {
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
      std::string_view s = text.substr(it->begin, it->size());
      if (!names_tool_intent(s)) continue;
      const std::string_view before = trim(text.substr(0, it->begin));
      const std::string_view after = trim(text.substr(it->end));
      out.visual_plan = std::string(trim(s));
      out.atomic_step = std::string(before);
      if (!after.empty()) {
        if (!out.atomic_step.empty()) out.atomic_step += " ";
        out.atomic_step += after;
      }
      return out;
    }
  }
  out.atomic_step = std::string(text);
  return out;
}

std::string join_reasoning(const ReasoningContent& content) {
  if (content.visual_plan.empty()) return content.atomic_step;
  if (content.atomic_step.empty()) return content.visual_plan;
  return content.atomic_step + "\n" + content.visual_plan;
}

// ---------------------------------------------------------------------------
// Whole traces
// ---------------------------------------------------------------------------

ReasoningChain parse_trace(std::string_view text, std::span<const ImagePtr> observations, const TraceContext& ctx) {
  const auto segments = segment_trace(text);
  const auto n_obs = static_cast<size_t>(std::count_if(
      segments.begin(), segments.end(), [](const TraceSegment& s) { return s.kind == SegmentKind::Observation; }));
  if (n_obs != observations.size()) {
    throw Error(ErrorCode::ArityMismatch, std::to_string(n_obs) + " observation slots but " +
                                              std::to_string(observations.size()) + " images");
  }

  ReasoningChain chain;
  chain.question = ctx.question;
  chain.root_image = ctx.root_image;
  std::optional<std::string> pending_reasoning;
  bool awaiting_observation = false;
  bool answered = false;
  size_t obs_index = 0;

  for (const auto& seg : segments) {
    if (seg.kind == SegmentKind::PlainText) continue;
    if (answered) malformed("content after <answer>");
    switch (seg.kind) {
      case SegmentKind::Reasoning:
        if (awaiting_observation) malformed("<reasoning> between <function> and its <observation>");
        if (pending_reasoning) malformed("consecutive <reasoning> blocks");
        pending_reasoning = std::string(trim(seg.body));
        break;
      case SegmentKind::Function: {
        if (awaiting_observation) malformed("second <function> before an <observation>");
        if (!pending_reasoning) malformed("<function> without preceding <reasoning>");
        ReasoningStep step;
        step.content = split_reasoning(*pending_reasoning);
        if (step.content.atomic_step.empty()) malformed("empty <reasoning> before <function>");
        step.command = extract_tool_command(seg.body, ctx.frame);
        chain.steps.push_back(std::move(step));
        pending_reasoning.reset();
        awaiting_observation = true;
        break;
      }
      case SegmentKind::Observation:
        if (!awaiting_observation) malformed("<observation> without a preceding <function>");
        if (trim(seg.body) != kImagePad) malformed("<observation> must hold exactly one image placeholder");
        chain.steps.back().observation = observations[obs_index++];
        awaiting_observation = false;
        break;
      case SegmentKind::Answer:
        if (awaiting_observation) malformed("<answer> follows a <function> without observation");
        chain.final_reasoning = pending_reasoning.value_or("");
        pending_reasoning.reset();
        chain.answer = std::string(trim(seg.body));
        answered = true;
        break;
      case SegmentKind::PlainText:
        break;
    }
  }
  if (awaiting_observation) malformed("trailing <function> without observation");
  if (pending_reasoning) chain.final_reasoning = *pending_reasoning;
  if (chain.root_image) validate_chain(chain);
  return chain;
}

namespace {

void check_text(std::string_view what, std::string_view text) {
  if (contains_reserved_token(text)) {
    throw Error(ErrorCode::ReservedToken, std::string(what) + " contains a reserved tag or placeholder");
  }
}

std::string reasoning_block(std::string_view body) { return "<reasoning>" + std::string(body) + "</reasoning>"; }

std::string observation_block() { return "<observation>" + std::string(kImagePad) + "</observation>"; }

std::string step_action(const ReasoningStep& step) {
  check_text("reasoning", step.content.atomic_step);
  check_text("reasoning", step.content.visual_plan);
  return reasoning_block(join_reasoning(step.content)) + "\n<function>" + render_command(*step.command) +
         "</function>";
}

std::string final_turn(const ReasoningChain& chain) {
  check_text("final reasoning", chain.final_reasoning);
  std::string out;
  if (!chain.final_reasoning.empty()) out += reasoning_block(chain.final_reasoning);
  if (chain.answer) {
    check_text("answer", *chain.answer);
    if (!out.empty()) out += "\n";
    out += "<answer>" + *chain.answer + "</answer>";
  }
  return out;
}

}  // namespace

std::string render_user_prompt(std::string_view question) {
  check_text("question", question);
  return std::string(kImagePad) + "\n" + std::string(question);
}

std::vector<RenderedTurn> serialize_chain(const ReasoningChain& chain, RenderMode mode) {
  for (size_t i = 0; i < chain.steps.size(); ++i) {
    const auto& s = chain.steps[i];
    if (!s.command || !s.has_observation()) {
      throw Error(ErrorCode::IncompleteChain, "step " + std::to_string(i) + " lacks its command or observation");
    }
  }
  std::vector<RenderedTurn> turns;
  if (mode == RenderMode::Training) {
    std::string body;
    for (const auto& s : chain.steps) {
      if (!body.empty()) body += "\n";
      body += step_action(s) + "\n" + observation_block();
    }
    const std::string tail = final_turn(chain);
    if (!tail.empty()) {
      if (!body.empty()) body += "\n";
      body += tail;
    }
    turns.push_back({Role::Assistant, body});
    return turns;
  }
  turns.push_back({Role::User, render_user_prompt(chain.question)});
  for (const auto& s : chain.steps) {
    turns.push_back({Role::Assistant, step_action(s)});
    turns.push_back({Role::Tool, observation_block()});
  }
  const std::string tail = final_turn(chain);
  if (!tail.empty()) turns.push_back({Role::Assistant, tail});
  return turns;
}

std::string training_body(const ReasoningChain& chain) {
  return serialize_chain(chain, RenderMode::Training).front().text;
}

TurnParse parse_turn(std::string_view text) {
  TurnParse out;
  for (const auto& seg : segment_trace(text)) {
    switch (seg.kind) {
      case SegmentKind::PlainText:
        break;
      case SegmentKind::Reasoning:
        if (out.function_raw || out.answer) malformed("<reasoning> after the turn's action");
        if (out.reasoning) malformed("consecutive <reasoning> blocks");
        out.reasoning = std::string(trim(seg.body));
        break;
      case SegmentKind::Function:
        if (out.function_raw) malformed("more than one <function> in a turn");
        if (out.answer) malformed("<function> after <answer>");
        out.function_raw = seg.body;
        break;
      case SegmentKind::Answer:
        if (out.answer) malformed("more than one <answer> in a turn");
        if (out.function_raw) malformed("<answer> together with a <function>");
        out.answer = std::string(trim(seg.body));
        break;
      case SegmentKind::Observation:
        malformed("model turns may not contain <observation>");
    }
  }
  return out;
}

}  // namespace visforge
