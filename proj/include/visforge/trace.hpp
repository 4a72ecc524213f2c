#pragma once

// Tag-delimited reasoning traces:
//   <reasoning>...</reasoning><function>{json}</function>
//   <observation><|image_pad|></observation> ... <answer>...</answer>
// Tags are literal, case-sensitive special tokens. They never nest and carry
// no attributes.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visforge/chain.hpp"

namespace visforge {

inline constexpr std::string_view kImagePad = "<|image_pad|>";

enum class SegmentKind { Reasoning, Function, Observation, Answer, PlainText };

struct Span {
  size_t begin = 0;
  size_t end = 0;

  size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct TraceSegment {
  SegmentKind kind = SegmentKind::PlainText;
  std::string body;  // text between the tags (or the raw text for PlainText)
  Span span;         // covers the tags themselves
  ImagePtr image_slot;
};

/// Splits a complete trace into segments. Throws Malformed on unpaired,
/// mismatched or nested tags.
std::vector<TraceSegment> segment_trace(std::string_view text);

/// True if `text` contains any tag literal or the image placeholder.
bool contains_reserved_token(std::string_view text);

// ---------------------------------------------------------------------------
// Incremental scanning
// ---------------------------------------------------------------------------

struct StreamEvent {
  enum class Kind { NeedMore, FunctionClosed, AnswerClosed, Malformed };
  Kind kind = Kind::NeedMore;
  std::string text;    // command body or answer body
  Span span;           // open tag through close tag
  std::string reason;  // Malformed only

  bool operator==(const StreamEvent&) const = default;
};

struct ScanResult {
  StreamEvent event;
  size_t cursor = 0;
};

/// Returns the earliest complete function or answer block at or after `cursor`.
/// Reasoning and observation blocks are consumed silently. On NeedMore the
/// cursor never moves past the start of an unfinished block or a partial tag.
ScanResult scan_stream(std::string_view buffer, size_t cursor);

// ---------------------------------------------------------------------------
// Commands and reasoning content
// ---------------------------------------------------------------------------

// Coordinates a model emits may be normalized or absolute pixels of the image
// it was shown; absolute values are normalized on the way in.
struct CoordinateFrame {
  enum class Kind { Normalized, Absolute };
  Kind kind = Kind::Normalized;
  int width = 0;
  int height = 0;

  static CoordinateFrame normalized() { return {}; }
  static CoordinateFrame absolute(int w, int h) { return {Kind::Absolute, w, h}; }
};

/// Parses and validates a function body. Throws ParseError, UnknownTool,
/// SchemaError or DegenerateBox.
ToolCommand extract_tool_command(std::string_view raw, const CoordinateFrame& frame = CoordinateFrame::normalized());

/// Compact canonical JSON of a command, as emitted between function tags.
std::string render_command(const ToolCommand& cmd);

/// The last sentence naming a tool intent becomes the visual plan, as long as
/// another sentence remains for the atomic step.
ReasoningContent split_reasoning(std::string_view body);
std::string join_reasoning(const ReasoningContent& content);

// ---------------------------------------------------------------------------
// Whole traces
// ---------------------------------------------------------------------------

struct TraceContext {
  std::string question;
  ImagePtr root_image;
  CoordinateFrame frame;
};

/// Parses a full assistant body. `observations` supplies one image per
/// observation placeholder, in order. Throws Malformed, ArityMismatch,
/// ParseError (and command errors).
ReasoningChain parse_trace(std::string_view text, std::span<const ImagePtr> observations, const TraceContext& ctx);

enum class Role { System, User, Assistant, Tool };
std::string_view to_string(Role role);

struct RenderedTurn {
  Role role = Role::Assistant;
  std::string text;  // image positions are kImagePad

  bool operator==(const RenderedTurn&) const = default;
};

enum class RenderMode { Dialogue, Training };

/// Dialogue: user turn, then assistant/tool turns per step, then the final
/// assistant turn. Training: a single assistant turn with observations inline.
/// Throws IncompleteChain if a step lacks its observation, ReservedToken if
/// any text would collide with the tag vocabulary.
std::vector<RenderedTurn> serialize_chain(const ReasoningChain& chain, RenderMode mode);

/// The assistant body of the Training rendering.
std::string training_body(const ReasoningChain& chain);

/// Text of the user turn: image placeholder followed by the question.
std::string render_user_prompt(std::string_view question);

// A single assistant turn, as produced by a generator call.
struct TurnParse {
  std::optional<std::string> reasoning;  // raw body of the last reasoning block
  std::optional<std::string> function_raw;
  std::optional<std::string> answer;
};

/// Accepts `[reasoning] function` or `[reasoning] answer`. A turn holding both a
/// function and an answer is Malformed, as is any observation block.
TurnParse parse_turn(std::string_view text);

}  // namespace visforge
