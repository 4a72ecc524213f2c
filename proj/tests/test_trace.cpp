#include <doctest.h>

#include "support.hpp"
#include "visforge/error.hpp"

using namespace visforge;
using namespace vftest;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

ImagePtr small_root() { return make_original(gradient(120, 90)); }

}  // namespace

TEST_SUITE("trace") {
  TEST_CASE("segments cover a complete trace") {
    const std::string t =
        "<reasoning>Look.</reasoning>\n<function>{\"name\":\"reuse\",\"params\":{}}</function>"
        "<observation><|image_pad|></observation>tail<answer>42</answer>";
    const auto segs = segment_trace(t);
    std::vector<SegmentKind> kinds;
    for (const auto& s : segs) kinds.push_back(s.kind);
    CHECK(kinds == std::vector<SegmentKind>{SegmentKind::Reasoning, SegmentKind::PlainText, SegmentKind::Function,
                                            SegmentKind::Observation, SegmentKind::PlainText, SegmentKind::Answer});
    CHECK(segs[0].body == "Look.");
    CHECK(segs[0].span == Span{0, 28});
    CHECK(segs.back().span.end == t.size());
    for (size_t i = 1; i < segs.size(); ++i) CHECK(segs[i].span.begin == segs[i - 1].span.end);
  }

  TEST_CASE("malformed tag structure") {
    for (const char* bad : {"<reasoning>open", "a</answer>", "<reasoning><answer>x</answer></reasoning>",
                            "<function>{}</answer>", "<answer>1</answer></answer>"}) {
      CAPTURE(bad);
      CHECK(code_of([&] { segment_trace(bad); }) == ErrorCode::Malformed);
    }
    // Tags are case-sensitive literals; unknown markup is plain text.
    CHECK(segment_trace("<Answer>x</Answer> <b>y</b>").size() == 1);
  }

  TEST_CASE("reserved tokens") {
    CHECK(contains_reserved_token("a <answer> b"));
    CHECK(contains_reserved_token("</function>"));
    CHECK(contains_reserved_token("x<|image_pad|>"));
    CHECK_FALSE(contains_reserved_token("<answers> and a < b"));
  }

  TEST_CASE("stream scanning") {
    const std::string buf = "<reasoning>zoom</reasoning><function>{\"name\":\"zoom_in\",\"params\":{}}</function> more";
    const auto r = scan_stream(buf, 0);
    CHECK(r.event.kind == StreamEvent::Kind::FunctionClosed);
    CHECK(r.event.text == "{\"name\":\"zoom_in\",\"params\":{}}");
    CHECK(r.event.span.begin == buf.find("<function>"));
    CHECK(r.cursor == buf.find(" more"));

    const auto a = scan_stream("<answer> cat </answer>", 0);
    CHECK(a.event.kind == StreamEvent::Kind::AnswerClosed);
    CHECK(a.event.text == "cat");

    // Partial tags and open blocks hold the cursor at their start.
    CHECK(scan_stream("abc<func", 0).cursor == 3);
    CHECK(scan_stream("abc<function>{\"na", 0).cursor == 3);
    CHECK(scan_stream("<reasoning>done</reasoning>", 0).event.kind == StreamEvent::Kind::NeedMore);
    CHECK(scan_stream("<function><answer>", 0).event.kind == StreamEvent::Kind::Malformed);
    CHECK(scan_stream("ab", 5).event.kind == StreamEvent::Kind::Malformed);
  }

  TEST_CASE("stream scanning is prefix-monotone") {
    // Feeding any prefix never produces an event that the full text contradicts.
    const std::string full =
        "<reasoning>Read the sign. Zoom in on it.</reasoning><function>{\"name\":\"zoom_in\",\"params\":{\"factor\":2}}"
        "</function>";
    const auto final_event = scan_stream(full, 0).event;
    REQUIRE(final_event.kind == StreamEvent::Kind::FunctionClosed);
    size_t last_cursor = 0;
    for (size_t n = 0; n <= full.size(); ++n) {
      const auto r = scan_stream(std::string_view(full).substr(0, n), 0);
      if (n < full.size()) {
        CHECK(r.event.kind == StreamEvent::Kind::NeedMore);
        CHECK(r.cursor <= n);
        // Resuming from the reported cursor sees the same result.
        CHECK(scan_stream(full, r.cursor).event == final_event);
        last_cursor = std::max(last_cursor, r.cursor);
      } else {
        CHECK(r.event == final_event);
      }
    }
    CHECK(last_cursor <= final_event.span.begin);
  }

  TEST_CASE("command extraction") {
    auto c = extract_tool_command(R"({"name":"focus_area","params":{"bbox":[0.1,0.2,0.5,0.6],"label":"cat"}})");
    CHECK(c.name == ToolName::FocusArea);
    CHECK(*c.bbox == make_bbox(0.1, 0.2, 0.5, 0.6));
    CHECK(*c.label == "cat");
    // Swapped corners and out-of-range values are clamped.
    c = extract_tool_command(R"({"name":"focus_area","params":{"bbox":[0.5,1.4,-0.2,0.6]}})");
    CHECK(*c.bbox == make_bbox(0.0, 0.6, 0.5, 1.0));
    c = extract_tool_command(R"({"name":"focus_area","params":{"bbox":[100,50,300,150]}})",
                             CoordinateFrame::absolute(400, 200));
    CHECK(*c.bbox == make_bbox(0.25, 0.25, 0.75, 0.75));
    CHECK(extract_tool_command(R"( {"name":"zoom_in","params":{}} )").factor == std::nullopt);
    CHECK(*extract_tool_command(R"({"name":"zoom_in","params":{"factor":1.5}})").factor == 1.5);
    CHECK(extract_tool_command(R"({"name":"reuse","params":{}})") == ToolCommand::reuse());

    CHECK(code_of([] { extract_tool_command("{nope"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { extract_tool_command("[1]"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { extract_tool_command(R"({"name":"rotate","params":{}})"); }) == ErrorCode::UnknownTool);
    CHECK(code_of([] { extract_tool_command(R"({"name":"reuse"})"); }) == ErrorCode::SchemaError);
    CHECK(code_of([] { extract_tool_command(R"({"name":"reuse","params":{"x":1}})"); }) == ErrorCode::SchemaError);
    CHECK(code_of([] { extract_tool_command(R"({"name":"zoom_in","params":{"factor":0.5}})"); }) ==
          ErrorCode::SchemaError);
    CHECK(code_of([] { extract_tool_command(R"({"name":"focus_area","params":{"bbox":[0,0,1]}})"); }) ==
          ErrorCode::SchemaError);
    CHECK(code_of([] { extract_tool_command(R"({"name":"focus_area","params":{"bbox":[0.3,0,0.3,1]}})"); }) ==
          ErrorCode::DegenerateBox);
    CHECK(code_of([] {
            extract_tool_command(R"({"name":"focus_area","params":{"bbox":[1,1,2,2]}})", CoordinateFrame::absolute(0, 0));
          }) == ErrorCode::UnresolvedImageDims);
  }

  TEST_CASE("rendered commands parse back") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
      const ToolCommand c = random_command(rng);
      CHECK(extract_tool_command(render_command(c)) == c);
    }
  }

  TEST_CASE("reasoning split") {
    auto r = split_reasoning("The sign is small. I should zoom in on it.");
    CHECK(r.atomic_step == "The sign is small.");
    CHECK(r.visual_plan == "I should zoom in on it.");
    // A single sentence stays atomic even when it names a tool.
    r = split_reasoning("Zoom in on the sign.");
    CHECK(r.atomic_step == "Zoom in on the sign.");
    CHECK(r.visual_plan.empty());
    // The last intent sentence wins; text after it joins the atomic step.
    r = split_reasoning("Crop first. Then focus on the car. It is red.");
    CHECK(r.visual_plan == "Then focus on the car.");
    CHECK(r.atomic_step == "Crop first. It is red.");
    r = split_reasoning("No tools here. Just text.");
    CHECK(r.visual_plan.empty());
    CHECK(join_reasoning({"A.", "Zoom."}) == "A.\nZoom.");
    CHECK(split_reasoning(join_reasoning({"A b c.", "Zoom in."})) == ReasoningContent{"A b c.", "Zoom in."});
  }

  TEST_CASE("turn parsing") {
    auto t = parse_turn("<reasoning>x</reasoning><function>{}</function>");
    CHECK(*t.reasoning == "x");
    CHECK(*t.function_raw == "{}");
    CHECK_FALSE(t.answer);
    t = parse_turn("<answer> 7 </answer>");
    CHECK(*t.answer == "7");
    CHECK(code_of([] { parse_turn("<function>{}</function><answer>1</answer>"); }) == ErrorCode::Malformed);
    CHECK(code_of([] { parse_turn("<observation><|image_pad|></observation>"); }) == ErrorCode::Malformed);
    CHECK(code_of([] { parse_turn("<function>{}</function><function>{}</function>"); }) == ErrorCode::Malformed);
  }

  TEST_CASE("serialization shapes") {
    const ImagePtr root = small_root();
    ReasoningChain c;
    c.question = "What is it?";
    c.root_image = root;
    ReasoningStep s;
    s.content = {"The object is far.", "Zoom in."};
    s.command = ToolCommand::zoom_in(2.0);
    s.observation = apply_tool(root, *s.command, ToolMode::Train, training_budget());
    c.steps.push_back(s);
    c.final_reasoning = "It is a cat.";
    c.answer = "cat";

    const auto turns = serialize_chain(c, RenderMode::Dialogue);
    REQUIRE(turns.size() == 4);
    CHECK(turns[0] == RenderedTurn{Role::User, "<|image_pad|>\nWhat is it?"});
    CHECK(turns[1].text ==
          "<reasoning>The object is far.\nZoom in.</reasoning>\n"
          "<function>{\"name\":\"zoom_in\",\"params\":{\"factor\":2.0}}</function>");
    CHECK(turns[2] == RenderedTurn{Role::Tool, "<observation><|image_pad|></observation>"});
    CHECK(turns[3].text == "<reasoning>It is a cat.</reasoning>\n<answer>cat</answer>");
    CHECK(training_body(c) == turns[1].text + "\n" + turns[2].text + "\n" + turns[3].text);

    auto bad = c;
    bad.answer = "a <answer> b";
    CHECK(code_of([&] { serialize_chain(bad, RenderMode::Training); }) == ErrorCode::ReservedToken);
    bad = c;
    bad.steps[0].observation = nullptr;
    CHECK(code_of([&] { serialize_chain(bad, RenderMode::Dialogue); }) == ErrorCode::IncompleteChain);
    CHECK(code_of([] { render_user_prompt("<|image_pad|>"); }) == ErrorCode::ReservedToken);
  }

  TEST_CASE("parse rejects bad traces") {
    const ImagePtr root = small_root();
    const TraceContext ctx{"q", root, {}};
    const auto obs = std::vector<ImagePtr>{reuse(root, training_budget())};
    const std::string step = "<reasoning>a.</reasoning><function>{\"name\":\"reuse\",\"params\":{}}</function>";
    const std::string ob = "<observation><|image_pad|></observation>";
    CHECK(code_of([&] { parse_trace(step + ob, {}, ctx); }) == ErrorCode::ArityMismatch);
    CHECK(code_of([&] { parse_trace(step, {}, ctx); }) == ErrorCode::Malformed);
    CHECK(code_of([&] { parse_trace("<function>{\"name\":\"reuse\",\"params\":{}}</function>" + ob, obs, ctx); }) ==
          ErrorCode::Malformed);
    CHECK(code_of([&] { parse_trace(step + ob + "<answer>x</answer><reasoning>b</reasoning>", obs, ctx); }) ==
          ErrorCode::Malformed);
    CHECK(code_of([&] { parse_trace(step + "<observation>pic</observation>", obs, ctx); }) == ErrorCode::Malformed);
    const auto c = parse_trace(step + ob + "<answer>x</answer>", obs, ctx);
    CHECK(c.steps.size() == 1);
    CHECK(*c.answer == "x");
    // An observation that does not descend from the root fails chain validation.
    const auto stray = std::vector<ImagePtr>{reuse(small_root(), training_budget())};
    CHECK(stray[0]->id == obs[0]->id);
    const auto other = std::vector<ImagePtr>{make_original(noise(50, 50, 1))};
    CHECK(code_of([&] { parse_trace(step + ob, other, ctx); }) == ErrorCode::InvalidChain);
  }

  TEST_CASE("random chains round trip through the training body") {
    std::mt19937_64 rng(2024);
    const ImagePtr root = small_root();
    for (int i = 0; i < 60; ++i) {
      const ReasoningChain c = random_chain(rng, root, training_budget());
      const auto obs = c.observations();
      const ReasoningChain back = parse_trace(training_body(c), obs, {c.question, root, {}});
      CHECK(back == c);
      CHECK(chain_from_json(chain_to_json(c)) == c);
    }
  }

  TEST_CASE("fuzzed traces fail only with typed errors") {
    std::mt19937_64 rng(5);
    const ImagePtr root = small_root();
    const std::vector<std::string> pieces = {"<reasoning>", "</reasoning>", "<function>", "</function>",
                                             "<observation>", "</observation>", "<answer>", "</answer>",
                                             "<|image_pad|>", "text. ", "{\"name\":\"reuse\",\"params\":{}}", "<"};
    for (int i = 0; i < 2000; ++i) {
      std::string t;
      const int n = uniform_int(rng, 0, 12);
      for (int k = 0; k < n; ++k) t += pieces[rng() % pieces.size()];
      std::vector<ImagePtr> obs(static_cast<size_t>(uniform_int(rng, 0, 2)), reuse(root, training_budget()));
      try {
        parse_trace(t, obs, {"q", root, {}});
      } catch (const Error&) {
      }
      try {
        parse_turn(t);
      } catch (const Error&) {
      }
      const auto r = scan_stream(t, 0);
      CHECK(r.cursor <= t.size());
    }
  }
}
