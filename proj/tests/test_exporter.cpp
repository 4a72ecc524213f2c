#include <doctest.h>

#include <set>

#include "support.hpp"
#include "visforge/error.hpp"
#include "visforge/exporter.hpp"

using namespace visforge;
using namespace vftest;

namespace {

VerifiedSample sample_with(const ImagePtr& root, std::vector<ToolCommand> cmds) {
  VerifiedSample s;
  s.sample_id = "s1";
  s.source = "src";
  s.template_hash = "h";
  s.budget = training_budget();
  s.chain.question = "Where is the cat?";
  s.chain.root_image = root;
  for (auto& c : cmds) {
    ReasoningStep st;
    st.content = {"Something is there.", "Focus on it."};
    st.command = c;
    st.observation = apply_tool(root, c, ToolMode::Train, s.budget);
    s.chain.steps.push_back(std::move(st));
  }
  s.chain.final_reasoning = "Found it.";
  s.chain.answer = "left";
  return s;
}

std::vector<Candidate> pool(const std::string& source, int n, const std::string& subtask = "") {
  std::vector<Candidate> out;
  for (int i = 0; i < n; ++i) out.push_back({source + std::to_string(i), source, subtask});
  return out;
}

}  // namespace

TEST_SUITE("exporter") {
  TEST_CASE("consolidated sequence") {
    const ImagePtr root = make_original(gradient(1000, 1000));
    const auto s = sample_with(root, {ToolCommand::focus_area(make_bbox(0.5, 0.5, 1, 1)), ToolCommand::zoom_in(2.0)});
    const TrainingSequence seq = consolidate(s);
    CHECK(seq.prompt == "<|image_pad|>\nWhere is the cat?");
    CHECK(seq.body == training_body(s.chain));
    REQUIRE(seq.images.size() == 3);
    CHECK(seq.images[0] == root);
    CHECK(seq.frames == std::vector<Dims>{{896, 896}, {896, 896}});
    CHECK_NOTHROW(validate(seq));
    const auto boxes = body_bboxes(seq.body);
    REQUIRE(boxes.size() == 2);
    CHECK(*boxes[0] == std::array<double, 4>{0.5, 0.5, 1, 1});
    CHECK_FALSE(boxes[1]);
  }

  TEST_CASE("absolute coordinates on the resized frame") {
    const ImagePtr root = make_original(gradient(1000, 1000));
    const auto seq = consolidate(sample_with(root, {ToolCommand::focus_area(make_bbox(0.5, 0.5, 1, 1))}));
    const auto abs = convert_coordinates(seq, CoordinateConvention::AbsolutePixels);
    CHECK(abs.body.find("[448,448,896,896]") != std::string::npos);
    CHECK(abs.coordinates == CoordinateConvention::AbsolutePixels);
    CHECK_NOTHROW(validate(abs));
    const auto back = convert_coordinates(abs, CoordinateConvention::Normalized);
    CHECK(*body_bboxes(back.body)[0] == std::array<double, 4>{0.5, 0.5, 1, 1});
    // Outward rounding never collapses a box.
    const auto tiny = consolidate(sample_with(root, {ToolCommand::focus_area(make_bbox(0.3001, 0.3001, 0.3002, 0.3002))}));
    const auto t = *body_bboxes(convert_coordinates(tiny, CoordinateConvention::AbsolutePixels).body)[0];
    CHECK(t[2] > t[0]);
    CHECK(t[3] > t[1]);
    auto broken = seq;
    broken.frames.clear();
    CHECK_THROWS_AS(convert_coordinates(broken, CoordinateConvention::AbsolutePixels), Error);
  }

  TEST_CASE("masks") {
    const auto m = compute_mask("ab<|image_pad|>c<|image_pad|>");
    REQUIRE(m.size() == 4);
    CHECK(m[0] == MaskedSegment{{0, 2}, Modality::Text, 1});
    CHECK(m[1] == MaskedSegment{{2, 15}, Modality::Visual, 0});
    CHECK(m[2] == MaskedSegment{{15, 16}, Modality::Text, 1});
    CHECK(m[3].modality == Modality::Visual);
    CHECK(compute_mask("").empty());
    CHECK_NOTHROW(validate_masks("ab<|image_pad|>c<|image_pad|>", m));
    auto gap = m;
    gap[2].span.begin = 16;
    CHECK_THROWS_AS(validate_masks("ab<|image_pad|>c<|image_pad|>", gap), Error);
    auto wrong = m;
    wrong[1].mask = 1;
    CHECK_THROWS_AS(validate_masks("ab<|image_pad|>c<|image_pad|>", wrong), Error);
    auto hidden = m;
    hidden[0].modality = Modality::Visual;
    hidden[0].mask = 0;
    CHECK_THROWS_AS(validate_masks("ab<|image_pad|>c<|image_pad|>", hidden), Error);
  }

  TEST_CASE("masked negative log likelihood") {
    const std::vector<double> lp{-0.5, -1.0};
    const std::vector<int> mask{1, 0};
    CHECK(masked_nll(lp, mask) == doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<int> short_mask{1};
    CHECK_THROWS_AS(masked_nll(lp, short_mask), Error);
  }

  TEST_CASE("training records validate") {
    const ImagePtr root = make_original(gradient(400, 300));
    const auto seq = consolidate(sample_with(root, {ToolCommand::focus_area(make_bbox(0.1, 0.2, 0.3, 0.4))}));
    const std::vector<std::string> paths{"images/a.png", "images/b.png"};
    auto rec = training_record(seq, paths);
    CHECK(rec["format"] == "visforge-train/1");
    CHECK(rec["messages"][1]["content"] == seq.body);
    CHECK_NOTHROW(validate_training_record(rec));
    const auto abs = training_record(convert_coordinates(seq, CoordinateConvention::AbsolutePixels), paths);
    CHECK_NOTHROW(validate_training_record(abs));

    auto bad = rec;
    bad["images"].erase(1);
    CHECK_THROWS_AS(validate_training_record(bad), Error);
    bad = rec;
    bad["segments"][0]["mask"] = 0;
    CHECK_THROWS_AS(validate_training_record(bad), Error);
    bad = rec;
    bad["coordinates"] = "absolute";
    CHECK_THROWS_AS(validate_training_record(bad), Error);
    CHECK_THROWS_AS(validate_training_record(nlohmann::json::array()), Error);
    CHECK_THROWS_AS(training_record(seq, std::vector<std::string>{"one"}), Error);
  }

  TEST_CASE("apportionment") {
    CHECK(apportion(std::vector<double>{2, 1}, 3) == std::vector<size_t>{2, 1});
    CHECK(apportion(std::vector<double>{1, 1, 1}, 10) == std::vector<size_t>{4, 3, 3});
    CHECK(apportion(std::vector<double>{0.5, 0.3, 0.2}, 7) == std::vector<size_t>{4, 2, 1});
    CHECK(apportion(std::vector<double>{1, 0}, 5) == std::vector<size_t>{5, 0});
    CHECK_THROWS_AS(apportion(std::vector<double>{0, 0}, 5), Error);
    CHECK_THROWS_AS(apportion(std::vector<double>{1, -1}, 5), Error);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> w(static_cast<size_t>(uniform_int(rng, 1, 6)));
      for (auto& x : w) x = uniform(rng, 0.01, 5);
      const size_t total = static_cast<size_t>(uniform_int(rng, 0, 500));
      const auto a = apportion(w, total);
      size_t sum = 0;
      double wsum = 0;
      for (double x : w) wsum += x;
      for (size_t k = 0; k < a.size(); ++k) {
        sum += a[k];
        // Each share is the floor or the ceiling of its exact quota.
        const double exact = w[k] / wsum * static_cast<double>(total);
        CHECK(static_cast<double>(a[k]) >= std::floor(exact - 1e-9));
        CHECK(static_cast<double>(a[k]) <= std::ceil(exact + 1e-9));
      }
      CHECK(sum == total);
    }
  }

  TEST_CASE("corpus sampling") {
    std::vector<Candidate> cands = pool("A", 10);
    for (auto& c : pool("B", 10)) cands.push_back(c);
    const std::vector<SourceQuota> q{{"A", 2, {}}, {"B", 1, {}}};
    const auto m = sample_corpus(cands, q, 3, 7);
    CHECK(m.counts.at("A") == 2);
    CHECK(m.counts.at("B") == 1);
    CHECK(m.selected.size() == 3);
    CHECK(std::is_sorted(m.selected.begin(), m.selected.end()));
    CHECK(sample_corpus(cands, q, 3, 7).selected == m.selected);
    const auto j = manifest_to_json(m, cands);
    CHECK(j["format"] == "visforge-curation/1");

    std::vector<Candidate> tagged = pool("A", 5, "counting");
    for (auto& c : pool("A", 3, "ocr")) tagged.push_back(c);
    const std::vector<SourceQuota> ex{{"A", 1, {"counting"}}};
    const auto only = sample_corpus(tagged, ex, 3, 1);
    for (size_t i : only.selected) CHECK(tagged[i].subtask == "ocr");
    try {
      sample_corpus(tagged, ex, 4, 1);
      FAIL("expected shortage");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientCandidates);
    }
    const std::vector<SourceQuota> dup{{"A", 1, {}}, {"A", 1, {}}};
    CHECK_THROWS_AS(sample_corpus(tagged, dup, 1, 1), Error);
  }

  TEST_CASE("quotas from json") {
    const auto q = quotas_from_json(nlohmann::json::parse(
        R"({"quotas":[{"source":"A","weight":2,"exclusions":["x"]},{"source":"B","weight":1}]})"));
    REQUIRE(q.size() == 2);
    CHECK(q[0].exclusions == std::vector<std::string>{"x"});
    CHECK(quotas_from_json(nlohmann::json::parse(R"([{"source":"A","weight":1}])")).size() == 1);
    CHECK_THROWS_AS(quotas_from_json(nlohmann::json::parse(R"({"quotas":[{"weight":1}]})")), Error);
  }

  TEST_CASE("bounded draws are uniform") {
    std::mt19937_64 rng(99);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) ++hist[bounded_draw(rng, 7)];
    double chi = 0;
    for (int h : hist) chi += (h - 10000.0) * (h - 10000.0) / 10000.0;
    CHECK(chi < 22.46);  // 6 dof, p = 0.001
    CHECK(source_seed(1, "A") != source_seed(1, "B"));
    CHECK(source_seed(1, "A") != source_seed(2, "A"));
  }
}
