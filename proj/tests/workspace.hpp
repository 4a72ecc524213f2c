#pragma once

// A self-contained generate -> export -> infer workspace backed by replay fixtures.

#include <fstream>
#include <string>

#include "support.hpp"

namespace vftest {

struct Workspace {
  fs::path root;
  fs::path seeds;
  fs::path eval;
  fs::path config;
  int n = 0;
};

inline void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

inline std::string question_for(int i) { return "Question " + std::to_string(i) + ": what does the panel read?"; }

// Seeds listed in `rejects` get a verifier that denies every answer.
inline Workspace make_workspace(const std::string& name, int n, std::uint64_t seed = 0,
                                const std::vector<int>& rejects = {}) {
  Workspace w;
  w.root = fresh_dir(name);
  w.n = n;
  std::mt19937_64 rng(seed);
  nlohmann::json gen = nlohmann::json::array(), tool = nlohmann::json::array(), ans = nlohmann::json::array(),
                 inf = nlohmann::json::array();
  std::string seeds, eval;
  fs::create_directories(w.root / "inputs");
  for (int i = 0; i < n; ++i) {
    const std::string img = "inputs/img" + std::to_string(i) + ".png";
    save_png(gradient(uniform_int(rng, 120, 700), uniform_int(rng, 120, 500), static_cast<std::uint32_t>(i)),
             w.root / img);
    const std::string q = question_for(i);
    const std::string a = "panel " + std::to_string(i);
    const std::string src = i % 3 == 0 ? "charts" : "signs";
    seeds += nlohmann::json{{"question", q}, {"answer", a}, {"image", img}, {"source", src}, {"subtask", "ocr"}}.dump() +
             "\n";
    eval += nlohmann::json{{"id", "e" + std::to_string(i)}, {"question", q}, {"answer", a}, {"image", img}}.dump() + "\n";

    const BBox box = random_box(rng, 0.2);
    const std::string focus = "<reasoning>The panel is small. Focus on the panel.</reasoning>" +
                              fn(ToolCommand::focus_area(box, std::string("the panel")));
    const std::string zoom = "<reasoning>The text is faint. Zoom in on it.</reasoning>" + fn(ToolCommand::zoom_in(2.0));
    const std::string answer = "<reasoning>It reads " + a + ".</reasoning><answer>" + a + "</answer>";
    // The verifier's target sits inside the proposed box.
    const double cx = (box.x1 + box.x2) / 2, cy = (box.y1 + box.y2) / 2;
    const nlohmann::json target = {cx - 0.05, cy - 0.05, cx + 0.05, cy + 0.05};
    const bool reject = std::find(rejects.begin(), rejects.end(), i) != rejects.end();
    const std::string match = "Question " + std::to_string(i) + ":";
    gen.push_back({{"id", "g" + std::to_string(i)}, {"match", match},
                   {"responses", {focus, zoom, answer, focus, zoom, answer}}});
    tool.push_back({{"id", "t" + std::to_string(i)}, {"match", match},
                    {"responses", {target.dump(), "yes", target.dump(), "yes"}}});
    ans.push_back({{"id", "a" + std::to_string(i)}, {"match", match},
                   {"responses", reject ? nlohmann::json{"no", "no"} : nlohmann::json{"yes", "yes"}}});
    inf.push_back({{"id", "i" + std::to_string(i)}, {"match", match}, {"responses", {zoom, focus, answer}}});
  }
  auto fixture = [&](const std::string& file, const nlohmann::json& sc) {
    write_text(w.root / "fixtures" / file, nlohmann::json{{"format", "visforge-replay/1"}, {"scenarios", sc}}.dump(1));
  };
  fixture("generator.json", gen);
  fixture("tool_verifier.json", tool);
  fixture("answer_verifier.json", ans);
  fixture("inference.json", inf);
  w.seeds = w.root / "seeds.jsonl";
  w.eval = w.root / "eval.jsonl";
  write_text(w.seeds, seeds);
  write_text(w.eval, eval);
  const nlohmann::json cfg = {
      {"workers", 4},
      {"seed", 11},
      {"generation",
       {{"max_steps", 4},
        {"max_attempts", 2},
        {"budget", "train"},
        {"generator", {{"kind", "scripted"}, {"fixture", "fixtures/generator.json"}}},
        {"tool_verifier", {{"kind", "scripted"}, {"fixture", "fixtures/tool_verifier.json"}}},
        {"answer_verifier", {{"kind", "scripted"}, {"fixture", "fixtures/answer_verifier.json"}}}}},
      {"inference",
       {{"max_rounds", 4},
        {"budget", "low"},
        {"matcher", "contains"},
        {"backend", {{"kind", "scripted"}, {"fixture", "fixtures/inference.json"}}}}}};
  w.config = w.root / "config.json";
  write_text(w.config, cfg.dump(2));
  return w;
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace vftest
