#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "visforge/chain.hpp"
#include "visforge/gateway.hpp"
#include "visforge/image.hpp"
#include "visforge/toolbox.hpp"
#include "visforge/trace.hpp"

namespace vftest {

namespace fs = std::filesystem;
using namespace visforge;

inline fs::path golden_dir() { return VISFORGE_GOLDEN_DIR; }

inline fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path(VISFORGE_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline nlohmann::json golden_meta() {
  std::ifstream in(golden_dir() / "golden.json");
  return nlohmann::json::parse(in);
}

inline Raster golden(const std::string& name) { return load_image(golden_dir() / (name + ".png")); }

// Smooth gradient with a per-seed tint; cheap and compresses well.
inline Raster gradient(int w, int h, std::uint32_t seed = 0) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t* p = r.pixel(x, y);
      p[0] = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
      p[1] = static_cast<std::uint8_t>((y * 255) / std::max(1, h - 1));
      p[2] = static_cast<std::uint8_t>((seed * 37 + static_cast<std::uint32_t>(x / 7 + y / 5) * 13) & 0xff);
    }
  }
  return r;
}

inline Raster noise(int w, int h, std::uint64_t seed) {
  Raster r(w, h);
  std::mt19937_64 rng(seed);
  for (auto& b : r.rgb) b = static_cast<std::uint8_t>(rng() & 0xff);
  return r;
}

inline Raster solid(int w, int h, std::uint8_t r0, std::uint8_t g0, std::uint8_t b0) {
  Raster r(w, h);
  for (size_t i = 0; i < r.rgb.size(); i += 3) {
    r.rgb[i] = r0;
    r.rgb[i + 1] = g0;
    r.rgb[i + 2] = b0;
  }
  return r;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline BBox random_box(std::mt19937_64& rng, double min_side = 0.01) {
  while (true) {
    double a = uniform(rng, 0, 1), b = uniform(rng, 0, 1), c = uniform(rng, 0, 1), d = uniform(rng, 0, 1);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (b - a >= min_side && d - c >= min_side) return make_bbox(a, c, b, d);
  }
}

// Words that never form tool-intent phrases or reserved tokens.
inline std::string random_sentence(std::mt19937_64& rng) {
  static const std::vector<std::string> words = {
      "the", "sign", "left", "shows", "a", "number", "near", "red", "car", "label", "top", "corner",
      "text", "reads", "clearly", "small", "blue", "panel", "value", "is", "seven", "chart", "line", "rises"};
  std::string s;
  const int n = uniform_int(rng, 3, 9);
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += words[rng() % words.size()];
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

inline std::string random_plan(std::mt19937_64& rng, ToolName tool) {
  switch (tool) {
    case ToolName::FocusArea: return "I will focus on the " + std::string(rng() % 2 ? "sign" : "panel") + " region.";
    case ToolName::ZoomIn: return "Zoom in to read the small text.";
    case ToolName::Reuse: return "Look again at the original image.";
  }
  return "";
}

inline ToolCommand random_command(std::mt19937_64& rng) {
  switch (rng() % 3) {
    case 0: {
      std::optional<std::string> label;
      if (rng() % 2) label = "the sign";
      return ToolCommand::focus_area(random_box(rng, 0.05), label);
    }
    case 1:
      if (rng() % 3 == 0) return ToolCommand::zoom_in();
      return ToolCommand::zoom_in(std::round(uniform(rng, 1.1, 3.0) * 100.0) / 100.0);
    default:
      return ToolCommand::reuse();
  }
}

// A valid, complete chain whose text survives serialization unchanged.
inline ReasoningChain random_chain(std::mt19937_64& rng, const ImagePtr& root, const PixelBudget& budget,
                                   ToolMode mode = ToolMode::Train, int max_steps = 4) {
  ReasoningChain c;
  c.question = "Q" + std::to_string(rng() % 100000) + ": " + random_sentence(rng);
  c.root_image = root;
  const int steps = uniform_int(rng, 0, max_steps);
  for (int i = 0; i < steps; ++i) {
    ReasoningStep s;
    s.command = random_command(rng);
    const int sentences = uniform_int(rng, 1, 3);
    for (int k = 0; k < sentences; ++k) s.content.atomic_step += (k ? " " : "") + random_sentence(rng);
    if (rng() % 4 != 0) s.content.visual_plan = random_plan(rng, s.command->name);
    s.observation = apply_tool(root, *s.command, mode, budget);
    c.steps.push_back(std::move(s));
  }
  if (rng() % 3 != 0) c.final_reasoning = random_sentence(rng);
  c.answer = random_sentence(rng);
  return c;
}

inline std::shared_ptr<ScriptedBackend> scripted(const nlohmann::json& scenarios) {
  return ScriptedBackend::from_json({{"format", "visforge-replay/1"}, {"scenarios", scenarios}});
}

inline std::string fn(const ToolCommand& cmd) { return "<function>" + render_command(cmd) + "</function>"; }

}  // namespace vftest
