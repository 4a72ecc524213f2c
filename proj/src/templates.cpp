#include "visforge/templates.hpp"

#include <fstream>
#include <sstream>

#include "builtin_templates.hpp"
#include "visforge/digest.hpp"

namespace visforge {

namespace {

std::string strip_trailing_newline(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

PromptTemplates PromptTemplates::builtin() {
  return {strip_trailing_newline(builtin::kGeneratorSystem), strip_trailing_newline(builtin::kVerifierSystem),
          strip_trailing_newline(builtin::kVerifyFocus),     strip_trailing_newline(builtin::kVerifySemantic),
          strip_trailing_newline(builtin::kVerifyAnswer),    strip_trailing_newline(builtin::kInferenceSystem),
          strip_trailing_newline(builtin::kInferenceContinue), strip_trailing_newline(builtin::kInferenceProbe)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates t = builtin();
  auto read = [&](const char* name, std::string& field) {
    std::ifstream in(dir / (std::string(name) + ".txt"));
    if (!in) return;
    std::ostringstream ss;
    ss << in.rdbuf();
    field = strip_trailing_newline(ss.str());
  };
  read("generator_system", t.generator_system);
  read("verifier_system", t.verifier_system);
  read("verify_focus", t.verify_focus);
  read("verify_semantic", t.verify_semantic);
  read("verify_answer", t.verify_answer);
  read("inference_system", t.inference_system);
  read("inference_continue", t.inference_continue);
  read("inference_probe", t.inference_probe);
  return t;
}

std::string PromptTemplates::hash() const {
  std::string all;
  for (const std::string* s : {&generator_system, &verifier_system, &verify_focus, &verify_semantic, &verify_answer,
                               &inference_system, &inference_continue, &inference_probe}) {
    all += *s;
    all.push_back('\0');
  }
  return sha256_hex(all).substr(0, 16);
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  size_t i = 0;
  while (i < tmpl.size()) {
    const size_t open = tmpl.find("{{", i);
    if (open == std::string_view::npos) break;
    const size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(i, open - i));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  out.append(tmpl.substr(i));
  return out;
}

}  // namespace visforge
