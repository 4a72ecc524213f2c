#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace visforge {

// Prompt texts for the generator, the verifiers and the inference loop. The
// built-in set is compiled from templates/*.txt; hash() identifies the set and
// is stamped into every generated sample.
struct PromptTemplates {
  std::string generator_system;
  std::string verifier_system;
  std::string verify_focus;
  std::string verify_semantic;
  std::string verify_answer;
  std::string inference_system;
  std::string inference_continue;
  std::string inference_probe;

  static PromptTemplates builtin();
  /// Loads <dir>/<name>.txt for every field; missing files keep the built-in text.
  static PromptTemplates load(const std::filesystem::path& dir);

  /// First 16 hex chars of SHA-256 over all templates in field order.
  std::string hash() const;
};

/// Replaces {{key}} occurrences; unknown keys are left as-is.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace visforge
