#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "visforge/driver.hpp"
#include "visforge/exporter.hpp"
#include "visforge/pipeline.hpp"

namespace visforge {

struct ExportSettings {
  CoordinateConvention convention = CoordinateConvention::Normalized;
  std::optional<std::filesystem::path> quotas;
  std::optional<size_t> total;
  // Pre-built training records appended verbatim after validation.
  std::vector<std::filesystem::path> passthrough;
};

// Run configuration. The file is JSON; string values may reference
// environment variables as ${NAME} or ${NAME:-fallback}, and relative paths
// resolve against the file's directory.
struct AppConfig {
  nlohmann::json snapshot;  // as written, before interpolation, so secrets stay out of manifests
  std::filesystem::path base_dir;
  std::optional<GenConfig> generation;
  std::optional<DriverConfig> inference;
  Matcher matcher = Matcher::ContainsNormalized;
  ExportSettings export_settings;
  int workers = 4;
  std::uint64_t seed = 0;
};

/// Expands ${NAME} and ${NAME:-fallback} in every string. Throws ConfigError
/// for unset variables without a fallback.
nlohmann::json interpolate_env(const nlohmann::json& j);

AppConfig config_from_json(const nlohmann::json& raw, const std::filesystem::path& base_dir);
/// Throws ConfigError when the file is missing or invalid.
AppConfig load_config(const std::filesystem::path& path);

}  // namespace visforge
