#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "visforge/error.hpp"
#include "visforge/pipeline.hpp"

namespace visforge::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kBackendFailure = 3,
  kSchemaViolation = 4,
  kInterrupted = 130,
};

/// Maps an error to the exit code of the command that hit it.
int exit_code_for(ErrorCode code);

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  size_t input_records = 0;
  std::map<std::string, size_t> counters;
  bool interrupted = false;

  nlohmann::json to_json() const;
};

struct GenerateArgs {
  std::filesystem::path seeds;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> budget;
};

struct ExportArgs {
  std::filesystem::path samples;  // a generate output directory
  std::filesystem::path out;      // output directory
  std::optional<std::filesystem::path> config;
  std::optional<std::string> convention;
  std::optional<std::filesystem::path> quotas;
  std::optional<size_t> total;
  std::optional<std::uint64_t> seed;
};

struct InferArgs {
  std::filesystem::path eval;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<int> workers;
  std::optional<std::string> budget;
  std::optional<std::uint64_t> seed;
};

struct BenchArgs {
  std::filesystem::path eval;
  std::filesystem::path config;
  std::filesystem::path out;
  std::vector<std::string> presets{"low", "med", "high"};
  std::optional<int> workers;
};

struct VerifyArgs {
  std::filesystem::path input;  // accepted.jsonl or a training file
  std::optional<std::filesystem::path> images;
  std::optional<std::filesystem::path> config;
};

struct ReportArgs {
  std::filesystem::path trace;  // an inference trace or a sample record file
  std::filesystem::path out;
  std::optional<std::filesystem::path> images;
};

struct ToolArgs {
  std::filesystem::path image;
  std::string command;  // function body JSON
  std::string mode = "infer";
  std::string budget = "train";
  std::filesystem::path out;
};

int cmd_generate(const GenerateArgs& args, std::ostream& log);
int cmd_export(const ExportArgs& args, std::ostream& log);
int cmd_infer(const InferArgs& args, std::ostream& log);
int cmd_bench_resolution(const BenchArgs& args, std::ostream& log);
int cmd_verify(const VerifyArgs& args, std::ostream& log);
int cmd_report(const ReportArgs& args, std::ostream& log);
int cmd_tool(const ToolArgs& args, std::ostream& log);

/// Parses argv and dispatches. Installs a SIGINT handler that stops dispatch
/// of new work and flushes the run manifest with partial counters.
int main(int argc, char** argv);

/// Raised by SIGINT; commands poll it between records.
std::atomic<bool>& interrupt_flag();

// Input record files.
std::vector<SeedTriplet> load_seeds(const std::filesystem::path& path);

struct EvalItem {
  std::string id;
  std::string question;
  ImagePtr image;
  std::string reference;
};
std::vector<EvalItem> load_eval(const std::filesystem::path& path);

}  // namespace visforge::cli
