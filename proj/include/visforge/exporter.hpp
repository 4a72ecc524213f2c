#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "visforge/pipeline.hpp"
#include "visforge/toolbox.hpp"
#include "visforge/trace.hpp"

namespace visforge {

enum class Modality { Text, Visual };

struct MaskedSegment {
  Span span;
  Modality modality = Modality::Text;
  int mask = 1;

  bool operator==(const MaskedSegment&) const = default;
};

enum class CoordinateConvention { Normalized, AbsolutePixels };
std::string_view to_string(CoordinateConvention c);
CoordinateConvention convention_from_string(std::string_view s);

// One consolidated single-turn sequence. `prompt` is the user message
// (root image placeholder + question), `body` the assistant message. Images
// follow placeholder order: the root first, then one per observation.
struct TrainingSequence {
  std::string sample_id;
  std::string source;
  std::string template_hash;
  std::string question;
  std::string prompt;
  std::string body;
  std::vector<ImagePtr> images;
  std::vector<MaskedSegment> prompt_segments;
  std::vector<MaskedSegment> segments;
  CoordinateConvention coordinates = CoordinateConvention::Normalized;
  // Budget-resized dimensions of the image each function block operated on,
  // in body order. Absolute coordinates are expressed against these.
  std::vector<Dims> frames;
};

/// bbox literals of every function block in body order (nullopt for tools without one).
std::vector<std::optional<std::array<double, 4>>> body_bboxes(std::string_view body);

/// Flattens an accepted sample. Throws IncompleteChain.
TrainingSequence consolidate(const VerifiedSample& sample);

/// Rewrites every bbox literal in the body. Absolute values use floor for the
/// near edges and ceil for the far edges. Throws UnresolvedImageDims.
TrainingSequence convert_coordinates(const TrainingSequence& seq, CoordinateConvention target);

/// Image placeholders are Visual/0, every other character Text/1.
std::vector<MaskedSegment> compute_mask(std::string_view text);
std::vector<MaskedSegment> compute_mask(const TrainingSequence& seq);

/// Throws SchemaError when segments fail to tile the text or a mask disagrees
/// with its modality or placeholder accounting is off.
void validate_masks(std::string_view text, std::span<const MaskedSegment> segments);
void validate(const TrainingSequence& seq);

/// -sum(mask * logprob). Throws LengthMismatch.
double masked_nll(std::span<const double> logprobs, std::span<const int> mask);

// Training-file record, format visforge-train/1. Image paths are supplied by
// the caller in `images` order.
nlohmann::json training_record(const TrainingSequence& seq, std::span<const std::string> image_paths);

/// Schema, tiling and mask checks on one training-file record. Throws SchemaError.
void validate_training_record(const nlohmann::json& record);

// ---------------------------------------------------------------------------
// Curation
// ---------------------------------------------------------------------------

struct SourceQuota {
  std::string source;
  double weight = 0.0;
  std::vector<std::string> exclusions;  // subtask tags never sampled from this source
};

struct Candidate {
  std::string id;
  std::string source;
  std::string subtask;
};

struct CurationManifest {
  std::uint64_t seed = 0;
  size_t total = 0;
  std::vector<SourceQuota> quotas;
  std::map<std::string, size_t> counts;  // per source
  std::vector<size_t> selected;          // candidate indices, ascending
};

/// Largest-remainder apportionment of `total` over `weights`; ties go to the
/// earlier entry. Throws ConfigError on negative weights or a zero sum.
std::vector<size_t> apportion(std::span<const double> weights, size_t total);

/// Per-source uniform draws under `seed`. Throws InsufficientCandidates when
/// any source holds fewer eligible candidates than its quota.
CurationManifest sample_corpus(std::span<const Candidate> candidates, std::span<const SourceQuota> quotas,
                               size_t total, std::uint64_t seed);

std::vector<SourceQuota> quotas_from_json(const nlohmann::json& j);
nlohmann::json manifest_to_json(const CurationManifest& m, std::span<const Candidate> candidates);

/// Uniform integer in [0, n) by rejection, identical on every platform.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n);

/// Engine seed for one source: leading 8 bytes of SHA-256 over "seed:source".
std::uint64_t source_seed(std::uint64_t seed, std::string_view source);

}  // namespace visforge
