#include "visforge/exporter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "visforge/digest.hpp"
#include "visforge/error.hpp"

namespace visforge {

std::string_view to_string(CoordinateConvention c) {
  return c == CoordinateConvention::Normalized ? "normalized" : "absolute";
}

CoordinateConvention convention_from_string(std::string_view s) {
  if (s == "normalized") return CoordinateConvention::Normalized;
  if (s == "absolute" || s == "absolute-pixels") return CoordinateConvention::AbsolutePixels;
  throw Error(ErrorCode::ConfigError, "coordinate convention must be normalized or absolute, got '" + std::string(s) + "'");
}

namespace {

std::vector<const TraceSegment*> function_segments(const std::vector<TraceSegment>& segs) {
  std::vector<const TraceSegment*> out;
  for (const auto& s : segs) {
    if (s.kind == SegmentKind::Function) out.push_back(&s);
  }
  return out;
}

std::optional<std::array<double, 4>> bbox_literal(const std::string& raw) {
  const auto j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "function body is not a JSON object");
  if (!j.contains("params") || !j["params"].is_object() || !j["params"].contains("bbox")) return std::nullopt;
  const auto& b = j["params"]["bbox"];
  if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::SchemaError, "bbox must have four numbers");
  std::array<double, 4> out{};
  for (size_t i = 0; i < 4; ++i) {
    if (!b[i].is_number()) throw Error(ErrorCode::SchemaError, "bbox must have four numbers");
    out[i] = b[i].get<double>();
  }
  return out;
}

}  // namespace

std::vector<std::optional<std::array<double, 4>>> body_bboxes(std::string_view body) {
  std::vector<std::optional<std::array<double, 4>>> out;
  const auto segs = segment_trace(body);
  for (const auto* f : function_segments(segs)) out.push_back(bbox_literal(f->body));
  return out;
}

TrainingSequence consolidate(const VerifiedSample& sample) {
  const ReasoningChain& chain = sample.chain;
  if (!chain.root_image) throw Error(ErrorCode::IncompleteChain, "sample has no root image");
  TrainingSequence seq;
  seq.sample_id = sample.sample_id;
  seq.source = sample.source;
  seq.template_hash = sample.template_hash;
  seq.question = chain.question;
  seq.prompt = render_user_prompt(chain.question);
  seq.body = training_body(chain);  // throws IncompleteChain
  seq.images.push_back(chain.root_image);
  const Dims frame = smart_resize(chain.root_image->width, chain.root_image->height, sample.budget);
  for (const auto& step : chain.steps) {
    seq.images.push_back(step.observation);
    if (step.command) seq.frames.push_back(frame);
  }
  seq.prompt_segments = compute_mask(seq.prompt);
  seq.segments = compute_mask(seq.body);
  return seq;
}

TrainingSequence convert_coordinates(const TrainingSequence& seq, CoordinateConvention target) {
  if (seq.coordinates == target) return seq;
  const auto segs = segment_trace(seq.body);
  const auto funcs = function_segments(segs);
  if (funcs.size() != seq.frames.size()) {
    throw Error(ErrorCode::UnresolvedImageDims, "sequence " + seq.sample_id + " has " + std::to_string(funcs.size()) +
                                                    " function blocks but " + std::to_string(seq.frames.size()) +
                                                    " frames");
  }
  std::string body;
  size_t cursor = 0;
  for (size_t i = 0; i < funcs.size(); ++i) {
    const TraceSegment& f = *funcs[i];
    const Dims frame = seq.frames[i];
    auto j = nlohmann::json::parse(f.body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ParseError, "function body is not JSON");
    if (const auto box = bbox_literal(f.body)) {
      if (frame.width < 1 || frame.height < 1) {
        throw Error(ErrorCode::UnresolvedImageDims, "no resized dimensions for function block " + std::to_string(i));
      }
      const double w = frame.width;
      const double h = frame.height;
      const auto& b = *box;
      if (target == CoordinateConvention::AbsolutePixels) {
        constexpr double eps = 1e-9;
        j["params"]["bbox"] = {static_cast<long>(std::floor(b[0] * w + eps)), static_cast<long>(std::floor(b[1] * h + eps)),
                               static_cast<long>(std::ceil(b[2] * w - eps)), static_cast<long>(std::ceil(b[3] * h - eps))};
      } else {
        j["params"]["bbox"] = {b[0] / w, b[1] / h, b[2] / w, b[3] / h};
      }
    }
    body.append(seq.body, cursor, f.span.begin - cursor);
    body += "<function>" + j.dump() + "</function>";
    cursor = f.span.end;
  }
  body.append(seq.body, cursor);

  TrainingSequence out = seq;
  out.body = std::move(body);
  out.coordinates = target;
  out.segments = compute_mask(out.body);
  return out;
}

std::vector<MaskedSegment> compute_mask(std::string_view text) {
  std::vector<MaskedSegment> out;
  size_t cursor = 0;
  while (cursor < text.size()) {
    const size_t p = text.find(kImagePad, cursor);
    const size_t end = p == std::string_view::npos ? text.size() : p;
    if (end > cursor) out.push_back({{cursor, end}, Modality::Text, 1});
    if (p == std::string_view::npos) break;
    out.push_back({{p, p + kImagePad.size()}, Modality::Visual, 0});
    cursor = p + kImagePad.size();
  }
  return out;
}

std::vector<MaskedSegment> compute_mask(const TrainingSequence& seq) { return compute_mask(seq.body); }

void validate_masks(std::string_view text, std::span<const MaskedSegment> segments) {
  size_t cursor = 0;
  size_t visual_chars = 0;
  for (const auto& s : segments) {
    if (s.span.begin != cursor || s.span.end <= s.span.begin || s.span.end > text.size()) {
      throw Error(ErrorCode::SchemaError, "segments do not tile the text at offset " + std::to_string(cursor));
    }
    const bool visual = s.modality == Modality::Visual;
    if (s.mask != (visual ? 0 : 1)) throw Error(ErrorCode::SchemaError, "mask disagrees with modality");
    const std::string_view piece = text.substr(s.span.begin, s.span.size());
    if (visual) {
      if (piece != kImagePad) throw Error(ErrorCode::SchemaError, "visual segment is not an image placeholder");
      visual_chars += piece.size();
    } else if (piece.find(kImagePad) != std::string_view::npos) {
      throw Error(ErrorCode::SchemaError, "text segment contains an image placeholder");
    }
    cursor = s.span.end;
  }
  if (cursor != text.size()) throw Error(ErrorCode::SchemaError, "segments stop short of the end of the text");
  size_t pads = 0;
  for (size_t p = text.find(kImagePad); p != std::string_view::npos; p = text.find(kImagePad, p + 1)) ++pads;
  if (visual_chars != pads * kImagePad.size()) throw Error(ErrorCode::SchemaError, "masked span length mismatch");
}

void validate(const TrainingSequence& seq) {
  validate_masks(seq.prompt, seq.prompt_segments);
  validate_masks(seq.body, seq.segments);
  size_t pads = 0;
  for (const auto* t : {&seq.prompt, &seq.body}) {
    for (size_t p = t->find(kImagePad); p != std::string::npos; p = t->find(kImagePad, p + 1)) ++pads;
  }
  if (pads != seq.images.size()) {
    throw Error(ErrorCode::SchemaError, std::to_string(pads) + " placeholders for " +
                                            std::to_string(seq.images.size()) + " images");
  }
}

double masked_nll(std::span<const double> logprobs, std::span<const int> mask) {
  if (logprobs.size() != mask.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(logprobs.size()) + " logprobs vs " +
                                               std::to_string(mask.size()) + " mask entries");
  }
  double sum = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) sum -= logprobs[i];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

namespace {

nlohmann::json segments_to_json(std::span<const MaskedSegment> segs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : segs) {
    out.push_back({{"begin", s.span.begin},
                   {"end", s.span.end},
                   {"modality", s.modality == Modality::Text ? "text" : "visual"},
                   {"mask", s.mask}});
  }
  return out;
}

std::vector<MaskedSegment> segments_from_json(const nlohmann::json& j) {
  std::vector<MaskedSegment> out;
  for (const auto& s : j) {
    const std::string m = s.at("modality").get<std::string>();
    if (m != "text" && m != "visual") throw Error(ErrorCode::SchemaError, "unknown modality '" + m + "'");
    out.push_back({{s.at("begin").get<size_t>(), s.at("end").get<size_t>()},
                   m == "text" ? Modality::Text : Modality::Visual,
                   s.at("mask").get<int>()});
  }
  return out;
}

}  // namespace

nlohmann::json training_record(const TrainingSequence& seq, std::span<const std::string> image_paths) {
  if (image_paths.size() != seq.images.size()) {
    throw Error(ErrorCode::ArityMismatch, "image path count differs from image count");
  }
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : seq.frames) frames.push_back({f.width, f.height});
  return {{"format", "visforge-train/1"},
          {"sample_id", seq.sample_id},
          {"source", seq.source},
          {"template_hash", seq.template_hash},
          {"coordinates", to_string(seq.coordinates)},
          {"messages",
           {{{"role", "user"}, {"content", seq.prompt}}, {{"role", "assistant"}, {"content", seq.body}}}},
          {"images", image_paths},
          {"prompt_segments", segments_to_json(seq.prompt_segments)},
          {"segments", segments_to_json(seq.segments)},
          {"frames", frames}};
}

void validate_training_record(const nlohmann::json& r) {
  try {
    if (r.at("format").get<std::string>() != "visforge-train/1") {
      throw Error(ErrorCode::SchemaError, "format is not visforge-train/1");
    }
    const auto& msgs = r.at("messages");
    if (msgs.size() != 2 || msgs[0].at("role") != "user" || msgs[1].at("role") != "assistant") {
      throw Error(ErrorCode::SchemaError, "messages must be one user and one assistant turn");
    }
    TrainingSequence seq;
    seq.prompt = msgs[0].at("content").get<std::string>();
    seq.body = msgs[1].at("content").get<std::string>();
    seq.prompt_segments = segments_from_json(r.at("prompt_segments"));
    seq.segments = segments_from_json(r.at("segments"));
    seq.images.resize(r.at("images").size());
    validate(seq);
    const CoordinateConvention conv = convention_from_string(r.at("coordinates").get<std::string>());
    const auto boxes = body_bboxes(seq.body);
    if (boxes.size() != r.at("frames").size()) throw Error(ErrorCode::SchemaError, "frame count differs from function count");
    const auto raw = segment_trace(seq.body);
    for (const auto* f : function_segments(raw)) {
      const auto j = nlohmann::json::parse(f->body);
      if (!j.at("params").contains("bbox")) continue;
      for (const auto& v : j["params"]["bbox"]) {
        if (conv == CoordinateConvention::AbsolutePixels && !v.is_number_integer()) {
          throw Error(ErrorCode::SchemaError, "absolute record holds a non-integer bbox value");
        }
        if (conv == CoordinateConvention::Normalized && (v.get<double>() < 0.0 || v.get<double>() > 1.0)) {
          throw Error(ErrorCode::SchemaError, "normalized record holds a bbox value outside [0,1]");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("training record: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    throw Error(ErrorCode::SchemaError, std::string("training record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Curation
// ---------------------------------------------------------------------------

std::vector<size_t> apportion(std::span<const double> weights, size_t total) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::ConfigError, "quota weights must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::ConfigError, "quota weights must sum to a positive value");

  // remainder_i = total*w_i mod sum shares the denominator `sum`, so comparing
  // remainders compares fractional parts; exact for integer weights.
  std::vector<size_t> out(weights.size());
  std::vector<double> rem(weights.size());
  size_t assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double scaled = static_cast<double>(total) * weights[i];
    rem[i] = std::fmod(scaled, sum);
    out[i] = static_cast<size_t>(std::llround((scaled - rem[i]) / sum));
    assigned += out[i];
  }
  std::vector<size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return rem[a] > rem[b]; });
  for (size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::ConfigError, "bounded_draw needs n > 0");
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  while (true) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

std::uint64_t source_seed(std::uint64_t seed, std::string_view source) {
  const std::string hex = sha256_hex(std::to_string(seed) + ":" + std::string(source));
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

CurationManifest sample_corpus(std::span<const Candidate> candidates, std::span<const SourceQuota> quotas,
                               size_t total, std::uint64_t seed) {
  std::set<std::string> seen;
  std::vector<double> weights;
  for (const auto& q : quotas) {
    if (!seen.insert(q.source).second) throw Error(ErrorCode::ConfigError, "duplicate quota for source " + q.source);
    weights.push_back(q.weight);
  }

  std::vector<std::vector<size_t>> eligible(quotas.size());
  size_t eligible_total = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    for (size_t q = 0; q < quotas.size(); ++q) {
      if (candidates[i].source != quotas[q].source) continue;
      const auto& ex = quotas[q].exclusions;
      if (std::find(ex.begin(), ex.end(), candidates[i].subtask) == ex.end()) {
        eligible[q].push_back(i);
        ++eligible_total;
      }
      break;
    }
  }
  if (total > eligible_total) {
    throw Error(ErrorCode::InsufficientCandidates, "requested " + std::to_string(total) + " records but only " +
                                                       std::to_string(eligible_total) + " are eligible");
  }

  CurationManifest m;
  m.seed = seed;
  m.total = total;
  m.quotas.assign(quotas.begin(), quotas.end());
  const auto counts = apportion(weights, total);
  for (size_t q = 0; q < quotas.size(); ++q) {
    auto& pool = eligible[q];
    const size_t k = counts[q];
    if (k > pool.size()) {
      throw Error(ErrorCode::InsufficientCandidates, "source " + quotas[q].source + " needs " + std::to_string(k) +
                                                         " records but has " + std::to_string(pool.size()));
    }
    std::mt19937_64 rng(source_seed(seed, quotas[q].source));
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(bounded_draw(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    m.selected.insert(m.selected.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    m.counts[quotas[q].source] = k;
  }
  std::sort(m.selected.begin(), m.selected.end());
  return m;
}

std::vector<SourceQuota> quotas_from_json(const nlohmann::json& j) {
  std::vector<SourceQuota> out;
  try {
    const auto& list = j.is_object() ? j.at("quotas") : j;
    for (const auto& q : list) {
      out.push_back({q.at("source").get<std::string>(), q.at("weight").get<double>(),
                     q.value("exclusions", std::vector<std::string>{})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("quota file: ") + e.what());
  }
  return out;
}

nlohmann::json manifest_to_json(const CurationManifest& m, std::span<const Candidate> candidates) {
  nlohmann::json quotas = nlohmann::json::array();
  for (const auto& q : m.quotas) {
    quotas.push_back({{"source", q.source}, {"weight", q.weight}, {"exclusions", q.exclusions}});
  }
  nlohmann::json selected = nlohmann::json::array();
  for (size_t i : m.selected) {
    selected.push_back({{"id", candidates[i].id}, {"source", candidates[i].source}, {"subtask", candidates[i].subtask}});
  }
  return {{"format", "visforge-curation/1"},
          {"seed", m.seed},
          {"total", m.total},
          {"quotas", quotas},
          {"counts", m.counts},
          {"selected", selected}};
}

}  // namespace visforge
