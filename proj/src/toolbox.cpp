#include "visforge/toolbox.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "visforge/error.hpp"

namespace visforge {

void validate(const PixelBudget& budget) {
  if (budget.grid != kGrid) throw Error(ErrorCode::ConfigError, "pixel budget grid must be 28");
  if (budget.min_pixels <= 0 || budget.min_pixels > budget.max_pixels) {
    throw Error(ErrorCode::ConfigError, "pixel budget needs 0 < min_pixels <= max_pixels");
  }
}

PixelBudget training_budget() { return {4 * kCell, 1024 * kCell, kGrid}; }

PixelBudget budget_preset(std::string_view name) {
  if (name == "low") return {4 * kCell, 256 * kCell, kGrid};
  if (name == "med") return {4 * kCell, 2048 * kCell, kGrid};
  if (name == "high") return {4 * kCell, 16384 * kCell, kGrid};
  if (name == "train") return training_budget();
  throw Error(ErrorCode::ConfigError, "unknown budget preset '" + std::string(name) + "'");
}

PixelBudget parse_budget(std::string_view spec) {
  constexpr std::string_view kCustom = "custom:";
  if (spec.substr(0, kCustom.size()) == kCustom) {
    const std::string digits(spec.substr(kCustom.size()));
    long cells = 0;
    try {
      size_t used = 0;
      cells = std::stol(digits, &used);
      if (used != digits.size()) cells = 0;
    } catch (const std::exception&) {
      cells = 0;
    }
    if (cells < 4) throw Error(ErrorCode::ConfigError, "custom budget needs an integer N >= 4 (cells of 28x28)");
    PixelBudget b{4 * kCell, cells * kCell, kGrid};
    validate(b);
    return b;
  }
  return budget_preset(spec);
}

// ---------------------------------------------------------------------------
// smart_resize
// ---------------------------------------------------------------------------

bool satisfies_budget(int width, int height, Dims out, const PixelBudget& budget) {
  if (out.width <= 0 || out.height <= 0 || out.width % budget.grid != 0 || out.height % budget.grid != 0) {
    return false;
  }
  const long area = static_cast<long>(out.width) * out.height;
  if (area < budget.min_pixels || area > budget.max_pixels) return false;
  // |w'/h' - w/h| <= grid * max(1/h', w'/h'^2), multiplied through by h'^2 * h.
  using wide = __int128;
  const wide lhs_num = static_cast<wide>(out.width) * height - static_cast<wide>(width) * out.height;
  const wide lhs = (lhs_num < 0 ? -lhs_num : lhs_num) * out.height;
  const wide rhs = static_cast<wide>(budget.grid) * std::max(out.height, out.width) * height;
  return lhs <= rhs;
}

namespace {

// Rounds like the common vision-language preprocessors: nearest grid multiple,
// then floor/ceil with a uniform scale when outside the budget.
Dims grid_round(int width, int height, const PixelBudget& budget) {
  const double g = budget.grid;
  const double eps = 1e-9;
  auto round_to = [&](double v) { return std::max(g, std::round(v / g) * g); };
  double hb = round_to(height);
  double wb = round_to(width);
  const double area = static_cast<double>(width) * height;
  if (hb * wb > static_cast<double>(budget.max_pixels)) {
    const double beta = std::sqrt(area / static_cast<double>(budget.max_pixels));
    hb = std::max(g, std::floor(height / beta / g + eps) * g);
    wb = std::max(g, std::floor(width / beta / g + eps) * g);
  } else if (hb * wb < static_cast<double>(budget.min_pixels)) {
    const double beta = std::sqrt(static_cast<double>(budget.min_pixels) / area);
    hb = std::ceil(height * beta / g - eps) * g;
    wb = std::ceil(width * beta / g - eps) * g;
  }
  return {static_cast<int>(wb), static_cast<int>(hb)};
}

// Exhaustive fallback over grid rows: for each height in cells the nearest
// aspect-preserving widths are the only candidates that can qualify.
std::optional<Dims> search_grid(int width, int height, const PixelBudget& budget) {
  const long lo = (budget.min_pixels + kCell - 1) / kCell;
  const long hi = budget.max_pixels / kCell;
  if (hi < 1) return std::nullopt;
  const double ratio = static_cast<double>(width) / height;
  const double target = std::clamp(static_cast<double>(width) * height / kCell, static_cast<double>(lo),
                                   static_cast<double>(hi));
  std::optional<Dims> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (long b = 1; b <= hi; ++b) {
    const long a_lo = std::max(1L, (lo + b - 1) / b);
    const long a_hi = hi / b;
    if (a_lo > a_hi) continue;
    const double ideal = ratio * b;
    for (long a : {static_cast<long>(std::floor(ideal)), static_cast<long>(std::ceil(ideal))}) {
      a = std::clamp(a, a_lo, a_hi);
      Dims d{static_cast<int>(a * kGrid), static_cast<int>(b * kGrid)};
      if (!satisfies_budget(width, height, d, budget)) continue;
      const double score = std::fabs(std::log(static_cast<double>(a * b) / target)) +
                           1e-6 * std::fabs(static_cast<double>(a) / b - ratio);
      if (score < best_score) {
        best_score = score;
        best = d;
      }
    }
  }
  return best;
}

}  // namespace

Dims smart_resize(int width, int height, const PixelBudget& budget) {
  validate(budget);
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidImage, "image dimensions must be positive");
  const Dims first = grid_round(width, height, budget);
  if (satisfies_budget(width, height, first, budget)) return first;
  if (auto found = search_grid(width, height, budget)) return *found;
  throw Error(ErrorCode::Unsatisfiable, "no multiple-of-28 size fits the budget for " + std::to_string(width) +
                                            "x" + std::to_string(height));
}

Raster resize_to_budget(const Raster& image, const PixelBudget& budget, const ToolboxOptions& opts) {
  const Dims d = smart_resize(image.width, image.height, budget);
  return resample(image, d.width, d.height, opts.kernel);
}

// ---------------------------------------------------------------------------
// Geometry helpers
// ---------------------------------------------------------------------------

PixelRect bbox_to_pixels(const BBox& box, int width, int height) {
  auto lo = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v * n)), 0, n); };
  auto hi = [](double v, int n) { return std::clamp(static_cast<int>(std::ceil(v * n)), 0, n); };
  return {lo(box.x1, width), lo(box.y1, height), hi(box.x2, width), hi(box.y2, height)};
}

PixelRect focus_crop_rect(const BBox& box, int width, int height) {
  PixelRect r = bbox_to_pixels(box, width, height);
  if (r.width() < 1 || r.height() < 1) throw Error(ErrorCode::CropTooSmall, "crop maps to less than one pixel");
  auto expand = [](int& lo, int& hi, int extent) {
    const int need = std::min(kGrid, extent);
    const int have = hi - lo;
    if (have >= need) return;
    lo = std::clamp(lo - (need - have) / 2, 0, extent - need);
    hi = lo + need;
  };
  expand(r.x0, r.x1, width);
  expand(r.y0, r.y1, height);
  return r;
}

int stroke_width(int width, int height) {
  return std::max(2, static_cast<int>(std::ceil(0.003 * std::min(width, height))));
}

Raster draw_bbox(const Raster& image, const BBox& box) {
  Raster out = image;
  const PixelRect r = bbox_to_pixels(box, image.width, image.height);
  const int s = stroke_width(image.width, image.height);
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const bool edge = x < r.x0 + s || x >= r.x1 - s || y < r.y0 + s || y >= r.y1 - s;
      if (!edge) continue;
      std::uint8_t* p = out.pixel(x, y);
      p[0] = 255;
      p[1] = 0;
      p[2] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

namespace {

const Raster& pixels_of(const ImagePtr& image) {
  if (!image) throw Error(ErrorCode::MissingImage, "no image given");
  if (!image->pixels) throw Error(ErrorCode::MissingImage, "image " + image->id + " has no pixel content loaded");
  return *image->pixels;
}

ImagePtr original_ptr(const ImagePtr& image) {
  ImagePtr cur = image;
  while (cur && !cur->is_original()) cur = cur->provenance.parent;
  if (!cur) throw Error(ErrorCode::InvalidChain, "image lineage does not end at an original");
  return cur;
}

}  // namespace

ImagePtr focus_area(const ImagePtr& image, const BBox& box, ToolMode mode, const PixelBudget& budget,
                    const ToolboxOptions& opts) {
  const Raster& src = pixels_of(image);
  if (!is_valid(box)) throw Error(ErrorCode::DegenerateBox, "focus_area bbox is not valid");
  if (mode == ToolMode::Train) return make_derived(draw_bbox(src, box), "focus_area", image);
  const PixelRect r = focus_crop_rect(box, src.width, src.height);
  return make_derived(resize_to_budget(crop(src, r.x0, r.y0, r.x1, r.y1), budget, opts), "focus_area", image);
}

Dims zoom_target(int width, int height, double factor, const PixelBudget& budget) {
  if (!std::isfinite(factor) || factor <= 1.0) throw Error(ErrorCode::BadFactor, "zoom factor must be > 1");
  long tw = std::lround(width * factor);
  long th = std::lround(height * factor);
  const double cap = 4.0 * static_cast<double>(budget.max_pixels);
  if (static_cast<double>(tw) * static_cast<double>(th) > cap) {
    const double f = std::sqrt(cap / (static_cast<double>(width) * height));
    tw = std::max(1L, static_cast<long>(std::floor(width * f)));
    th = std::max(1L, static_cast<long>(std::floor(height * f)));
  }
  return {static_cast<int>(tw), static_cast<int>(th)};
}

ImagePtr zoom_in(const ImagePtr& image, double factor, const PixelBudget& budget, const ToolboxOptions& opts) {
  const Raster& src = pixels_of(image);
  const Dims t = zoom_target(src.width, src.height, factor, budget);
  Raster zoomed = resample(src, t.width, t.height, opts.kernel);
  return make_derived(resize_to_budget(zoomed, budget, opts), "zoom_in", image);
}

ImagePtr reuse(const ImagePtr& image, const PixelBudget& budget, const ToolboxOptions& opts) {
  ImagePtr original = original_ptr(image);
  return make_derived(resize_to_budget(pixels_of(original), budget, opts), "reuse", original);
}

ImagePtr apply_tool(const ImagePtr& image, const ToolCommand& cmd, ToolMode mode, const PixelBudget& budget,
                    const ToolboxOptions& opts) {
  validate(budget);
  switch (cmd.name) {
    case ToolName::FocusArea: {
      validate(cmd);
      if (mode == ToolMode::Infer) return focus_area(image, *cmd.bbox, mode, budget, opts);
      const Raster base = resize_to_budget(pixels_of(image), budget, opts);
      return make_derived(draw_bbox(base, *cmd.bbox), "focus_area", image);
    }
    case ToolName::ZoomIn:
      validate(cmd);
      return zoom_in(image, cmd.factor.value_or(opts.default_zoom_factor), budget, opts);
    case ToolName::Reuse:
      validate(cmd);
      return reuse(image, budget, opts);
  }
  throw Error(ErrorCode::UnknownTool, "command names a tool outside the closed set");
}

}  // namespace visforge
