#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "visforge/chain.hpp"
#include "visforge/image.hpp"

namespace visforge {

inline constexpr int kGrid = 28;
inline constexpr long kCell = static_cast<long>(kGrid) * kGrid;

struct PixelBudget {
  long min_pixels = 4 * kCell;
  long max_pixels = 1024 * kCell;
  int grid = kGrid;

  bool operator==(const PixelBudget&) const = default;
};

/// Throws ConfigError unless 0 < min <= max and grid == 28.
void validate(const PixelBudget& budget);

// The training budget (4..1024 cells) and the low/med/high inference presets.
PixelBudget training_budget();
PixelBudget budget_preset(std::string_view name);
/// Accepts low, med, high, train and custom:N (N = max cells of 28x28).
PixelBudget parse_budget(std::string_view spec);

enum class ToolMode { Train, Infer };

struct Dims {
  int width = 0;
  int height = 0;
  bool operator==(const Dims&) const = default;
};

/// Grid-aligned dimensions with min <= area <= max and aspect drift within one
/// grid cell. Throws Unsatisfiable when no multiple-of-28 pair qualifies.
Dims smart_resize(int width, int height, const PixelBudget& budget);

/// True if `out` meets the grid, budget and aspect-drift conditions for (w, h).
bool satisfies_budget(int width, int height, Dims out, const PixelBudget& budget);

struct ToolboxOptions {
  Interpolation kernel = Interpolation::Bicubic;
  double default_zoom_factor = 2.0;
};

/// Resamples an image to its smart_resize dimensions (a copy when unchanged).
Raster resize_to_budget(const Raster& image, const PixelBudget& budget, const ToolboxOptions& opts = {});

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const PixelRect&) const = default;
};

/// floor for near edges, ceil for far edges, clamped to the image.
PixelRect bbox_to_pixels(const BBox& box, int width, int height);

/// The crop rectangle used in Infer mode, after growing sub-grid crops to
/// 28x28 around their center within the image. Throws CropTooSmall.
PixelRect focus_crop_rect(const BBox& box, int width, int height);

/// Stroke width of the drawn box in Train mode.
int stroke_width(int width, int height);

/// Draws the box outline onto a copy of the raster.
Raster draw_bbox(const Raster& image, const BBox& box);

// Each tool returns a Derived image. focus_area in Train mode keeps the input
// dimensions; every other path ends with a budget resize.
ImagePtr focus_area(const ImagePtr& image, const BBox& box, ToolMode mode, const PixelBudget& budget,
                    const ToolboxOptions& opts = {});
ImagePtr zoom_in(const ImagePtr& image, double factor, const PixelBudget& budget, const ToolboxOptions& opts = {});
/// Re-emits the Original at the root of `image`'s lineage.
ImagePtr reuse(const ImagePtr& image, const PixelBudget& budget, const ToolboxOptions& opts = {});

/// Pre-resize dimensions for zoom_in after the 4x max_pixels cap.
Dims zoom_target(int width, int height, double factor, const PixelBudget& budget);

/// Dispatches a validated command. Train-mode focus_area draws on the
/// budget-resized input so the output satisfies the budget too.
ImagePtr apply_tool(const ImagePtr& image, const ToolCommand& cmd, ToolMode mode, const PixelBudget& budget,
                    const ToolboxOptions& opts = {});

}  // namespace visforge
