#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace visforge {

// Packed 8-bit RGB pixels, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Raster() = default;
  Raster(int w, int h);

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<size_t>(y) * width + x) * 3;
  }

  bool operator==(const Raster&) const = default;
};

enum class Interpolation { Bicubic, Bilinear };

/// Separable convolution resampling; the kernel widens when downscaling so that
/// shrinking averages instead of aliasing. Identity sizes return a copy.
Raster resample(const Raster& src, int width, int height, Interpolation kernel = Interpolation::Bicubic);

/// Copies the half-open pixel rectangle [x0,x1) x [y0,y1).
Raster crop(const Raster& src, int x0, int y0, int x1, int y1);

// Codecs. PNG output is deterministic for identical rasters.
std::vector<std::uint8_t> encode_png(const Raster& r);
Raster decode_png(std::span<const std::uint8_t> bytes);
Raster decode_jpeg(std::span<const std::uint8_t> bytes);
/// Sniffs the container from the magic bytes.
Raster decode_image(std::span<const std::uint8_t> bytes);
Raster load_image(const std::filesystem::path& path);
void save_png(const Raster& r, const std::filesystem::path& path);

/// Content digest over dimensions and pixels ("sha256:<hex>").
std::string raster_digest(const Raster& r);

struct ImageState;
using ImagePtr = std::shared_ptr<const ImageState>;

struct Provenance {
  enum class Kind { Original, Derived };
  Kind kind = Kind::Original;
  std::string tool;  // Derived only
  ImagePtr parent;   // Derived only; parents are created first so the chain cannot cycle

  bool is_original() const { return kind == Kind::Original; }
};

// An immutable image handle: identity, dimensions, content reference, lineage.
// `pixels` may be null for states rebuilt from interchange records before the
// content has been loaded from a store.
struct ImageState {
  std::string id;
  int width = 0;
  int height = 0;
  std::string bytes_ref;
  Provenance provenance;
  std::shared_ptr<const Raster> pixels;

  bool is_original() const { return provenance.is_original(); }
  std::string parent_id() const { return provenance.parent ? provenance.parent->id : std::string(); }
};

/// Equality over identity, geometry, content reference and lineage ids.
bool operator==(const ImageState& a, const ImageState& b);

ImagePtr make_original(Raster pixels);
ImagePtr make_derived(Raster pixels, const std::string& tool, ImagePtr parent);

/// Walks the provenance chain to its Original.
const ImageState& original_of(const ImageState& image);

/// True if `image` equals `ancestor` or descends from it.
bool descends_from(const ImageState& image, const std::string& ancestor_id);

/// Interchange form: {id, width, height, bytes_ref, provenance:{kind, tool?, parent?}}.
nlohmann::json image_to_json(const ImageState& image);

}  // namespace visforge
