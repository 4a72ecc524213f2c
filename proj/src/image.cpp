#include "visforge/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <fstream>
#include <iterator>

#include "visforge/digest.hpp"
#include "visforge/error.hpp"

namespace visforge {

namespace {

size_t checked_bytes(int w, int h) {
  if (w < 1 || h < 1) throw Error(ErrorCode::InvalidImage, "raster dimensions must be positive");
  return static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
}

}  // namespace

Raster::Raster(int w, int h) : width(w), height(h), rgb(checked_bytes(w, h), 0) {}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace {

double bicubic(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

double bilinear(double x) {
  x = std::fabs(x);
  return x < 1.0 ? 1.0 - x : 0.0;
}

// Fixed-point convolution with the same coefficient rounding, pass order and
// intermediate 8-bit rounding as Pillow's resampler, so outputs match it
// byte-for-byte.
constexpr int kPrecisionBits = 32 - 8 - 2;

struct Taps {
  int first = 0;
  std::vector<std::int32_t> weights;
};

std::vector<Taps> compute_taps(int in_size, int out_size, Interpolation kernel) {
  const double support_base = kernel == Interpolation::Bicubic ? 2.0 : 1.0;
  const double scale = static_cast<double>(in_size) / out_size;
  const double filterscale = std::max(scale, 1.0);
  const double support = support_base * filterscale;
  const double ss = 1.0 / filterscale;
  std::vector<Taps> taps(static_cast<size_t>(out_size));
  std::vector<double> w;
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(center - support + 0.5));
    const int hi = std::min(in_size, static_cast<int>(center + support + 0.5));
    w.clear();
    double sum = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double x = (j - center + 0.5) * ss;
      w.push_back(kernel == Interpolation::Bicubic ? bicubic(x) : bilinear(x));
      sum += w.back();
    }
    Taps& t = taps[static_cast<size_t>(i)];
    t.first = lo;
    for (double v : w) {
      if (sum != 0.0) v /= sum;
      const double scaled = v * (1 << kPrecisionBits);
      t.weights.push_back(static_cast<std::int32_t>(v < 0 ? scaled - 0.5 : scaled + 0.5));
    }
  }
  return taps;
}

std::uint8_t clip8(std::int64_t acc) {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(acc >> kPrecisionBits, 0, 255));
}

Raster pass_horizontal(const Raster& src, int width, Interpolation kernel) {
  const auto taps = compute_taps(src.width, width, kernel);
  Raster out(width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Taps& t = taps[static_cast<size_t>(x)];
      std::int64_t acc[3] = {1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1)};
      for (size_t k = 0; k < t.weights.size(); ++k) {
        const std::uint8_t* p = src.pixel(t.first + static_cast<int>(k), y);
        for (int c = 0; c < 3; ++c) acc[c] += static_cast<std::int64_t>(p[c]) * t.weights[k];
      }
      std::uint8_t* o = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) o[c] = clip8(acc[c]);
    }
  }
  return out;
}

Raster pass_vertical(const Raster& src, int height, Interpolation kernel) {
  const auto taps = compute_taps(src.height, height, kernel);
  Raster out(src.width, height);
  for (int y = 0; y < height; ++y) {
    const Taps& t = taps[static_cast<size_t>(y)];
    for (int x = 0; x < src.width; ++x) {
      std::int64_t acc[3] = {1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1), 1 << (kPrecisionBits - 1)};
      for (size_t k = 0; k < t.weights.size(); ++k) {
        const std::uint8_t* p = src.pixel(x, t.first + static_cast<int>(k));
        for (int c = 0; c < 3; ++c) acc[c] += static_cast<std::int64_t>(p[c]) * t.weights[k];
      }
      std::uint8_t* o = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) o[c] = clip8(acc[c]);
    }
  }
  return out;
}

}  // namespace

Raster resample(const Raster& src, int width, int height, Interpolation kernel) {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidImage, "resample target must be positive");
  if (width == src.width && height == src.height) return src;
  if (width == src.width) return pass_vertical(src, height, kernel);
  Raster mid = pass_horizontal(src, width, kernel);
  return height == src.height ? mid : pass_vertical(mid, height, kernel);
}

Raster crop(const Raster& src, int x0, int y0, int x1, int y1) {
  if (x0 < 0 || y0 < 0 || x1 > src.width || y1 > src.height || x1 <= x0 || y1 <= y0) {
    throw Error(ErrorCode::CropTooSmall, "crop rectangle is empty or outside the image");
  }
  Raster out(x1 - x0, y1 - y0);
  const size_t row_bytes = static_cast<size_t>(out.width) * 3;
  for (int y = y0; y < y1; ++y) {
    std::copy_n(src.pixel(x0, y), row_bytes, out.pixel(0, y - y0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codecs
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_png(const Raster& r) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, r.rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, r.rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::IoError, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::InvalidImage, std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width < 1 || image.height < 1) {
    png_image_free(&image);
    throw Error(ErrorCode::InvalidImage, "png has zero dimensions");
  }
  Raster out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    throw Error(ErrorCode::InvalidImage, std::string("png decode failed: ") + image.message);
  }
  return out;
}

namespace {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Kept free of objects with destructors so longjmp is well-defined.
bool jpeg_decode_raw(const std::uint8_t* data, size_t size, std::uint8_t* dest, int* width, int* height,
                     bool header_only, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *width = static_cast<int>(cinfo.output_width);
  *height = static_cast<int>(cinfo.output_height);
  if (header_only) {
    jpeg_abort_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  const size_t stride = static_cast<size_t>(*width) * 3;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = dest + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  char message[JMSG_LENGTH_MAX] = {0};
  int w = 0, h = 0;
  if (!jpeg_decode_raw(bytes.data(), bytes.size(), nullptr, &w, &h, true, message)) {
    throw Error(ErrorCode::InvalidImage, std::string("jpeg decode failed: ") + message);
  }
  Raster out(w, h);
  if (!jpeg_decode_raw(bytes.data(), bytes.size(), out.rgb.data(), &w, &h, false, message)) {
    throw Error(ErrorCode::InvalidImage, std::string("jpeg decode failed: ") + message);
  }
  return out;
}

Raster decode_image(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPng), std::end(kPng), bytes.begin())) {
    return decode_png(bytes);
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes);
  }
  throw Error(ErrorCode::InvalidImage, "unrecognized image container (expected PNG or JPEG)");
}

Raster load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_png(const Raster& r, const std::filesystem::path& path) {
  auto bytes = encode_png(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string raster_digest(const Raster& r) {
  std::string header = "rgb8:" + std::to_string(r.width) + "x" + std::to_string(r.height) + ":";
  std::vector<std::uint8_t> buf(header.begin(), header.end());
  buf.insert(buf.end(), r.rgb.begin(), r.rgb.end());
  return "sha256:" + sha256_hex(buf);
}

// ---------------------------------------------------------------------------
// ImageState
// ---------------------------------------------------------------------------

bool operator==(const ImageState& a, const ImageState& b) {
  if (a.id != b.id || a.width != b.width || a.height != b.height || a.bytes_ref != b.bytes_ref) return false;
  if (a.provenance.kind != b.provenance.kind || a.provenance.tool != b.provenance.tool) return false;
  return a.parent_id() == b.parent_id();
}

ImagePtr make_original(Raster pixels) {
  auto state = std::make_shared<ImageState>();
  state->width = pixels.width;
  state->height = pixels.height;
  state->bytes_ref = raster_digest(pixels);
  state->id = "img-" + state->bytes_ref.substr(7, 16);
  state->pixels = std::make_shared<const Raster>(std::move(pixels));
  return state;
}

ImagePtr make_derived(Raster pixels, const std::string& tool, ImagePtr parent) {
  if (!parent) throw Error(ErrorCode::InvalidImage, "derived image needs a parent");
  auto state = std::make_shared<ImageState>();
  state->width = pixels.width;
  state->height = pixels.height;
  state->bytes_ref = raster_digest(pixels);
  state->id = "img-" + sha256_hex(tool + "|" + parent->id + "|" + state->bytes_ref).substr(0, 16);
  state->provenance = Provenance{Provenance::Kind::Derived, tool, std::move(parent)};
  state->pixels = std::make_shared<const Raster>(std::move(pixels));
  return state;
}

const ImageState& original_of(const ImageState& image) {
  const ImageState* cur = &image;
  while (!cur->is_original()) {
    if (!cur->provenance.parent) throw Error(ErrorCode::InvalidChain, "derived image without parent");
    cur = cur->provenance.parent.get();
  }
  return *cur;
}

bool descends_from(const ImageState& image, const std::string& ancestor_id) {
  const ImageState* cur = &image;
  while (cur) {
    if (cur->id == ancestor_id) return true;
    cur = cur->provenance.parent.get();
  }
  return false;
}

nlohmann::json image_to_json(const ImageState& image) {
  nlohmann::json prov;
  if (image.is_original()) {
    prov = {{"kind", "original"}};
  } else {
    prov = {{"kind", "derived"}, {"tool", image.provenance.tool}, {"parent", image.parent_id()}};
  }
  return {{"id", image.id},
          {"width", image.width},
          {"height", image.height},
          {"bytes_ref", image.bytes_ref},
          {"provenance", prov}};
}

}  // namespace visforge
