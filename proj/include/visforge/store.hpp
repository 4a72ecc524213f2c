#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

#include "visforge/chain.hpp"
#include "visforge/image.hpp"

namespace visforge {

// Content-addressed PNG directory: <root>/<hex digest>.png where the digest is
// the raster digest carried in ImageState::bytes_ref. Writes go through a
// temporary file and rename, so concurrent puts of the same content are safe.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Stores the image content if absent; returns the path relative to the
  /// store's parent directory (e.g. "images/ab12....png").
  std::string put(const ImageState& image) const;

  std::filesystem::path path_for(const std::string& bytes_ref) const;
  bool contains(const std::string& bytes_ref) const;

  /// Loads and integrity-checks content. Throws MissingImage.
  std::shared_ptr<const Raster> get(const std::string& bytes_ref) const;

  /// Stores every image of a chain.
  void put_chain(const ReasoningChain& chain) const;

 private:
  std::filesystem::path root_;
};

/// Rebuilds a chain whose images carry pixels loaded from the store.
ReasoningChain attach_pixels(const ReasoningChain& chain, const ImageStore& store);

/// Hex part of a "sha256:<hex>" content reference.
std::string digest_hex(const std::string& bytes_ref);

}  // namespace visforge
