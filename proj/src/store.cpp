#include "visforge/store.hpp"

#include <atomic>
#include <map>
#include <thread>

#include "visforge/error.hpp"

namespace visforge {

namespace fs = std::filesystem;

std::string digest_hex(const std::string& bytes_ref) {
  constexpr std::string_view kPrefix = "sha256:";
  if (bytes_ref.rfind(kPrefix, 0) != 0 || bytes_ref.size() != kPrefix.size() + 64) {
    throw Error(ErrorCode::SchemaError, "bytes_ref must look like sha256:<64 hex>");
  }
  return bytes_ref.substr(kPrefix.size());
}

ImageStore::ImageStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create image store " + root_.string() + ": " + ec.message());
}

fs::path ImageStore::path_for(const std::string& bytes_ref) const { return root_ / (digest_hex(bytes_ref) + ".png"); }

bool ImageStore::contains(const std::string& bytes_ref) const { return fs::exists(path_for(bytes_ref)); }

std::string ImageStore::put(const ImageState& image) const {
  if (!image.pixels) throw Error(ErrorCode::MissingImage, "image " + image.id + " has no pixels to store");
  const fs::path target = path_for(image.bytes_ref);
  if (!fs::exists(target)) {
    static std::atomic<unsigned long> counter{0};
    const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
    const fs::path tmp = target.string() + ".tmp" + std::to_string(tid) + "." + std::to_string(counter++);
    save_png(*image.pixels, tmp);
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      if (!fs::exists(target)) throw Error(ErrorCode::IoError, "cannot store " + target.string());
    }
  }
  return (root_.filename() / target.filename()).generic_string();
}

std::shared_ptr<const Raster> ImageStore::get(const std::string& bytes_ref) const {
  const fs::path p = path_for(bytes_ref);
  if (!fs::exists(p)) throw Error(ErrorCode::MissingImage, "no stored content for " + bytes_ref);
  auto raster = std::make_shared<Raster>(load_image(p));
  if (raster_digest(*raster) != bytes_ref) {
    throw Error(ErrorCode::MissingImage, "stored content for " + bytes_ref + " fails its digest check");
  }
  return raster;
}

void ImageStore::put_chain(const ReasoningChain& chain) const {
  if (chain.root_image) put(*chain.root_image);
  for (const auto& obs : chain.observations()) put(*obs);
}

ReasoningChain attach_pixels(const ReasoningChain& chain, const ImageStore& store) {
  std::map<std::string, ImagePtr> rebuilt;
  auto rebuild = [&](auto&& self, const ImagePtr& img) -> ImagePtr {
    if (!img) return nullptr;
    if (auto it = rebuilt.find(img->id); it != rebuilt.end()) return it->second;
    auto copy = std::make_shared<ImageState>(*img);
    copy->pixels = img->pixels ? img->pixels : store.get(img->bytes_ref);
    if (copy->provenance.parent) copy->provenance.parent = self(self, copy->provenance.parent);
    rebuilt[img->id] = copy;
    return copy;
  };
  ReasoningChain out = chain;
  out.root_image = rebuild(rebuild, chain.root_image);
  for (auto& s : out.steps) s.observation = rebuild(rebuild, s.observation);
  return out;
}

}  // namespace visforge
