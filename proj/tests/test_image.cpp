#include <doctest.h>

#include "support.hpp"
#include "visforge/digest.hpp"
#include "visforge/error.hpp"
#include "visforge/store.hpp"

using namespace visforge;
using namespace vftest;

TEST_SUITE("image") {
  TEST_CASE("raster dimensions must be positive") {
    CHECK_THROWS_AS(Raster(0, 3), Error);
    CHECK_THROWS_AS(Raster(3, -1), Error);
  }

  TEST_CASE("png round trip preserves pixels") {
    const Raster r = noise(37, 19, 3);
    CHECK(decode_png(encode_png(r)) == r);
    CHECK(encode_png(r) == encode_png(r));
  }

  TEST_CASE("jpeg decode agrees with Pillow within one step") {
    const Raster mine = load_image(golden_dir() / "tiny.jpg");
    const Raster ref = golden("tiny_jpg_decoded");
    REQUIRE(mine.width == ref.width);
    REQUIRE(mine.height == ref.height);
    int worst = 0;
    for (size_t i = 0; i < mine.rgb.size(); ++i) worst = std::max(worst, std::abs(mine.rgb[i] - ref.rgb[i]));
    CHECK(worst <= 1);
  }

  TEST_CASE("undecodable bytes are rejected") {
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK_THROWS_AS(decode_image(junk), Error);
  }

  TEST_CASE("digest covers dimensions and pixels") {
    // Same bytes, different shape: digests differ.
    const Raster a = solid(4, 2, 9, 9, 9);
    const Raster b = solid(2, 4, 9, 9, 9);
    CHECK(raster_digest(a) != raster_digest(b));
    const auto meta = golden_meta();
    CHECK(raster_digest(golden("input")) == meta["images"]["input"]["digest"].get<std::string>());
    CHECK(raster_digest(golden("zoom")) == meta["images"]["zoom"]["digest"].get<std::string>());
  }

  TEST_CASE("resample matches the Pillow golden") {
    const Raster view = resample(golden("input"), 392, 308);
    CHECK(view == golden("view"));
  }

  TEST_CASE("resample of a solid image stays solid") {
    const Raster s = solid(123, 77, 10, 200, 30);
    for (auto [w, h] : std::vector<std::pair<int, int>>{{28, 28}, {500, 13}, {1, 1}, {123, 300}}) {
      const Raster o = resample(s, w, h, Interpolation::Bicubic);
      CHECK(o == solid(w, h, 10, 200, 30));
      CHECK(resample(s, w, h, Interpolation::Bilinear) == solid(w, h, 10, 200, 30));
    }
    CHECK(resample(s, 123, 77) == s);
  }

  TEST_CASE("crop copies the half-open rectangle") {
    const Raster r = noise(20, 10, 1);
    const Raster c = crop(r, 3, 2, 9, 7);
    REQUIRE(c.width == 6);
    REQUIRE(c.height == 5);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 6; ++x) {
        CHECK(std::equal(c.pixel(x, y), c.pixel(x, y) + 3, r.pixel(x + 3, y + 2)));
      }
    }
    CHECK_THROWS_AS(crop(r, 3, 2, 3, 7), Error);
    CHECK_THROWS_AS(crop(r, 0, 0, 21, 7), Error);
  }

  TEST_CASE("image lineage") {
    const ImagePtr root = make_original(gradient(30, 20));
    const ImagePtr d1 = make_derived(gradient(28, 28), "zoom_in", root);
    const ImagePtr d2 = make_derived(gradient(28, 28, 1), "focus_area", d1);
    CHECK(root->id.rfind("img-", 0) == 0);
    CHECK(root->id.size() == 20);
    CHECK(&original_of(*d2) == root.get());
    CHECK(descends_from(*d2, root->id));
    CHECK(descends_from(*d2, d1->id));
    CHECK_FALSE(descends_from(*d1, d2->id));
    // Identity depends on the parent as well as the content.
    CHECK(make_derived(gradient(28, 28), "zoom_in", root)->id == d1->id);
    CHECK(make_derived(gradient(28, 28), "zoom_in", d2)->id != d1->id);
    CHECK(make_derived(gradient(28, 28), "reuse", root)->id != d1->id);
  }

  TEST_CASE("content-addressed store") {
    const auto dir = fresh_dir("store");
    const ImageStore store(dir / "images");
    const ImagePtr img = make_original(noise(40, 30, 5));
    const std::string rel = store.put(*img);
    CHECK(rel == "images/" + digest_hex(img->bytes_ref) + ".png");
    CHECK(store.put(*img) == rel);
    CHECK(*store.get(img->bytes_ref) == *img->pixels);

    // Tampered content fails the digest check.
    save_png(noise(40, 30, 6), store.path_for(img->bytes_ref));
    CHECK_THROWS_AS(store.get(img->bytes_ref), Error);
    CHECK_THROWS_AS(store.get("sha256:" + std::string(64, '0')), Error);
  }

  TEST_CASE("base64 round trip") {
    std::mt19937_64 rng(3);
    for (size_t n = 0; n < 40; ++n) {
      std::vector<std::uint8_t> v(n);
      for (auto& b : v) b = static_cast<std::uint8_t>(rng());
      CHECK(base64_decode(base64_encode(v)) == v);
    }
    const std::string_view hello = "hello";
    CHECK(base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size())) == "aGVsbG8=");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
}
