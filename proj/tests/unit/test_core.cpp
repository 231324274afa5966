#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "advbiom/core/image.hpp"
#include "advbiom/core/image_io.hpp"
#include "advbiom/core/random.hpp"

using namespace advbiom;

namespace {

RawImage constant_raw(std::uint8_t v, int channels = 1) {
  ImageShape s{8, 8, channels};
  return RawImage(s, std::vector<std::uint8_t>(s.size(), v));
}

}  // namespace

TEST_CASE("normalize_image maps intensities onto the fixed affine grid") {
  CHECK(normalize_image(constant_raw(128)).at(0, 0, 0) == 0.00390625);
  CHECK(normalize_image(constant_raw(255)).at(3, 4, 0) == 0.99609375);
  CHECK(normalize_image(constant_raw(0)).at(7, 7, 0) == -0.99609375);
}

TEST_CASE("denormalize inverts normalize on every intensity") {
  ImageShape s{16, 16, 1};
  std::vector<std::uint8_t> px(s.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i);
  RawImage raw(s, px);
  RawImage back = denormalize_image(normalize_image(raw));
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(back.pixels()[i] == px[i]);

  CHECK(denormalize_image(NormalizedImage({8, 8, 1}, 0.0)).at(0, 0, 0) == 128);
  CHECK(denormalize_image(NormalizedImage({8, 8, 1}, 0.99609375)).at(0, 0, 0) == 255);
  CHECK(denormalize_image(NormalizedImage({8, 8, 1}, 1.0)).at(0, 0, 0) == 255);
}

TEST_CASE("image types validate their invariants") {
  CHECK_THROWS_AS(RawImage({4, 8, 1}, std::vector<std::uint8_t>(32)), ShapeError);
  CHECK_THROWS_AS(RawImage({8, 8, 2}, std::vector<std::uint8_t>(128)), ShapeError);
  CHECK_THROWS_AS(NormalizedImage({8, 8, 1}, 1.5), std::domain_error);
  CHECK_THROWS_AS(NormalizedImage({8, 8, 1}, std::nan("")), std::domain_error);
  CHECK_THROWS_AS(AdversarialMask({8, 8, 1}, -1.01), std::domain_error);
}

TEST_CASE("cosine_similarity examples and oracle agreement") {
  std::vector<double> a{1, 0, 0}, b{0, 1};
  CHECK(cosine_similarity(a, a) == 1.0);
  CHECK(cosine_similarity(std::vector<double>{1, 0}, b) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, b), std::domain_error);
  CHECK_THROWS_AS(cosine_similarity(a, b), ShapeError);

  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> u(17), v(17);
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    double dot = 0, nu = 0, nv = 0;
    for (int i = 0; i < 17; ++i) {
      dot += u[i] * v[i];
      nu += u[i] * u[i];
      nv += v[i] * v[i];
    }
    const double oracle = dot / (std::sqrt(nu) * std::sqrt(nv));
    const double got = cosine_similarity(u, v);
    CHECK(std::abs(got - oracle) < 1e-12);
    CHECK(std::abs(got - cosine_similarity(v, u)) < 1e-15);
    std::vector<double> scaled = u;
    for (auto& x : scaled) x *= 3.7;
    CHECK(std::abs(cosine_similarity(scaled, v) - got) < 1e-12);
    CHECK(std::abs(got) <= 1.0 + 1e-9);
  }
}

TEST_CASE("Embedding is unit norm") {
  Embedding e(std::vector<double>{3, 4});
  CHECK(e.values()[0] == doctest::Approx(0.6));
  CHECK(e.values()[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(Embedding(std::vector<double>{0, 0}), std::domain_error);
}

TEST_CASE("clamp_compose examples") {
  NormalizedImage zero({8, 8, 1}, 0.0);
  CHECK(clamp_compose(zero, AdversarialMask({8, 8, 1}, 0.25)).at(2, 2, 0) == 0.5);
  NormalizedImage low({8, 8, 1}, -1.0);
  CHECK(clamp_compose(low, AdversarialMask({8, 8, 1}, -0.3)).at(0, 0, 0) == -1.0);
  CHECK_THROWS_AS(clamp_compose(zero, AdversarialMask({8, 8, 3}, 0.0)), ShapeError);
}

TEST_CASE("clamp_compose properties on random inputs") {
  Rng rng(12);
  ImageShape s{8, 9, 3};
  for (int t = 0; t < 50; ++t) {
    NormalizedImage x(s);
    AdversarialMask m(s), m2(s);
    for (auto& v : x.values()) v = uniform(rng, -1, 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
      m.values()[i] = uniform(rng, -1, 1);
      m2.values()[i] = std::min(1.0, m.values()[i] + uniform(rng, 0, 0.5));
    }
    NormalizedImage same = clamp_compose(x, AdversarialMask(s, 0.0));
    NormalizedImage a = clamp_compose(x, m), b = clamp_compose(x, m2);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(same.values()[i] == x.values()[i]);
      CHECK(a.values()[i] >= -1.0);
      CHECK(a.values()[i] <= 1.0);
      CHECK(b.values()[i] >= a.values()[i]);
    }
  }
}

TEST_CASE("distances") {
  NormalizedImage a({8, 8, 1}, 0.0), b({8, 8, 1}, 0.0);
  b.at(1, 1, 0) = 0.5;
  b.at(2, 2, 0) = -0.25;
  CHECK(linf_distance(a, b) == 0.5);
  CHECK(l2_distance(a, b) == doctest::Approx(std::sqrt(0.25 + 0.0625)));
}

TEST_CASE("png round trip preserves pixels") {
  ImageShape s{9, 11, 3};
  std::vector<std::uint8_t> px(s.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>((i * 37) % 256);
  const auto path = std::filesystem::temp_directory_path() / "advbiom_core_rgb.png";
  save_png(path, RawImage(s, px));
  RawImage back = load_image(path);
  REQUIRE(back.shape() == s);
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(back.pixels()[i] == px[i]);
  std::filesystem::remove(path);

  const auto gray = std::filesystem::temp_directory_path() / "advbiom_core_gray.png";
  save_png(gray, constant_raw(77));
  CHECK(load_image(gray).shape().channels == 1);
  std::filesystem::remove(gray);
  CHECK_THROWS(load_image("/nonexistent/file.png"));
}

TEST_CASE("derived seeds are stable and distinct") {
  CHECK(derive_seed(42, "matcher") == derive_seed(42, "matcher"));
  CHECK(derive_seed(42, "matcher") != derive_seed(42, "advgen"));
  CHECK(derive_seed(42, std::uint64_t{1}) != derive_seed(42, std::uint64_t{2}));
}
