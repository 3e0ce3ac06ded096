#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "inpaint/error.hpp"
#include "inpaint/phantom.hpp"

using namespace inpaint;
using namespace inpaint::phantom;

namespace {

bool bit_equal(const Volume &a, const Volume &b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0;
}

std::uint64_t hash_volume(const Volume &v) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto *p = reinterpret_cast<const unsigned char *>(v.data().data());
  for (std::size_t i = 0; i < v.data().size() * 4; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
  return h;
}

PhantomSpec small_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.dims = {40, 40, 40};
  s.seed = seed;
  s.tumor_radius_min = 4;
  s.tumor_radius_max = 6;
  return s;
}

} // namespace

TEST_CASE("same seed gives bit-identical phantoms") {
  const auto a = generate_phantom(small_spec(5));
  const auto b = generate_phantom(small_spec(5));
  CHECK(bit_equal(a.healthy, b.healthy));
  CHECK(bit_equal(a.mask, b.mask));
  CHECK(bit_equal(a.diseased, b.diseased));
}

TEST_CASE("mask lies inside the head and diseased differs only under it") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = generate_phantom(small_spec(seed));
    int mask_count = 0;
    for (std::size_t i = 0; i < p.mask.data().size(); ++i) {
      const float m = p.mask.data()[i];
      CHECK((m == 0.0f || m == 1.0f));
      if (m == 1.0f) {
        ++mask_count;
        CHECK(p.healthy.data()[i] > 0.0f);
      } else {
        CHECK(p.diseased.data()[i] == p.healthy.data()[i]);
      }
    }
    CHECK(mask_count > 0);
  }
}

TEST_CASE("tumor voxel count tracks the sphere volume") {
  PhantomSpec s;
  s.dims = {48, 48, 48};
  s.tumor_radius_min = s.tumor_radius_max = 8;
  s.seed = 17;
  const auto p = generate_phantom(s);
  int n = 0;
  for (float x : p.mask.data()) n += x == 1.0f;
  const double expect = 4.0 / 3.0 * M_PI * 512.0;
  CHECK(std::abs(n - expect) < 0.15 * expect);
}

TEST_CASE("dataset voids the mask and seeds give distinct volumes") {
  const auto one = generate_dataset(1, 9, small_spec(0));
  REQUIRE(one.size() == 1);
  const auto &s = one[0].sample;
  for (std::size_t i = 0; i < s.mask.data().size(); ++i) {
    if (s.mask.data()[i] == 1.0f) CHECK(s.image.data()[i] == 0.0f);
  }
  CHECK(one[0].id == "phantom_000009");

  const auto many = generate_dataset(4, 100, small_spec(0), 0.25);
  std::set<std::uint64_t> hashes;
  for (const auto &e : many) {
    hashes.insert(hash_volume(e.phantom.healthy));
    hashes.insert(hash_volume(e.phantom.diseased));
  }
  CHECK(hashes.size() == 8);
  CHECK(many[3].split == "val");
  CHECK(many[0].split == "train");
}

TEST_CASE("infeasible tumor sizes are rejected") {
  PhantomSpec s = small_spec(1);
  s.tumor_radius_min = s.tumor_radius_max = 30;
  try {
    generate_phantom(s);
    FAIL("expected SpecInfeasible");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::SpecInfeasible);
  }
  s.tumor_count = 2;
  CHECK_THROWS_AS(s.validate(), Error);
}
