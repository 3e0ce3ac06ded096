#include <doctest.h>

#include <cmath>
#include <set>

#include "inpaint/rng.hpp"

using inpaint::Rng;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(inpaint::philox4x32({0, 0, 0, 0}, {0, 0}) ==
        A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(inpaint::philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                            {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(inpaint::philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                            {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    CHECK(x == b.next_u32());
    (void)c.next_u32();
    (void)d.next_u32();
  }
  Rng e(42, 3), f(42, 4);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += e.next_u32() == f.next_u32();
  CHECK(same < 2);
}

TEST_CASE("uniform, uniform_int and normal have the expected ranges and moments") {
  Rng r(7);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto k = r.uniform_int(7);
    REQUIRE(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(double(n)) * 1.5);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("mix_stream separates tags") {
  CHECK(inpaint::mix_stream(1, 2) != inpaint::mix_stream(2, 1));
  CHECK(inpaint::mix_stream(5, 0) != inpaint::mix_stream(5, 1));
  CHECK(inpaint::mix_stream(5, 9) == inpaint::mix_stream(5, 9));
}
