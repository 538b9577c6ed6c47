#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bmix/rng.hpp"

using bmix::Philox4x32;

// Known-answer vectors from the Random123 distribution (philox4x32_10).
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::bijection({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Philox4x32::Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto out = Philox4x32::bijection(
      {0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff});
  EXPECT_EQ(out, (Philox4x32::Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::bijection(
      {0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0});
  EXPECT_EQ(out, (Philox4x32::Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  Philox4x32 a(42, 7), b(42, 7), c(42, 8);
  int same = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a(), y = b(), z = c();
    EXPECT_EQ(x, y);
    same += x == z;
  }
  EXPECT_LT(same, 3);
}

TEST(Philox, DiscardMatchesStepping) {
  for (std::uint64_t skip : {0u, 1u, 3u, 4u, 5u, 17u, 1000u}) {
    Philox4x32 a(9, 1), b(9, 1);
    a();  // start mid-block
    b();
    for (std::uint64_t i = 0; i < skip; ++i) a();
    b.discard(skip);
    EXPECT_EQ(a(), b()) << "skip " << skip;
  }
}

TEST(Philox, UniformAndNormalMoments) {
  Philox4x32 rng(123, 0);
  const int n = 200000;
  double su = 0, sz = 0, szz = 0, umin = 1, umax = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    su += u;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    const double z = rng.normal();
    sz += z;
    szz += z * z;
  }
  EXPECT_GT(umin, 0.0);
  EXPECT_LT(umax, 1.0);
  EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sz / n, 0.0, 4 / std::sqrt(double(n)));
  EXPECT_NEAR(szz / n, 1.0, 4 * std::sqrt(2.0 / n));
}
