#include <catch_amalgamated.hpp>

#include <set>

#include "ams/rng.hpp"

using ams::Philox4x32;

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("generator output is built from consecutive blocks") {
  Philox4x32 g({1, 2}, {0, 5, 6, 7});
  const auto b0 = Philox4x32::block({0, 5, 6, 7}, {1, 2});
  const auto b1 = Philox4x32::block({1, 5, 6, 7}, {1, 2});
  auto word = [](std::uint32_t lo, std::uint32_t hi) { return (std::uint64_t(hi) << 32) | lo; };
  CHECK(g() == word(b0[0], b0[1]));
  CHECK(g() == word(b0[2], b0[3]));
  CHECK(g() == word(b1[0], b1[1]));
}

TEST_CASE("uniform_open stays inside (0,1)") {
  Philox4x32 g({3, 4}, {});
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = g.uniform_open();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  // mean of U(0,1): sd of the average is 1/sqrt(12 n)
  CHECK(std::abs(sum / n - 0.5) < 5.0 / std::sqrt(12.0 * n));
}

TEST_CASE("streams are pure functions of their address") {
  const ams::StreamFactory a(42), b(42);
  auto s1 = a.stream(3, ams::StreamRole::Explore, 17);
  auto s2 = b.stream(3, ams::StreamRole::Explore, 17);
  for (int i = 0; i < 10; ++i) CHECK(s1() == s2());

  std::set<std::uint64_t> firsts;
  for (std::uint32_t stage = 0; stage < 4; ++stage) {
    for (auto role : {ams::StreamRole::Prior, ams::StreamRole::Explore, ams::StreamRole::Resample,
                      ams::StreamRole::Tag}) {
      for (std::uint32_t i = 0; i < 16; ++i) firsts.insert(a.stream(stage, role, i)());
    }
  }
  CHECK(firsts.size() == 4 * 4 * 16);
}

TEST_CASE("replication seeds are distinct and deterministic") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t j = 0; j < 10000; ++j) seeds.insert(ams::replication_seed(7, j));
  CHECK(seeds.size() == 10000);
  CHECK(ams::replication_seed(7, 3) == ams::replication_seed(7, 3));
  CHECK(ams::replication_seed(7, 3) != ams::replication_seed(8, 3));
}
