#include <doctest.h>

#include <set>
#include <vector>

#include "steerlab/rng.hpp"

using namespace steerlab;

TEST_CASE("mix64 is deterministic and spreads nearby inputs") {
  CHECK(mix64(42) == mix64(42));
  std::set<std::uint64_t> seen;
  for (std::uint64_t z = 0; z < 4096; ++z) seen.insert(mix64(z));
  CHECK(seen.size() == 4096);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("counter streams are reproducible and label-separated") {
  CounterRng a(7, "alpha");
  CounterRng b(7, "alpha");
  CounterRng c(7, "beta");
  bool all_equal = true;
  bool any_differ = false;
  for (int k = 0; k < 64; ++k) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_differ = any_differ || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("next_double lands in the unit interval") {
  CounterRng rng(1, "u");
  for (int k = 0; k < 1000; ++k) {
    const double x = rng.next_double();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("next_int respects bounds and hits every residue") {
  CounterRng rng(1, "i");
  std::vector<int> counts(5, 0);
  for (int k = 0; k < 5000; ++k) {
    const int v = rng.next_int(5);
    REQUIRE(v >= 0);
    REQUIRE(v < 5);
    ++counts[v];
  }
  for (int v = 0; v < 5; ++v) CHECK(counts[v] > 700);
  CHECK_THROWS_AS(rng.next_int(0), std::invalid_argument);
}

TEST_CASE("sample_discrete follows the weights") {
  CounterRng rng(3, "d");
  Eigen::VectorXd point(3);
  point << 0.0, 1.0, 0.0;
  for (int k = 0; k < 32; ++k) CHECK(rng.sample_discrete(point) == 1);

  Eigen::VectorXd half(2);
  half << 1.0, 1.0;
  int ones = 0;
  for (int k = 0; k < 4000; ++k) ones += rng.sample_discrete(half);
  CHECK(ones > 1700);
  CHECK(ones < 2300);
}

TEST_CASE("sample_discrete consumes exactly one deviate") {
  CounterRng a(11, "s");
  CounterRng b(11, "s");
  Eigen::VectorXd w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  a.sample_discrete(w);
  b.next_double();
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("sample_discrete rejects bad weights") {
  CounterRng rng(1, "bad");
  Eigen::VectorXd neg(2);
  neg << 0.5, -0.1;
  CHECK_THROWS_AS(rng.sample_discrete(neg), std::invalid_argument);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(rng.sample_discrete(zero), std::invalid_argument);
  Eigen::VectorXd empty;
  CHECK_THROWS_AS(rng.sample_discrete(empty), std::invalid_argument);
}

TEST_CASE("replication seeds are stable and collision-free") {
  CHECK(derive_replication_seed(5, 3) == derive_replication_seed(5, 3));
  CHECK(derive_replication_seed(5, 3) == mix64(5ull ^ mix64(4)));
  std::set<std::uint64_t> seen;
  for (int r = 0; r < 256; ++r) seen.insert(derive_replication_seed(99, r));
  CHECK(seen.size() == 256);
  CHECK(derive_replication_seed(1, 0) != derive_replication_seed(2, 0));
}
