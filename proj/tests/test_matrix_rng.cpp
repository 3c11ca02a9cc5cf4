#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "ciml/matrix.hpp"
#include "ciml/rng.hpp"

using namespace ciml;

TEST_CASE("matrix arithmetic basics") {
  Matrix a(2, 3);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = static_cast<double>(i + 1);
  Matrix b(3, 2);
  for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = static_cast<double>(i);

  Matrix c = matmul(a, b);
  REQUIRE(c.rows() == 2);
  REQUIRE(c.cols() == 2);
  // row 0: [1 2 3] * cols of b = (0*1+2*2+4*3, 1*1+3*2+5*3)
  REQUIRE(c(0, 0) == doctest::Approx(16.0));
  REQUIRE(c(0, 1) == doctest::Approx(22.0));
  REQUIRE(c(1, 0) == doctest::Approx(34.0));
  REQUIRE(c(1, 1) == doctest::Approx(49.0));

  REQUIRE(sum_all(a) == doctest::Approx(21.0));
  REQUIRE(sq_frobenius(a) == doctest::Approx(1 + 4 + 9 + 16 + 25 + 36));
  REQUIRE_THROWS(matmul(a, a));

  Matrix d = sub(add(a, a), a);
  for (std::size_t i = 0; i < d.size(); ++i) REQUIRE(d.data()[i] == doctest::Approx(a.data()[i]));
  Matrix h = hadamard(a, a);
  REQUIRE(h(1, 2) == doctest::Approx(36.0));
  REQUIRE(scaled(a, -2.0)(0, 1) == doctest::Approx(-4.0));
}

TEST_CASE("rng determinism and substream independence") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());

  // named substreams differ from each other and are reproducible
  Rng s1 = substream(9, "alpha");
  Rng s2 = substream(9, "beta");
  Rng s1b = substream(9, "alpha");
  bool any_diff = false;
  for (int i = 0; i < 10; ++i) {
    const double x = s1.uniform(), y = s2.uniform();
    REQUIRE(x == s1b.uniform());
    any_diff |= (x != y);
  }
  REQUIRE(any_diff);

  // indexed substreams (per-epoch) differ
  REQUIRE(substream(9, "epoch", 0).next_u64() != substream(9, "epoch", 1).next_u64());
}

TEST_CASE("rng distributions are sane") {
  Rng rng(77);
  const int n = 200000;
  double mean = 0.0, var = 0.0;
  std::vector<double> xs(n);
  for (double& x : xs) x = rng.normal();
  for (double x : xs) mean += x;
  mean /= n;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n;
  REQUIRE(mean == doctest::Approx(0.0).epsilon(1).scale(0.02));
  REQUIRE(var == doctest::Approx(1.0).epsilon(0.02));

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(rng.uniform_index(7) < 7);
  }
}

TEST_CASE("shuffle is a permutation and deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r1(5), r2(5);
  auto w = v;
  r1.shuffle(v.begin(), v.end());
  r2.shuffle(w.begin(), w.end());
  REQUIRE(v == w);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) REQUIRE(sorted[i] == i);
}
