#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include <conflab/error.hpp>
#include <conflab/matrix.hpp>
#include <conflab/rng.hpp>

using namespace conflab;

TEST_CASE("derive_seed is deterministic and tag-sensitive") {
  CHECK(derive_seed(42, "alpha") == derive_seed(42, "alpha"));
  CHECK(derive_seed(42, "alpha") != derive_seed(42, "beta"));
  CHECK(derive_seed(42, "alpha") != derive_seed(43, "alpha"));
  CHECK(derive_seed(42, "alpha", 0) != derive_seed(42, "alpha", 1));
}

TEST_CASE("make_rng streams are reproducible and independent") {
  Rng a = make_rng(7, "stream");
  Rng b = make_rng(7, "stream");
  for (int i = 0; i < 100; ++i) REQUIRE(a() == b());
  Rng c = make_rng(7, "other");
  bool all_equal = true;
  Rng a2 = make_rng(7, "stream");
  for (int i = 0; i < 100; ++i) all_equal = all_equal && (a2() == c());
  CHECK_FALSE(all_equal);
}

TEST_CASE("Matrix basics") {
  Matrix m(2, 3);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  for (double v : m.values()) CHECK(v == 0.0);
  m(1, 2) = 5.0;
  CHECK(m.row(1)[2] == 5.0);
  CHECK(m.all_finite());
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());

  const Matrix f = Matrix::from_values(2, 2, {1.0, 2.0, 3.0, 4.0});
  CHECK(f(0, 1) == 2.0);
  CHECK(f(1, 0) == 3.0);
  CHECK(f == Matrix::from_values(2, 2, {1.0, 2.0, 3.0, 4.0}));
}

TEST_CASE("Matrix rejects bad dimensions") {
  CHECK_THROWS_AS(Matrix(-1, 3), ValidationError);
  CHECK_THROWS_AS(Matrix::from_values(2, 2, {1.0}), ValidationError);
}
