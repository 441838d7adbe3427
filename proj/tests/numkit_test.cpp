#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "iqcmhe/numkit.hpp"
#include "iqcmhe/rng.hpp"

using namespace iqcmhe;
using numkit::Matrix;
using numkit::Vector;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

Matrix random_spd(Rng& rng, int n, double shift = 0.5) {
  Matrix a = random_matrix(rng, n, n);
  return Matrix(a * a.transpose()) + shift * Matrix::Identity(n, n);
}

// Brute-force oracle: eigenvalues of b^{-1} a, max real part.
double gen_eig_oracle(const Matrix& a, const Matrix& b) {
  Eigen::EigenSolver<Matrix> es(b.inverse() * a);
  double best = -1e300;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    best = std::max(best, es.eigenvalues()(i).real());
  return best;
}

}  // namespace

TEST_CASE("kron identity and scalar cases") {
  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix i3 = Matrix::Identity(3, 3);
  CHECK((numkit::kron(i2, i3) - Matrix::Identity(6, 6)).norm() == 0.0);

  Rng rng(7);
  const Matrix b = random_matrix(rng, 3, 4);
  Matrix two(1, 1);
  two << 2.0;
  CHECK((numkit::kron(two, b) - 2.0 * b).norm() == 0.0);
}

TEST_CASE("kron shift block structure") {
  Matrix j(2, 2);
  j << 0, 1, 0, 0;
  const Matrix k = numkit::kron(j, Matrix::Identity(2, 2));
  Matrix expected = Matrix::Zero(4, 4);
  expected.block(0, 2, 2, 2) = Matrix::Identity(2, 2);
  CHECK((k - expected).norm() == 0.0);
}

TEST_CASE("kron mixed-product property") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(rng, 2, 3);
    const Matrix b = random_matrix(rng, 3, 2);
    const Matrix c = random_matrix(rng, 3, 2);
    const Matrix d = random_matrix(rng, 2, 4);
    const Matrix lhs = numkit::kron(a, b) * numkit::kron(c, d);
    const Matrix rhs = numkit::kron(Matrix(a * c), Matrix(b * d));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("generalized_max_eig basic cases") {
  const Matrix i2 = Matrix::Identity(2, 2);
  CHECK(numkit::generalized_max_eig(i2, i2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(numkit::generalized_max_eig(2.0 * i2, i2) == doctest::Approx(2.0).epsilon(1e-12));

  Matrix a = Vector::Map(std::array{1.0, 3.0}.data(), 2).asDiagonal();
  Matrix b = Vector::Map(std::array{2.0, 1.0}.data(), 2).asDiagonal();
  // det(a - lambda b) roots: 0.5 and 3
  CHECK(numkit::generalized_max_eig(a, b) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("generalized_max_eig rejects indefinite b") {
  Matrix a = Matrix::Identity(2, 2);
  Matrix b = Matrix::Zero(2, 2);
  b(0, 0) = 1.0;
  CHECK_THROWS_AS(numkit::generalized_max_eig(a, b), NotPositiveDefinite);
}

TEST_CASE("generalized_max_eig matches brute-force oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_spd(rng, 6, 0.1);
    const Matrix b = random_spd(rng, 6, 0.5);
    const double got = numkit::generalized_max_eig(a, b);
    const double want = gen_eig_oracle(a, b);
    CHECK(got == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("doubly hyperdominant checks") {
  CHECK(numkit::is_doubly_hyperdominant(Matrix::Identity(3, 3), 0.0));
  Matrix bad(2, 2);
  bad << 1, 0.1, 0.1, 1;
  CHECK_FALSE(numkit::is_doubly_hyperdominant(bad, 1e-9));
  Matrix ok(2, 2);
  ok << 1, -1, -1, 1;
  CHECK(numkit::is_doubly_hyperdominant(ok, 0.0));
}

TEST_CASE("doubly hyperdominant cone property") {
  Rng rng(31);
  auto random_dhd = [&](int n) {
    // random nonpositive off-diagonals, then lift the diagonal until row and
    // column sums are nonnegative
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) w(i, j) = -rng.uniform(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      double need = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) need += std::max(-w(i, j), -w(j, i));
      w(i, i) = need + rng.uniform(0.0, 0.5);
    }
    return w;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix w = random_dhd(4);
    const Matrix v = random_dhd(4);
    REQUIRE(numkit::is_doubly_hyperdominant(w, 1e-12));
    REQUIRE(numkit::is_doubly_hyperdominant(v, 1e-12));
    CHECK(numkit::is_doubly_hyperdominant(w + v, 1e-12));
  }
}

TEST_CASE("psd_factor reconstructs") {
  const Matrix i3 = Matrix::Identity(3, 3);
  Matrix l = numkit::psd_factor(i3);
  CHECK((l.transpose() * l - i3).norm() <= 1e-12);

  Matrix rank_def = Matrix::Zero(2, 2);
  rank_def(0, 0) = 4.0;
  l = numkit::psd_factor(rank_def);
  CHECK((l.transpose() * l - rank_def).norm() <= 1e-12);

  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix s = random_spd(rng, 5);
    l = numkit::psd_factor(s);
    CHECK((l.transpose() * l - s).norm() / s.norm() <= 1e-10);
  }
}

TEST_CASE("psd_factor rejects indefinite input") {
  Matrix neg = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(numkit::psd_factor(neg, 1e-9), NotPsd);
}
