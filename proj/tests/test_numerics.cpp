#include <doctest.h>

#include "tla/numerics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <set>

using namespace tla;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix random_symmetric(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(n, n);
  for (double& v : a.reshaped()) v = g(rng);
  return (a + a.transpose()) / 2.0;
}

double sse(const Matrix& pts, const std::vector<int>& assign, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pts.cols());
    int n = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      if (assign[static_cast<std::size_t>(i)] == c) {
        mean += pts.row(i);
        ++n;
      }
    if (n == 0) continue;
    mean /= n;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      if (assign[static_cast<std::size_t>(i)] == c) total += (pts.row(i) - mean).squaredNorm();
  }
  return total;
}

}  // namespace

TEST_CASE("softmax examples") {
  const Distribution u = softmax(vec({0, 0, 0, 0}));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));

  const Distribution third = softmax(vec({0, std::log(2.0)}));
  CHECK(third[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(third[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  const Distribution big = softmax(vec({1000, 1000.5}));
  const Distribution small = softmax(vec({0, 0.5}));
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(small[0]).epsilon(1e-12));
  CHECK(big[1] == doctest::Approx(small[1]).epsilon(1e-12));
}

TEST_CASE("softmax rejects empty and non-finite logits") {
  CHECK_THROWS_WITH_AS(softmax(Vector()), "empty logits", Error);
  CHECK_THROWS_AS(softmax(vec({0, std::numeric_limits<double>::infinity()})), Error);
}

TEST_CASE("softmax sums to one and ignores shifts") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    Vector logits(1 + t % 9);
    for (double& v : logits.reshaped()) v = g(rng);
    const Distribution p = softmax(logits);
    CHECK(std::abs(p.probs().sum() - 1.0) < 1e-9);
    const Distribution q = softmax((logits.array() + g(rng)).matrix());
    CHECK((p.probs() - q.probs()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(Distribution(vec({0.5, 0.6})), Error);
  CHECK_THROWS_AS(Distribution(vec({-0.5, 1.5})), Error);
  CHECK_THROWS_AS(Distribution{Vector{}}, Error);
  CHECK(Distribution(vec({0.2, 0.8})).argmax() == 1);
  CHECK(Distribution(vec({0.5, 0.5})).argmax() == 0);
}

TEST_CASE("cosine similarity examples") {
  const Vector a = vec({0.3, -2, 5});
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine_similarity(vec({1, 1}), vec({1, 0})) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK_THROWS_WITH_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), "zero vector", Error);
  CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), Error);
}

TEST_CASE("cosine similarity is exactly symmetric") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Vector a(7), b(7);
    for (double& v : a.reshaped()) v = g(rng);
    for (double& v : b.reshaped()) v = g(rng);
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
  }
}

TEST_CASE("sym_eigen examples") {
  const auto id = sym_eigen(Matrix::Identity(3, 3));
  CHECK(id.values.isApprox(Vector::Ones(3)));

  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3, 1, 2;
  const auto e = sym_eigen(d);
  CHECK(e.values[0] == doctest::Approx(1.0));
  CHECK(e.values[1] == doctest::Approx(2.0));
  CHECK(e.values[2] == doctest::Approx(3.0));

  CHECK_THROWS_AS(sym_eigen(Matrix::Zero(2, 3)), Error);
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(sym_eigen(asym), Error);
}

TEST_CASE("sym_eigen residual, orthonormality and reconstruction") {
  std::mt19937_64 rng(5);
  for (int n : {1, 2, 5, 10, 17, 32}) {
    const Matrix m = random_symmetric(n, rng);
    const auto e = sym_eigen(m);
    for (int i = 1; i < n; ++i) CHECK(e.values[i - 1] <= e.values[i]);
    for (int i = 0; i < n; ++i)
      CHECK((m * e.vectors.col(i) - e.values[i] * e.vectors.col(i)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - m).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("sym_eigen works in single precision") {
  Eigen::Matrix2f m;
  m << 2, 1, 1, 2;
  const auto e = sym_eigen(m);
  CHECK(e.values[0] == doctest::Approx(1.0f).epsilon(1e-5));
  CHECK(e.values[1] == doctest::Approx(3.0f).epsilon(1e-5));
}

TEST_CASE("kmeans trivial cases") {
  Matrix pts(5, 2);
  pts << 0, 0, 1, 0, 5, 5, 9, 1, 3, 3;
  for (int a : kmeans(pts, 1, 7)) CHECK(a == 0);
  const auto each = kmeans(pts, 5, 7);
  CHECK(std::set<int>(each.begin(), each.end()).size() == 5);
  CHECK_THROWS_AS(kmeans(pts, 6, 7), Error);
  CHECK_THROWS_AS(kmeans(pts, 0, 7), Error);
}

TEST_CASE("kmeans recovers the minimum-SSE 2-partition of two planted groups") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix pts(20, 2);
  for (int i = 0; i < 20; ++i) {
    const double c = i < 10 ? 0.0 : 10.0;
    pts(i, 0) = c + g(rng);
    pts(i, 1) = c + g(rng);
  }
  // Exhaustive oracle over every 2-partition (point 0 fixed to side 0).
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_assign;
  for (std::uint32_t mask = 0; mask < (1u << 19); ++mask) {
    std::vector<int> a(20, 0);
    for (int i = 1; i < 20; ++i) a[static_cast<std::size_t>(i)] = (mask >> (i - 1)) & 1u;
    const double s = sse(pts, a, 2);
    if (s < best) {
      best = s;
      best_assign = a;
    }
  }
  const auto got = kmeans(pts, 2, 1);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      CHECK((got[static_cast<std::size_t>(i)] == got[static_cast<std::size_t>(j)]) ==
            (best_assign[static_cast<std::size_t>(i)] == best_assign[static_cast<std::size_t>(j)]));
  for (int i = 0; i < 20; ++i) CHECK((best_assign[static_cast<std::size_t>(i)] == best_assign[0]) == (i < 10));
}

TEST_CASE("kmeans is deterministic and leaves no cluster empty") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix pts(40, 3);
  for (double& v : pts.reshaped()) v = u(rng);
  for (int k = 1; k <= 8; ++k) {
    const auto a = kmeans(pts, k, 99);
    CHECK(a == kmeans(pts, k, 99));
    std::set<int> used(a.begin(), a.end());
    CHECK(static_cast<int>(used.size()) == k);
  }
  // Duplicate points force the empty-cluster repair.
  Matrix dup = Matrix::Zero(6, 2);
  dup(5, 0) = 1.0;
  const auto a = kmeans(dup, 3, 4);
  CHECK(std::set<int>(a.begin(), a.end()).size() == 3);
}

TEST_CASE("finite_diff_grad examples") {
  const Vector g1 = finite_diff_grad([](const Vector& x) { return x.squaredNorm(); }, vec({1, 2}), 1e-5);
  CHECK(g1[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g1[1] == doctest::Approx(4.0).epsilon(1e-8));
  const Vector g2 = finite_diff_grad([](const Vector&) { return 3.0; }, vec({1, 2, 3}), 1e-5);
  CHECK(g2.cwiseAbs().maxCoeff() == 0.0);
  const Vector g3 = finite_diff_grad([](const Vector& x) { return x[0] * x[1]; }, vec({3, 5}), 1e-5);
  CHECK(g3[0] == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(g3[1] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
