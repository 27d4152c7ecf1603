#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tla {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Probability vector over class labels. Entries lie in [0,1] and sum to one.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(Vector probs);

  static Distribution uniform(Eigen::Index classes);

  const Vector& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }
  double operator[](Eigen::Index i) const { return probs_[i]; }

  /// Index of the largest probability; ties go to the lowest index.
  Eigen::Index argmax() const;

  friend bool operator==(const Distribution& a, const Distribution& b) {
    return a.probs_.size() == b.probs_.size() && a.probs_ == b.probs_;
  }

 private:
  Vector probs_;
};

inline constexpr double kDistributionTolerance = 1e-9;

inline Distribution::Distribution(Vector probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw Error("empty distribution");
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p) || p < -kDistributionTolerance || p > 1.0 + kDistributionTolerance)
      throw Error("distribution entry out of [0,1] at index " + std::to_string(i));
    probs_[i] = std::clamp(p, 0.0, 1.0);
  }
  if (std::abs(probs_.sum() - 1.0) > kDistributionTolerance)
    throw Error("distribution does not sum to 1");
}

inline Distribution Distribution::uniform(Eigen::Index classes) {
  if (classes < 1) throw Error("empty distribution");
  return Distribution(Vector::Constant(classes, 1.0 / static_cast<double>(classes)));
}

inline Eigen::Index Distribution::argmax() const {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs_.size(); ++i)
    if (probs_[i] > probs_[best]) best = i;
  return best;
}

/// Max-shifted softmax. Adding a constant to every logit leaves the result unchanged.
template <typename Derived>
Distribution softmax(const Eigen::MatrixBase<Derived>& logits) {
  if (logits.size() == 0) throw Error("empty logits");
  using Scalar = typename Derived::Scalar;
  const auto flat = logits.reshaped();
  if (!flat.allFinite()) throw Error("non-finite logits");
  const Scalar shift = flat.maxCoeff();
  Vector e = (flat.array() - shift).exp().template cast<double>().matrix();
  e /= e.sum();
  return Distribution(std::move(e));
}

/// dot(a,b) / (|a| |b|), clamped to [-1,1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw Error("cosine_similarity: length mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) throw Error("zero vector");
  // Multiplication commutes bit-exactly, so sim(a,b) == sim(b,a).
  const Scalar c = a.reshaped().dot(b.reshaped()) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;   // ascending
  MatrixX<Scalar> vectors;  // column i pairs with values[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
/// drops below 1e-12 (scaled by the matrix norm when it exceeds one).
/// Eigenvalues are returned in ascending order with orthonormal eigenvectors.
template <typename Derived>
SymmetricEigen<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& input) {
  using Scalar = typename Derived::Scalar;
  if (input.rows() != input.cols()) throw Error("sym_eigen: matrix is not square");
  const Eigen::Index n = input.rows();
  MatrixX<Scalar> a = input;
  if (!a.allFinite()) throw Error("sym_eigen: non-finite entries");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * std::max(Scalar(1), a.cwiseAbs().maxCoeff()))
    throw Error("sym_eigen: matrix is not symmetric");
  a = (a + a.transpose()) / Scalar(2);

  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);
  const Scalar tol = Scalar(1e-12) * std::max(Scalar(1), a.norm());
  auto off_norm = [&] {
    Scalar s = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off_norm() >= tol; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p);
          const Scalar vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values[i] = a(src, src);
    out.vectors.col(i) = v.col(src);
  }
  return out;
}

/// Lloyd's k-means over the rows of `points`.
///
/// Seeding is k-means++ (squared-distance sampling) from a generator seeded
/// with `seed`. A cluster that empties takes the point farthest from its
/// current centroid. Stops after convergence or 100 iterations.
std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed);

/// Central-difference gradient estimate of a scalar function.
template <typename F>
Vector finite_diff_grad(F&& f, const Vector& x, double eps) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(static_cast<const Vector&>(probe));
    probe[i] = x[i] - eps;
    const double down = f(static_cast<const Vector&>(probe));
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

/// 64-bit FNV-1a; used for stable content hashes in reports.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace tla
