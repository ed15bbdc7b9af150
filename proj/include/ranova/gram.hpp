#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/groups.hpp"
#include "ranova/kernels.hpp"

namespace ranova {

// Symmetric jitter: if the smallest eigenvalue of a raw group Gram falls
// below rel * trace/n, the whole spectrum is shifted up so the minimum lands
// exactly there. Eigenvectors are unchanged, so K, its root and its
// eigensystem stay mutually consistent.
struct JitterPolicy {
  double rel = 1e-8;
};

// Everything the solver needs about one group: the (jittered) Gram matrix,
// its symmetric PSD square root, and the eigendecomposition both were built
// from. Immutable after construction; safe to share across threads.
struct GramBundle {
  GroupIndex group;
  Eigen::MatrixXd K;
  Eigen::MatrixXd K_sqrt;
  Eigen::VectorXd eigenvalues;   // nonincreasing, clamped at 0
  Eigen::MatrixXd eigenvectors;  // columns, aligned with eigenvalues
  double jitter = 0.0;

  Eigen::Index n() const noexcept { return K.rows(); }
};

struct OmegaBundle {
  GroupIndex group;
  Eigen::MatrixXd Omega;
};

namespace detail {

inline GramBundle finish_gram(GroupIndex group, const Eigen::MatrixXd& raw,
                              const JitterPolicy& policy) {
  const Eigen::Index n = raw.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(raw);
  if (eig.info() != Eigen::Success)
    throw numerical_error("gram: eigendecomposition failed", group.label());

  GramBundle b;
  b.group = std::move(group);
  const double floor = policy.rel * raw.trace() / static_cast<double>(n);
  const double min_eig = eig.eigenvalues().minCoeff();
  b.jitter = std::max(0.0, floor - min_eig);

  // Reverse to nonincreasing order and clamp tiny negatives left by roundoff.
  b.eigenvalues = eig.eigenvalues().reverse();
  b.eigenvectors = eig.eigenvectors().rowwise().reverse();
  b.eigenvalues.array() += b.jitter;
  b.eigenvalues = b.eigenvalues.cwiseMax(0.0);

  b.K = b.eigenvectors * b.eigenvalues.asDiagonal() * b.eigenvectors.transpose();
  b.K_sqrt = b.eigenvectors * b.eigenvalues.cwiseSqrt().asDiagonal() *
             b.eigenvectors.transpose();
  return b;
}

}  // namespace detail

// Per-design cache of coordinate-level matrices. Group-level Grams and Omega
// matrices are Hadamard products of the cached univariate ones, so building
// all groups of a design costs d dense kernel passes, not one per group.
class GramCache {
 public:
  GramCache(Eigen::MatrixXd X, std::vector<CenteredKernel> kernels)
      : X_(std::move(X)), kernels_(std::move(kernels)) {
    if (X_.rows() < 1) throw argument_error("gram: empty design");
    if (static_cast<std::size_t>(X_.cols()) != kernels_.size())
      throw argument_error("gram: design has " + std::to_string(X_.cols()) +
                           " columns but " + std::to_string(kernels_.size()) +
                           " kernels were given");
    for (Eigen::Index a = 0; a < X_.cols(); ++a) {
      const auto& m = kernels_[static_cast<std::size_t>(a)].marginal();
      for (Eigen::Index i = 0; i < X_.rows(); ++i)
        if (!m.contains(X_(i, a)))
          throw domain_error("gram: design point row " + std::to_string(i + 1) +
                             ", coordinate " + std::to_string(a + 1) +
                             " outside the marginal support");
    }
    gram1_.resize(kernels_.size());
    omega1_.resize(kernels_.size());
  }

  Eigen::Index n() const noexcept { return X_.rows(); }
  int d() const noexcept { return static_cast<int>(X_.cols()); }
  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const std::vector<CenteredKernel>& kernels() const noexcept { return kernels_; }

  // Univariate centered Gram of coordinate a (1-based).
  const Eigen::MatrixXd& gram1(int a) {
    check_coord(a);
    auto& slot = gram1_[static_cast<std::size_t>(a - 1)];
    if (slot.size() == 0)
      slot = kernels_[static_cast<std::size_t>(a - 1)].gram0(X_.col(a - 1));
    return slot;
  }

  const Eigen::MatrixXd& omega1(int a) {
    check_coord(a);
    auto& slot = omega1_[static_cast<std::size_t>(a - 1)];
    if (slot.size() == 0)
      slot = kernels_[static_cast<std::size_t>(a - 1)].omega1(X_.col(a - 1));
    return slot;
  }

  Eigen::MatrixXd raw_gram(const GroupIndex& v) {
    check_group(v);
    Eigen::MatrixXd K = gram1(v.members().front());
    for (std::size_t i = 1; i < v.members().size(); ++i)
      K = K.cwiseProduct(gram1(v.members()[i]));
    return K;
  }

  GramBundle gram(const GroupIndex& v, const JitterPolicy& policy = {}) {
    return detail::finish_gram(v, raw_gram(v), policy);
  }

  OmegaBundle omega(const GroupIndex& v) {
    check_group(v);
    Eigen::MatrixXd O = omega1(v.members().front());
    for (std::size_t i = 1; i < v.members().size(); ++i)
      O = O.cwiseProduct(omega1(v.members()[i]));
    return {v, std::move(O)};
  }

  std::vector<GramBundle> grams(const std::vector<GroupIndex>& groups,
                                const JitterPolicy& policy = {}) {
    std::vector<GramBundle> out;
    out.reserve(groups.size());
    for (const auto& v : groups) out.push_back(gram(v, policy));
    return out;
  }

  std::vector<OmegaBundle> omegas(const std::vector<GroupIndex>& groups) {
    std::vector<OmegaBundle> out;
    out.reserve(groups.size());
    for (const auto& v : groups) out.push_back(omega(v));
    return out;
  }

 private:
  void check_coord(int a) const {
    if (a < 1 || a > d())
      throw argument_error("gram: coordinate " + std::to_string(a) + " out of range");
  }
  void check_group(const GroupIndex& v) const {
    if (v.order() == 0) throw argument_error("gram: empty group");
    if (v.max_coordinate() > d())
      throw argument_error("gram: group " + v.label() + " exceeds dimension " + std::to_string(d()));
  }

  Eigen::MatrixXd X_;
  std::vector<CenteredKernel> kernels_;
  std::vector<Eigen::MatrixXd> gram1_;
  std::vector<Eigen::MatrixXd> omega1_;
};

inline GramBundle build_gram(const Eigen::MatrixXd& X, const GroupIndex& v,
                             const std::vector<CenteredKernel>& kernels,
                             const JitterPolicy& policy = {}) {
  GramCache cache(X, kernels);
  return cache.gram(v, policy);
}

inline OmegaBundle build_omega(const Eigen::MatrixXd& X, const GroupIndex& v,
                               const std::vector<CenteredKernel>& kernels) {
  GramCache cache(X, kernels);
  return cache.omega(v);
}

// Data-driven scale of one group's empirical kernel operator: the smallest
// t > 0 with
//
//   sqrt( (5/n) sum_k min(t^2, eig_k(K/n)) ) <= delta t^2.
//
// The left side grows like t near 0 and is eventually constant, the right
// side is quadratic, so the crossing is unique; we bisect after expanding
// the upper end until the inequality holds there.
inline double estimate_nu(const GramBundle& bundle, double delta = 1.0) {
  if (!(delta > 0.0)) throw argument_error("estimate_nu: delta must be positive");
  const double n = static_cast<double>(bundle.n());
  Eigen::VectorXd omega_hat = bundle.eigenvalues / n;
  const double top = omega_hat.maxCoeff();
  if (!(top > 0.0)) return 0.0;

  auto qhat = [&](double t) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < omega_hat.size(); ++k)
      s += std::min(t * t, omega_hat[k]);
    return std::sqrt(5.0 / n * s);
  };
  auto ok = [&](double t) { return qhat(t) <= delta * t * t; };

  double hi = std::max(1.0, std::sqrt(top));
  for (int i = 0; i < 200 && !ok(hi); ++i) hi *= 2.0;
  if (!ok(hi)) throw numerical_error("estimate_nu: no admissible scale found", bundle.group.label());
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace ranova
