#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/groups.hpp"
#include "ranova/quadrature.hpp"

namespace ranova {

enum class KernelType { brownian, matern, gaussian };

// One of the three reproducing kernels used on each coordinate. All are
// defined on the marginal's support (by default [0,1]) and contain the
// constants, so centering below strips a genuine one-dimensional subspace.
struct KernelFamily {
  KernelType type = KernelType::matern;

  static KernelFamily brownian() { return {KernelType::brownian}; }
  static KernelFamily matern() { return {KernelType::matern}; }
  static KernelFamily gaussian() { return {KernelType::gaussian}; }

  static KernelFamily parse(const std::string& name) {
    if (name == "brownian") return brownian();
    if (name == "matern") return matern();
    if (name == "gaussian") return gaussian();
    throw argument_error("kernel: unknown family '" + name + "'");
  }

  std::string name() const {
    switch (type) {
      case KernelType::brownian: return "brownian";
      case KernelType::matern: return "matern";
      case KernelType::gaussian: return "gaussian";
    }
    return "?";
  }

  friend bool operator==(const KernelFamily&, const KernelFamily&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// k(x,y) for one coordinate. Throws domain_error outside the support.
//   brownian: 1 + min(x,y)
//   matern:   (1 + 2|x-y|) exp(-2|x-y|)
//   gaussian: exp(-(x-y)^2)
inline double eval_base_kernel(const KernelFamily& family, double x, double y,
                               const Interval& support = {}) {
  if (!(x >= support.lo && x <= support.hi && y >= support.lo && y <= support.hi))
    throw domain_error("kernel: point outside support [" +
                       std::to_string(support.lo) + "," +
                       std::to_string(support.hi) + "]");
  switch (family.type) {
    case KernelType::brownian:
      return 1.0 + std::min(x, y);
    case KernelType::matern: {
      double r = 2.0 * std::abs(x - y);
      return (1.0 + r) * std::exp(-r);
    }
    case KernelType::gaussian: {
      double r = x - y;
      return std::exp(-r * r);
    }
  }
  throw argument_error("kernel: unknown family");
}

// Centered version of a base kernel with respect to a marginal:
//
//   k0(x,y) = k(x,y) - E_U[k(x,U)] E_U[k(y,U)] / E_{U,V}[k(U,V)]
//
// so that E_U[k0(x,U)] = 0 for every x. Expectations use the marginal's
// node/weight table. The per-node means and the grand mean are computed once
// at construction; with that convention the centering identity holds at the
// table nodes up to pure roundoff, independent of how well the table
// integrates the kernel.
class CenteredKernel {
 public:
  CenteredKernel(KernelFamily base, MarginalDistribution marginal)
      : base_(base), marginal_(std::move(marginal)) {
    const auto& u = marginal_.nodes();
    const auto& w = marginal_.weights();
    const std::size_t q = u.size();
    node_means_.assign(q, 0.0);
    Interval sup{marginal_.lo(), marginal_.hi()};
    // Symmetric O(q^2) pass.
    for (std::size_t i = 0; i < q; ++i) {
      for (std::size_t j = i; j < q; ++j) {
        double kij = eval_base_kernel(base_, u[i], u[j], sup);
        node_means_[i] += w[j] * kij;
        if (j != i) node_means_[j] += w[i] * kij;
      }
    }
    grand_mean_ = 0.0;
    for (std::size_t i = 0; i < q; ++i) grand_mean_ += w[i] * node_means_[i];
    if (!(grand_mean_ > 0.0))
      throw construction_error("centered kernel: grand mean " +
                               std::to_string(grand_mean_) + " is not positive");
  }

  const KernelFamily& base() const noexcept { return base_; }
  const MarginalDistribution& marginal() const noexcept { return marginal_; }
  double grand_mean() const noexcept { return grand_mean_; }
  const std::vector<double>& node_means() const noexcept { return node_means_; }

  // E_U[k(x,U)]
  double mean_at(double x) const {
    Interval sup{marginal_.lo(), marginal_.hi()};
    const auto& u = marginal_.nodes();
    const auto& w = marginal_.weights();
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
      s += w[i] * eval_base_kernel(base_, x, u[i], sup);
    return s;
  }

  double eval0(double x, double y) const {
    Interval sup{marginal_.lo(), marginal_.hi()};
    return eval_base_kernel(base_, x, y, sup) -
           mean_at(x) * mean_at(y) / grand_mean_;
  }

  Eigen::VectorXd means_for(const Eigen::VectorXd& xs) const {
    Eigen::VectorXd m(xs.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i) m[i] = mean_at(xs[i]);
    return m;
  }

  // Centered Gram matrix of one coordinate's sample values.
  Eigen::MatrixXd gram0(const Eigen::VectorXd& xs) const {
    const Eigen::Index n = xs.size();
    Interval sup{marginal_.lo(), marginal_.hi()};
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        K(i, j) = eval_base_kernel(base_, xs[i], xs[j], sup);
        K(j, i) = K(i, j);
      }
    Eigen::VectorXd m = means_for(xs);
    K.noalias() -= (m * m.transpose()) / grand_mean_;
    return K;
  }

  // Centered cross matrix, rows indexed by xa, columns by xb.
  Eigen::MatrixXd cross0(const Eigen::VectorXd& xa, const Eigen::VectorXd& xb) const {
    Interval sup{marginal_.lo(), marginal_.hi()};
    Eigen::MatrixXd K(xa.size(), xb.size());
    for (Eigen::Index i = 0; i < xa.size(); ++i)
      for (Eigen::Index j = 0; j < xb.size(); ++j)
        K(i, j) = eval_base_kernel(base_, xa[i], xb[j], sup);
    Eigen::VectorXd ma = means_for(xa), mb = means_for(xb);
    K.noalias() -= (ma * mb.transpose()) / grand_mean_;
    return K;
  }

  // Second-moment matrix Omega with entries E_U[k0(U,x_i) k0(U,x_j)],
  // assembled as B^T B with B_{q,i} = sqrt(w_q) k0(u_q, x_i); the product
  // form keeps it symmetric positive semidefinite by construction.
  Eigen::MatrixXd omega1(const Eigen::VectorXd& xs) const {
    const auto& u = marginal_.nodes();
    const auto& w = marginal_.weights();
    const Eigen::Index q = static_cast<Eigen::Index>(u.size());
    const Eigen::Index n = xs.size();
    Interval sup{marginal_.lo(), marginal_.hi()};
    Eigen::VectorXd m = means_for(xs);
    Eigen::MatrixXd B(q, n);
    for (Eigen::Index a = 0; a < q; ++a) {
      double sw = std::sqrt(w[static_cast<std::size_t>(a)]);
      double ua = u[static_cast<std::size_t>(a)];
      double mu_a = node_means_[static_cast<std::size_t>(a)];
      for (Eigen::Index i = 0; i < n; ++i)
        B(a, i) = sw * (eval_base_kernel(base_, ua, xs[i], sup) -
                        mu_a * m[i] / grand_mean_);
    }
    return B.transpose() * B;
  }

 private:
  KernelFamily base_;
  MarginalDistribution marginal_;
  std::vector<double> node_means_;
  double grand_mean_ = 0.0;
};

inline CenteredKernel center_kernel(const KernelFamily& base,
                                    const MarginalDistribution& marginal) {
  return CenteredKernel(base, marginal);
}

// Product kernel of a group: prod_{a in v} k0_a(x_a, y_a). `kernels` holds
// one centered kernel per coordinate, index a-1 for coordinate a.
inline double eval_anova_kernel(const std::vector<CenteredKernel>& kernels,
                                const GroupIndex& v, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y) {
  if (v.order() == 0) throw argument_error("anova kernel: empty group");
  const int d = static_cast<int>(kernels.size());
  if (v.max_coordinate() > d)
    throw argument_error("anova kernel: group " + v.label() + " exceeds dimension " + std::to_string(d));
  if (x.size() != d || y.size() != d)
    throw argument_error("anova kernel: point dimension mismatch");
  double p = 1.0;
  for (int a : v.members())
    p *= kernels[static_cast<std::size_t>(a - 1)].eval0(x[a - 1], y[a - 1]);
  return p;
}

}  // namespace ranova
