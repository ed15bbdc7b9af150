#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/gram.hpp"
#include "ranova/groups.hpp"
#include "ranova/kernels.hpp"

namespace ranova {

// A regression sample: design matrix X (one row per observation) and
// response vector Y.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;

  Eigen::Index n() const noexcept { return Y.size(); }
  int d() const noexcept { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() != Y.size())
      throw argument_error("dataset: " + std::to_string(X.rows()) +
                           " design rows vs " + std::to_string(Y.size()) +
                           " responses");
    if (X.rows() < 1 || X.cols() < 1) throw argument_error("dataset: empty");
    if (!X.allFinite() || !Y.allFinite())
      throw validation_error("dataset: non-finite value");
  }

  Dataset rows(const std::vector<int>& idx) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    out.Y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
      out.Y[static_cast<Eigen::Index>(i)] = Y[idx[i]];
    }
    return out;
  }
};

// A fitted sparse ANOVA metamodel:
//
//   f(x) = f0 + sum_{v in groups} sum_i theta_v[i] k_v(x_v, X_train[i]_v)
//
// Only active groups are stored. The kernels vector holds the centered
// kernel of each input coordinate (index a-1 for coordinate a), which pins
// down both the kernel family and the input marginals.
struct Metamodel {
  double f0 = 0.0;
  std::vector<GroupIndex> groups;
  std::vector<Eigen::VectorXd> theta;
  Eigen::MatrixXd X_train;
  std::vector<CenteredKernel> kernels;
  int d_max = 0;

  int d() const noexcept { return static_cast<int>(X_train.cols()); }
  Eigen::Index n_train() const noexcept { return X_train.rows(); }

  std::vector<std::string> support_labels() const {
    std::vector<std::string> out;
    out.reserve(groups.size());
    for (const auto& v : groups) out.push_back(v.label());
    return out;
  }

  void validate() const {
    if (static_cast<std::size_t>(d()) != kernels.size())
      throw argument_error("model: kernel count does not match dimension");
    if (groups.size() != theta.size())
      throw argument_error("model: groups and coefficients misaligned");
    for (std::size_t j = 0; j < groups.size(); ++j) {
      if (groups[j].max_coordinate() > d())
        throw argument_error("model: group " + groups[j].label() + " exceeds dimension");
      if (theta[j].size() != n_train())
        throw argument_error("model: coefficient length mismatch for group " +
                             groups[j].label());
    }
  }
};

// Cross-kernel matrices between one evaluation design and the training
// design, cached per coordinate and per group so that scoring many models
// that share the same designs costs one kernel pass.
class CrossKernelCache {
 public:
  CrossKernelCache(Eigen::MatrixXd X_eval, const Eigen::MatrixXd& X_train,
                   const std::vector<CenteredKernel>& kernels)
      : X_eval_(std::move(X_eval)), X_train_(X_train), kernels_(kernels) {
    if (X_eval_.cols() != X_train_.cols())
      throw argument_error("predict: evaluation design has " +
                           std::to_string(X_eval_.cols()) +
                           " columns, training design has " +
                           std::to_string(X_train_.cols()));
    if (static_cast<std::size_t>(X_train_.cols()) != kernels_.size())
      throw argument_error("predict: kernel count does not match dimension");
    cross1_.resize(kernels_.size());
  }

  const Eigen::MatrixXd& cross1(int a) {
    if (a < 1 || a > static_cast<int>(kernels_.size()))
      throw argument_error("predict: coordinate out of range");
    auto& slot = cross1_[static_cast<std::size_t>(a - 1)];
    if (slot.size() == 0)
      slot = kernels_[static_cast<std::size_t>(a - 1)].cross0(X_eval_.col(a - 1),
                                                              X_train_.col(a - 1));
    return slot;
  }

  const Eigen::MatrixXd& group_cross(const GroupIndex& v) {
    auto it = group_.find(v);
    if (it != group_.end()) return it->second;
    Eigen::MatrixXd P = cross1(v.members().front());
    for (std::size_t i = 1; i < v.members().size(); ++i)
      P = P.cwiseProduct(cross1(v.members()[i]));
    return group_.emplace(v, std::move(P)).first->second;
  }

  // Per-group component values f_v(x) at the evaluation points; one column
  // per entry of `groups`.
  Eigen::MatrixXd components(const std::vector<GroupIndex>& groups,
                             const std::vector<Eigen::VectorXd>& theta) {
    Eigen::MatrixXd F(X_eval_.rows(), static_cast<Eigen::Index>(groups.size()));
    for (std::size_t j = 0; j < groups.size(); ++j)
      F.col(static_cast<Eigen::Index>(j)) = group_cross(groups[j]) * theta[j];
    return F;
  }

  Eigen::VectorXd predict(double f0, const std::vector<GroupIndex>& groups,
                          const std::vector<Eigen::VectorXd>& theta) {
    Eigen::VectorXd f = Eigen::VectorXd::Constant(X_eval_.rows(), f0);
    for (std::size_t j = 0; j < groups.size(); ++j)
      f += group_cross(groups[j]) * theta[j];
    return f;
  }

 private:
  Eigen::MatrixXd X_eval_;
  const Eigen::MatrixXd& X_train_;
  const std::vector<CenteredKernel>& kernels_;
  std::vector<Eigen::MatrixXd> cross1_;
  std::map<GroupIndex, Eigen::MatrixXd> group_;
};

inline Eigen::VectorXd predict(const Metamodel& model,
                               const Eigen::MatrixXd& X_eval) {
  model.validate();
  CrossKernelCache cache(X_eval, model.X_train, model.kernels);
  return cache.predict(model.f0, model.groups, model.theta);
}

// Component values f_v at the evaluation points, one column per active group.
inline Eigen::MatrixXd component_matrix(const Metamodel& model,
                                        const Eigen::MatrixXd& X_eval) {
  model.validate();
  CrossKernelCache cache(X_eval, model.X_train, model.kernels);
  return cache.components(model.groups, model.theta);
}

}  // namespace ranova
