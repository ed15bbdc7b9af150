#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/gram.hpp"
#include "ranova/model.hpp"

namespace ranova {

struct VarianceEstimate {
  std::vector<double> values;  // one per active group, nonnegative
  bool clamped = false;        // some tiny negative was truncated to 0
  std::string method;
};

// Variance of each fitted component under the input distribution, in closed
// form: Var(f_v) = theta_v^T Omega_v theta_v. The components are centered by
// construction, so no mean term appears. Omega is PSD up to roundoff; values
// more negative than the roundoff scale indicate a genuinely broken Omega
// and raise, anything else is clamped to zero.
inline VarianceEstimate variance_quadratic(const Metamodel& model,
                                           const std::vector<OmegaBundle>& omegas) {
  model.validate();
  VarianceEstimate out;
  out.method = "quadratic";
  out.values.reserve(model.groups.size());
  for (std::size_t j = 0; j < model.groups.size(); ++j) {
    const OmegaBundle* found = nullptr;
    for (const auto& o : omegas)
      if (o.group == model.groups[j]) {
        found = &o;
        break;
      }
    if (!found)
      throw argument_error("variance: no Omega matrix for group " +
                           model.groups[j].label());
    if (found->Omega.rows() != model.n_train())
      throw argument_error("variance: Omega size mismatch for group " +
                           model.groups[j].label());
    const Eigen::VectorXd& th = model.theta[j];
    double val = th.dot(found->Omega * th);
    double scale = th.squaredNorm() * found->Omega.norm();
    if (val < -1e-10 * std::max(1.0, scale))
      throw numerical_error("variance: quadratic form is negative",
                            model.groups[j].label());
    if (val < 0.0) {
      val = 0.0;
      out.clamped = true;
    }
    out.values.push_back(val);
  }
  return out;
}

// Sample-variance fallback: evaluates each component on the given design and
// takes the empirical variance with the n-1 denominator.
inline VarianceEstimate variance_empirical(const Metamodel& model,
                                           const Eigen::MatrixXd& X_eval) {
  if (X_eval.rows() < 2)
    throw argument_error("variance: need at least 2 evaluation points");
  Eigen::MatrixXd F = component_matrix(model, X_eval);
  VarianceEstimate out;
  out.method = "empirical";
  out.values.reserve(static_cast<std::size_t>(F.cols()));
  const double m = static_cast<double>(F.rows());
  for (Eigen::Index c = 0; c < F.cols(); ++c) {
    double mean = F.col(c).mean();
    out.values.push_back((F.col(c).array() - mean).square().sum() / (m - 1.0));
  }
  return out;
}

struct SobolReport {
  std::vector<GroupIndex> groups;
  std::vector<double> variances;
  double total = 0.0;
  std::vector<double> indices;  // S_v = Var(f_v) / total, sums to 1
  Eigen::VectorXd global;       // G_a = sum over groups containing a
  std::string method;
  bool clamped = false;

  // Index of a group, 0 when the group carries no fitted component.
  double index_for(const GroupIndex& v) const {
    for (std::size_t j = 0; j < groups.size(); ++j)
      if (groups[j] == v) return indices[j];
    return 0.0;
  }
};

inline SobolReport sobol_indices(const std::vector<GroupIndex>& groups,
                                 const std::vector<double>& variances, int d,
                                 const std::string& method = "") {
  if (groups.size() != variances.size())
    throw argument_error("sobol: groups and variances misaligned");
  SobolReport rep;
  rep.groups = groups;
  rep.variances = variances;
  rep.method = method;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (variances[j] < 0.0)
      throw argument_error("sobol: negative variance for group " + groups[j].label());
    if (groups[j].max_coordinate() > d)
      throw argument_error("sobol: group " + groups[j].label() +
                           " exceeds dimension " + std::to_string(d));
    rep.total += variances[j];
  }
  if (!(rep.total > 0.0))
    throw degenerate_model_error("sobol: every component variance is zero");
  rep.indices.reserve(groups.size());
  for (double v : variances) rep.indices.push_back(v / rep.total);
  rep.global = Eigen::VectorXd::Zero(d);
  for (std::size_t j = 0; j < groups.size(); ++j)
    for (int a : groups[j].members()) rep.global[a - 1] += rep.indices[j];
  return rep;
}

inline SobolReport sobol_quadratic(const Metamodel& model,
                                   const std::vector<OmegaBundle>& omegas) {
  VarianceEstimate est = variance_quadratic(model, omegas);
  SobolReport rep = sobol_indices(model.groups, est.values, model.d(), est.method);
  rep.clamped = est.clamped;
  return rep;
}

inline SobolReport sobol_empirical(const Metamodel& model,
                                   const Eigen::MatrixXd& X_eval) {
  VarianceEstimate est = variance_empirical(model, X_eval);
  return sobol_indices(model.groups, est.values, model.d(), est.method);
}

}  // namespace ranova
