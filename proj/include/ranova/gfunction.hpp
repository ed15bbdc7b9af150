#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/groups.hpp"
#include "ranova/rng.hpp"

namespace ranova {

// Standard multiplicative test function on [0,1]^d:
//
//   g(x) = prod_a (|4 x_a - 2| + c_a) / (1 + c_a),   c_a >= 0.
//
// Small c_a make a coordinate influential, large c_a make it inert, and all
// Sobol indices are available in closed form, which is what makes it a good
// benchmark for sensitivity estimation.
inline double g_function(const Eigen::VectorXd& x, const Eigen::VectorXd& c) {
  if (x.size() != c.size())
    throw argument_error("g_function: dimension mismatch");
  double p = 1.0;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    if (c[a] < 0.0) throw argument_error("g_function: negative coefficient");
    p *= (std::abs(4.0 * x[a] - 2.0) + c[a]) / (1.0 + c[a]);
  }
  return p;
}

inline Eigen::VectorXd g_function(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& c) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd xi = X.row(i);
    out[i] = g_function(xi, c);
  }
  return out;
}

// Exact Sobol indices of g for uniform inputs. Per coordinate the factor
// |4U - 2| has mean 1 and variance 1/3, so the component variance of a group
// v is D_v = prod_{a in v} (1/3) / (1 + c_a)^2 and the total variance is
// D = prod_a (1 + D_a) - 1. Returns every nonempty subset of {1..d} paired
// with S_v = D_v / D, in canonical group order.
inline std::vector<std::pair<GroupIndex, double>> analytic_sobol(
    const Eigen::VectorXd& c) {
  const int d = static_cast<int>(c.size());
  if (d < 1) throw argument_error("analytic_sobol: empty coefficient vector");
  if (d > 25)
    throw argument_error("analytic_sobol: 2^d subsets is impractical for d = " +
                         std::to_string(d));
  Eigen::VectorXd da(d);
  double total = 1.0;
  for (int a = 0; a < d; ++a) {
    if (c[a] < 0.0) throw argument_error("analytic_sobol: negative coefficient");
    da[a] = (1.0 / 3.0) / ((1.0 + c[a]) * (1.0 + c[a]));
    total *= 1.0 + da[a];
  }
  total -= 1.0;
  if (!(total > 0.0))
    throw numerical_error("analytic_sobol: total variance is zero");

  std::vector<std::pair<GroupIndex, double>> out;
  auto groups = enumerate_groups(d, d);
  out.reserve(groups.size());
  for (auto& v : groups) {
    double dv = 1.0;
    for (int a : v.members()) dv *= da[a - 1];
    out.emplace_back(std::move(v), dv / total);
  }
  return out;
}

// Latin hypercube design on [0,1]^d: each column is an independent random
// permutation of the n strata with a uniform draw inside each stratum.
inline Eigen::MatrixXd lhs_sample(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw argument_error("lhs_sample: need n >= 1 and d >= 1");
  RandomStream rs(seed);
  Eigen::MatrixXd X(n, d);
  for (int a = 0; a < d; ++a) {
    std::vector<int> perm = rs.permutation(n);
    for (int i = 0; i < n; ++i)
      X(i, a) = (perm[static_cast<std::size_t>(i)] + rs.uniform()) / n;
  }
  return X;
}

}  // namespace ranova
