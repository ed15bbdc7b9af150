#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/rng.hpp"

namespace ranova {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule on [-1,1]. Nodes are roots of P_q found by Newton from
// the Chebyshev initial guess; converges in a handful of iterations for any
// practical q.
inline QuadratureRule gauss_legendre(int q) {
  if (q < 1 || q > 100000) throw argument_error("gauss_legendre: bad node count " + std::to_string(q));
  QuadratureRule rule;
  rule.nodes.assign(static_cast<std::size_t>(q), 0.0);
  rule.weights.assign(static_cast<std::size_t>(q), 0.0);
  const int half = (q + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // Recurrence for P_q(x) and P_{q-1}(x).
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= q; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = q * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(q - 1 - i)] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(q - 1 - i)] = w;
  }
  return rule;
}

// A one-dimensional input distribution, represented for all downstream code
// as a finite node/weight table on its support. Closed-form densities use a
// Gauss-Legendre table; sampler-backed distributions materialize a fixed set
// of equally weighted draws, which keeps every later expectation
// deterministic given the construction seed.
class MarginalDistribution {
 public:
  enum class Kind { uniform01, table };

  static MarginalDistribution uniform01(int quad_nodes = 256) {
    if (quad_nodes < 2) throw argument_error("uniform01: need at least 2 quadrature nodes");
    QuadratureRule gl = gauss_legendre(quad_nodes);
    MarginalDistribution m;
    m.kind_ = Kind::uniform01;
    m.quad_nodes_ = quad_nodes;
    m.lo_ = 0.0;
    m.hi_ = 1.0;
    m.nodes_.resize(gl.nodes.size());
    m.weights_.resize(gl.weights.size());
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      m.nodes_[i] = 0.5 * (gl.nodes[i] + 1.0);
      m.weights_[i] = 0.5 * gl.weights[i];
    }
    return m;
  }

  static MarginalDistribution from_table(double lo, double hi,
                                         std::vector<double> nodes,
                                         std::vector<double> weights) {
    MarginalDistribution m;
    m.kind_ = Kind::table;
    m.lo_ = lo;
    m.hi_ = hi;
    m.nodes_ = std::move(nodes);
    m.weights_ = std::move(weights);
    m.validate();
    return m;
  }

  // Materializes `samples` seeded draws as an equal-weight table. The
  // sampler must return points inside [lo,hi].
  static MarginalDistribution from_sampler(
      double lo, double hi, const std::function<double(RandomStream&)>& sampler,
      std::uint64_t seed, int samples = 100000) {
    if (samples < 2) throw argument_error("from_sampler: need at least 2 samples");
    RandomStream rs(seed);
    std::vector<double> nodes(static_cast<std::size_t>(samples));
    for (auto& x : nodes) x = sampler(rs);
    std::vector<double> weights(static_cast<std::size_t>(samples),
                                1.0 / samples);
    return from_table(lo, hi, std::move(nodes), std::move(weights));
  }

  Kind kind() const noexcept { return kind_; }
  int quad_node_count() const noexcept { return quad_nodes_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  bool contains(double x) const noexcept { return x >= lo_ && x <= hi_; }

  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * f(nodes_[i]);
    return s;
  }

 private:
  void validate() const {
    if (!(lo_ < hi_)) throw construction_error("marginal: empty support interval");
    if (nodes_.size() != weights_.size() || nodes_.empty())
      throw construction_error("marginal: node/weight size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i]) || !contains(nodes_[i]))
        throw construction_error("marginal: node outside support");
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
        throw construction_error("marginal: negative or non-finite weight");
      sum += weights_[i];
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw construction_error("marginal: weights sum to " + std::to_string(sum) + ", expected 1");
  }

  Kind kind_ = Kind::table;
  int quad_nodes_ = 0;
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

}  // namespace ranova
