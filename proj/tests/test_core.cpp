#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ranova/groups.hpp"
#include "ranova/kernels.hpp"
#include "ranova/quadrature.hpp"
#include "ranova/rng.hpp"

using namespace ranova;

TEST_CASE("random streams are deterministic and well behaved") {
  RandomStream a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    double u = a.uniform();
    REQUIRE(u == b.uniform());
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  bool differs = false;
  RandomStream a2(42);
  for (int i = 0; i < 10; ++i) differs |= a2.uniform() != c.uniform();
  REQUIRE(differs);

  const int n = 100000;
  RandomStream rs(7);
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rs.normal();
    mean += z;
    m2 += z * z;
  }
  mean /= n;
  m2 /= n;
  REQUIRE(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("permutations are permutations and seeds derive independently") {
  RandomStream rs(11);
  auto p = rs.permutation(50);
  std::set<int> seen(p.begin(), p.end());
  REQUIRE(seen.size() == 50);
  REQUIRE(*seen.begin() == 0);
  REQUIRE(*seen.rbegin() == 49);

  std::set<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t i = 0; i < 20; ++i) seeds.insert(derive_seed(1, s, i));
  REQUIRE(seeds.size() == 400);
  REQUIRE(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("Gauss-Legendre integrates polynomials to machine precision") {
  const int q = 5;
  auto rule = gauss_legendre(q);
  REQUIRE(rule.nodes.size() == 5);
  double wsum = 0.0;
  for (double w : rule.weights) wsum += w;
  REQUIRE_THAT(wsum, Catch::Matchers::WithinAbs(2.0, 1e-14));
  REQUIRE(std::is_sorted(rule.nodes.begin(), rule.nodes.end()));

  // Exact through degree 2q-1 = 9.
  for (int k = 0; k <= 9; ++k) {
    double got = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
      got += rule.weights[i] * std::pow(rule.nodes[i], k);
    double want = (k % 2 == 0) ? 2.0 / (k + 1) : 0.0;
    REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-13));
  }

  auto rule20 = gauss_legendre(20);
  double ex = 0.0;
  for (std::size_t i = 0; i < rule20.nodes.size(); ++i)
    ex += rule20.weights[i] * std::exp(rule20.nodes[i]);
  REQUIRE_THAT(ex, Catch::Matchers::WithinAbs(std::exp(1.0) - std::exp(-1.0), 1e-13));

  REQUIRE_THROWS_AS(gauss_legendre(0), argument_error);
}

TEST_CASE("uniform01 marginal is a probability table on (0,1)") {
  auto m = MarginalDistribution::uniform01(256);
  double wsum = 0.0;
  for (double w : m.weights()) wsum += w;
  REQUIRE_THAT(wsum, Catch::Matchers::WithinAbs(1.0, 1e-12));
  for (double x : m.nodes()) {
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
  }
  REQUIRE_THAT(m.expect([](double x) { return x; }),
               Catch::Matchers::WithinAbs(0.5, 1e-13));
  REQUIRE_THAT(m.expect([](double x) { return x * x; }),
               Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-13));
}

TEST_CASE("marginal table validation rejects broken input") {
  REQUIRE_THROWS_AS(MarginalDistribution::from_table(0, 1, {0.5}, {0.9}),
                    construction_error);
  REQUIRE_THROWS_AS(MarginalDistribution::from_table(0, 1, {1.5}, {1.0}),
                    construction_error);
  REQUIRE_THROWS_AS(MarginalDistribution::from_table(0, 1, {0.2, 0.4}, {1.3, -0.3}),
                    construction_error);
  REQUIRE_THROWS_AS(MarginalDistribution::from_table(1, 0, {0.5}, {1.0}),
                    construction_error);
}

TEST_CASE("sampler-backed marginals materialize deterministic tables") {
  auto sampler = [](RandomStream& rs) { return rs.uniform(); };
  auto m1 = MarginalDistribution::from_sampler(0, 1, sampler, 99, 2000);
  auto m2 = MarginalDistribution::from_sampler(0, 1, sampler, 99, 2000);
  REQUIRE(m1.nodes() == m2.nodes());
  double mean = m1.expect([](double x) { return x; });
  // 5 standard errors of a uniform mean at 2000 samples.
  REQUIRE(std::abs(mean - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / 2000.0));

  auto bad = [](RandomStream&) { return 2.0; };
  REQUIRE_THROWS_AS(MarginalDistribution::from_sampler(0, 1, bad, 1, 10),
                    construction_error);
}

TEST_CASE("group indices are canonical") {
  GroupIndex v({3, 1});
  REQUIRE(v.members() == std::vector<int>{1, 3});
  REQUIRE(v.label() == "1|3");
  REQUIRE(GroupIndex::parse("1|3") == v);
  REQUIRE(v.order() == 2);
  REQUIRE(v.contains(3));
  REQUIRE_FALSE(v.contains(2));

  REQUIRE_THROWS_AS(GroupIndex({1, 1}), argument_error);
  REQUIRE_THROWS_AS(GroupIndex({0}), argument_error);
  REQUIRE_THROWS_AS(GroupIndex(std::vector<int>{}), argument_error);
  REQUIRE_THROWS_AS(GroupIndex::parse("1|x"), parse_error);
  REQUIRE_THROWS_AS(GroupIndex::parse(""), parse_error);

  REQUIRE(GroupIndex({3}) < GroupIndex({1, 2}));  // size before lex order
  REQUIRE(GroupIndex({1, 2}) < GroupIndex({1, 3}));
}

TEST_CASE("group enumeration is size-then-lexicographic") {
  auto gs = enumerate_groups(3, 2);
  std::vector<std::string> labels;
  for (const auto& g : gs) labels.push_back(g.label());
  REQUIRE(labels == std::vector<std::string>{"1", "2", "3", "1|2", "1|3", "2|3"});

  REQUIRE(enumerate_groups(5, 3).size() == 25);
  REQUIRE(enumerate_groups(4, 4).size() == 15);
  REQUIRE_THROWS_AS(enumerate_groups(3, 4), argument_error);
  REQUIRE_THROWS_AS(enumerate_groups(0, 1), argument_error);
}

TEST_CASE("base kernels match their formulas") {
  auto b = KernelFamily::brownian();
  auto m = KernelFamily::matern();
  auto g = KernelFamily::gaussian();

  REQUIRE_THAT(eval_base_kernel(b, 0.3, 0.7), Catch::Matchers::WithinAbs(1.3, 1e-15));
  REQUIRE_THAT(eval_base_kernel(b, 0.7, 0.3), Catch::Matchers::WithinAbs(1.3, 1e-15));
  REQUIRE_THAT(eval_base_kernel(m, 0.4, 0.4), Catch::Matchers::WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(eval_base_kernel(m, 0.0, 0.5),
               Catch::Matchers::WithinAbs(2.0 * std::exp(-1.0), 1e-15));
  REQUIRE_THAT(eval_base_kernel(g, 0.0, 0.5),
               Catch::Matchers::WithinAbs(std::exp(-0.25), 1e-15));
  REQUIRE(eval_base_kernel(g, 0.2, 0.9) == eval_base_kernel(g, 0.9, 0.2));

  REQUIRE_THROWS_AS(eval_base_kernel(b, -0.1, 0.5), domain_error);
  REQUIRE_THROWS_AS(eval_base_kernel(m, 0.1, 1.5), domain_error);
  REQUIRE(KernelFamily::parse("matern").type == KernelType::matern);
  REQUIRE_THROWS_AS(KernelFamily::parse("cubic"), argument_error);
}

TEST_CASE("centering removes the marginal mean") {
  for (auto fam : {KernelFamily::brownian(), KernelFamily::matern(),
                   KernelFamily::gaussian()}) {
    CenteredKernel k(fam, MarginalDistribution::uniform01(256));
    REQUIRE(k.grand_mean() > 0.0);
    // E_U k0(x, U) over the construction table telescopes to roundoff.
    for (double x : {0.0, 0.17, 0.5, 0.93, 1.0}) {
      double resid = 0.0;
      const auto& u = k.marginal().nodes();
      const auto& w = k.marginal().weights();
      for (std::size_t i = 0; i < u.size(); ++i) resid += w[i] * k.eval0(x, u[i]);
      REQUIRE(std::abs(resid) < 1e-8);
    }
  }
}

TEST_CASE("brownian centering has known closed-form values") {
  CenteredKernel k(KernelFamily::brownian(), MarginalDistribution::uniform01(256));
  // E k(0,U) = 1 exactly; E k(U,V) = 4/3; k0(0,0) = 1 - 1/(4/3) = 1/4.
  REQUIRE_THAT(k.mean_at(0.0), Catch::Matchers::WithinAbs(1.0, 1e-14));
  REQUIRE_THAT(k.grand_mean(), Catch::Matchers::WithinAbs(4.0 / 3.0, 1e-4));
  REQUIRE_THAT(k.eval0(0.0, 0.0), Catch::Matchers::WithinAbs(0.25, 2e-4));
}

TEST_CASE("bulk kernel matrices agree with scalar evaluation") {
  CenteredKernel k(KernelFamily::matern(), MarginalDistribution::uniform01(128));
  Eigen::VectorXd xs(4);
  xs << 0.1, 0.35, 0.6, 0.95;
  Eigen::MatrixXd K = k.gram0(xs);
  REQUIRE(K.isApprox(K.transpose(), 1e-14));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      REQUIRE_THAT(K(i, j), Catch::Matchers::WithinAbs(k.eval0(xs[i], xs[j]), 1e-12));

  Eigen::MatrixXd C = k.cross0(xs, xs);
  REQUIRE((C - K).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd O = k.omega1(xs);
  REQUIRE(O.isApprox(O.transpose(), 1e-12));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(O);
  REQUIRE(eig.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("anova kernel is the product over the group") {
  std::vector<CenteredKernel> ks;
  ks.emplace_back(KernelFamily::matern(), MarginalDistribution::uniform01(64));
  ks.emplace_back(KernelFamily::matern(), MarginalDistribution::uniform01(64));
  ks.emplace_back(KernelFamily::gaussian(), MarginalDistribution::uniform01(64));

  Eigen::VectorXd x(3), y(3);
  x << 0.2, 0.4, 0.8;
  y << 0.5, 0.1, 0.3;
  GroupIndex v({1, 3});
  double got = eval_anova_kernel(ks, v, x, y);
  double want = ks[0].eval0(0.2, 0.5) * ks[2].eval0(0.8, 0.3);
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-14));

  REQUIRE_THROWS_AS(eval_anova_kernel(ks, GroupIndex({4}), x, y), argument_error);
  Eigen::VectorXd short_x(2);
  short_x << 0.2, 0.4;
  REQUIRE_THROWS_AS(eval_anova_kernel(ks, v, short_x, y), argument_error);
}
