#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ranova/gram.hpp"
#include "ranova/groups.hpp"
#include "ranova/kernels.hpp"
#include "ranova/rng.hpp"
#include "ranova/solver.hpp"
#include "support/oracles.hpp"

using namespace ranova;

namespace {

std::vector<CenteredKernel> make_kernels(const KernelFamily& family, int d,
                                         int quad_nodes = 48) {
  std::vector<CenteredKernel> ks;
  for (int a = 0; a < d; ++a)
    ks.emplace_back(family, MarginalDistribution::uniform01(quad_nodes));
  return ks;
}

Eigen::MatrixXd random_design(RandomStream& rs, Eigen::Index n, int d) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) X(i, a) = rs.uniform();
  return X;
}

Eigen::VectorXd random_response(RandomStream& rs, Eigen::Index n) {
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = rs.normal();
  return y;
}

testsupport::BlockProblem to_block_problem(const Eigen::VectorXd& R,
                                           const GramBundle& b, double mu_p,
                                           double gamma_p) {
  testsupport::BlockProblem p;
  p.z = b.eigenvectors.transpose() * R;
  p.lambda = b.eigenvalues;
  p.mu = mu_p;
  p.gamma = gamma_p;
  return p;
}

double block_value_direct(const Eigen::VectorXd& R, const GramBundle& b,
                          const Eigen::VectorXd& theta, double mu_p,
                          double gamma_p) {
  double fid = (R - b.K * theta).squaredNorm();
  return fid + gamma_p * (b.K * theta).norm() + mu_p * (b.K_sqrt * theta).norm();
}

}  // namespace

TEST_CASE("penalty conversion to the working scale") {
  Eigen::VectorXd omega(3), zeta(3);
  omega << 1.0, 4.0, 0.25;
  zeta << 1.0, 2.0, 0.5;
  auto w = PenaltyWeights::from_rates(0.3, 0.7, omega, zeta, 25);
  REQUIRE(w.mu_prime[0] == Catch::Approx(25.0 * 0.3));
  REQUIRE(w.mu_prime[1] == Catch::Approx(25.0 * 0.3 * 4.0));
  REQUIRE(w.gamma_prime[0] == Catch::Approx(5.0 * 0.7));
  REQUIRE(w.gamma_prime[2] == Catch::Approx(5.0 * 0.7 * 0.5));
}

TEST_CASE("objective matches a from-scratch evaluation") {
  RandomStream rs(derive_seed(101, 1));
  const Eigen::Index n = 7;
  auto kernels = make_kernels(KernelFamily::brownian(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  SolverState st;
  st.f0 = 0.37;
  st.theta.resize(groups.size());
  st.theta[0] = random_response(rs, n);
  st.theta[2] = random_response(rs, n);

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(3, 0.4);
  w.gamma_prime = Eigen::VectorXd::Constant(3, 0.9);

  Eigen::VectorXd f = Eigen::VectorXd::Constant(n, st.f0);
  f += grams[0].K * st.theta[0] + grams[2].K * st.theta[2];
  double expected = (Y - f).squaredNorm();
  expected += 0.9 * (grams[0].K * st.theta[0]).norm() +
              0.9 * (grams[2].K * st.theta[2]).norm();
  expected += 0.4 * (grams[0].K_sqrt * st.theta[0]).norm() +
              0.4 * (grams[2].K_sqrt * st.theta[2]).norm();

  REQUIRE(objective(st, Y, grams, w) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("residual removes every block except the requested one") {
  RandomStream rs(derive_seed(101, 2));
  const Eigen::Index n = 6;
  auto kernels = make_kernels(KernelFamily::matern(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  SolverState st;
  st.f0 = -0.2;
  st.theta.resize(groups.size());
  for (std::size_t j = 0; j < groups.size(); ++j) st.theta[j] = random_response(rs, n);

  Eigen::VectorXd r = residual(Y, st, grams, 1);
  Eigen::VectorXd expected = Y - Eigen::VectorXd::Constant(n, st.f0) -
                             grams[0].K * st.theta[0] - grams[2].K * st.theta[2];
  REQUIRE((r - expected).norm() < 1e-12);
  REQUIRE_THROWS_AS(residual(Y, st, grams, 9), argument_error);
}

TEST_CASE("update_intercept minimizes the objective over the intercept") {
  RandomStream rs(derive_seed(101, 3));
  const Eigen::Index n = 9;
  auto kernels = make_kernels(KernelFamily::gaussian(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 1);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  SolverState st;
  st.theta.resize(groups.size());
  st.theta[0] = random_response(rs, n);

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(2, 0.1);
  w.gamma_prime = Eigen::VectorXd::Constant(2, 0.1);

  st.f0 = update_intercept(Y, st, grams);
  double at_opt = objective(st, Y, grams, w);
  for (double eps : {1e-3, -1e-3, 0.05, -0.05}) {
    SolverState moved = st;
    moved.f0 += eps;
    REQUIRE(objective(moved, Y, grams, w) >= at_opt - 1e-12);
  }
}

TEST_CASE("zero test agrees with direct minimization of the block objective") {
  int checked = 0;
  for (std::uint64_t i = 0; i < 18; ++i) {
    RandomStream rs(derive_seed(2024, 10, i));
    const Eigen::Index n = 3;
    auto family = (i % 3 == 0)   ? KernelFamily::brownian()
                  : (i % 3 == 1) ? KernelFamily::matern()
                                 : KernelFamily::gaussian();
    auto kernels = make_kernels(family, 2);
    Eigen::MatrixXd X = random_design(rs, n, 2);
    GroupIndex v = (i % 2 == 0) ? GroupIndex({1}) : GroupIndex({1, 2});
    GramBundle b = build_gram(X, v, kernels);
    Eigen::VectorXd R = random_response(rs, n);

    double mu_crit = 2.0 * (b.K_sqrt * R).norm();
    double gamma_crit = 2.0 * R.norm();

    struct Case {
      double mu, gamma;
    };
    std::vector<Case> cases = {
        {0.0, gamma_crit * (0.3 + 1.4 * rs.uniform())},
        {mu_crit * (0.3 + 1.4 * rs.uniform()), 0.0},
        {mu_crit * (0.2 + 1.2 * rs.uniform()),
         gamma_crit * (0.2 + 1.2 * rs.uniform())},
        {0.5 * mu_crit, 0.75 * gamma_crit},
    };
    for (const auto& c : cases) {
      auto p = to_block_problem(R, b, c.mu, c.gamma);
      double at_zero = p.z.squaredNorm();
      double oracle = testsupport::block_oracle_min(p);
      bool oracle_zero = at_zero <= oracle + 1e-8;
      INFO("instance " << i << " mu=" << c.mu << " gamma=" << c.gamma
                       << " at_zero=" << at_zero << " oracle=" << oracle);
      REQUIRE(zero_test(R, b, c.mu, c.gamma) == oracle_zero);
      ++checked;
    }
  }
  REQUIRE(checked == 18 * 4);
}

TEST_CASE("block solvers reach the oracle minimum when the block is active") {
  for (std::uint64_t i = 0; i < 12; ++i) {
    RandomStream rs(derive_seed(2024, 11, i));
    const Eigen::Index n = 3;
    auto kernels = make_kernels(KernelFamily::brownian(), 2);
    Eigen::MatrixXd X = random_design(rs, n, 2);
    GroupIndex v = (i % 2 == 0) ? GroupIndex({2}) : GroupIndex({1, 2});
    GramBundle b = build_gram(X, v, kernels);
    Eigen::VectorXd R = random_response(rs, n);

    double mu_crit = 2.0 * (b.K_sqrt * R).norm();
    double gamma_crit = 2.0 * R.norm();
    double mu = 0.3 * mu_crit * rs.uniform();
    double gamma = 0.3 * gamma_crit * rs.uniform();

    // gamma-only closed form
    {
      Eigen::VectorXd theta = solve_block_mu0(R, b, gamma);
      auto p = to_block_problem(R, b, 0.0, gamma);
      double oracle = testsupport::block_oracle_min(p);
      double got = block_value_direct(R, b, theta, 0.0, gamma);
      INFO("instance " << i << " (mu=0) got=" << got << " oracle=" << oracle);
      REQUIRE(got <= oracle + 1e-6 * std::max(1.0, oracle));
    }
    // general solver
    if (!zero_test(R, b, mu, gamma)) {
      Eigen::VectorXd theta = solve_block(R, b, mu, gamma, 1e-12, 4000);
      auto p = to_block_problem(R, b, mu, gamma);
      double oracle = testsupport::block_oracle_min(p);
      double got = block_value_direct(R, b, theta, mu, gamma);
      INFO("instance " << i << " got=" << got << " oracle=" << oracle);
      REQUIRE(got <= oracle + 1e-6 * std::max(1.0, oracle));

      // stationarity of the damped fixed point at its limit
      double s = (b.K_sqrt * theta).norm();
      double u = (b.K * theta).norm();
      Eigen::MatrixXd M = (1.0 + gamma / (2.0 * u)) * b.K;
      M.diagonal().array() += mu / (2.0 * s);
      REQUIRE((M * theta - R).norm() <= 1e-5 * std::max(1.0, R.norm()));
    }
  }
}

TEST_CASE("solve_block delegates to the closed form when mu is zero") {
  RandomStream rs(derive_seed(2024, 12));
  auto kernels = make_kernels(KernelFamily::matern(), 1);
  Eigen::MatrixXd X = random_design(rs, 5, 1);
  GramBundle b = build_gram(X, GroupIndex({1}), kernels);
  Eigen::VectorXd R = random_response(rs, 5);
  Eigen::VectorXd a = solve_block(R, b, 0.0, 0.4);
  Eigen::VectorXd c = solve_block_mu0(R, b, 0.4);
  REQUIRE((a - c).norm() < 1e-14);
}

TEST_CASE("fit matches an independent reference minimizer") {
  for (std::uint64_t i = 0; i < 6; ++i) {
    RandomStream rs(derive_seed(505, 20, i));
    const Eigen::Index n = 5;
    auto family = (i % 3 == 0)   ? KernelFamily::brownian()
                  : (i % 3 == 1) ? KernelFamily::matern()
                                 : KernelFamily::gaussian();
    auto kernels = make_kernels(family, 2);
    GramCache cache(random_design(rs, n, 2), kernels);
    auto groups = enumerate_groups(2, 2);
    auto grams = cache.grams(groups);
    Eigen::VectorXd Y = random_response(rs, n);

    const auto m = static_cast<Eigen::Index>(groups.size());
    PenaltyWeights w;
    w.mu_prime.resize(m);
    w.gamma_prime.resize(m);
    double scale = Y.norm();
    for (Eigen::Index j = 0; j < m; ++j) {
      w.mu_prime[j] = (i + static_cast<std::uint64_t>(j)) % 3 == 0
                          ? 0.0
                          : scale * (0.05 + 0.6 * rs.uniform());
      w.gamma_prime[j] = (i + static_cast<std::uint64_t>(j)) % 4 == 1
                             ? 0.0
                             : scale * (0.05 + 0.6 * rs.uniform());
    }
    if (w.mu_prime.maxCoeff() == 0.0 && w.gamma_prime.maxCoeff() == 0.0)
      w.gamma_prime[0] = 0.3 * scale;

    FitConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_sweeps = 20000;
    cfg.block_tol = 1e-12;
    cfg.block_max_iter = 4000;
    cfg.allow_all_mu_zero = true;
    FitResult res = fit(Y, grams, w, cfg);

    testsupport::FullProblem prob;
    prob.Y = Y;
    prob.mu = w.mu_prime;
    prob.gamma = w.gamma_prime;
    for (const auto& g : grams) {
      prob.K.push_back(g.K);
      prob.Khalf.push_back(g.K_sqrt);
    }
    auto ref = testsupport::full_admm_min(prob);

    double ours = objective(res.state, Y, grams, w);
    INFO("instance " << i << " ours=" << ours << " reference=" << ref.objective);
    REQUIRE(std::abs(ours - ref.objective) <=
            1e-5 * std::max(1.0, std::min(ours, ref.objective)));
  }
}

TEST_CASE("fit trace is nonincreasing and convergence is flagged") {
  RandomStream rs(derive_seed(505, 21));
  const Eigen::Index n = 24;
  auto kernels = make_kernels(KernelFamily::matern(), 3);
  GramCache cache(random_design(rs, n, 3), kernels);
  auto groups = enumerate_groups(3, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  const auto m = static_cast<Eigen::Index>(groups.size());
  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(m, 0.8);
  w.gamma_prime = Eigen::VectorXd::Constant(m, 0.5);

  FitResult res = fit(Y, grams, w);
  REQUIRE(res.converged);
  REQUIRE(res.sweeps >= 1);
  for (std::size_t k = 1; k < res.objective_trace.size(); ++k) {
    REQUIRE(res.objective_trace[k] <=
            res.objective_trace[k - 1] +
                1e-9 * std::max(1.0, res.objective_trace[k - 1]));
  }
  REQUIRE(res.objective() ==
          Catch::Approx(objective(res.state, Y, grams, w)).epsilon(1e-12));
}

TEST_CASE("a warm start from the solution converges immediately") {
  RandomStream rs(derive_seed(505, 22));
  const Eigen::Index n = 20;
  auto kernels = make_kernels(KernelFamily::brownian(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(3, 0.6);
  w.gamma_prime = Eigen::VectorXd::Constant(3, 0.2);

  FitConfig cfg;
  cfg.tol = 1e-8;
  cfg.max_sweeps = 5000;
  FitResult cold = fit(Y, grams, w, cfg);
  REQUIRE(cold.converged);
  FitResult warm = fit(Y, grams, w, cfg, &cold.state);
  REQUIRE(warm.converged);
  REQUIRE(warm.sweeps <= 3);
  REQUIRE(warm.objective() == Catch::Approx(cold.objective()).epsilon(1e-9));
}

TEST_CASE("row order of the sample does not change the fit") {
  RandomStream rs(derive_seed(505, 23));
  const Eigen::Index n = 18;
  const int d = 2;
  auto kernels = make_kernels(KernelFamily::matern(), d);
  Eigen::MatrixXd X = random_design(rs, n, d);
  Eigen::VectorXd Y = random_response(rs, n);
  auto groups = enumerate_groups(d, 2);

  auto perm = RandomStream(derive_seed(505, 24)).permutation(static_cast<std::size_t>(n));
  Eigen::MatrixXd Xp(n, d);
  Eigen::VectorXd Yp(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Xp.row(i) = X.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    Yp[i] = Y[static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])];
  }

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(3, 0.5);
  w.gamma_prime = Eigen::VectorXd::Constant(3, 0.3);
  FitConfig cfg;
  cfg.tol = 1e-8;

  GramCache ca(X, kernels), cb(Xp, kernels);
  auto ga = ca.grams(groups), gb = cb.grams(groups);
  FitResult ra = fit(Y, ga, w, cfg), rb = fit(Yp, gb, w, cfg);

  REQUIRE(ra.objective() == Catch::Approx(rb.objective()).epsilon(1e-7));
  REQUIRE(ra.state.f0 == Catch::Approx(rb.state.f0).margin(1e-6));
  REQUIRE(ra.state.support() == rb.state.support());

  Eigen::VectorXd fa = Eigen::VectorXd::Constant(n, ra.state.f0);
  for (std::size_t j = 0; j < groups.size(); ++j)
    if (ra.state.active(j)) fa += ga[j].K * ra.state.theta[j];
  Eigen::VectorXd fb = Eigen::VectorXd::Constant(n, rb.state.f0);
  for (std::size_t j = 0; j < groups.size(); ++j)
    if (rb.state.active(j)) fb += gb[j].K * rb.state.theta[j];
  for (Eigen::Index i = 0; i < n; ++i)
    REQUIRE(fb[i] ==
            Catch::Approx(fa[static_cast<Eigen::Index>(
                              perm[static_cast<std::size_t>(i)])])
                .margin(1e-5));
}

TEST_CASE("overwhelming penalties produce the intercept-only model") {
  RandomStream rs(derive_seed(505, 25));
  const Eigen::Index n = 15;
  auto kernels = make_kernels(KernelFamily::gaussian(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Constant(3, 1e6);
  w.gamma_prime = Eigen::VectorXd::Constant(3, 1e6);
  FitResult res = fit(Y, grams, w);
  REQUIRE(res.converged);
  REQUIRE(res.state.support().empty());
  REQUIRE(res.state.f0 == Catch::Approx(Y.mean()).margin(1e-12));
  REQUIRE(res.objective() ==
          Catch::Approx((Y.array() - Y.mean()).matrix().squaredNorm())
              .epsilon(1e-12));
}

TEST_CASE("solver input validation") {
  RandomStream rs(derive_seed(505, 26));
  const Eigen::Index n = 8;
  auto kernels = make_kernels(KernelFamily::brownian(), 2);
  GramCache cache(random_design(rs, n, 2), kernels);
  auto groups = enumerate_groups(2, 2);
  auto grams = cache.grams(groups);
  Eigen::VectorXd Y = random_response(rs, n);

  PenaltyWeights w;
  w.mu_prime = Eigen::VectorXd::Zero(3);
  w.gamma_prime = Eigen::VectorXd::Zero(3);
  REQUIRE_THROWS_AS(fit(Y, grams, w), argument_error);

  w.gamma_prime = Eigen::VectorXd::Constant(3, 0.5);
  REQUIRE_THROWS_AS(fit(Y, grams, w), argument_error);  // all mu zero, no flag
  FitConfig cfg;
  cfg.allow_all_mu_zero = true;
  REQUIRE_NOTHROW(fit(Y, grams, w, cfg));

  PenaltyWeights bad;
  bad.mu_prime = Eigen::VectorXd::Constant(2, 0.5);  // misaligned
  bad.gamma_prime = Eigen::VectorXd::Constant(3, 0.5);
  REQUIRE_THROWS_AS(fit(Y, grams, bad), argument_error);

  PenaltyWeights neg;
  neg.mu_prime = Eigen::VectorXd::Constant(3, -0.1);
  neg.gamma_prime = Eigen::VectorXd::Constant(3, 0.5);
  REQUIRE_THROWS_AS(fit(Y, grams, neg), argument_error);

  REQUIRE_THROWS_AS(zero_test(Y, grams[0], 0.0, 0.0), argument_error);
  REQUIRE_THROWS_AS(zero_test(Y, grams[0], -1.0, 0.5), argument_error);
  REQUIRE_THROWS_AS(solve_block(Y, grams[0], -0.1, 0.5), argument_error);
  Eigen::VectorXd short_r = Y.head(4);
  REQUIRE_THROWS_AS(zero_test(short_r, grams[0], 0.1, 0.1), argument_error);

  SolverState misaligned;
  misaligned.theta.resize(2);
  w.mu_prime = Eigen::VectorXd::Constant(3, 0.5);
  REQUIRE_THROWS_AS(objective(misaligned, Y, grams, w), argument_error);
}
