#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/gram.hpp"
#include "ranova/groups.hpp"
#include "ranova/kernels.hpp"
#include "ranova/model.hpp"
#include "ranova/rng.hpp"
#include "ranova/solver.hpp"

namespace ranova {

// How a model is specified before seeing tuning parameters: kernel family,
// input marginals (default: uniform on [0,1] with a 256-node quadrature
// table), and the interaction order cap d_max.
struct ModelSpec {
  KernelFamily kernel = KernelFamily::matern();
  std::vector<MarginalDistribution> marginals;  // empty: uniform01 per coordinate
  int d_max = 3;
  int quad_nodes = 256;
  JitterPolicy jitter{};
};

enum class WeightMode { unit, nu, order };

inline WeightMode parse_weight_mode(const std::string& name) {
  if (name == "unit") return WeightMode::unit;
  if (name == "nu") return WeightMode::nu;
  if (name == "order") return WeightMode::order;
  throw argument_error("weights: unknown mode '" + name + "'");
}

struct GridConfig {
  int l_max = 8;                      // mu grid: mu_max * 2^-l, l = 1..l_max
  std::vector<double> gamma_values;   // empty: {0} plus gamma_max * 2^-j, j = 5..0
  WeightMode weight_mode = WeightMode::unit;
  double order_base = 2.0;            // order mode: w_v = base^(|v|-1)
  double nu_delta = 1.0;
};

struct TuningGrid {
  double mu_max = 0.0;
  std::vector<double> mu_values;     // descending
  std::vector<double> gamma_values;  // ascending, usually starts at 0
  Eigen::VectorXd omega;             // mu weights per group
  Eigen::VectorXd zeta;              // gamma weights per group
};

// Ridge refit grid, relative to the average eigenvalue scale of the group
// Grams: lambda ranges over `count` log-spaced values in
// [lo_rel, hi_rel] * mean_v trace(K_v) / n.
struct LambdaGridConfig {
  int count = 10;
  double lo_rel = 1e-6;
  double hi_rel = 1.0;
};

enum class Procedure { gs, rdg };

inline Procedure parse_procedure(const std::string& name) {
  if (name == "gs") return Procedure::gs;
  if (name == "rdg") return Procedure::rdg;
  throw argument_error("procedure: unknown name '" + name + "'");
}

inline std::string procedure_name(Procedure p) {
  return p == Procedure::gs ? "gs" : "rdg";
}

struct Holdout {
  Dataset test;
};
struct KFold {
  int folds = 5;
  std::uint64_t seed = 0;
};
using Evaluation = std::variant<Holdout, KFold>;

// Smallest mu (on the rate scale fed to PenaltyWeights::from_rates) at which
// the all-zero state is a fixed point of the block solver: for every group
// the zero test 2 ||K_v^{1/2} (Y - mean(Y))|| <= n mu w_v must hold.
inline double compute_mu_max(const Eigen::VectorXd& Y,
                             const std::vector<GramBundle>& grams,
                             const Eigen::VectorXd& omega) {
  if (grams.empty()) throw argument_error("mu_max: no groups");
  if (omega.size() != static_cast<Eigen::Index>(grams.size()))
    throw argument_error("mu_max: weight vector misaligned with groups");
  if (omega.minCoeff() <= 0.0) throw argument_error("mu_max: weights must be positive");
  const double n = static_cast<double>(Y.size());
  Eigen::VectorXd r = Y.array() - Y.mean();
  double best = 0.0;
  for (std::size_t j = 0; j < grams.size(); ++j) {
    // Same spectral expression the zero test uses, so the bound is sharp.
    Eigen::VectorXd z = grams[j].eigenvectors.transpose() * r;
    double half2 = (grams[j].eigenvalues.array() * z.array().square()).sum();
    double val = 2.0 * std::sqrt(std::max(0.0, half2)) /
                 (omega[static_cast<Eigen::Index>(j)] * n);
    best = std::max(best, val);
  }
  if (!(best > 0.0))
    throw degenerate_model_error("mu_max: response carries no signal on any group");
  return best;
}

// Smallest gamma at which the all-zero state is optimal regardless of mu:
// for every group the range condition 2 ||P_v (Y - mean(Y))|| <= sqrt(n)
// gamma z_v must hold, with P_v the projector onto the range of K_v. The
// mu penalty only ever strengthens the zero test, so the bound is sharp at
// mu = 0 and an upper envelope for the rest of the grid.
inline double compute_gamma_max(const Eigen::VectorXd& Y,
                                const std::vector<GramBundle>& grams,
                                const Eigen::VectorXd& zeta) {
  if (grams.empty()) throw argument_error("gamma_max: no groups");
  if (zeta.size() != static_cast<Eigen::Index>(grams.size()))
    throw argument_error("gamma_max: weight vector misaligned with groups");
  if (zeta.minCoeff() <= 0.0)
    throw argument_error("gamma_max: weights must be positive");
  const double sqrt_n = std::sqrt(static_cast<double>(Y.size()));
  Eigen::VectorXd r = Y.array() - Y.mean();
  double best = 0.0;
  for (std::size_t j = 0; j < grams.size(); ++j) {
    const GramBundle& g = grams[j];
    Eigen::VectorXd z = g.eigenvectors.transpose() * r;
    double range2 = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k)
      if (g.eigenvalues[k] > 0.0) range2 += z[k] * z[k];
    double val = 2.0 * std::sqrt(range2) /
                 (zeta[static_cast<Eigen::Index>(j)] * sqrt_n);
    best = std::max(best, val);
  }
  if (!(best > 0.0))
    throw degenerate_model_error(
        "gamma_max: response carries no signal on any group");
  return best;
}

inline double prediction_error(const Metamodel& model, const Dataset& test) {
  test.validate();
  Eigen::VectorXd f = predict(model, test.X);
  return (test.Y - f).squaredNorm() / static_cast<double>(test.n());
}

struct PathEntry {
  double mu = 0.0;
  double gamma = 0.0;
  bool failed = false;
  std::string error;
  FitResult result;
};

struct GridPointPE {
  double mu = 0.0;
  double gamma = 0.0;
  double pe = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::vector<std::string> support;
};

struct RdgPointPE {
  std::vector<std::string> support;
  double lambda = 0.0;
  double pe = std::numeric_limits<double>::quiet_NaN();
};

struct SelectionResult {
  Procedure procedure = Procedure::gs;
  std::string kernel;
  double mu = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double pe = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> support;
  bool intercept_only = false;
  Metamodel model;
  std::vector<GridPointPE> pe_surface;
  std::vector<RdgPointPE> rdg_surface;
  std::vector<std::pair<std::string, double>> kernel_pe;  // mixed choice only
};

namespace detail {

// Contiguous folds of a seeded shuffle; fold sizes differ by at most one.
inline std::vector<std::vector<int>> make_folds(int n, int folds,
                                                std::uint64_t seed) {
  if (folds < 2 || folds > n)
    throw argument_error("cross_validate: need 2 <= folds <= n");
  RandomStream rs(seed);
  std::vector<int> perm = rs.permutation(n);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(folds));
  for (int b = 0; b < folds; ++b) {
    int lo = static_cast<int>(static_cast<long long>(b) * n / folds);
    int hi = static_cast<int>(static_cast<long long>(b + 1) * n / folds);
    out[static_cast<std::size_t>(b)].assign(perm.begin() + lo, perm.begin() + hi);
  }
  return out;
}

inline std::vector<int> complement_of(const std::vector<int>& fold, int n) {
  std::vector<char> in_fold(static_cast<std::size_t>(n), 0);
  for (int i : fold) in_fold[static_cast<std::size_t>(i)] = 1;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) - fold.size());
  for (int i = 0; i < n; ++i)
    if (!in_fold[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

}  // namespace detail

// Owns everything derived from one training set: centered kernels, the group
// list, Gram and Omega bundles, and the lattice of penalized fits shared by
// both selection procedures. Grid fits are warm-started along descending mu
// within each gamma and cached, so running both procedures (or re-running
// selection with the same grid) pays for the fits once.
class Tuner {
 public:
  Tuner(Dataset data, ModelSpec spec)
      : data_(std::move(data)), spec_(std::move(spec)) {
    data_.validate();
    const int d = data_.d();
    if (spec_.marginals.empty()) {
      spec_.marginals.reserve(static_cast<std::size_t>(d));
      for (int a = 0; a < d; ++a)
        spec_.marginals.push_back(MarginalDistribution::uniform01(spec_.quad_nodes));
    }
    if (spec_.marginals.size() != static_cast<std::size_t>(d))
      throw argument_error("spec: " + std::to_string(spec_.marginals.size()) +
                           " marginals for " + std::to_string(d) + " coordinates");
    kernels_.reserve(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a)
      kernels_.emplace_back(spec_.kernel, spec_.marginals[static_cast<std::size_t>(a)]);
    groups_ = enumerate_groups(d, spec_.d_max);
    cache_.emplace(data_.X, kernels_);
    grams_ = cache_->grams(groups_, spec_.jitter);
  }

  const Dataset& data() const noexcept { return data_; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const std::vector<CenteredKernel>& kernels() const noexcept { return kernels_; }
  const std::vector<GroupIndex>& groups() const noexcept { return groups_; }
  const std::vector<GramBundle>& grams() const noexcept { return grams_; }

  const std::vector<OmegaBundle>& omegas() {
    if (omegas_.empty()) omegas_ = cache_->omegas(groups_);
    return omegas_;
  }

  TuningGrid make_grid(const GridConfig& cfg = {}) const {
    if (cfg.l_max < 1) throw argument_error("grid: l_max must be positive");
    TuningGrid g;
    const auto m = static_cast<Eigen::Index>(groups_.size());
    switch (cfg.weight_mode) {
      case WeightMode::unit:
        g.omega = Eigen::VectorXd::Ones(m);
        g.zeta = Eigen::VectorXd::Ones(m);
        break;
      case WeightMode::nu: {
        g.omega.resize(m);
        g.zeta.resize(m);
        for (Eigen::Index j = 0; j < m; ++j) {
          double nu = estimate_nu(grams_[static_cast<std::size_t>(j)], cfg.nu_delta);
          if (!(nu > 0.0))
            throw numerical_error("grid: nu weight is zero",
                                  groups_[static_cast<std::size_t>(j)].label());
          g.omega[j] = nu * nu;
          g.zeta[j] = nu;
        }
        break;
      }
      case WeightMode::order: {
        if (!(cfg.order_base > 0.0))
          throw argument_error("grid: order_base must be positive");
        g.omega.resize(m);
        for (Eigen::Index j = 0; j < m; ++j)
          g.omega[j] = std::pow(cfg.order_base,
                                groups_[static_cast<std::size_t>(j)].order() - 1);
        g.zeta = g.omega;
        break;
      }
    }
    g.mu_max = compute_mu_max(data_.Y, grams_, g.omega);
    g.mu_values.reserve(static_cast<std::size_t>(cfg.l_max));
    for (int l = 1; l <= cfg.l_max; ++l)
      g.mu_values.push_back(g.mu_max * std::pow(2.0, -l));
    if (!cfg.gamma_values.empty()) {
      g.gamma_values = cfg.gamma_values;
      std::sort(g.gamma_values.begin(), g.gamma_values.end());
      for (double v : g.gamma_values)
        if (v < 0.0) throw argument_error("grid: negative gamma");
    } else {
      double gmax = compute_gamma_max(data_.Y, grams_, g.zeta);
      g.gamma_values = {0.0};
      for (int j = 5; j >= 0; --j)
        g.gamma_values.push_back(gmax * std::pow(2.0, -j));
    }
    return g;
  }

  // All penalized fits of the (mu, gamma) lattice, cached.
  const std::vector<PathEntry>& path(const TuningGrid& grid,
                                     const FitConfig& cfg = {}) {
    if (path_valid_ && same_grid(grid, cfg)) return path_;
    path_.clear();
    path_grid_ = grid;
    path_fit_ = cfg;
    for (double gamma : grid.gamma_values) {
      SolverState warm;
      bool have_warm = false;
      for (double mu : grid.mu_values) {
        PathEntry e;
        e.mu = mu;
        e.gamma = gamma;
        PenaltyWeights w = PenaltyWeights::from_rates(mu, gamma, grid.omega,
                                                      grid.zeta, data_.n());
        try {
          e.result = fit(data_.Y, grams_, w, cfg, have_warm ? &warm : nullptr);
          warm = e.result.state;
          have_warm = true;
        } catch (const error& ex) {
          e.failed = true;
          e.error = ex.what();
        }
        path_.push_back(std::move(e));
      }
    }
    path_valid_ = true;
    return path_;
  }

  Metamodel make_model(const SolverState& st) const {
    Metamodel m;
    m.f0 = st.f0;
    for (std::size_t j : st.support()) {
      m.groups.push_back(groups_[j]);
      m.theta.push_back(st.theta[j]);
    }
    m.X_train = data_.X;
    m.kernels = kernels_;
    m.d_max = spec_.d_max;
    return m;
  }

  // Least-squares refit with an isotropic ridge on the chosen groups:
  // minimize ||Y - f0 1 - sum_{v in S} K_v theta_v||^2
  //          + lambda n sum_{v in S} theta_v^T K_v theta_v.
  // Stationarity forces theta_v = r / (lambda n) for every v in S with
  // r = M^{-1}(Y - f0 1), M = I + K_S/(lambda n), which reduces the refit to
  // one SPD solve.
  Metamodel ridge_refit(const std::vector<std::size_t>& support,
                        double lambda) const {
    if (support.empty()) throw argument_error("ridge_refit: empty support");
    if (!(lambda > 0.0)) throw argument_error("ridge_refit: lambda must be positive");
    const Eigen::Index n = data_.n();
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
    const double scale = 1.0 / (lambda * static_cast<double>(n));
    for (std::size_t j : support) {
      if (j >= grams_.size()) throw argument_error("ridge_refit: group index out of range");
      M += scale * grams_[j].K;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success)
      throw numerical_error("ridge_refit: factorization failed");
    Eigen::VectorXd My = ldlt.solve(data_.Y);
    Eigen::VectorXd M1 = ldlt.solve(Eigen::VectorXd::Ones(n));
    double denom = M1.sum();
    if (!(denom > 0.0)) throw numerical_error("ridge_refit: singular system");
    double f0 = My.sum() / denom;
    Eigen::VectorXd r = ldlt.solve(data_.Y - Eigen::VectorXd::Constant(n, f0));
    Metamodel m;
    m.f0 = f0;
    for (std::size_t j : support) {
      m.groups.push_back(groups_[j]);
      m.theta.push_back(scale * r);
    }
    m.X_train = data_.X;
    m.kernels = kernels_;
    m.d_max = spec_.d_max;
    return m;
  }

  std::vector<double> lambda_grid(const LambdaGridConfig& cfg = {}) const {
    if (cfg.count < 1) throw argument_error("lambda grid: count must be positive");
    if (!(cfg.lo_rel > 0.0) || !(cfg.hi_rel >= cfg.lo_rel))
      throw argument_error("lambda grid: need 0 < lo_rel <= hi_rel");
    double trace_mean = 0.0;
    for (const auto& g : grams_) trace_mean += g.K.trace();
    trace_mean /= static_cast<double>(grams_.size()) * static_cast<double>(data_.n());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(cfg.count));
    if (cfg.count == 1) {
      out.push_back(cfg.hi_rel * trace_mean);
      return out;
    }
    double lo = std::log10(cfg.lo_rel * trace_mean);
    double hi = std::log10(cfg.hi_rel * trace_mean);
    for (int i = 0; i < cfg.count; ++i)
      out.push_back(std::pow(10.0, lo + (hi - lo) * i / (cfg.count - 1)));
    return out;
  }

  SelectionResult select(Procedure proc, const Evaluation& eval,
                         const GridConfig& gcfg = {},
                         const LambdaGridConfig& lcfg = {},
                         const FitConfig& fcfg = {}) {
    TuningGrid grid = make_grid(gcfg);
    if (proc == Procedure::gs) {
      if (const auto* h = std::get_if<Holdout>(&eval)) return gs_holdout(grid, *h, fcfg);
      return gs_kfold(grid, std::get<KFold>(eval), fcfg);
    }
    if (const auto* h = std::get_if<Holdout>(&eval)) return rdg_holdout(grid, *h, lcfg, fcfg);
    return rdg_kfold(grid, std::get<KFold>(eval), lcfg, fcfg);
  }

 private:
  bool same_grid(const TuningGrid& g, const FitConfig& c) const {
    return path_grid_.mu_values == g.mu_values &&
           path_grid_.gamma_values == g.gamma_values &&
           path_grid_.omega == g.omega && path_grid_.zeta == g.zeta &&
           path_fit_.tol == c.tol && path_fit_.max_sweeps == c.max_sweeps &&
           path_fit_.block_tol == c.block_tol &&
           path_fit_.block_max_iter == c.block_max_iter &&
           path_fit_.zero_rel == c.zero_rel &&
           path_fit_.allow_all_mu_zero == c.allow_all_mu_zero;
  }

  std::vector<std::string> labels_of(const SolverState& st) const {
    std::vector<std::string> out;
    for (std::size_t j : st.support()) out.push_back(groups_[j].label());
    return out;
  }

  double pe_of_state(CrossKernelCache& eval_cache, const Eigen::VectorXd& Y_eval,
                     const SolverState& st) const {
    Eigen::VectorXd f = Eigen::VectorXd::Constant(Y_eval.size(), st.f0);
    for (std::size_t j : st.support()) f += eval_cache.group_cross(groups_[j]) * st.theta[j];
    return (Y_eval - f).squaredNorm() / static_cast<double>(Y_eval.size());
  }

  // Strictly smaller PE wins; exact ties prefer the larger mu, then the
  // larger gamma, so equal-risk fits resolve toward stronger penalties.
  static bool better_gs(double pe, double mu, double gamma, double best_pe,
                        double best_mu, double best_gamma) {
    if (std::isnan(pe)) return false;
    if (std::isnan(best_pe) || pe < best_pe) return true;
    if (pe > best_pe) return false;
    if (mu > best_mu) return true;
    if (mu < best_mu) return false;
    return gamma > best_gamma;
  }

  SelectionResult gs_holdout(const TuningGrid& grid, const Holdout& holdout,
                             const FitConfig& fcfg) {
    holdout.test.validate();
    check_eval_dims(holdout.test);
    const auto& entries = path(grid, fcfg);
    CrossKernelCache eval_cache(holdout.test.X, data_.X, kernels_);
    SelectionResult res = base_result(Procedure::gs);
    const PathEntry* chosen = nullptr;
    for (const auto& e : entries) {
      GridPointPE p;
      p.mu = e.mu;
      p.gamma = e.gamma;
      p.failed = e.failed;
      if (!e.failed) {
        p.pe = pe_of_state(eval_cache, holdout.test.Y, e.result.state);
        p.support = labels_of(e.result.state);
        if (better_gs(p.pe, e.mu, e.gamma, res.pe, res.mu, res.gamma)) {
          res.pe = p.pe;
          res.mu = e.mu;
          res.gamma = e.gamma;
          chosen = &e;
        }
      }
      res.pe_surface.push_back(std::move(p));
    }
    if (!chosen) throw numerical_error("model selection: every grid fit failed");
    res.model = make_model(chosen->result.state);
    res.support = labels_of(chosen->result.state);
    res.intercept_only = res.support.empty();
    return res;
  }

  SelectionResult gs_kfold(const TuningGrid& grid, const KFold& kf,
                           const FitConfig& fcfg) {
    const int n = static_cast<int>(data_.n());
    auto folds = detail::make_folds(n, kf.folds, kf.seed);
    const std::size_t cells = grid.mu_values.size() * grid.gamma_values.size();
    std::vector<double> pe_sum(cells, 0.0);
    std::vector<bool> cell_failed(cells, false);

    for (const auto& fold : folds) {
      auto train_idx = detail::complement_of(fold, n);
      Dataset dtr = data_.rows(train_idx);
      Dataset dte = data_.rows(fold);
      GramCache fold_cache(dtr.X, kernels_);
      auto fold_grams = fold_cache.grams(groups_, spec_.jitter);
      CrossKernelCache eval_cache(dte.X, dtr.X, kernels_);
      std::size_t cell = 0;
      for (double gamma : grid.gamma_values) {
        SolverState warm;
        bool have_warm = false;
        for (double mu : grid.mu_values) {
          PenaltyWeights w = PenaltyWeights::from_rates(mu, gamma, grid.omega,
                                                        grid.zeta, dtr.n());
          try {
            FitResult fr = fit(dtr.Y, fold_grams, w, fcfg, have_warm ? &warm : nullptr);
            warm = fr.state;
            have_warm = true;
            double pe = 0.0;
            {
              Eigen::VectorXd f = Eigen::VectorXd::Constant(dte.n(), fr.state.f0);
              for (std::size_t j : fr.state.support())
                f += eval_cache.group_cross(groups_[j]) * fr.state.theta[j];
              pe = (dte.Y - f).squaredNorm() / static_cast<double>(dte.n());
            }
            pe_sum[cell] += pe;
          } catch (const error&) {
            cell_failed[cell] = true;
          }
          ++cell;
        }
      }
    }

    SelectionResult res = base_result(Procedure::gs);
    std::size_t cell = 0;
    double best_pe = std::numeric_limits<double>::quiet_NaN();
    for (double gamma : grid.gamma_values) {
      for (double mu : grid.mu_values) {
        GridPointPE p;
        p.mu = mu;
        p.gamma = gamma;
        p.failed = cell_failed[cell];
        if (!p.failed) {
          p.pe = pe_sum[cell] / static_cast<double>(folds.size());
          if (better_gs(p.pe, mu, gamma, best_pe, res.mu, res.gamma)) {
            best_pe = p.pe;
            res.mu = mu;
            res.gamma = gamma;
          }
        }
        res.pe_surface.push_back(std::move(p));
        ++cell;
      }
    }
    if (std::isnan(best_pe))
      throw numerical_error("cross-validation: every grid cell failed");
    res.pe = best_pe;

    // Final model: the full-data fit at the chosen tuning point.
    const auto& entries = path(grid, fcfg);
    for (const auto& e : entries) {
      if (e.mu == res.mu && e.gamma == res.gamma) {
        if (e.failed) throw numerical_error("cross-validation: chosen fit failed on the full data");
        res.model = make_model(e.result.state);
        res.support = labels_of(e.result.state);
        break;
      }
    }
    res.intercept_only = res.support.empty();
    return res;
  }

  // Candidate supports for the ridge refit: every distinct nonempty support
  // along the fitted grid, in canonical order.
  std::vector<std::vector<std::size_t>> collect_supports(
      const std::vector<PathEntry>& entries) const {
    std::set<std::vector<std::size_t>> seen;
    for (const auto& e : entries)
      if (!e.failed) {
        auto s = e.result.state.support();
        if (!s.empty()) seen.insert(std::move(s));
      }
    return {seen.begin(), seen.end()};
  }

  SelectionResult rdg_holdout(const TuningGrid& grid, const Holdout& holdout,
                              const LambdaGridConfig& lcfg, const FitConfig& fcfg) {
    holdout.test.validate();
    check_eval_dims(holdout.test);
    const auto& entries = path(grid, fcfg);
    CrossKernelCache eval_cache(holdout.test.X, data_.X, kernels_);
    SelectionResult res = base_result(Procedure::rdg);
    for (const auto& e : entries) {
      GridPointPE p;
      p.mu = e.mu;
      p.gamma = e.gamma;
      p.failed = e.failed;
      if (!e.failed) {
        p.pe = pe_of_state(eval_cache, holdout.test.Y, e.result.state);
        p.support = labels_of(e.result.state);
      }
      res.pe_surface.push_back(std::move(p));
    }

    auto supports = collect_supports(entries);
    if (supports.empty()) return intercept_only_result(std::move(res));

    auto lambdas = lambda_grid(lcfg);
    const std::vector<std::size_t>* best_support = nullptr;
    for (const auto& s : supports) {
      // Sum of cross matrices over the support; theta is shared within the
      // refit, so PE needs only this aggregate.
      Eigen::MatrixXd P_S = Eigen::MatrixXd::Zero(holdout.test.n(), data_.n());
      for (std::size_t j : s) P_S += eval_cache.group_cross(groups_[j]);
      for (double lambda : lambdas) {
        Metamodel m = ridge_refit(s, lambda);
        Eigen::VectorXd f =
            Eigen::VectorXd::Constant(holdout.test.n(), m.f0) + P_S * m.theta.front();
        double pe = (holdout.test.Y - f).squaredNorm() /
                    static_cast<double>(holdout.test.n());
        RdgPointPE rp;
        for (std::size_t j : s) rp.support.push_back(groups_[j].label());
        rp.lambda = lambda;
        rp.pe = pe;
        res.rdg_surface.push_back(std::move(rp));
        if (std::isnan(res.pe) || pe < res.pe ||
            (pe == res.pe && lambda > res.lambda)) {
          res.pe = pe;
          res.lambda = lambda;
          best_support = &s;
        }
      }
    }
    res.model = ridge_refit(*best_support, res.lambda);
    res.support = res.model.support_labels();
    return res;
  }

  SelectionResult rdg_kfold(const TuningGrid& grid, const KFold& kf,
                            const LambdaGridConfig& lcfg, const FitConfig& fcfg) {
    const auto& entries = path(grid, fcfg);
    auto supports = collect_supports(entries);
    SelectionResult res = base_result(Procedure::rdg);
    if (supports.empty()) return intercept_only_result(std::move(res));

    auto lambdas = lambda_grid(lcfg);
    const int n = static_cast<int>(data_.n());
    auto folds = detail::make_folds(n, kf.folds, kf.seed);
    std::vector<double> pe_sum(supports.size() * lambdas.size(), 0.0);

    for (const auto& fold : folds) {
      auto train_idx = detail::complement_of(fold, n);
      Dataset dtr = data_.rows(train_idx);
      Dataset dte = data_.rows(fold);
      GramCache fold_cache(dtr.X, kernels_);
      CrossKernelCache eval_cache(dte.X, dtr.X, kernels_);
      const Eigen::Index nf = dtr.n();
      std::size_t cell = 0;
      for (const auto& s : supports) {
        Eigen::MatrixXd K_S = Eigen::MatrixXd::Zero(nf, nf);
        Eigen::MatrixXd P_S = Eigen::MatrixXd::Zero(dte.n(), nf);
        for (std::size_t j : s) {
          K_S += fold_cache.gram(groups_[j], spec_.jitter).K;
          P_S += eval_cache.group_cross(groups_[j]);
        }
        for (double lambda : lambdas) {
          double scale = 1.0 / (lambda * static_cast<double>(nf));
          Eigen::MatrixXd M = Eigen::MatrixXd::Identity(nf, nf) + scale * K_S;
          Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
          Eigen::VectorXd My = ldlt.solve(dtr.Y);
          Eigen::VectorXd M1 = ldlt.solve(Eigen::VectorXd::Ones(nf));
          double f0 = My.sum() / M1.sum();
          Eigen::VectorXd r =
              ldlt.solve(dtr.Y - Eigen::VectorXd::Constant(nf, f0));
          Eigen::VectorXd f =
              Eigen::VectorXd::Constant(dte.n(), f0) + P_S * (scale * r);
          pe_sum[cell] += (dte.Y - f).squaredNorm() / static_cast<double>(dte.n());
          ++cell;
        }
      }
    }

    const std::vector<std::size_t>* best_support = nullptr;
    std::size_t cell = 0;
    for (const auto& s : supports) {
      for (double lambda : lambdas) {
        double pe = pe_sum[cell] / static_cast<double>(folds.size());
        RdgPointPE rp;
        for (std::size_t j : s) rp.support.push_back(groups_[j].label());
        rp.lambda = lambda;
        rp.pe = pe;
        res.rdg_surface.push_back(std::move(rp));
        if (std::isnan(res.pe) || pe < res.pe ||
            (pe == res.pe && lambda > res.lambda)) {
          res.pe = pe;
          res.lambda = lambda;
          best_support = &s;
        }
        ++cell;
      }
    }
    res.model = ridge_refit(*best_support, res.lambda);
    res.support = res.model.support_labels();
    return res;
  }

  SelectionResult base_result(Procedure proc) const {
    SelectionResult res;
    res.procedure = proc;
    res.kernel = spec_.kernel.name();
    return res;
  }

  SelectionResult intercept_only_result(SelectionResult res) const {
    res.intercept_only = true;
    res.model.f0 = data_.Y.mean();
    res.model.X_train = data_.X;
    res.model.kernels = kernels_;
    res.model.d_max = spec_.d_max;
    return res;
  }

  void check_eval_dims(const Dataset& test) const {
    if (test.d() != data_.d())
      throw argument_error("test set has " + std::to_string(test.d()) +
                           " coordinates, training set has " +
                           std::to_string(data_.d()));
  }

  Dataset data_;
  ModelSpec spec_;
  std::vector<CenteredKernel> kernels_;
  std::vector<GroupIndex> groups_;
  std::optional<GramCache> cache_;
  std::vector<GramBundle> grams_;
  std::vector<OmegaBundle> omegas_;

  bool path_valid_ = false;
  TuningGrid path_grid_;
  FitConfig path_fit_;
  std::vector<PathEntry> path_;
};

// --- convenience entry points ------------------------------------------------

inline SelectionResult proc_gs(const Dataset& train, const Dataset& test,
                               const ModelSpec& spec, const GridConfig& gcfg = {},
                               const FitConfig& fcfg = {}) {
  Tuner t(train, spec);
  return t.select(Procedure::gs, Holdout{test}, gcfg, {}, fcfg);
}

inline SelectionResult proc_rdg(const Dataset& train, const Dataset& test,
                                const ModelSpec& spec, const GridConfig& gcfg = {},
                                const LambdaGridConfig& lcfg = {},
                                const FitConfig& fcfg = {}) {
  Tuner t(train, spec);
  return t.select(Procedure::rdg, Holdout{test}, gcfg, lcfg, fcfg);
}

inline SelectionResult cross_validate(const Dataset& train, Procedure proc,
                                      int folds, std::uint64_t seed,
                                      const ModelSpec& spec,
                                      const GridConfig& gcfg = {},
                                      const LambdaGridConfig& lcfg = {},
                                      const FitConfig& fcfg = {}) {
  Tuner t(train, spec);
  return t.select(proc, KFold{folds, seed}, gcfg, lcfg, fcfg);
}

// Fits every kernel family separately and keeps the one whose selected model
// has the smallest evaluation PE; ties keep the earlier family in the list.
inline SelectionResult choose_kernel_mixed(
    const Dataset& train, const Evaluation& eval, Procedure proc,
    const ModelSpec& base_spec,
    const std::vector<KernelFamily>& families =
        {KernelFamily::brownian(), KernelFamily::matern(), KernelFamily::gaussian()},
    const GridConfig& gcfg = {}, const LambdaGridConfig& lcfg = {},
    const FitConfig& fcfg = {}) {
  if (families.empty()) throw argument_error("mixed: no kernel families");
  std::optional<SelectionResult> best;
  std::vector<std::pair<std::string, double>> kernel_pe;
  for (const auto& fam : families) {
    ModelSpec spec = base_spec;
    spec.kernel = fam;
    Tuner t(train, spec);
    SelectionResult r = t.select(proc, eval, gcfg, lcfg, fcfg);
    kernel_pe.emplace_back(fam.name(), r.pe);
    bool take = !best || (!std::isnan(r.pe) &&
                          (std::isnan(best->pe) || r.pe < best->pe));
    if (take) best = std::move(r);
  }
  best->kernel_pe = std::move(kernel_pe);
  return std::move(*best);
}

}  // namespace ranova
