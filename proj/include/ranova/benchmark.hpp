#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ranova/errors.hpp"
#include "ranova/gfunction.hpp"
#include "ranova/parallel.hpp"
#include "ranova/selection.hpp"
#include "ranova/sensitivity.hpp"

namespace ranova {

// --- metrics -----------------------------------------------------------------

inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  if (y.size() != pred.size() || y.size() < 2)
    throw argument_error("r_squared: need two aligned samples");
  double denom = (y.array() - y.mean()).square().sum();
  if (!(denom > 0.0)) throw argument_error("r_squared: constant reference sample");
  return 1.0 - (y - pred).squaredNorm() / denom;
}

inline double empirical_risk(const Eigen::VectorXd& truth,
                             const Eigen::VectorXd& pred) {
  if (truth.size() != pred.size() || truth.size() < 1)
    throw argument_error("empirical_risk: size mismatch");
  return (truth - pred).squaredNorm() / static_cast<double>(truth.size());
}

// Sum of squared index errors over every subset in `truth`; subsets the
// report does not carry count as estimated zero.
inline double global_error(const SobolReport& report,
                           const std::vector<std::pair<GroupIndex, double>>& truth) {
  double s = 0.0;
  for (const auto& [v, sv] : truth) {
    double diff = report.index_for(v) - sv;
    s += diff * diff;
  }
  return s;
}

// --- replication study ---------------------------------------------------------

struct ReplicationConfig {
  Eigen::VectorXd c;  // g-function coefficients; empty selects the default
  int n = 100;        // common size of the train / tuning / performance sets
  double sigma = 0.2;
  KernelFamily kernel = KernelFamily::matern();
  bool mixed = false;  // pick the kernel family by tuning-set PE per procedure
  int d_max = 3;
  GridConfig grid{};
  LambdaGridConfig lambda{};
  FitConfig fit{};
  int replications = 20;
  std::uint64_t seed = 1;
  double rho = 1e-4;  // analytic-index threshold separating active from inert
  int threads = 1;
  bool run_gs = true;  // procedures to include; at least one must stay on
  bool run_rdg = true;

  Eigen::VectorXd coefficients() const {
    if (c.size() > 0) return c;
    Eigen::VectorXd def(5);
    def << 0.2, 0.6, 0.8, 100.0, 100.0;
    return def;
  }

  void validate() const {
    Eigen::VectorXd cc = coefficients();
    if (n < 4) throw argument_error("benchmark: n is too small");
    if (sigma < 0.0) throw argument_error("benchmark: negative noise level");
    if (replications < 1) throw argument_error("benchmark: need replications >= 1");
    if (d_max < 1 || d_max > static_cast<int>(cc.size()))
      throw argument_error("benchmark: need 1 <= d_max <= d");
    if (rho < 0.0) throw argument_error("benchmark: negative rho");
    if (!run_gs && !run_rdg)
      throw argument_error("benchmark: no procedure selected");
  }
};

struct ProcedureOutcome {
  bool ok = false;
  std::string error;
  std::string kernel;
  double pe = std::numeric_limits<double>::quiet_NaN();
  double mu = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  double er = std::numeric_limits<double>::quiet_NaN();
  double ge = std::numeric_limits<double>::quiet_NaN();
  bool intercept_only = false;
  std::vector<double> s_hat;           // aligned with the enumerated groups
  std::vector<std::uint8_t> selected;  // aligned with the enumerated groups
};

struct ReplicationRecord {
  int rep = 0;
  ProcedureOutcome gs;
  ProcedureOutcome rdg;
};

struct ProcedureSummary {
  std::string procedure;
  int n_ok = 0;
  double mean_r2 = std::numeric_limits<double>::quiet_NaN();
  double sd_r2 = std::numeric_limits<double>::quiet_NaN();
  double mean_er = std::numeric_limits<double>::quiet_NaN();
  double sd_er = std::numeric_limits<double>::quiet_NaN();
  double mean_ge = std::numeric_limits<double>::quiet_NaN();
  double sd_ge = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mean_s;  // per enumerated group
  std::vector<double> sd_s;
  std::vector<double> psel;          // selection percentage per enumerated group
  double psel_active = std::numeric_limits<double>::quiet_NaN();
  double psel_inert = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, int> kernel_counts;
};

struct BenchmarkReport {
  ReplicationConfig config;
  std::vector<GroupIndex> groups;                       // |v| <= d_max
  std::vector<double> s_true;                           // aligned with groups
  std::vector<std::pair<GroupIndex, double>> s_true_all;  // every subset
  ProcedureSummary gs;
  ProcedureSummary rdg;
  std::vector<ReplicationRecord> records;
};

namespace detail {

inline Dataset sample_g_dataset(const Eigen::VectorXd& c, int n, double sigma,
                                std::uint64_t x_seed, std::uint64_t noise_seed) {
  Dataset out;
  out.X = lhs_sample(n, static_cast<int>(c.size()), x_seed);
  out.Y = g_function(out.X, c);
  if (sigma > 0.0) {
    RandomStream rs(noise_seed);
    for (Eigen::Index i = 0; i < out.Y.size(); ++i) out.Y[i] += sigma * rs.normal();
  }
  return out;
}

inline void score_outcome(ProcedureOutcome& o, SelectionResult res, Tuner& tuner,
                          const std::vector<GroupIndex>& groups,
                          const Dataset& train, const Eigen::VectorXd& m_train,
                          const Dataset& perf,
                          const std::vector<std::pair<GroupIndex, double>>& s_all) {
  o.kernel = res.kernel;
  o.pe = res.pe;
  o.mu = res.mu;
  o.gamma = res.gamma;
  o.lambda = res.lambda;
  o.intercept_only = res.intercept_only;

  Eigen::VectorXd pred_perf = predict(res.model, perf.X);
  o.r2 = r_squared(perf.Y, pred_perf);
  Eigen::VectorXd pred_train = predict(res.model, train.X);
  o.er = empirical_risk(m_train, pred_train);

  o.s_hat.assign(groups.size(), 0.0);
  o.selected.assign(groups.size(), 0);
  if (!res.model.groups.empty()) {
    SobolReport rep = sobol_quadratic(res.model, tuner.omegas());
    for (std::size_t j = 0; j < groups.size(); ++j)
      o.s_hat[j] = rep.index_for(groups[j]);
    for (const auto& v : res.model.groups)
      for (std::size_t j = 0; j < groups.size(); ++j)
        if (groups[j] == v) o.selected[j] = 1;
    o.ge = global_error(rep, s_all);
  } else {
    double s = 0.0;
    for (const auto& [v, sv] : s_all) s += sv * sv;
    o.ge = s;
  }
  o.ok = true;
}

}  // namespace detail

// One replication: draw three independent noisy samples of the g-function
// (training, tuning, performance), select a model with each procedure on the
// shared fit path, and score it. Per-procedure failures are recorded, not
// thrown, so one bad replication cannot sink a study.
inline ReplicationRecord run_replication(const ReplicationConfig& cfg, int rep) {
  cfg.validate();
  const Eigen::VectorXd c = cfg.coefficients();
  const std::uint64_t rep_seed = derive_seed(cfg.seed, 7, static_cast<std::uint64_t>(rep));

  ReplicationRecord rec;
  rec.rep = rep;

  Dataset train = detail::sample_g_dataset(c, cfg.n, cfg.sigma,
                                           derive_seed(rep_seed, 1),
                                           derive_seed(rep_seed, 2));
  Dataset tune = detail::sample_g_dataset(c, cfg.n, cfg.sigma,
                                          derive_seed(rep_seed, 3),
                                          derive_seed(rep_seed, 4));
  Dataset perf = detail::sample_g_dataset(c, cfg.n, cfg.sigma,
                                          derive_seed(rep_seed, 5),
                                          derive_seed(rep_seed, 6));
  Eigen::VectorXd m_train = g_function(train.X, c);
  auto s_all = analytic_sobol(c);
  auto groups = enumerate_groups(static_cast<int>(c.size()), cfg.d_max);

  std::vector<KernelFamily> families;
  if (cfg.mixed)
    families = {KernelFamily::brownian(), KernelFamily::matern(),
                KernelFamily::gaussian()};
  else
    families = {cfg.kernel};

  std::vector<Tuner> tuners;
  tuners.reserve(families.size());
  for (const auto& fam : families) {
    ModelSpec spec;
    spec.kernel = fam;
    spec.d_max = cfg.d_max;
    tuners.emplace_back(train, spec);
  }

  auto run_proc = [&](Procedure proc, ProcedureOutcome& out) {
    try {
      SelectionResult best;
      Tuner* best_tuner = nullptr;
      for (auto& tuner : tuners) {
        SelectionResult r =
            tuner.select(proc, Holdout{tune}, cfg.grid, cfg.lambda, cfg.fit);
        bool take = !best_tuner || (!std::isnan(r.pe) &&
                                    (std::isnan(best.pe) || r.pe < best.pe));
        if (take) {
          best = std::move(r);
          best_tuner = &tuner;
        }
      }
      detail::score_outcome(out, std::move(best), *best_tuner, groups, train,
                            m_train, perf, s_all);
    } catch (const std::exception& ex) {
      out.ok = false;
      out.error = ex.what();
    }
  };

  if (cfg.run_gs) run_proc(Procedure::gs, rec.gs);
  if (cfg.run_rdg) run_proc(Procedure::rdg, rec.rdg);
  return rec;
}

namespace detail {

inline void summarize(ProcedureSummary& s, const std::string& name,
                      const std::vector<ReplicationRecord>& records,
                      const ProcedureOutcome ReplicationRecord::*member,
                      const std::vector<GroupIndex>& groups,
                      const std::vector<double>& s_true, double rho) {
  s.procedure = name;
  const std::size_t m = groups.size();
  s.mean_s.assign(m, 0.0);
  s.sd_s.assign(m, 0.0);
  s.psel.assign(m, 0.0);

  std::vector<const ProcedureOutcome*> ok;
  for (const auto& r : records)
    if ((r.*member).ok) ok.push_back(&(r.*member));
  s.n_ok = static_cast<int>(ok.size());
  if (ok.empty()) return;

  auto moments = [&](auto getter, double& mean, double& sd) {
    double sum = 0.0;
    for (const auto* o : ok) sum += getter(*o);
    mean = sum / static_cast<double>(ok.size());
    if (ok.size() < 2) {
      sd = 0.0;
      return;
    }
    double ss = 0.0;
    for (const auto* o : ok) {
      double dv = getter(*o) - mean;
      ss += dv * dv;
    }
    sd = std::sqrt(ss / static_cast<double>(ok.size() - 1));
  };

  moments([](const ProcedureOutcome& o) { return o.r2; }, s.mean_r2, s.sd_r2);
  moments([](const ProcedureOutcome& o) { return o.er; }, s.mean_er, s.sd_er);
  moments([](const ProcedureOutcome& o) { return o.ge; }, s.mean_ge, s.sd_ge);
  for (std::size_t j = 0; j < m; ++j) {
    moments([j](const ProcedureOutcome& o) { return o.s_hat[j]; }, s.mean_s[j],
            s.sd_s[j]);
    double cnt = 0.0;
    for (const auto* o : ok) cnt += o->selected[j];
    s.psel[j] = 100.0 * cnt / static_cast<double>(ok.size());
  }

  double active_sum = 0.0, inert_sum = 0.0;
  int active_n = 0, inert_n = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (s_true[j] > rho) {
      active_sum += s.psel[j];
      ++active_n;
    } else {
      inert_sum += s.psel[j];
      ++inert_n;
    }
  }
  if (active_n) s.psel_active = active_sum / active_n;
  if (inert_n) s.psel_inert = inert_sum / inert_n;

  for (const auto* o : ok) ++s.kernel_counts[o->kernel];
}

}  // namespace detail

inline BenchmarkReport run_benchmark(const ReplicationConfig& cfg) {
  cfg.validate();
  BenchmarkReport rep;
  rep.config = cfg;
  const Eigen::VectorXd c = cfg.coefficients();
  rep.groups = enumerate_groups(static_cast<int>(c.size()), cfg.d_max);
  rep.s_true_all = analytic_sobol(c);
  rep.s_true.assign(rep.groups.size(), 0.0);
  for (std::size_t j = 0; j < rep.groups.size(); ++j)
    for (const auto& [v, sv] : rep.s_true_all)
      if (v == rep.groups[j]) {
        rep.s_true[j] = sv;
        break;
      }

  rep.records.assign(static_cast<std::size_t>(cfg.replications), ReplicationRecord{});
  parallel_for(cfg.replications, cfg.threads, [&](int i) {
    rep.records[static_cast<std::size_t>(i)] = run_replication(cfg, i);
  });

  detail::summarize(rep.gs, "gs", rep.records, &ReplicationRecord::gs, rep.groups,
                    rep.s_true, cfg.rho);
  detail::summarize(rep.rdg, "rdg", rep.records, &ReplicationRecord::rdg,
                    rep.groups, rep.s_true, cfg.rho);
  return rep;
}

}  // namespace ranova
