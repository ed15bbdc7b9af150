#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ranova/benchmark.hpp"
#include "ranova/errors.hpp"
#include "ranova/io.hpp"
#include "ranova/selection.hpp"

namespace ranova {

// Everything the command line can express. The binary only parses flags into
// this struct; the work happens in run(), which is what the tests drive.
struct RunConfig {
  std::string command;  // fit | tune | sobol | benchmark
  std::string input;
  std::string test_input;
  std::string model_path;
  std::string out_dir = ".";
  std::string kernel = "matern";  // family name, or "mixed" for tune/benchmark
  int d_max = 3;
  std::string weights = "unit";
  int l_max = 8;
  std::vector<double> gamma_grid;  // empty keeps the default grid
  std::string procedure = "rdg";
  std::string bench_procedure = "both";  // benchmark only: gs | rdg | both
  int cv = 0;  // folds; 0 selects holdout evaluation via test_input
  std::uint64_t seed = 1;
  int replications = 20;
  int threads = 1;
  double mu = std::numeric_limits<double>::quiet_NaN();  // fit only
  double gamma = 0.0;                                    // fit only
  std::string method = "quadratic";                      // sobol only
  int n = 100;                                           // benchmark only
  double sigma = 0.2;
  std::vector<double> c_list;
  double rho = 1e-4;
  int quad_nodes = 256;
};

namespace detail {

inline int exit_code_for(const std::string& category) {
  if (category == "argument" || category == "validation" ||
      category == "parse" || category == "domain")
    return 2;
  if (category == "io") return 4;
  return 3;  // numerical, construction, degenerate_model
}

inline GridConfig grid_config_of(const RunConfig& cfg) {
  GridConfig g;
  g.l_max = cfg.l_max;
  g.gamma_values = cfg.gamma_grid;
  g.weight_mode = parse_weight_mode(cfg.weights);
  return g;
}

inline ModelSpec spec_of(const RunConfig& cfg, const KernelFamily& family) {
  ModelSpec spec;
  spec.kernel = family;
  spec.d_max = cfg.d_max;
  spec.quad_nodes = cfg.quad_nodes;
  return spec;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += " ";
    out += items[i];
  }
  return out.empty() ? "(none)" : out;
}

inline void print_selection(std::ostream& os, const SelectionResult& res) {
  os << "procedure: " << procedure_name(res.procedure) << "\n"
     << "kernel:    " << res.kernel << "\n";
  if (res.procedure == Procedure::gs)
    os << "mu:        " << res.mu << "\n"
       << "gamma:     " << res.gamma << "\n";
  else
    os << "lambda:    " << res.lambda << "\n";
  os << "pe:        " << res.pe << "\n"
     << "support:   " << join(res.support) << "\n";
  if (res.intercept_only) os << "note:      intercept-only model\n";
}

inline int run_fit(const RunConfig& cfg, const std::filesystem::path& out_dir,
                   std::ostream& os) {
  if (cfg.input.empty()) throw argument_error("fit: --input is required");
  if (std::isnan(cfg.mu)) throw argument_error("fit: --mu is required");
  if (cfg.mu < 0.0 || cfg.gamma < 0.0) throw argument_error("fit: negative penalty");
  if (cfg.kernel == "mixed")
    throw argument_error("fit: kernel 'mixed' needs tuning; use the tune command");

  Dataset data = load_dataset(cfg.input);
  Tuner tuner(data, spec_of(cfg, KernelFamily::parse(cfg.kernel)));
  GridConfig gcfg = grid_config_of(cfg);
  TuningGrid grid = tuner.make_grid(gcfg);
  PenaltyWeights w = PenaltyWeights::from_rates(cfg.mu, cfg.gamma, grid.omega,
                                                grid.zeta, data.n());
  FitConfig fcfg;
  FitResult fr = fit(data.Y, tuner.grams(), w, fcfg);
  Metamodel model = tuner.make_model(fr.state);

  json j;
  j["procedure"] = "fit";
  j["kernel"] = cfg.kernel;
  j["mu"] = cfg.mu;
  j["gamma"] = cfg.gamma;
  j["objective"] = fr.objective();
  j["sweeps"] = fr.sweeps;
  j["converged"] = fr.converged;
  j["support"] = model.support_labels();
  j["model"] = model_to_json(model);
  write_json((out_dir / "model.json").string(), j);

  os << "fit: " << model.groups.size() << " active group(s), objective "
     << fr.objective() << ", " << fr.sweeps << " sweep(s)"
     << (fr.converged ? "" : " (not converged)") << "\n"
     << "support: " << join(model.support_labels()) << "\n"
     << "wrote " << (out_dir / "model.json").string() << "\n";
  return 0;
}

inline int run_tune(const RunConfig& cfg, const std::filesystem::path& out_dir,
                    std::ostream& os) {
  if (cfg.input.empty()) throw argument_error("tune: --input is required");
  if (cfg.cv == 0 && cfg.test_input.empty())
    throw argument_error("tune: provide --test-input or --cv");
  if (cfg.cv < 0) throw argument_error("tune: negative fold count");

  Dataset data = load_dataset(cfg.input);
  Evaluation eval = cfg.cv > 0
                        ? Evaluation(KFold{cfg.cv, cfg.seed})
                        : Evaluation(Holdout{load_dataset(cfg.test_input)});
  Procedure proc = parse_procedure(cfg.procedure);
  GridConfig gcfg = grid_config_of(cfg);
  LambdaGridConfig lcfg;
  FitConfig fcfg;

  SelectionResult res;
  if (cfg.kernel == "mixed") {
    res = choose_kernel_mixed(data, eval, proc, spec_of(cfg, KernelFamily::matern()),
                              {KernelFamily::brownian(), KernelFamily::matern(),
                               KernelFamily::gaussian()},
                              gcfg, lcfg, fcfg);
  } else {
    Tuner tuner(data, spec_of(cfg, KernelFamily::parse(cfg.kernel)));
    res = tuner.select(proc, eval, gcfg, lcfg, fcfg);
  }

  json j = selection_to_json(res);
  j["seed"] = cfg.seed;
  j["cv"] = cfg.cv;
  write_json((out_dir / "model.json").string(), j);
  if (!res.pe_surface.empty())
    write_pe_surface_csv((out_dir / "pe_surface.csv").string(), res.pe_surface);
  if (!res.rdg_surface.empty())
    write_rdg_surface_csv((out_dir / "rdg_surface.csv").string(), res.rdg_surface);

  print_selection(os, res);
  os << "wrote " << (out_dir / "model.json").string() << "\n";
  return 0;
}

inline int run_sobol(const RunConfig& cfg, const std::filesystem::path& out_dir,
                     std::ostream& os) {
  if (cfg.model_path.empty()) throw argument_error("sobol: --model is required");
  Metamodel model = model_from_json(read_json(cfg.model_path));

  SobolReport rep;
  if (cfg.method == "quadratic") {
    GramCache cache(model.X_train, model.kernels);
    rep = sobol_quadratic(model, cache.omegas(model.groups));
  } else if (cfg.method == "empirical") {
    if (cfg.input.empty())
      throw argument_error("sobol: the empirical method needs --input for evaluation points");
    Dataset eval = load_dataset(cfg.input);
    if (eval.d() != model.d())
      throw argument_error("sobol: evaluation design dimension mismatch");
    rep = sobol_empirical(model, eval.X);
  } else {
    throw argument_error("sobol: unknown method '" + cfg.method + "'");
  }

  write_json((out_dir / "sobol.json").string(), sobol_to_json(rep));

  os << "method: " << rep.method << "\n";
  os << std::left << std::setw(12) << "group" << std::setw(14) << "index"
     << "variance\n";
  for (std::size_t g = 0; g < rep.groups.size(); ++g)
    os << std::left << std::setw(12) << rep.groups[g].label() << std::setw(14)
       << rep.indices[g] << rep.variances[g] << "\n";
  os << "wrote " << (out_dir / "sobol.json").string() << "\n";
  return 0;
}

inline int run_benchmark_cmd(const RunConfig& cfg,
                             const std::filesystem::path& out_dir,
                             std::ostream& os) {
  ReplicationConfig rc;
  if (!cfg.c_list.empty())
    rc.c = Eigen::Map<const Eigen::VectorXd>(cfg.c_list.data(),
                                             static_cast<Eigen::Index>(cfg.c_list.size()));
  rc.n = cfg.n;
  rc.sigma = cfg.sigma;
  if (cfg.kernel == "mixed")
    rc.mixed = true;
  else
    rc.kernel = KernelFamily::parse(cfg.kernel);
  rc.d_max = cfg.d_max;
  rc.grid = grid_config_of(cfg);
  rc.replications = cfg.replications;
  rc.seed = cfg.seed;
  rc.rho = cfg.rho;
  rc.threads = cfg.threads;
  if (cfg.bench_procedure == "gs")
    rc.run_rdg = false;
  else if (cfg.bench_procedure == "rdg")
    rc.run_gs = false;
  else if (cfg.bench_procedure != "both")
    throw argument_error("benchmark: unknown procedure '" +
                         cfg.bench_procedure + "'");

  BenchmarkReport report = run_benchmark(rc);
  write_json((out_dir / "benchmark.json").string(), benchmark_to_json(report));
  write_benchmark_csv((out_dir / "benchmark.csv").string(), report);

  auto show = [&](const ProcedureSummary& s) {
    os << s.procedure << ": " << s.n_ok << "/" << cfg.replications
       << " replications, mean R2 " << s.mean_r2 << " (sd " << s.sd_r2
       << "), mean GE " << s.mean_ge << ", psel active " << s.psel_active
       << "%, inert " << s.psel_inert << "%\n";
  };
  if (rc.run_gs) show(report.gs);
  if (rc.run_rdg) show(report.rdg);
  os << "wrote " << (out_dir / "benchmark.json").string() << " and "
     << (out_dir / "benchmark.csv").string() << "\n";
  return 0;
}

}  // namespace detail

inline int run(const RunConfig& cfg, std::ostream& os, std::ostream& es) {
  std::filesystem::path out_dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  auto report_failure = [&](const std::string& category, const std::string& what) {
    es << "error: " << what << "\n";
    try {
      std::filesystem::create_directories(out_dir);
      write_json((out_dir / "error.json").string(), error_to_json(category, what));
    } catch (...) {
      // The error report is best effort; the exit code carries the outcome.
    }
  };
  try {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create output directory '" + out_dir.string() + "'");
    if (cfg.command == "fit") return detail::run_fit(cfg, out_dir, os);
    if (cfg.command == "tune") return detail::run_tune(cfg, out_dir, os);
    if (cfg.command == "sobol") return detail::run_sobol(cfg, out_dir, os);
    if (cfg.command == "benchmark") return detail::run_benchmark_cmd(cfg, out_dir, os);
    throw argument_error("unknown command '" + cfg.command + "'");
  } catch (const error& ex) {
    report_failure(ex.category(), ex.what());
    return detail::exit_code_for(ex.category());
  } catch (const std::exception& ex) {
    report_failure("internal", ex.what());
    return 1;
  }
}

}  // namespace ranova
