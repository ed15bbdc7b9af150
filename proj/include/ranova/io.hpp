#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ranova/benchmark.hpp"
#include "ranova/errors.hpp"
#include "ranova/model.hpp"
#include "ranova/selection.hpp"
#include "ranova/sensitivity.hpp"

namespace ranova {

using json = nlohmann::json;

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& field, long lineno) {
  try {
    std::size_t used = 0;
    double v = std::stod(field, &used);
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) ++used;
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw parse_error("bad number '" + field + "'", lineno);
  }
}

// %.17g always round-trips a double through text.
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// --- datasets -----------------------------------------------------------------

// CSV with header y,x1,...,xd and one observation per row.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  std::string line;
  long lineno = 0;

  if (!std::getline(in, line)) throw parse_error("empty file '" + path + "'", 1);
  ++lineno;
  auto header = detail::split_csv(line);
  if (header.empty() || header.front() != "y")
    throw parse_error("header must start with 'y'", lineno);
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw parse_error("header names no input columns", lineno);
  for (int a = 1; a <= d; ++a)
    if (header[static_cast<std::size_t>(a)] != "x" + std::to_string(a))
      throw parse_error("expected column 'x" + std::to_string(a) + "', found '" +
                            header[static_cast<std::size_t>(a)] + "'",
                        lineno);

  std::vector<double> ys;
  std::vector<double> xs;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw parse_error("expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()),
                        lineno);
    for (std::size_t f = 0; f < fields.size(); ++f) {
      double v = detail::parse_double(fields[f], lineno);
      if (!std::isfinite(v))
        throw validation_error("non-finite value at line " + std::to_string(lineno));
      (f == 0 ? ys : xs).push_back(v);
    }
  }
  if (ys.size() < 2)
    throw validation_error("'" + path + "' has " + std::to_string(ys.size()) +
                           " data rows, need at least 2");

  Dataset out;
  const auto n = static_cast<Eigen::Index>(ys.size());
  out.Y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  out.X.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a)
      out.X(i, a) = xs[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                       static_cast<std::size_t>(a)];
  return out;
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "y";
  for (int a = 1; a <= data.d(); ++a) out << ",x" << a;
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << detail::fmt(data.Y[i]);
    for (int a = 0; a < data.d(); ++a) out << "," << detail::fmt(data.X(i, a));
    out << "\n";
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

// --- generic json files ---------------------------------------------------------

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw parse_error(std::string("'") + path + "': " + ex.what());
  }
}

// --- marginals and models -------------------------------------------------------

inline json marginal_to_json(const MarginalDistribution& m) {
  if (m.kind() == MarginalDistribution::Kind::uniform01)
    return json{{"type", "uniform01"}, {"quad_nodes", m.quad_node_count()}};
  return json{{"type", "table"},
              {"lo", m.lo()},
              {"hi", m.hi()},
              {"nodes", m.nodes()},
              {"weights", m.weights()}};
}

inline MarginalDistribution marginal_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "uniform01")
    return MarginalDistribution::uniform01(j.value("quad_nodes", 256));
  if (type == "table")
    return MarginalDistribution::from_table(
        j.at("lo").get<double>(), j.at("hi").get<double>(),
        j.at("nodes").get<std::vector<double>>(),
        j.at("weights").get<std::vector<double>>());
  throw parse_error("marginal: unknown type '" + type + "'");
}

inline json model_to_json(const Metamodel& model) {
  model.validate();
  if (model.kernels.empty())
    throw argument_error("model: cannot serialize a model without kernels");
  json j;
  j["format"] = "ranova-model";
  j["version"] = 1;
  j["f0"] = model.f0;
  j["d"] = model.d();
  j["d_max"] = model.d_max;
  j["kernel"] = model.kernels.front().base().name();
  json marginals = json::array();
  for (const auto& k : model.kernels) marginals.push_back(marginal_to_json(k.marginal()));
  j["marginals"] = std::move(marginals);
  json groups = json::array();
  json theta = json::object();
  for (std::size_t g = 0; g < model.groups.size(); ++g) {
    groups.push_back(model.groups[g].label());
    theta[model.groups[g].label()] =
        std::vector<double>(model.theta[g].data(),
                            model.theta[g].data() + model.theta[g].size());
  }
  j["groups"] = std::move(groups);
  j["theta"] = std::move(theta);
  json rows = json::array();
  for (Eigen::Index i = 0; i < model.X_train.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index a = 0; a < model.X_train.cols(); ++a)
      row.push_back(model.X_train(i, a));
    rows.push_back(std::move(row));
  }
  j["x_train"] = std::move(rows);
  return j;
}

inline Metamodel model_from_json(const json& root) {
  // Accept either a bare model object or an envelope holding one.
  const json& j = root.contains("model") && !root.contains("f0") ? root.at("model") : root;
  try {
    if (j.value("format", "") != "ranova-model")
      throw parse_error("model: missing or wrong 'format' marker");
    Metamodel m;
    m.f0 = j.at("f0").get<double>();
    m.d_max = j.value("d_max", 0);
    const int d = j.at("d").get<int>();
    KernelFamily fam = KernelFamily::parse(j.at("kernel").get<std::string>());
    const auto& marg = j.at("marginals");
    if (static_cast<int>(marg.size()) != d)
      throw parse_error("model: marginal count does not match d");
    m.kernels.reserve(static_cast<std::size_t>(d));
    for (const auto& mj : marg)
      m.kernels.emplace_back(fam, marginal_from_json(mj));
    const auto& rows = j.at("x_train");
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n < 1) throw parse_error("model: empty training design");
    m.X_train.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<int>(row.size()) != d)
        throw parse_error("model: training row has wrong width");
      for (int a = 0; a < d; ++a) m.X_train(i, a) = row.at(static_cast<std::size_t>(a)).get<double>();
    }
    for (const auto& gj : j.at("groups")) {
      GroupIndex v = GroupIndex::parse(gj.get<std::string>());
      auto coef = j.at("theta").at(v.label()).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(coef.size()) != n)
        throw parse_error("model: coefficient length mismatch for group " + v.label());
      m.groups.push_back(std::move(v));
      m.theta.emplace_back(Eigen::Map<Eigen::VectorXd>(coef.data(), n));
    }
    m.validate();
    return m;
  } catch (const json::exception& ex) {
    throw parse_error(std::string("model: ") + ex.what());
  }
}

// --- reports ---------------------------------------------------------------------

inline json sobol_to_json(const SobolReport& rep) {
  json j;
  j["method"] = rep.method;
  j["total_variance"] = rep.total;
  j["clamped"] = rep.clamped;
  json items = json::array();
  for (std::size_t g = 0; g < rep.groups.size(); ++g)
    items.push_back(json{{"group", rep.groups[g].label()},
                         {"variance", rep.variances[g]},
                         {"index", rep.indices[g]}});
  j["components"] = std::move(items);
  json global = json::object();
  for (Eigen::Index a = 0; a < rep.global.size(); ++a)
    global["x" + std::to_string(a + 1)] = rep.global[a];
  j["global"] = std::move(global);
  return j;
}

inline json selection_to_json(const SelectionResult& res) {
  json j;
  j["procedure"] = procedure_name(res.procedure);
  j["kernel"] = res.kernel;
  j["mu"] = res.mu;
  j["gamma"] = res.gamma;
  j["lambda"] = res.lambda;
  j["pe"] = res.pe;
  j["support"] = res.support;
  j["intercept_only"] = res.intercept_only;
  if (!res.kernel_pe.empty()) {
    json kp = json::object();
    for (const auto& [name, pe] : res.kernel_pe) kp[name] = pe;
    j["kernel_pe"] = std::move(kp);
  }
  if (!res.model.kernels.empty()) j["model"] = model_to_json(res.model);
  return j;
}

inline void write_pe_surface_csv(const std::string& path,
                                 const std::vector<GridPointPE>& surface) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "mu,gamma,pe,failed,support\n";
  for (const auto& p : surface) {
    out << detail::fmt(p.mu) << "," << detail::fmt(p.gamma) << ","
        << (p.failed ? "" : detail::fmt(p.pe)) << "," << (p.failed ? 1 : 0) << ",";
    for (std::size_t i = 0; i < p.support.size(); ++i) {
      if (i) out << ";";
      out << p.support[i];
    }
    out << "\n";
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline void write_rdg_surface_csv(const std::string& path,
                                  const std::vector<RdgPointPE>& surface) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "support,lambda,pe\n";
  for (const auto& p : surface) {
    for (std::size_t i = 0; i < p.support.size(); ++i) {
      if (i) out << ";";
      out << p.support[i];
    }
    out << "," << detail::fmt(p.lambda) << "," << detail::fmt(p.pe) << "\n";
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline json benchmark_config_to_json(const ReplicationConfig& cfg) {
  json j;
  Eigen::VectorXd c = cfg.coefficients();
  j["c"] = std::vector<double>(c.data(), c.data() + c.size());
  j["n"] = cfg.n;
  j["sigma"] = cfg.sigma;
  j["kernel"] = cfg.mixed ? "mixed" : cfg.kernel.name();
  j["d_max"] = cfg.d_max;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["rho"] = cfg.rho;
  j["threads"] = cfg.threads;
  j["procedures"] = cfg.run_gs && cfg.run_rdg ? "both"
                    : cfg.run_gs              ? "gs"
                                              : "rdg";
  j["l_max"] = cfg.grid.l_max;
  j["weight_mode"] = cfg.grid.weight_mode == WeightMode::unit    ? "unit"
                     : cfg.grid.weight_mode == WeightMode::nu    ? "nu"
                                                                 : "order";
  return j;
}

inline json procedure_summary_to_json(const ProcedureSummary& s,
                                      const std::vector<GroupIndex>& groups) {
  json j;
  j["procedure"] = s.procedure;
  j["n_ok"] = s.n_ok;
  j["mean_r2"] = s.mean_r2;
  j["sd_r2"] = s.sd_r2;
  j["mean_er"] = s.mean_er;
  j["sd_er"] = s.sd_er;
  j["mean_ge"] = s.mean_ge;
  j["sd_ge"] = s.sd_ge;
  j["psel_active"] = s.psel_active;
  j["psel_inert"] = s.psel_inert;
  json per_group = json::object();
  for (std::size_t g = 0; g < groups.size(); ++g)
    per_group[groups[g].label()] = json{{"mean_index", s.mean_s[g]},
                                        {"sd_index", s.sd_s[g]},
                                        {"psel", s.psel[g]}};
  j["groups"] = std::move(per_group);
  if (!s.kernel_counts.empty()) j["kernel_counts"] = s.kernel_counts;
  return j;
}

inline json benchmark_to_json(const BenchmarkReport& rep) {
  json j;
  j["config"] = benchmark_config_to_json(rep.config);
  json groups = json::array();
  for (const auto& v : rep.groups) groups.push_back(v.label());
  j["groups"] = std::move(groups);
  j["s_true"] = rep.s_true;
  if (rep.config.run_gs) j["gs"] = procedure_summary_to_json(rep.gs, rep.groups);
  if (rep.config.run_rdg)
    j["rdg"] = procedure_summary_to_json(rep.rdg, rep.groups);
  json recs = json::array();
  for (const auto& r : rep.records) {
    auto outcome = [&](const ProcedureOutcome& o) {
      json oj;
      oj["ok"] = o.ok;
      if (!o.ok) {
        oj["error"] = o.error;
        return oj;
      }
      oj["kernel"] = o.kernel;
      oj["pe"] = o.pe;
      oj["mu"] = o.mu;
      oj["gamma"] = o.gamma;
      oj["lambda"] = o.lambda;
      oj["r2"] = o.r2;
      oj["er"] = o.er;
      oj["ge"] = o.ge;
      oj["intercept_only"] = o.intercept_only;
      oj["s_hat"] = o.s_hat;
      json sel = json::array();
      for (auto b : o.selected) sel.push_back(static_cast<bool>(b));
      oj["selected"] = std::move(sel);
      return oj;
    };
    json rj{{"rep", r.rep}};
    if (rep.config.run_gs) rj["gs"] = outcome(r.gs);
    if (rep.config.run_rdg) rj["rdg"] = outcome(r.rdg);
    recs.push_back(std::move(rj));
  }
  j["records"] = std::move(recs);
  return j;
}

inline void write_benchmark_csv(const std::string& path, const BenchmarkReport& rep) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << "rep,procedure,ok,kernel,pe,mu,gamma,lambda,r2,er,ge,intercept_only";
  for (const auto& v : rep.groups) out << ",s_" << v.label();
  for (const auto& v : rep.groups) out << ",sel_" << v.label();
  out << "\n";
  auto row = [&](int repno, const char* name, const ProcedureOutcome& o) {
    out << repno << "," << name << "," << (o.ok ? 1 : 0) << "," << o.kernel << ",";
    if (o.ok)
      out << detail::fmt(o.pe) << "," << detail::fmt(o.mu) << ","
          << detail::fmt(o.gamma) << "," << detail::fmt(o.lambda) << ","
          << detail::fmt(o.r2) << "," << detail::fmt(o.er) << ","
          << detail::fmt(o.ge) << "," << (o.intercept_only ? 1 : 0);
    else
      out << ",,,,,,,";
    for (std::size_t g = 0; g < rep.groups.size(); ++g)
      out << "," << (o.ok ? detail::fmt(o.s_hat[g]) : "");
    for (std::size_t g = 0; g < rep.groups.size(); ++g)
      out << "," << (o.ok ? std::to_string(static_cast<int>(o.selected[g])) : "");
    out << "\n";
  };
  for (const auto& r : rep.records) {
    if (rep.config.run_gs) row(r.rep, "gs", r.gs);
    if (rep.config.run_rdg) row(r.rep, "rdg", r.rdg);
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline json error_to_json(const std::string& category, const std::string& message) {
  return json{{"error", json{{"category", category}, {"message", message}}}};
}

}  // namespace ranova
