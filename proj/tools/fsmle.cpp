#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsmle/bounds.hpp"
#include "fsmle/config.hpp"
#include "fsmle/estimation.hpp"
#include "fsmle/geometry.hpp"
#include "fsmle/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fsmle;

namespace {

json vec_json(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json mat_json(const MatrixXd& m) {
  json rows = json::array();
  for (long i = 0; i < m.rows(); ++i)
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

json tail_json(const TailParams& tail) {
  return json{{"dim_a", tail.dim_a}, {"va2", tail.va2},
              {"lambda0", tail.lambda0}, {"yc", tail.yc},
              {"gc", tail.gc},       {"xc", tail.xc},
              {"nu", tail.nu},       {"g", tail.g}};
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::string guarantee_label(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "P <= e^{-%g}", x);
  return buf;
}

int cmd_estimate(const Config& cfg) {
  const Model& model = cfg.scenario.model;
  const VectorXd y = sample_data(model, cfg.scenario.master_seed, 0);
  const FitResult fit = fit_qmle(model, y);
  json doc;
  doc["config"] = json::parse(cfg.echo);
  doc["theta_hat"] = vec_json(fit.theta);
  doc["loglik"] = fit.loglik;
  doc["converged"] = fit.converged;
  doc["iterations"] = fit.iterations;
  doc["status"] = fit.status;
  write_json_file(fs::path(cfg.output.directory) / "estimate.json", doc);
  if (!fit.converged) {
    std::cerr << "estimate: no convergence (" << fit.status << ")\n";
    return 3;
  }
  std::cout << "estimate: converged in " << fit.iterations << " steps\n";
  return 0;
}

int cmd_geometry(const Config& cfg) {
  const LocalGeometry geo = analyze_geometry(cfg.scenario.model);
  json doc;
  doc["config"] = json::parse(cfg.echo);
  doc["theta_star"] = vec_json(geo.theta_star);
  doc["curvature"] = mat_json(geo.curvature.mat());
  doc["score_cov"] = mat_json(geo.score_cov.mat());
  doc["score_cov_se"] = geo.score_cov_se;
  doc["a"] = geo.a;
  doc["nu"] = geo.nu;
  doc["g"] = geo.g;
  doc["g1"] = geo.range.g1;
  doc["effective_n"] = geo.effective_n;
  doc["target"] = {{"grad_norm", geo.target_info.grad_norm},
                   {"iterations", geo.target_info.iterations},
                   {"mc_std_error", geo.target_info.mc_std_error}};
  doc["moduli"] = {{"r", geo.moduli.r},
                   {"delta", geo.moduli.delta},
                   {"rho", geo.moduli.rho},
                   {"conditions_violated", geo.moduli.conditions_violated}};
  doc["lower"] = {{"r", geo.lower.r},
                  {"b", geo.lower.b},
                  {"r_b_monotone", geo.lower.r_b_monotone}};
  try {
    doc["tail"] = tail_json(spectral_stats(geo.curvature, geo.score_cov,
                                           geo.nu, geo.g));
    doc["tail"]["applicable"] = true;
  } catch (const std::exception& e) {
    doc["tail"] = {{"applicable", false}, {"reason", e.what()}};
  }
  write_json_file(fs::path(cfg.output.directory) / "geometry.json", doc);
  std::cout << "geometry: wrote geometry.json (a = " << geo.a << ")\n";
  return 0;
}

int cmd_bounds(const Config& cfg, double x) {
  const LocalGeometry geo = analyze_geometry(cfg.scenario.model);
  const int p = static_cast<int>(geo.theta_star.size());
  json doc;
  doc["config"] = json::parse(cfg.echo);
  doc["x"] = x;

  double zq = std::numeric_limits<double>::quiet_NaN();
  try {
    zq = err_bound(x, p, geo.g, geo.nu);
    doc["err_bound"] = {{"applicable", true}, {"value", zq}};
  } catch (const std::exception& e) {
    doc["err_bound"] = {{"applicable", false}, {"reason", e.what()}};
  }

  TailParams tail;
  bool have_tail = false;
  try {
    tail = spectral_stats(geo.curvature, geo.score_cov, geo.nu, geo.g);
    const QuadTailValue qt = quad_tail(x, tail);
    have_tail = true;
    doc["quad_tail"] = tail_json(tail);
    doc["quad_tail"]["applicable"] = true;
    doc["quad_tail"]["z"] = qt.z;
    doc["quad_tail"]["tail_prob"] = qt.tail_prob;
    doc["quad_tail"]["branch"] = qt.branch;
  } catch (const std::exception& e) {
    doc["quad_tail"] = {{"applicable", false}, {"reason", e.what()}};
  }

  const double g_const = geo.g;
  const ConcentrationResult con = concentration_radius_varying(
      x, p, geo.nu, geo.lower, [g_const](double) { return g_const; });
  json schedule = json::array();
  for (const auto& step : con.schedule)
    schedule.push_back({{"k", step.k}, {"r", step.r}, {"b", step.b}});
  doc["concentration"] = {{"r0", con.r0},
                          {"feasible", con.feasible},
                          {"reason", con.reason},
                          {"guarantee", con.guarantee},
                          {"guarantee_label", guarantee_label(x)},
                          {"schedule", schedule}};

  std::string r_source = "config";
  double r = cfg.scenario.r;
  if (r <= 0.0) {
    if (con.feasible) {
      r = con.r0;
      r_source = "auto";
    } else {
      r = 4.0 * std::sqrt(static_cast<double>(p));
      r_source = "fallback";
    }
  }
  const double delta = geo.moduli.delta_at(r);
  const double omega = 3.0 * geo.nu * geo.moduli.rho_at(r);
  const Bracket bracket =
      make_bracket(geo.curvature, geo.score_cov, delta, omega, r);
  doc["bracket"] = {{"r", r},
                    {"r_source", r_source},
                    {"delta", delta},
                    {"omega", omega},
                    {"valid", bracket.valid}};
  try {
    const auto ta = tau_alpha(delta, omega, geo.a);
    doc["gap"] = {{"applicable", true},
                  {"tau", ta.first},
                  {"alpha", ta.second}};
    if (have_tail && std::isfinite(zq)) {
      doc["spread_bound"] = {
          {"applicable", true},
          {"value", spread_bound(omega, zq, ta.second, tail.lambda0,
                                 quad_tail(x, tail).z)}};
    } else {
      doc["spread_bound"] = {{"applicable", false},
                             {"reason", "needs the error bound and the "
                                        "quadratic tail"}};
    }
  } catch (const std::exception& e) {
    doc["gap"] = {{"applicable", false}, {"reason", e.what()}};
    doc["spread_bound"] = {{"applicable", false}, {"reason", e.what()}};
  }

  write_json_file(fs::path(cfg.output.directory) / "bounds.json", doc);
  std::cout << "bounds: wrote bounds.json (r0 "
            << (con.feasible ? "feasible" : "infeasible") << ")\n";
  return 0;
}

int cmd_verify(const Config& cfg, double x_for_radius) {
  const ScenarioContext ctx = prepare_scenario(cfg.scenario, x_for_radius);
  const std::vector<ReplicationRecord> records =
      run_replications(cfg.scenario, ctx);
  const std::vector<CheckReport> reports =
      run_all_checks(cfg.scenario, ctx, records);

  json echo = json::parse(cfg.echo);
  echo["resolved"] = {{"r", ctx.r},
                      {"r_auto", ctx.r_auto},
                      {"x_for_radius", ctx.x_for_radius},
                      {"delta", ctx.delta},
                      {"omega", ctx.omega},
                      {"bracket_valid", ctx.bracket.valid}};
  const std::string echo_str = echo.dump();

  const fs::path dir(cfg.output.directory);
  if (cfg.output.csv) {
    write_records_csv((dir / "verify_records.csv").string(), records,
                      echo_str);
    write_reports_csv((dir / "verify_checks.csv").string(), reports,
                      echo_str);
  }
  if (cfg.output.json)
    write_reports_json((dir / "verify_summary.json").string(), reports, ctx,
                       echo_str);

  bool all_pass = true;
  for (const auto& rep : reports) {
    all_pass = all_pass && rep.pass;
    std::printf("[%s] %-22s x=%-4g empirical=%-12.6g bound=%-12.6g %s\n",
                rep.pass ? "PASS" : "FAIL", rep.name.c_str(), rep.x,
                rep.empirical, rep.bound, rep.note.c_str());
  }
  return all_pass ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-likelihood estimation with finite-sample guarantees"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  double x = 2.0;
  int workers = -1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")
        ->required();
    sub->add_option("--x", x, "deviation level (default 2)");
    sub->add_option("--workers", workers,
                    "replication worker threads (0: all cores)");
    sub->add_option("--out", out_dir, "output directory override");
  };
  CLI::App* est = app.add_subcommand("estimate", "fit one simulated dataset");
  CLI::App* geo =
      app.add_subcommand("geometry", "target, information matrices, moduli");
  CLI::App* bnd =
      app.add_subcommand("bounds", "evaluate the finite-sample bounds");
  CLI::App* ver =
      app.add_subcommand("verify", "Monte Carlo verification sweep");
  for (CLI::App* sub : {est, geo, bnd, ver}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Config cfg = load_config(config_path);
    if (workers >= 0) cfg.scenario.workers = workers;
    if (!out_dir.empty()) cfg.output.directory = out_dir;
    fs::create_directories(cfg.output.directory);
    if (est->parsed()) return cmd_estimate(cfg);
    if (geo->parsed()) return cmd_geometry(cfg);
    if (bnd->parsed()) return cmd_bounds(cfg, x);
    return cmd_verify(cfg, x);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
