#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "countreg/engine.hpp"
#include "countreg/sim.hpp"
#include "countreg/tuning.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace countreg;

namespace {

int log_level() {
  const char* v = std::getenv("COUNTREG_LOG");
  return v ? std::atoi(v) : 0;
}

void log_note(int level, const std::string& msg) {
  if (log_level() >= level) std::fprintf(stderr, "countreg: %s\n", msg.c_str());
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// empty field for undefined values so CSV consumers see them as missing
std::string csv_num(double v) { return std::isnan(v) ? "" : fmt17(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json imatrix_json(const Eigen::MatrixXi& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json fit_json(const FitResult& res, const CountDataset& data) {
  json j;
  j["model"] = model_kind_name(res.b_hat.kind);
  j["p"] = res.b_hat.p();
  j["D"] = res.b_hat.D;
  j["column_roles"] = column_roles(res.b_hat.kind, res.b_hat.D);
  j["covariate_names"] = data.x.covariate_names;
  j["taxa_names"] = data.y.taxa_names;
  j["b"] = matrix_json(res.b_hat.b);
  ActiveSummary act = extract_active(res.b_hat, 0.0 + 1e-300);
  j["active_cells"] = res.active_cells;
  j["active_groups"] = res.active_groups;
  j["signs"] = imatrix_json(act.signs);
  if (data.standardization) {
    j["standardization"] = {{"mean", data.standardization->mean},
                            {"sd", data.standardization->sd}};
  } else {
    j["standardization"] = nullptr;
  }
  return j;
}

json summary_json(const FitResult& res, const CountDataset& data, double lambda,
                  double alpha) {
  json drops = json::array();
  for (const auto& e : res.drop_events)
    drops.push_back({{"iteration", e.iteration},
                     {"kind", e.is_group ? "group" : "cell"},
                     {"index", e.index}});
  int K = res.b_hat.p() * res.b_hat.d_e();
  json j;
  j["lambda"] = lambda;
  j["alpha"] = alpha;
  j["loglik"] = res.loglik_final;
  j["ebic"] = K >= 1 ? json(ebic(res.loglik_final, res.kappa, data.n(), K)) : json();
  j["kappa"] = res.kappa;
  j["iterations"] = res.iterations;
  j["converged"] = res.converged;
  j["objective"] = res.objective_trace.back();
  j["clamp_events"] = res.clamp_events;
  j["drop_events"] = drops;
  return j;
}

void write_trace_csv(const FitResult& res, const fs::path& path) {
  std::string out = "iteration,objective\n";
  for (std::size_t t = 0; t < res.objective_trace.size(); ++t)
    out += std::to_string(t) + "," + fmt17(res.objective_trace[t]) + "\n";
  write_text(path, out);
}

struct CommonFitOpts {
  std::string covariates, counts, out_dir = ".";
  std::string model = "dm", penalty = "sgl", policy = "drop", format = "json";
  double alpha = 0.5, tol = 1e-6;
  int max_iter = 500;
  bool standardize = false;
};

void add_common(CLI::App* cmd, CommonFitOpts* o) {
  cmd->add_option("--covariates", o->covariates, "covariate CSV")->required();
  cmd->add_option("--counts", o->counts, "count CSV")->required();
  cmd->add_option("--model", o->model, "mn|dm|nm|gdm");
  cmd->add_option("--penalty", o->penalty, "lasso|group|sgl");
  cmd->add_option("--alpha", o->alpha, "sgl mixing weight in [0,1]");
  cmd->add_option("--tol", o->tol, "relative objective tolerance");
  cmd->add_option("--max-iter", o->max_iter, "outer iteration cap");
  cmd->add_option("--epsilon-policy", o->policy, "drop|perturb");
  cmd->add_option("--out-dir", o->out_dir, "output directory");
  cmd->add_option("--format", o->format, "json|csv coefficient output");
  cmd->add_flag("--standardize", o->standardize, "center/scale covariates");
}

double effective_alpha(const CommonFitOpts& o) {
  if (o.penalty == "lasso") return 1.0;
  if (o.penalty == "group") return 0.0;
  if (o.penalty == "sgl") return o.alpha;
  throw std::invalid_argument("unknown penalty '" + o.penalty + "'");
}

EpsilonPolicy policy_of(const CommonFitOpts& o) {
  EpsilonPolicy pol;
  if (o.policy == "drop") pol.mode = EpsilonPolicy::Mode::Drop;
  else if (o.policy == "perturb") pol.mode = EpsilonPolicy::Mode::Perturb;
  else throw std::invalid_argument("unknown epsilon policy '" + o.policy + "'");
  return pol;
}

void write_coef_csv(const FitResult& res, const CountDataset& data,
                    const fs::path& path) {
  auto roles = column_roles(res.b_hat.kind, res.b_hat.D);
  std::string out = "term";
  for (const auto& r : roles) out += "," + r;
  out += "\n";
  for (int row = 0; row <= res.b_hat.p(); ++row) {
    out += row == 0 ? "(intercept)" : data.x.covariate_names[row - 1];
    for (int d = 0; d < res.b_hat.d_e(); ++d)
      out += "," + fmt17(res.b_hat.b(row, d));
    out += "\n";
  }
  write_text(path, out);
}

void emit_status(const json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_fit(const CommonFitOpts& o, double lambda) {
  CountDataset data = load_dataset(o.covariates, o.counts, o.standardize);
  ModelKind kind = parse_model_kind(o.model);
  FitControls controls;
  controls.tol = o.tol;
  controls.max_iter = o.max_iter;
  PenaltyConfig cfg = make_penalty(kind, data.p(), data.D(), lambda,
                                   effective_alpha(o), policy_of(o));
  log_note(1, "fitting " + o.model + " at lambda=" + fmt17(lambda));
  FitResult res = fit_count_sgl(kind, data, cfg, controls);

  fs::create_directories(o.out_dir);
  write_text(fs::path(o.out_dir) / "coefficients.json",
             fit_json(res, data).dump(2) + "\n");
  if (o.format == "csv")
    write_coef_csv(res, data, fs::path(o.out_dir) / "coefficients.csv");
  write_trace_csv(res, fs::path(o.out_dir) / "trace.csv");
  write_text(fs::path(o.out_dir) / "summary.json",
             summary_json(res, data, lambda, cfg.alpha).dump(2) + "\n");

  json status = {{"command", "fit"},      {"converged", res.converged},
                 {"iterations", res.iterations}, {"kappa", res.kappa},
                 {"objective", res.objective_trace.back()}, {"out_dir", o.out_dir}};
  emit_status(status);
  return res.converged ? 0 : 2;
}

int cmd_tune(const CommonFitOpts& o, SearchSpec spec) {
  CountDataset data = load_dataset(o.covariates, o.counts, o.standardize);
  ModelKind kind = parse_model_kind(o.model);
  if (o.penalty == "lasso") spec.alpha_grid = {1.0};
  if (o.penalty == "group") spec.alpha_grid = {0.0};
  FitControls controls;
  controls.tol = o.tol;
  controls.max_iter = o.max_iter;

  TuningResult tr;
  try {
    tr = tune(kind, data, spec, controls, policy_of(o));
  } catch (const std::runtime_error& e) {
    json status = {{"command", "tune"}, {"converged", false}, {"error", e.what()}};
    emit_status(status);
    return 2;
  }

  fs::create_directories(o.out_dir);
  std::string path_csv = "lambda,alpha,ebic,loglik,kappa,converged\n";
  for (const auto& pt : tr.ebic_table)
    path_csv += fmt17(pt.lambda) + "," + fmt17(pt.alpha) + "," + csv_num(pt.ebic) +
                "," + csv_num(pt.loglik) + "," + std::to_string(pt.kappa) + "," +
                (pt.converged ? "1" : "0") + "\n";
  write_text(fs::path(o.out_dir) / "ebic_path.csv", path_csv);
  write_text(fs::path(o.out_dir) / "best_coefficients.json",
             fit_json(tr.best_fit, data).dump(2) + "\n");
  if (o.format == "csv")
    write_coef_csv(tr.best_fit, data, fs::path(o.out_dir) / "best_coefficients.csv");
  json best = summary_json(tr.best_fit, data, tr.best_lambda, tr.best_alpha);
  best["lambda_max"] = tr.lambda_max;
  json lm = json::array();
  for (const auto& [a, l] : tr.lambda_max_per_alpha)
    lm.push_back({{"alpha", a}, {"lambda_max", l}});
  best["lambda_max_per_alpha"] = lm;
  best["n_failures"] = tr.n_failures;
  best["points"] = tr.ebic_table.size();
  write_text(fs::path(o.out_dir) / "best_summary.json", best.dump(2) + "\n");

  json status = {{"command", "tune"},
                 {"best_lambda", tr.best_lambda},
                 {"best_alpha", tr.best_alpha},
                 {"ebic", ebic(tr.best_fit.loglik_final, tr.best_fit.kappa, data.n(),
                               data.p() * effective_columns(kind, data.D()))},
                 {"kappa", tr.best_fit.kappa},
                 {"out_dir", o.out_dir}};
  emit_status(status);
  return 0;
}

int cmd_simulate(const ScenarioConfig& sc, int replicate, const std::string& out_dir) {
  auto [data, truth] = gen_dataset(sc, replicate);
  fs::create_directories(out_dir);
  write_covariates_csv(data, (fs::path(out_dir) / "covariates.csv").string());
  write_counts_csv(data, (fs::path(out_dir) / "counts.csv").string());
  json t;
  t["beta_true"] = matrix_json(truth.beta.b);
  t["nonzero"] = imatrix_json(truth.nonzero);
  t["sign"] = imatrix_json(truth.sign);
  t["config"] = {{"n", sc.n},        {"p", sc.p},
                 {"D", sc.D},        {"f", sc.f},
                 {"delta_p", sc.delta_p}, {"delta_D", sc.delta_D},
                 {"rho", sc.rho},    {"total_mean", sc.total_mean},
                 {"seed", sc.seed},  {"replicate", replicate}};
  write_text(fs::path(out_dir) / "truth.json", t.dump(2) + "\n");
  json status = {{"command", "simulate"}, {"n", sc.n},  {"p", sc.p},
                 {"D", sc.D},             {"out_dir", out_dir},
                 {"replicate", replicate}};
  emit_status(status);
  return 0;
}

json aggregate_json(const Aggregate& a) {
  json j;
  j["mean"] = std::isnan(a.mean) ? json() : json(a.mean);
  j["sd"] = std::isnan(a.sd) ? json() : json(a.sd);
  j["n_defined"] = a.n_defined;
  return j;
}

int cmd_bench(const ScenarioConfig& sc, const SearchSpec& spec,
              const CommonFitOpts& o, int threads) {
  FitControls controls;
  controls.tol = o.tol;
  controls.max_iter = o.max_iter;
  log_note(1, "bench: " + std::to_string(sc.replicates) + " replicates on " +
                  std::to_string(threads) + " thread(s)");
  ScenarioReport rep = run_scenario(sc, spec, controls, policy_of(o), threads);

  fs::create_directories(o.out_dir);
  std::string csv =
      "replicate,n,p,delta_p,group_precision,group_recall,within_precision,"
      "within_recall,direction_accuracy,lambda,alpha,kappa,ok\n";
  for (const auto& r : rep.replicates) {
    const auto& m = r.metrics;
    csv += std::to_string(r.replicate) + "," + std::to_string(sc.n) + "," +
           std::to_string(sc.p) + "," + fmt17(sc.delta_p) + "," +
           csv_num(m.group_precision) + "," + csv_num(m.group_recall) + "," +
           csv_num(m.within_precision) + "," + csv_num(m.within_recall) + "," +
           csv_num(m.direction_accuracy) + "," +
           (r.ok ? fmt17(r.lambda) : "") + "," + (r.ok ? fmt17(r.alpha) : "") + "," +
           std::to_string(r.kappa) + "," + (r.ok ? "1" : "0") + "\n";
  }
  write_text(fs::path(o.out_dir) / "report.csv", csv);

  json j;
  j["scenario"] = {{"n", sc.n},
                   {"p", sc.p},
                   {"D", sc.D},
                   {"f", sc.f},
                   {"delta_p", sc.delta_p},
                   {"delta_D", sc.delta_D},
                   {"rho", sc.rho},
                   {"total_mean", sc.total_mean},
                   {"replicates", sc.replicates},
                   {"seed", sc.seed}};
  j["aggregates"] = {{"group_precision", aggregate_json(rep.group_precision)},
                     {"group_recall", aggregate_json(rep.group_recall)},
                     {"within_precision", aggregate_json(rep.within_precision)},
                     {"within_recall", aggregate_json(rep.within_recall)},
                     {"direction_accuracy", aggregate_json(rep.direction_accuracy)}};
  j["failures"] = rep.failures;
  json errs = json::array();
  for (const auto& r : rep.replicates)
    if (!r.ok) errs.push_back({{"replicate", r.replicate}, {"error", r.error}});
  j["errors"] = errs;
  write_text(fs::path(o.out_dir) / "report.json", j.dump(2) + "\n");

  json status = {{"command", "bench"},
                 {"replicates", sc.replicates},
                 {"failures", rep.failures},
                 {"group_recall_mean", std::isnan(rep.group_recall.mean)
                                           ? json()
                                           : json(rep.group_recall.mean)},
                 {"out_dir", o.out_dir}};
  emit_status(status);
  return rep.failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-group penalized multivariate count regression"};
  app.require_subcommand(1);

  CommonFitOpts fit_opts;
  double lambda = 0.0;
  auto* fit = app.add_subcommand("fit", "fit one penalized model");
  add_common(fit, &fit_opts);
  fit->add_option("--lambda", lambda, "penalty strength")->required();

  CommonFitOpts tune_opts;
  SearchSpec tune_spec;
  std::string tune_mode = "grid";
  auto* tn = app.add_subcommand("tune", "EBIC search over (lambda, alpha)");
  add_common(tn, &tune_opts);
  tn->add_option("--mode", tune_mode, "grid|random");
  tn->add_option("--n-lambda", tune_spec.n_lambda, "path length per alpha");
  tn->add_option("--alpha-grid", tune_spec.alpha_grid, "alpha values (grid mode)");
  tn->add_option("--lambda-ratio", tune_spec.lambda_ratio, "lambda_min/lambda_max");
  tn->add_option("--n-draws", tune_spec.n_draws, "random-mode draws");
  tn->add_option("--alpha-min", tune_spec.alpha_min, "random-mode alpha lower bound");
  tn->add_option("--alpha-max", tune_spec.alpha_max, "random-mode alpha upper bound");
  tn->add_option("--seed", tune_spec.seed, "random-mode seed");
  tn->add_flag("--warm-path,!--no-warm-path", tune_spec.warm_path,
               "chain grid fits along the lambda path (default: independent fits)");

  ScenarioConfig sim_sc;
  int sim_rep = 0;
  std::string sim_out = ".";
  auto* sim = app.add_subcommand("simulate", "write one synthetic dataset");
  sim->add_option("--n", sim_sc.n);
  sim->add_option("--p", sim_sc.p);
  sim->add_option("--D", sim_sc.D);
  sim->add_option("--f", sim_sc.f);
  sim->add_option("--delta-p", sim_sc.delta_p);
  sim->add_option("--delta-D", sim_sc.delta_D);
  sim->add_option("--rho", sim_sc.rho);
  sim->add_option("--total-mean", sim_sc.total_mean);
  sim->add_option("--seed", sim_sc.seed);
  sim->add_option("--replicate-index", sim_rep);
  sim->add_option("--out-dir", sim_out);

  ScenarioConfig bench_sc;
  SearchSpec bench_spec;
  CommonFitOpts bench_opts;
  int threads = 0;
  auto* bench = app.add_subcommand("bench", "replicate selection benchmark");
  bench->add_option("--n", bench_sc.n);
  bench->add_option("--p", bench_sc.p);
  bench->add_option("--D", bench_sc.D);
  bench->add_option("--f", bench_sc.f);
  bench->add_option("--delta-p", bench_sc.delta_p);
  bench->add_option("--delta-D", bench_sc.delta_D);
  bench->add_option("--rho", bench_sc.rho);
  bench->add_option("--total-mean", bench_sc.total_mean);
  bench->add_option("--seed", bench_sc.seed);
  bench->add_option("--replicates", bench_sc.replicates);
  bench->add_option("--n-lambda", bench_spec.n_lambda);
  bench->add_option("--alpha-grid", bench_spec.alpha_grid);
  bench->add_option("--lambda-ratio", bench_spec.lambda_ratio);
  bench->add_option("--tol", bench_opts.tol);
  bench->add_option("--max-iter", bench_opts.max_iter);
  bench->add_option("--epsilon-policy", bench_opts.policy);
  bench->add_option("--threads", threads, "worker threads over replicates");
  bench->add_option("--out-dir", bench_opts.out_dir);
  bench->add_flag("--warm-path,!--no-warm-path", bench_spec.warm_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints to stderr
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(fit_opts, lambda);
    if (*tn) {
      if (tune_mode == "random") tune_spec.mode = SearchSpec::Mode::Random;
      else if (tune_mode != "grid")
        throw std::invalid_argument("unknown mode '" + tune_mode + "'");
      return cmd_tune(tune_opts, tune_spec);
    }
    if (*sim) return cmd_simulate(sim_sc, sim_rep, sim_out);
    if (*bench) {
      if (threads <= 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
      return cmd_bench(bench_sc, bench_spec, bench_opts, threads);
    }
  } catch (const std::exception& e) {
    log_note(0, std::string("error: ") + e.what());
    json status = {{"command", app.get_subcommands().empty()
                                   ? "?"
                                   : app.get_subcommands()[0]->get_name()},
                   {"error", e.what()}};
    emit_status(status);
    return 1;
  }
  return 1;
}
