// Command-line front end: fit, scores, simulate, diagnose.
//
// Exit codes: 0 success, 2 invalid arguments, 3 data/domain error,
// 4 fit did not converge (model file still written), 5 internal numerical
// error. Messages go to standard error; data goes to files (diagnose prints
// its report to standard output).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zfa/zfa.hpp"

namespace {

struct CommonArgs {
  std::string delimiter = ",";
  bool no_header = false;
};

zfa::CsvOptions csv_options(const CommonArgs& common, bool standardize = false) {
  if (common.delimiter.size() != 1)
    throw zfa::InvalidInputError("--delimiter must be a single character");
  zfa::CsvOptions opts;
  opts.delimiter = common.delimiter[0];
  opts.header = common.no_header ? zfa::CsvHeader::no : zfa::CsvHeader::automatic;
  opts.standardize = standardize;
  return opts;
}

/// Load data for scoring/diagnosis against an existing model: raw load and
/// centering, then the model's column scales so units match the fit.
zfa::DataMatrix<double> load_for_model(const std::string& path, const zfa::CsvOptions& opts,
                                       const zfa::FaModel<double>& model) {
  zfa::DataMatrix<double> data = zfa::load_csv<double>(path, opts);
  if (data.p() != model.p())
    throw zfa::InvalidInputError("data has " + std::to_string(data.p()) +
                                 " columns but the model expects " + std::to_string(model.p()));
  if ((model.column_scales.array() != 1.0).any()) {
    data.values = data.values * model.column_scales.cwiseInverse().asDiagonal();
    data.column_scales = model.column_scales;
  }
  return data;
}

// Accepts either "gaussian" or {"kind": "student_t", "df": 5}.
zfa::Dist parse_dist(const nlohmann::json& spec, const std::string& which) {
  const std::string key = which + "_dist";
  if (!spec.contains(key))
    throw zfa::ParseError("simulation spec needs a field '" + key + "'");
  const nlohmann::json& node = spec[key];

  std::string name;
  std::optional<double> df;
  if (node.is_string()) {
    name = node.get<std::string>();
    const std::string df_key = which + "_df";
    if (spec.contains(df_key) && spec[df_key].is_number())
      df = spec[df_key].get<double>();
  } else if (node.is_object() && node.contains("kind") && node["kind"].is_string()) {
    name = node["kind"].get<std::string>();
    if (node.contains("df") && node["df"].is_number()) df = node["df"].get<double>();
  } else {
    throw zfa::ParseError("simulation spec: '" + key +
                          "' must be a distribution name or an object with a 'kind' field");
  }

  zfa::Dist dist;
  if (name == "gaussian") {
    dist.kind = zfa::DistKind::gaussian;
  } else if (name == "uniform_scaled") {
    dist.kind = zfa::DistKind::uniform_scaled;
  } else if (name == "student_t") {
    dist.kind = zfa::DistKind::student_t;
    if (!df)
      throw zfa::ParseError("simulation spec: a 'df' value is required with student_t");
    dist.df = *df;
  } else {
    throw zfa::ParseError("simulation spec: unknown distribution '" + name +
                          "' (expected gaussian, uniform_scaled, or student_t)");
  }
  return dist;
}

struct FitArgs {
  std::string input;
  std::string output;
  long k = 1;
  std::string rule = "subtract";
  std::optional<double> psi_init;
  int max_iter = 500;
  double tol_psi = 1e-8;
  double tol_trace = 1e-6;
  bool standardize = false;
  std::string trace_out;
  std::string plot_out;
  CommonArgs common;
};

int run_fit(const FitArgs& args) {
  const zfa::DataMatrix<double> data = zfa::load_csv<double>(args.input,
                                                             csv_options(args.common,
                                                                         args.standardize));
  zfa::FaConfig<double> config;
  config.k = args.k;
  if (args.rule == "subtract")
    config.rule = zfa::UpdateRule::subtract;
  else if (args.rule == "rescale")
    config.rule = zfa::UpdateRule::rescale;
  else
    throw zfa::InvalidInputError("--rule must be 'subtract' or 'rescale'");
  if (args.psi_init) {
    if (!(*args.psi_init > 0.0))
      throw zfa::InvalidInputError("--psi-init must be strictly positive");
    config.psi2_init_fraction = *args.psi_init;
  }
  config.max_iter = args.max_iter;
  config.tol_psi = args.tol_psi;
  config.tol_trace = args.tol_trace;

  const zfa::FaModel<double> model = zfa::fit(data, config);
  zfa::save_model(model, args.output);
  for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";

  if (!args.trace_out.empty()) zfa::write_trace_csv(args.trace_out, model.trace);
  if (!args.plot_out.empty()) {
    try {
      std::vector<double> tail_plus_k, min_psi2;
      for (const auto& rec : model.trace) {
        tail_plus_k.push_back(rec.tail_sum + double(model.k()));
        min_psi2.push_back(rec.min_psi2);
      }
      zfa::write_line_svg(args.plot_out + "_tail.svg", tail_plus_k,
                          "Discarded spectrum mass plus k",
                          "tr(D2^2)/(n-1) + k", double(model.p()));
      zfa::write_line_svg(args.plot_out + "_min_psi2.svg", min_psi2,
                          "Smallest uniqueness per iteration", "min psi2");
    } catch (const std::exception& e) {
      std::cerr << "warning: plot emission failed (" << e.what()
                << "); falling back to the iteration trace CSV\n";
      if (args.trace_out.empty()) {
        const std::string fallback = args.plot_out + "_trace.csv";
        try {
          zfa::write_trace_csv(fallback, model.trace);
          std::cerr << "warning: iteration trace written to " << fallback << "\n";
        } catch (const std::exception& e2) {
          std::cerr << "warning: trace fallback also failed (" << e2.what() << ")\n";
        }
      }
    }
  }

  if (!model.converged) {
    std::cerr << "warning: fit did not converge within " << config.max_iter
              << " iterations; the last iterate was written to " << args.output << "\n";
    return 4;
  }
  return 0;
}

struct ScoresArgs {
  std::string model;
  std::string input;
  std::string output;
  std::string kind = "bartlett";
  std::string residuals_out;
  CommonArgs common;
};

int run_scores(const ScoresArgs& args) {
  const zfa::FaModel<double> model = zfa::load_model<double>(args.model);
  const zfa::DataMatrix<double> data =
      load_for_model(args.input, csv_options(args.common), model);
  zfa::ScoreSet<double> scores;
  if (args.kind == "bartlett")
    scores = zfa::bartlett_scores(model, data);
  else if (args.kind == "thomson")
    scores = zfa::thomson_scores(model, data);
  else
    throw zfa::InvalidInputError("--kind must be 'bartlett' or 'thomson'");

  std::vector<std::string> factor_names;
  for (zfa::Index c = 0; c < model.k(); ++c)
    factor_names.push_back("f" + std::to_string(c + 1));
  zfa::write_matrix_csv(args.output, scores.scores, factor_names, csv_options(args.common).delimiter);
  if (!args.residuals_out.empty())
    zfa::write_matrix_csv(args.residuals_out, scores.residuals_z, model.column_names,
                          csv_options(args.common).delimiter);
  return 0;
}

struct SimulateArgs {
  std::string spec;
  std::string output;
  CommonArgs common;
};

int run_simulate(const SimulateArgs& args) {
  nlohmann::json spec_json;
  try {
    spec_json = nlohmann::json::parse(zfa::detail::read_file(args.spec));
  } catch (const nlohmann::json::parse_error& e) {
    throw zfa::ParseError("simulation spec " + args.spec + " is not valid JSON: " + e.what());
  }
  zfa::SimSpec<double> spec;
  try {
    const auto& lam = spec_json.at("lambda_true");
    if (!lam.is_array() || lam.empty() || !lam[0].is_array())
      throw zfa::ParseError("simulation spec: lambda_true must be a p x k array of arrays");
    const auto p = static_cast<zfa::Index>(lam.size());
    const auto k = static_cast<zfa::Index>(lam[0].size());
    spec.lambda_true.resize(p, k);
    for (zfa::Index r = 0; r < p; ++r) {
      const auto& row = lam[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<zfa::Index>(row.size()) != k)
        throw zfa::ParseError("simulation spec: lambda_true row " + std::to_string(r + 1) +
                              " has the wrong length");
      for (zfa::Index c = 0; c < k; ++c)
        spec.lambda_true(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    spec.psi2_true = zfa::detail::vector_from_json<double>(spec_json.at("psi2_true"),
                                                           "psi2_true");
    spec.n = spec_json.at("n").get<long>();
    spec.factor_dist = parse_dist(spec_json, "factor");
    spec.noise_dist = parse_dist(spec_json, "noise");
    spec.seed = spec_json.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw zfa::ParseError("simulation spec " + args.spec + " is structurally invalid: " +
                          e.what());
  }
  const zfa::DataMatrix<double> data = zfa::simulate(spec);
  zfa::write_matrix_csv(args.output, data.values, data.column_names,
                        csv_options(args.common).delimiter);
  return 0;
}

struct DiagnoseArgs {
  std::string model;
  std::string input;
  CommonArgs common;
};

int run_diagnose(const DiagnoseArgs& args) {
  const zfa::FaModel<double> model = zfa::load_model<double>(args.model);
  const zfa::DataMatrix<double> data =
      load_for_model(args.input, csv_options(args.common), model);
  const zfa::Vector<double> sxx = zfa::sample_variance_diag(data);

  std::cout << "converged: " << (model.converged ? "true" : "false") << "\n";
  std::cout << "iterations: " << model.trace.size() << "\n";

  const auto resid = zfa::estimating_residual(data, model.lambda, model.psi2);
  std::cout << "estimating residual (lambda): " << zfa::detail::format_double(resid.lambda_residual)
            << "\n";
  std::cout << "estimating residual (psi): " << zfa::detail::format_double(resid.psi_residual)
            << "\n";

  const auto summary = zfa::omega_summary(model, sxx);
  if (summary.stale)
    std::cerr << "warning: model is not converged; spectrum diagnostics are stale\n";
  std::cout << "tr(omega): " << zfa::detail::format_double(summary.trace_omega) << "\n";
  std::cout << "theta: " << zfa::detail::format_double(summary.theta) << "\n";
  std::cout << "mean omega: " << zfa::detail::format_double(summary.mean_omega) << "\n";

  if (model.converged) {
    const auto scores = zfa::bartlett_scores(model, data);
    const auto rs = zfa::standardized_residuals(model, data, scores);
    std::cout << "sum msq residuals: " << zfa::detail::format_double(rs.total)
              << " (p - k = " << rs.dof << ")\n";
    std::cout << "mean msq residual (corrected): "
              << zfa::detail::format_double(rs.mean_corrected) << "\n";
  } else {
    std::cout << "sum msq residuals: unavailable (model not converged)\n";
  }

  const auto hw = zfa::heywood_report(model.trace);
  std::cout << "min psi2 over iterations: " << zfa::detail::format_double(hw.min_psi2)
            << (hw.nonpositive ? " (NONPOSITIVE)" : "") << "\n";

  const double loglik = zfa::gaussian_loglik(data, model.lambda, model.psi2);
  std::cout << "gaussian loglik: " << zfa::detail::format_double(loglik) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("FA_SVD_THREADS")) {
    const int t = std::atoi(threads);
    if (t > 0) Eigen::setNbThreads(t);
  }

  CLI::App app{"Random-factor analysis: distribution-free fit of X = F Lambda^T + E "
               "through a rescaled-covariance fixed point"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit the factor model to a CSV data matrix");
  fit->add_option("--input", fit_args.input, "CSV file of observations (rows) by variables")
      ->required();
  fit->add_option("--k", fit_args.k, "number of factors (1 <= k < min(n, p))")->required();
  fit->add_option("--rule", fit_args.rule, "uniqueness update rule: subtract (default) or rescale");
  fit->add_option("--psi-init", fit_args.psi_init,
                  "starting uniqueness as a fraction of each sample variance (default 0.5)");
  fit->add_option("--max-iter", fit_args.max_iter, "iteration cap (default 500)");
  fit->add_option("--tol-psi", fit_args.tol_psi,
                  "tolerance on the max relative psi2 change (default 1e-8)");
  fit->add_option("--tol-trace", fit_args.tol_trace,
                  "tolerance on |tr(D2^2)/(n-1) - (p-k)|/p (default 1e-6)");
  fit->add_flag("--standardize", fit_args.standardize,
                "rescale each column to unit sample variance before fitting");
  fit->add_option("--output", fit_args.output, "model JSON output path")->required();
  fit->add_option("--trace-out", fit_args.trace_out, "iteration trace CSV output path");
  fit->add_option("--plot-out", fit_args.plot_out,
                  "prefix for convergence plots (<prefix>_tail.svg, <prefix>_min_psi2.svg)");
  fit->add_option("--delimiter", fit_args.common.delimiter, "CSV delimiter (default ',')");
  fit->add_flag("--no-header", fit_args.common.no_header,
                "treat the first CSV record as data even if it looks like a header");

  ScoresArgs scores_args;
  auto* scores = app.add_subcommand("scores", "Factor scores for a fitted model");
  scores->add_option("--model", scores_args.model, "model JSON from fit")->required();
  scores->add_option("--input", scores_args.input, "CSV data to score")->required();
  scores->add_option("--kind", scores_args.kind, "bartlett (default) or thomson");
  scores->add_option("--output", scores_args.output, "scores CSV output path")->required();
  scores->add_option("--residuals-out", scores_args.residuals_out,
                     "rescaled residual matrix CSV output path");
  scores->add_option("--delimiter", scores_args.common.delimiter, "CSV delimiter (default ',')");
  scores->add_flag("--no-header", scores_args.common.no_header,
                   "treat the first CSV record as data even if it looks like a header");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Draw synthetic data from a factor model");
  simulate->add_option("--spec", sim_args.spec, "simulation spec JSON")->required();
  simulate->add_option("--output", sim_args.output, "CSV output path")->required();
  simulate->add_option("--delimiter", sim_args.common.delimiter, "CSV delimiter (default ',')");

  DiagnoseArgs diag_args;
  auto* diagnose = app.add_subcommand("diagnose", "Print fit diagnostics for a model and data");
  diagnose->add_option("--model", diag_args.model, "model JSON from fit")->required();
  diagnose->add_option("--input", diag_args.input, "CSV data the model describes")->required();
  diagnose->add_option("--delimiter", diag_args.common.delimiter, "CSV delimiter (default ',')");
  diagnose->add_flag("--no-header", diag_args.common.no_header,
                     "treat the first CSV record as data even if it looks like a header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (fit->parsed()) return run_fit(fit_args);
    if (scores->parsed()) return run_scores(scores_args);
    if (simulate->parsed()) return run_simulate(sim_args);
    if (diagnose->parsed()) return run_diagnose(diag_args);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const zfa::InvalidInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const zfa::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const zfa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
}
