#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "zfa/io.hpp"
#include "zfa/types.hpp"

// End-to-end tests driving the installed binary. The test runner provides the
// binary path in ZFA_CLI; when it is absent (manual invocation outside the
// build harness) these tests are skipped.

namespace {

namespace fs = std::filesystem;

const char* cli_path() { return std::getenv("ZFA_CLI"); }

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "zfa_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, const std::string& stdout_to = "",
        const std::string& stderr_to = "") {
  std::string cmd = std::string(cli_path()) + " " + args;
  if (!stdout_to.empty()) cmd += " >" + stdout_to;
  if (!stderr_to.empty()) cmd += " 2>" + stderr_to;
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Raw (uncentered) numeric CSV reader for checking CLI outputs byte-for-value.
zfa::Matrix<double> read_raw_csv(const fs::path& path, bool expect_header,
                                 std::vector<std::string>* header = nullptr) {
  const auto records = zfa::detail::parse_csv_records(slurp(path).c_str(), ',');
  REQUIRE(!records.empty());
  std::size_t first = 0;
  if (expect_header) {
    if (header) *header = records[0];
    first = 1;
  }
  const std::size_t rows = records.size() - first;
  const std::size_t cols = records[first].size();
  zfa::Matrix<double> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0;
      REQUIRE(zfa::detail::try_parse_double(records[first + r][c], v));
      out(r, c) = v;
    }
  return out;
}

// Deterministic p x k loading spec written as simulate input.
fs::path write_sim_spec(const std::string& name, zfa::Index p, zfa::Index k, zfa::Index n,
                        unsigned long seed) {
  nlohmann::json spec;
  auto lam = nlohmann::json::array();
  for (zfa::Index r = 0; r < p; ++r) {
    auto row = nlohmann::json::array();
    for (zfa::Index c = 0; c < k; ++c)
      row.push_back(1.5 * std::cos(double(r + 1) * double(c + 1)) /
                    std::sqrt(double(c + 1)));
    lam.push_back(row);
  }
  spec["lambda_true"] = lam;
  auto psi = nlohmann::json::array();
  for (zfa::Index j = 0; j < p; ++j)
    psi.push_back(0.4 + 2.0 * double((j * 7) % 11) / 11.0);
  spec["psi2_true"] = psi;
  spec["n"] = long(n);
  spec["factor_dist"] = "gaussian";
  spec["noise_dist"] = "gaussian";
  spec["seed"] = seed;
  const fs::path path = scratch() / name;
  std::ofstream(path) << spec.dump(2);
  return path;
}

#define CLI_GUARD()                                                 \
  if (!cli_path()) {                                                \
    MESSAGE("ZFA_CLI is not set; CLI tests run under the harness"); \
    return;                                                         \
  }

}  // namespace

TEST_CASE("cli rejects bad invocations and offers help") {
  CLI_GUARD();
  CHECK(run("--help", (scratch() / "help.txt").string()) == 0);
  CHECK(run("", "/dev/null", "/dev/null") == 2);          // a subcommand is required
  CHECK(run("fit", "/dev/null", "/dev/null") == 2);       // missing required options
  CHECK(run("simulate --spec nope.json", "/dev/null", "/dev/null") == 2);  // no --output
}

TEST_CASE("simulate writes deterministic data and validates its spec") {
  CLI_GUARD();
  const auto spec = write_sim_spec("spec.json", 12, 2, 25, 5);
  const auto csv_a = scratch() / "sim_a.csv";
  const auto csv_b = scratch() / "sim_b.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv_a.string()) == 0);
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv_b.string()) == 0);
  CHECK(slurp(csv_a) == slurp(csv_b));

  std::vector<std::string> header;
  const auto values = read_raw_csv(csv_a, true, &header);
  CHECK(values.rows() == 25);
  CHECK(values.cols() == 12);
  CHECK(header.front() == "x1");

  // Unreadable / structurally bad specs are data errors, not crashes.
  const fs::path broken = scratch() / "broken.json";
  std::ofstream(broken) << "{\"lambda_true\": [[1.0],[0.5]], \"n\": 10}";
  CHECK(run("simulate --spec " + broken.string() + " --output " +
            (scratch() / "x.csv").string(),
            "/dev/null", "/dev/null") == 3);
  CHECK(run("simulate --spec " + (scratch() / "absent.json").string() + " --output " +
            (scratch() / "x.csv").string(),
            "/dev/null", "/dev/null") == 3);
}

TEST_CASE("fit produces a convergent, reproducible model file") {
  CLI_GUARD();
  const auto spec = write_sim_spec("fit_spec.json", 40, 2, 20, 9);
  const auto csv = scratch() / "fit_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);

  const auto model_a = scratch() / "model_a.json";
  const auto model_b = scratch() / "model_b.json";
  const auto trace = scratch() / "trace.csv";
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --output " + model_a.string() +
              " --trace-out " + trace.string()) == 0);
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --output " + model_b.string()) == 0);
  CHECK(slurp(model_a) == slurp(model_b));  // byte-identical reruns

  const auto model = zfa::load_model<double>(model_a.string());
  CHECK(model.converged);
  CHECK(model.p() == 40);
  CHECK(model.k() == 2);
  CHECK((model.psi2.array() > 0.0).all());

  const std::string trace_text = slurp(trace);
  CHECK(trace_text.rfind("iter,tail_sum_over_nminus1,min_psi2,max_psi2,psi2_rel_change", 0) ==
        0);

  // Threading env var is accepted (determinism across thread counts is not
  // asserted, only that the run succeeds).
  const int with_threads = std::system((std::string("FA_SVD_THREADS=2 ") + cli_path() +
                                        " fit --input " + csv.string() + " --k 2 --output " +
                                        (scratch() / "model_t.json").string() +
                                        " >/dev/null 2>&1")
                                           .c_str());
  CHECK(WIFEXITED(with_threads));
  CHECK(WEXITSTATUS(with_threads) == 0);
}

TEST_CASE("fit maps failure classes onto exit codes") {
  CLI_GUARD();
  const auto spec = write_sim_spec("codes_spec.json", 30, 2, 12, 33);
  const auto csv = scratch() / "codes_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);

  // k >= min(n, p) is an argument error.
  CHECK(run("fit --input " + csv.string() + " --k 12 --output " +
            (scratch() / "m.json").string(),
            "/dev/null", "/dev/null") == 2);
  CHECK(run("fit --input " + csv.string() + " --k 2 --rule bogus --output " +
            (scratch() / "m.json").string(),
            "/dev/null", "/dev/null") == 2);
  CHECK(run("fit --input " + csv.string() + " --k 2 --psi-init -0.5 --output " +
            (scratch() / "m.json").string(),
            "/dev/null", "/dev/null") == 2);

  // A constant column is a data error.
  const fs::path constant = scratch() / "constant.csv";
  std::ofstream(constant) << "1,5\n2,5\n3,5\n4,5\n";
  CHECK(run("fit --input " + constant.string() + " --k 1 --output " +
            (scratch() / "m.json").string(),
            "/dev/null", "/dev/null") == 3);

  // Exhausting the iteration budget exits 4 but still writes the model.
  const fs::path partial = scratch() / "partial.json";
  const auto err = scratch() / "partial_err.txt";
  CHECK(run("fit --input " + csv.string() + " --k 2 --max-iter 1 --output " + partial.string(),
            "/dev/null", err.string()) == 4);
  const auto model = zfa::load_model<double>(partial.string());
  CHECK_FALSE(model.converged);
  CHECK(model.trace.size() == 1);
  CHECK(slurp(err).find("did not converge") != std::string::npos);
}

TEST_CASE("fit accepts the alternative update rule and standardization") {
  CLI_GUARD();
  const auto spec = write_sim_spec("rule_spec.json", 30, 1, 12, 41);
  const auto csv = scratch() / "rule_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);

  REQUIRE(run("fit --input " + csv.string() +
              " --k 1 --rule rescale --max-iter 20000 --output " +
              (scratch() / "rescale.json").string()) == 0);
  const auto rescale = zfa::load_model<double>((scratch() / "rescale.json").string());
  CHECK(rescale.converged);
  CHECK(rescale.config.rule == zfa::UpdateRule::rescale);

  REQUIRE(run("fit --input " + csv.string() + " --k 1 --standardize --output " +
              (scratch() / "standardized.json").string()) == 0);
  const auto standardized =
      zfa::load_model<double>((scratch() / "standardized.json").string());
  CHECK(standardized.converged);
  CHECK((standardized.column_scales.array() != 1.0).any());
}

TEST_CASE("scores pipeline keeps the residuals orthogonal to the scores") {
  CLI_GUARD();
  const auto spec = write_sim_spec("scores_spec.json", 50, 2, 24, 77);
  const auto csv = scratch() / "scores_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);

  const auto model_path = scratch() / "scores_model.json";
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --output " + model_path.string()) == 0);

  const auto scores_csv = scratch() / "scores.csv";
  const auto resid_csv = scratch() / "resid.csv";
  REQUIRE(run("scores --model " + model_path.string() + " --input " + csv.string() +
              " --kind bartlett --output " + scores_csv.string() + " --residuals-out " +
              resid_csv.string()) == 0);

  std::vector<std::string> header;
  const auto f = read_raw_csv(scores_csv, true, &header);
  CHECK(header == std::vector<std::string>{"f1", "f2"});
  CHECK(f.rows() == 24);

  const auto e = read_raw_csv(resid_csv, true);
  CHECK(e.rows() == 24);
  CHECK(e.cols() == 50);

  // The library invariant survives the round trip through CSV text.
  CHECK((e.transpose() * f).cwiseAbs().maxCoeff() <= 1e-6);

  // Thomson scores are the shrunken variant of the same pipeline.
  const auto thomson_csv = scratch() / "thomson.csv";
  REQUIRE(run("scores --model " + model_path.string() + " --input " + csv.string() +
              " --kind thomson --output " + thomson_csv.string()) == 0);
  const auto ft = read_raw_csv(thomson_csv, true);
  CHECK(ft.col(0).norm() < f.col(0).norm());
  CHECK(ft.col(1).norm() < f.col(1).norm());

  CHECK(run("scores --model " + model_path.string() + " --input " + csv.string() +
            " --kind bogus --output /dev/null",
            "/dev/null", "/dev/null") == 2);

  // Data with the wrong width is rejected before any scoring.
  const auto narrow_spec = write_sim_spec("narrow_spec.json", 49, 2, 24, 78);
  const auto narrow_csv = scratch() / "narrow.csv";
  REQUIRE(run("simulate --spec " + narrow_spec.string() + " --output " +
              narrow_csv.string()) == 0);
  CHECK(run("scores --model " + model_path.string() + " --input " + narrow_csv.string() +
            " --output /dev/null",
            "/dev/null", "/dev/null") == 2);
}

TEST_CASE("diagnose reports the residual identity on a converged fit") {
  CLI_GUARD();
  const auto spec = write_sim_spec("diag_spec.json", 60, 2, 25, 13);
  const auto csv = scratch() / "diag_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);
  const auto model_path = scratch() / "diag_model.json";
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --output " + model_path.string()) == 0);

  const auto report_path = scratch() / "diag.txt";
  REQUIRE(run("diagnose --model " + model_path.string() + " --input " + csv.string(),
              report_path.string()) == 0);
  const std::string report = slurp(report_path);
  CHECK(report.find("converged: true") != std::string::npos);
  CHECK(report.find("tr(omega):") != std::string::npos);
  CHECK(report.find("gaussian loglik:") != std::string::npos);
  CHECK(report.find("(p - k = 58)") != std::string::npos);

  // The printed mean square total sits at p - k.
  const auto pos = report.find("sum msq residuals: ");
  REQUIRE(pos != std::string::npos);
  const double total = std::strtod(report.c_str() + pos + 19, nullptr);
  CHECK(std::abs(total - 58.0) <= 1e-3);

  // A stale model still produces a report, with a warning on stderr.
  const auto stale_model = scratch() / "stale_model.json";
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --max-iter 1 --output " +
              stale_model.string(),
              "/dev/null", "/dev/null") == 4);
  const auto stale_err = scratch() / "stale_err.txt";
  REQUIRE(run("diagnose --model " + stale_model.string() + " --input " + csv.string(),
              (scratch() / "stale_out.txt").string(), stale_err.string()) == 0);
  CHECK(slurp(stale_err).find("stale") != std::string::npos);
  CHECK(slurp(scratch() / "stale_out.txt").find("unavailable") != std::string::npos);
}

TEST_CASE("plot emission succeeds normally and degrades to a trace file") {
  CLI_GUARD();
  const auto spec = write_sim_spec("plot_spec.json", 30, 2, 15, 3);
  const auto csv = scratch() / "plot_data.csv";
  REQUIRE(run("simulate --spec " + spec.string() + " --output " + csv.string()) == 0);

  const auto prefix = (scratch() / "fig").string();
  REQUIRE(run("fit --input " + csv.string() + " --k 2 --output " +
              (scratch() / "plot_model.json").string() + " --plot-out " + prefix) == 0);
  const std::string tail_svg = slurp(prefix + "_tail.svg");
  const std::string psi_svg = slurp(prefix + "_min_psi2.svg");
  CHECK(tail_svg.rfind("<svg", 0) == 0);
  CHECK(psi_svg.rfind("<svg", 0) == 0);
  CHECK(tail_svg.find("polyline") != std::string::npos);

  // An unwritable prefix must not fail the fit; it reports and falls back.
  const auto err_path = scratch() / "plot_err.txt";
  CHECK(run("fit --input " + csv.string() + " --k 2 --output " +
            (scratch() / "plot_model2.json").string() +
            " --plot-out /nonexistent_dir/zfa_figs/run",
            "/dev/null", err_path.string()) == 0);
  CHECK(slurp(err_path).find("plot emission failed") != std::string::npos);
}
