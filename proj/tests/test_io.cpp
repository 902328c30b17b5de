#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "test_helpers.hpp"
#include "zfa/estimator.hpp"
#include "zfa/io.hpp"
#include "zfa/simulate.hpp"

namespace {

namespace fs = std::filesystem;

// Fresh scratch directory shared by this translation unit's tests.
fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "zfa_io_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string write_text(const std::string& name, const std::string& content) {
  const fs::path p = scratch() / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

zfa::FaModel<double> small_fitted_model() {
  const auto spec = zfa_test::make_sim_spec(8, 2, 40, 61);
  const auto data = zfa::simulate(spec);
  zfa::FaConfig<double> config;
  config.k = 2;
  config.seed = 61;
  const auto model = zfa::fit(data, config);
  REQUIRE(model.converged);
  return model;
}

}  // namespace

TEST_CASE("load_csv centers a bare numeric table") {
  const auto path = write_text("plain.csv", "1,2\n3,4\n");
  const auto data = zfa::load_csv(path);
  CHECK(data.n() == 2);
  CHECK(data.p() == 2);
  CHECK(data.values(0, 0) == -1.0);
  CHECK(data.values(0, 1) == -1.0);
  CHECK(data.values(1, 0) == 1.0);
  CHECK(data.values(1, 1) == 1.0);
  CHECK(data.column_means(0) == 2.0);
  CHECK(data.column_means(1) == 3.0);
  CHECK(data.column_names == std::vector<std::string>{"x1", "x2"});
  CHECK(data.column_scales == zfa::Vector<double>::Ones(2));
  CHECK(data.centered);
}

TEST_CASE("load_csv detects and honors header rows") {
  const auto path = write_text("named.csv", "alpha,beta\n1,2\n3,4\n");
  const auto data = zfa::load_csv(path);
  CHECK(data.n() == 2);
  CHECK(data.column_names == std::vector<std::string>{"alpha", "beta"});

  // Forcing headerless mode turns the text row into a parse failure with
  // coordinates.
  zfa::CsvOptions no_header;
  no_header.header = zfa::CsvHeader::no;
  CHECK_THROWS_AS(zfa::load_csv(path, no_header), zfa::ParseError);
  try {
    zfa::load_csv(path, no_header);
  } catch (const zfa::ParseError& e) {
    CHECK(e.row == 1);
    CHECK(e.column == 1);
  }

  // Forcing a header on an all-numeric file consumes the first row as names.
  const auto numeric = write_text("numeric_head.csv", "9,9\n1,2\n3,4\n");
  zfa::CsvOptions with_header;
  with_header.header = zfa::CsvHeader::yes;
  const auto forced = zfa::load_csv(numeric, with_header);
  CHECK(forced.n() == 2);
  CHECK(forced.column_names == std::vector<std::string>{"9", "9"});
}

TEST_CASE("load_csv standardizes on request and names offending columns") {
  const auto path = write_text("scale.csv", "1,5\n2,5\n3,5\n4,5\n");
  zfa::CsvOptions options;
  options.standardize = true;
  try {
    zfa::load_csv(path, options);
    FAIL("expected a DomainError for the constant column");
  } catch (const zfa::DomainError& e) {
    CHECK(std::string(e.what()).find("x2") != std::string::npos);
  }

  const auto ok_path = write_text("scale_ok.csv", "1,50\n2,52\n3,51\n4,57\n");
  const auto data = zfa::load_csv(ok_path, options);
  const zfa::Vector<double> var = zfa::sample_variance_diag(data);
  CHECK(var(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(var(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(data.column_scales(0) > 0.0);
  CHECK(data.column_scales(1) > 0.0);
}

TEST_CASE("load_csv reports ragged rows and bad cells with coordinates") {
  const auto ragged = write_text("ragged.csv", "1,2\n3\n");
  CHECK_THROWS_AS(zfa::load_csv(ragged), zfa::ParseError);
  try {
    zfa::load_csv(ragged);
  } catch (const zfa::ParseError& e) {
    CHECK(e.row == 2);
  }

  const auto bad_cell = write_text("badcell.csv", "1,2\n3,oops\n");
  try {
    zfa::load_csv(bad_cell);
    FAIL("expected a ParseError for the bad cell");
  } catch (const zfa::ParseError& e) {
    CHECK(e.row == 2);
    CHECK(e.column == 2);
    CHECK(std::string(e.what()).find("oops") != std::string::npos);
  }

  CHECK_THROWS_AS(zfa::load_csv(write_text("empty.csv", "")), zfa::ParseError);
  CHECK_THROWS_AS(zfa::load_csv(write_text("only_head.csv", "a,b\n")), zfa::ParseError);
  CHECK_THROWS_AS(zfa::load_csv(scratch().string() + "/missing.csv"), zfa::IoError);
}

TEST_CASE("load_csv handles delimiters, quotes, and CRLF endings") {
  const auto semi = write_text("semi.csv", "a;b\r\n1;2\r\n3;4\r\n");
  zfa::CsvOptions options;
  options.delimiter = ';';
  const auto data = zfa::load_csv(semi, options);
  CHECK(data.n() == 2);
  CHECK(data.column_names == std::vector<std::string>{"a", "b"});

  const auto quoted =
      write_text("quoted.csv", "\"first; quoted\";\"second \"\"q\"\"\"\n\"1\";2\n3;4\n");
  const auto qdata = zfa::load_csv(quoted, options);
  CHECK(qdata.n() == 2);
  CHECK(qdata.column_names ==
        std::vector<std::string>{"first; quoted", "second \"q\""});
  CHECK(qdata.values(1, 0) == 1.0);

  CHECK_THROWS_AS(zfa::load_csv(write_text("unterm.csv", "\"open\n1,2\n")), zfa::ParseError);
}

TEST_CASE("matrix CSV output is deterministic and parses back losslessly") {
  const zfa_test::Matrix m = zfa_test::randn(7, 3, 77) * 1e-3;
  const auto path = (scratch() / "roundtrip.csv").string();
  zfa::write_matrix_csv(path, m, {"c1", "c2", "c3"});
  const std::string first = slurp(path);
  zfa::write_matrix_csv(path, m, {"c1", "c2", "c3"});
  CHECK(slurp(path) == first);  // byte-identical rewrite

  const auto loaded = zfa::load_csv(path);
  CHECK(loaded.column_names == std::vector<std::string>{"c1", "c2", "c3"});
  // Parsing the full-precision decimals and centering matches centering the
  // original matrix directly, bit for bit.
  const auto direct = zfa::center_columns(m);
  CHECK(loaded.values == direct.values);

  zfa::Matrix<double> wide(2, 2);
  wide.setZero();
  CHECK_THROWS_AS(zfa::write_matrix_csv(path, wide, {"only_one"}), zfa::InvalidInputError);
}

TEST_CASE("trace CSV has the documented five columns") {
  const auto model = small_fitted_model();
  const auto path = (scratch() / "trace.csv").string();
  zfa::write_trace_csv(path, model.trace);

  const std::string text = slurp(path);
  const std::string head = text.substr(0, text.find('\n'));
  CHECK(head == "iter,tail_sum_over_nminus1,min_psi2,max_psi2,psi2_rel_change");

  const auto parsed = zfa::load_csv(path);
  CHECK(parsed.n() == zfa::Index(model.trace.size()));
  CHECK(parsed.p() == 5);
}

TEST_CASE("model save and load round-trips every field exactly") {
  auto model = small_fitted_model();
  model.warnings.push_back("synthetic warning for the round trip");
  const auto path = (scratch() / "model.json").string();
  zfa::save_model(model, path);
  const auto back = zfa::load_model<double>(path);

  CHECK(back.lambda == model.lambda);
  CHECK(back.psi2 == model.psi2);
  CHECK(back.omega == model.omega);
  CHECK(back.n_used == model.n_used);
  CHECK(back.converged == model.converged);
  CHECK(back.column_names == model.column_names);
  CHECK(back.column_scales == model.column_scales);
  CHECK(back.warnings == model.warnings);
  CHECK(back.config.k == model.config.k);
  CHECK(back.config.rule == model.config.rule);
  CHECK(back.config.psi2_init.size() == 0);
  CHECK(back.config.psi2_init_fraction == model.config.psi2_init_fraction);
  CHECK(back.config.max_iter == model.config.max_iter);
  CHECK(back.config.tol_psi == model.config.tol_psi);
  CHECK(back.config.tol_trace == model.config.tol_trace);
  REQUIRE(back.config.seed.has_value());
  CHECK(*back.config.seed == 61);
  REQUIRE(back.trace.size() == model.trace.size());
  for (std::size_t i = 0; i < model.trace.size(); ++i) {
    CHECK(back.trace[i].iter == model.trace[i].iter);
    CHECK(back.trace[i].tail_sum == model.trace[i].tail_sum);
    CHECK(back.trace[i].min_psi2 == model.trace[i].min_psi2);
    CHECK(back.trace[i].max_psi2 == model.trace[i].max_psi2);
    CHECK(back.trace[i].psi2_rel_change == model.trace[i].psi2_rel_change);
    CHECK(back.trace[i].omega_min == model.trace[i].omega_min);
  }

  // Saving again produces an identical file: serialization is deterministic.
  const auto second = (scratch() / "model2.json").string();
  zfa::save_model(model, second);
  CHECK(slurp(second) == slurp(path));

  // An explicit psi2_init survives the trip too.
  auto with_init = model;
  with_init.config.psi2_init = zfa::Vector<double>::Constant(8, 0.25);
  zfa::save_model(with_init, path);
  CHECK(zfa::load_model<double>(path).config.psi2_init == with_init.config.psi2_init);
}

TEST_CASE("model loading rejects damage, version drift, and missing fields") {
  const auto model = small_fitted_model();
  const auto path = (scratch() / "donor.json").string();
  zfa::save_model(model, path);
  const std::string good = slurp(path);

  // Truncation is not valid JSON.
  const auto truncated = write_text("truncated.json", good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(zfa::load_model<double>(truncated), zfa::ParseError);

  // A future schema version is refused with VersionError.
  auto bumped = nlohmann::json::parse(good);
  bumped["schema_version"] = zfa::kModelSchemaVersion + 1;
  const auto versioned = write_text("versioned.json", bumped.dump(2));
  CHECK_THROWS_AS(zfa::load_model<double>(versioned), zfa::VersionError);

  // A missing required field is a structural parse error.
  auto gutted = nlohmann::json::parse(good);
  gutted.erase("omega");
  const auto missing = write_text("missing.json", gutted.dump(2));
  CHECK_THROWS_AS(zfa::load_model<double>(missing), zfa::ParseError);

  // Inconsistent dimensions are refused even when the JSON is well-formed.
  auto skewed = nlohmann::json::parse(good);
  skewed["psi2"].erase(0);
  const auto inconsistent = write_text("inconsistent.json", skewed.dump(2));
  CHECK_THROWS_AS(zfa::load_model<double>(inconsistent), zfa::ParseError);

  CHECK_THROWS_AS(zfa::load_model<double>((scratch() / "absent.json").string()),
                  zfa::IoError);
  CHECK_THROWS_AS(zfa::save_model(model, "/nonexistent_dir/zfa/model.json"), zfa::IoError);
}
