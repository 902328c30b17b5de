#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zfa/config.hpp"
#include "zfa/data.hpp"
#include "zfa/errors.hpp"
#include "zfa/model.hpp"
#include "zfa/types.hpp"

namespace zfa {

inline constexpr int kModelSchemaVersion = 1;

enum class CsvHeader { automatic, yes, no };

struct CsvOptions {
  char delimiter = ',';
  CsvHeader header = CsvHeader::automatic;
  bool standardize = false;
};

namespace detail {

/// Shortest exact decimal form of a double (17 significant digits round-trip).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on file: " + path);
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failure on file: " + path);
}

/// Split CSV text into records of fields. Quoted fields may contain the
/// delimiter, doubled quotes, and line breaks. CRLF and LF both end records.
inline std::vector<std::vector<std::string>> parse_csv_records(const std::string& text,
                                                               char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  long row = 1;

  auto end_field = [&] {
    record.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(record);
    record.clear();
    ++row;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", row, 0);
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool try_parse_double(const std::string& raw, double& out) {
  std::size_t begin = raw.find_first_not_of(" \t");
  if (begin == std::string::npos) return false;
  const std::size_t end = raw.find_last_not_of(" \t") + 1;
  const char* first = raw.data() + begin;
  const char* last = raw.data() + end;
  const auto result = std::from_chars(first, last, out);
  return result.ec == std::errc() && result.ptr == last;
}

}  // namespace detail

/**
 * Load a numeric CSV file as a centered DataMatrix. The delimiter is
 * configurable; the decimal separator is always '.'. With header detection on
 * automatic, the first record is treated as a header exactly when not all of
 * its fields parse as numbers. Cells that fail to parse raise ParseError with
 * 1-based row/column coordinates.
 */
template <class Scalar = double>
DataMatrix<Scalar> load_csv(const std::string& path, const CsvOptions& options = {}) {
  const auto records = detail::parse_csv_records(detail::read_file(path), options.delimiter);
  if (records.empty()) throw ParseError("empty CSV file: " + path);

  std::size_t first_data = 0;
  std::vector<std::string> names;
  bool header = (options.header == CsvHeader::yes);
  if (options.header == CsvHeader::automatic) {
    double ignored;
    for (const auto& cell : records[0])
      if (!detail::try_parse_double(cell, ignored)) {
        header = true;
        break;
      }
  }
  if (header) {
    if (records.size() < 2) throw ParseError("CSV has a header but no data rows: " + path);
    names = records[0];
    first_data = 1;
  }

  const std::size_t n_rows = records.size() - first_data;
  const std::size_t n_cols = records[first_data].size();
  Matrix<Scalar> values(static_cast<Index>(n_rows), static_cast<Index>(n_cols));
  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto& rec = records[first_data + r];
    const long file_row = static_cast<long>(first_data + r + 1);
    if (rec.size() != n_cols)
      throw ParseError("row " + std::to_string(file_row) + " has " +
                           std::to_string(rec.size()) + " fields, expected " +
                           std::to_string(n_cols),
                       file_row, 0);
    for (std::size_t c = 0; c < n_cols; ++c) {
      double v;
      if (!detail::try_parse_double(rec[c], v))
        throw ParseError("cannot parse '" + rec[c] + "' as a number at row " +
                             std::to_string(file_row) + ", column " + std::to_string(c + 1),
                         file_row, static_cast<long>(c + 1));
      values(static_cast<Index>(r), static_cast<Index>(c)) = Scalar(v);
    }
  }
  return center_columns(values, std::move(names), options.standardize);
}

/// Write a matrix as CSV with an optional header row. Numbers keep full
/// round-trip precision, so identical inputs produce byte-identical files.
template <class Derived>
void write_matrix_csv(const std::string& path, const Eigen::MatrixBase<Derived>& values,
                      const std::vector<std::string>& column_names = {}, char delimiter = ',') {
  std::string out;
  if (!column_names.empty()) {
    if (static_cast<Index>(column_names.size()) != values.cols())
      throw InvalidInputError("write_matrix_csv: header length does not match column count");
    for (std::size_t j = 0; j < column_names.size(); ++j) {
      if (j) out += delimiter;
      out += column_names[j];
    }
    out += '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out += delimiter;
      out += detail::format_double(static_cast<double>(values(i, j)));
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

/// Iteration trace as CSV: one row per iteration of the fit.
template <class Scalar>
void write_trace_csv(const std::string& path, const IterationTrace<Scalar>& trace,
                     char delimiter = ',') {
  std::string out = "iter";
  const char d = delimiter;
  out += d;
  out += "tail_sum_over_nminus1";
  out += d;
  out += "min_psi2";
  out += d;
  out += "max_psi2";
  out += d;
  out += "psi2_rel_change";
  out += '\n';
  for (const auto& rec : trace) {
    out += std::to_string(rec.iter);
    out += d;
    out += detail::format_double(static_cast<double>(rec.tail_sum));
    out += d;
    out += detail::format_double(static_cast<double>(rec.min_psi2));
    out += d;
    out += detail::format_double(static_cast<double>(rec.max_psi2));
    out += d;
    out += detail::format_double(static_cast<double>(rec.psi2_rel_change));
    out += '\n';
  }
  detail::write_file(path, out);
}

namespace detail {

template <class Scalar>
nlohmann::ordered_json vector_to_json(const Vector<Scalar>& v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(static_cast<double>(v(i)));
  return arr;
}

template <class Scalar>
Vector<Scalar> vector_from_json(const nlohmann::json& arr, const std::string& name) {
  if (!arr.is_array()) throw ParseError("model field '" + name + "' must be an array");
  Vector<Scalar> v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ParseError("model field '" + name + "' must be numeric");
    v(static_cast<Index>(i)) = Scalar(arr[i].get<double>());
  }
  return v;
}

}  // namespace detail

/// Serialize a fitted model as JSON with a fixed field order and exact decimal
/// round trip of every floating-point value.
template <class Scalar>
void save_model(const FaModel<Scalar>& model, const std::string& path) {
  using json = nlohmann::ordered_json;
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["n"] = static_cast<long>(model.n_used);
  j["p"] = static_cast<long>(model.p());
  j["k"] = static_cast<long>(model.k());
  j["converged"] = model.converged;
  json lambda = json::array();
  for (Index r = 0; r < model.lambda.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < model.lambda.cols(); ++c)
      row.push_back(static_cast<double>(model.lambda(r, c)));
    lambda.push_back(std::move(row));
  }
  j["lambda"] = std::move(lambda);
  j["psi2"] = detail::vector_to_json(model.psi2);
  j["omega"] = detail::vector_to_json(model.omega);
  j["column_names"] = model.column_names;
  j["column_scales"] = detail::vector_to_json(model.column_scales);
  json config;
  config["k"] = static_cast<long>(model.config.k);
  config["rule"] = model.config.rule == UpdateRule::subtract ? "subtract" : "rescale";
  config["psi2_init"] = model.config.psi2_init.size() > 0
                            ? detail::vector_to_json(model.config.psi2_init)
                            : json(nullptr);
  config["psi2_init_fraction"] = static_cast<double>(model.config.psi2_init_fraction);
  config["max_iter"] = model.config.max_iter;
  config["tol_psi"] = static_cast<double>(model.config.tol_psi);
  config["tol_trace"] = static_cast<double>(model.config.tol_trace);
  config["seed"] = model.config.seed ? json(*model.config.seed) : json(nullptr);
  j["config"] = std::move(config);
  json trace = json::array();
  for (const auto& rec : model.trace) {
    json t;
    t["iter"] = rec.iter;
    t["tail_sum"] = static_cast<double>(rec.tail_sum);
    t["min_psi2"] = static_cast<double>(rec.min_psi2);
    t["max_psi2"] = static_cast<double>(rec.max_psi2);
    t["psi2_rel_change"] = static_cast<double>(rec.psi2_rel_change);
    t["omega_min"] = static_cast<double>(rec.omega_min);
    trace.push_back(std::move(t));
  }
  j["trace"] = std::move(trace);
  j["warnings"] = model.warnings;
  detail::write_file(path, j.dump(2) + "\n");
}

/// Load a model file written by save_model. A schema_version other than the
/// current one raises VersionError; structural problems raise ParseError.
template <class Scalar = double>
FaModel<Scalar> load_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("model file " + path + " is not valid JSON: " + e.what());
  }
  try {
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
      throw ParseError("model file " + path + " has no integer schema_version");
    const int version = j["schema_version"].get<int>();
    if (version != kModelSchemaVersion)
      throw VersionError("model file " + path + " has schema_version " +
                         std::to_string(version) + "; this build reads version " +
                         std::to_string(kModelSchemaVersion));

    FaModel<Scalar> model;
    model.n_used = j.at("n").get<long>();
    const Index p = j.at("p").get<long>();
    const Index k = j.at("k").get<long>();
    model.converged = j.at("converged").get<bool>();
    const auto& lam = j.at("lambda");
    if (!lam.is_array() || static_cast<Index>(lam.size()) != p)
      throw ParseError("model field 'lambda' must be a p-row array");
    model.lambda.resize(p, k);
    for (Index r = 0; r < p; ++r) {
      const auto& row = lam[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Index>(row.size()) != k)
        throw ParseError("model field 'lambda' row " + std::to_string(r + 1) +
                         " must have k entries");
      for (Index c = 0; c < k; ++c)
        model.lambda(r, c) = Scalar(row[static_cast<std::size_t>(c)].get<double>());
    }
    model.psi2 = detail::vector_from_json<Scalar>(j.at("psi2"), "psi2");
    model.omega = detail::vector_from_json<Scalar>(j.at("omega"), "omega");
    model.column_names = j.at("column_names").get<std::vector<std::string>>();
    model.column_scales =
        detail::vector_from_json<Scalar>(j.at("column_scales"), "column_scales");
    const auto& config = j.at("config");
    model.config.k = config.at("k").get<long>();
    const std::string rule = config.at("rule").get<std::string>();
    if (rule == "subtract")
      model.config.rule = UpdateRule::subtract;
    else if (rule == "rescale")
      model.config.rule = UpdateRule::rescale;
    else
      throw ParseError("model config rule '" + rule + "' is unknown");
    if (!config.at("psi2_init").is_null())
      model.config.psi2_init =
          detail::vector_from_json<Scalar>(config.at("psi2_init"), "psi2_init");
    model.config.psi2_init_fraction = Scalar(config.at("psi2_init_fraction").get<double>());
    model.config.max_iter = config.at("max_iter").get<int>();
    model.config.tol_psi = Scalar(config.at("tol_psi").get<double>());
    model.config.tol_trace = Scalar(config.at("tol_trace").get<double>());
    if (!config.at("seed").is_null()) model.config.seed = config.at("seed").get<long>();
    for (const auto& t : j.at("trace")) {
      IterationRecord<Scalar> rec;
      rec.iter = t.at("iter").get<int>();
      rec.tail_sum = Scalar(t.at("tail_sum").get<double>());
      rec.min_psi2 = Scalar(t.at("min_psi2").get<double>());
      rec.max_psi2 = Scalar(t.at("max_psi2").get<double>());
      rec.psi2_rel_change = Scalar(t.at("psi2_rel_change").get<double>());
      rec.omega_min = Scalar(t.at("omega_min").get<double>());
      model.trace.push_back(rec);
    }
    model.warnings = j.at("warnings").get<std::vector<std::string>>();

    if (model.psi2.size() != p || model.omega.size() != k ||
        static_cast<Index>(model.column_names.size()) != p || model.column_scales.size() != p)
      throw ParseError("model file " + path + " has inconsistent dimensions");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file " + path + " is structurally invalid: " + e.what());
  }
}

}  // namespace zfa
