#include "synthguard/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "synthguard/errors.hpp"

namespace synthguard {

std::string format_double(double v) {
  char buf[64];
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_cell(const Variable& var, const std::string& field,
                  std::size_t row) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("row " + std::to_string(row + 1) + ", column " +
                          var.name + ": " + what);
  };
  if (field.empty()) {
    if (!var.missing_allowed) fail("missing value not allowed");
    return missing_value();
  }
  switch (var.kind) {
    case VariableKind::kQuantitative: {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end != field.c_str() + field.size() || !std::isfinite(v))
        fail("cannot parse quantitative value '" + field + "'");
      return v;
    }
    case VariableKind::kOrdinal:
    case VariableKind::kBinary: {
      char* end = nullptr;
      const long long v = std::strtoll(field.c_str(), &end, 10);
      if (end != field.c_str() + field.size())
        fail("cannot parse integer value '" + field + "'");
      const double d = static_cast<double>(v);
      validate_cell(var, d, row);
      return d;
    }
    case VariableKind::kNominal: {
      for (std::size_t i = 0; i < var.nominal_levels.size(); ++i) {
        if (var.nominal_levels[i] == field) return static_cast<double>(i);
      }
      fail("'" + field + "' is not a declared level");
    }
  }
  return missing_value();  // unreachable
}

std::string render_cell(const Variable& var, double value) {
  if (is_missing(value)) return "";
  switch (var.kind) {
    case VariableKind::kQuantitative:
      return format_double(value);
    case VariableKind::kOrdinal:
    case VariableKind::kBinary:
      return std::to_string(static_cast<long long>(value));
    case VariableKind::kNominal:
      return var.nominal_levels[static_cast<std::size_t>(value)];
  }
  return "";
}

}  // namespace

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  const auto header = split_line(line);
  if (static_cast<int>(header.size()) != schema.size())
    throw ValidationError(path + ": header has " +
                          std::to_string(header.size()) + " columns, schema has " +
                          std::to_string(schema.size()));
  for (int c = 0; c < schema.size(); ++c) {
    if (header[static_cast<std::size_t>(c)] != schema.var(c).name)
      throw ValidationError(path + ": header column " + std::to_string(c + 1) +
                            " is '" + header[static_cast<std::size_t>(c)] +
                            "', expected '" + schema.var(c).name + "'");
  }

  Dataset data(schema, 0);
  std::vector<double> row(static_cast<std::size_t>(schema.size()));
  std::size_t row_idx = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    const auto fields = split_line(line);
    if (static_cast<int>(fields.size()) != schema.size())
      throw ValidationError(path + ": row " + std::to_string(row_idx + 1) +
                            " has " + std::to_string(fields.size()) + " fields");
    for (int c = 0; c < schema.size(); ++c)
      row[static_cast<std::size_t>(c)] =
          parse_cell(schema.var(c), fields[static_cast<std::size_t>(c)], row_idx);
    data.append_row(row);
    ++row_idx;
  }
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    for (int c = 0; c < data.n_cols(); ++c) {
      if (c) out << ',';
      out << data.schema().var(c).name;
    }
    out << '\n';
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
      for (int c = 0; c < data.n_cols(); ++c) {
        if (c) out << ',';
        out << render_cell(data.schema().var(c), data.cell(r, c));
      }
      out << '\n';
    }
    if (!out) throw IoError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!j.contains("variables") || !j["variables"].is_array())
    throw ValidationError(path + ": missing 'variables' array");

  std::vector<Variable> vars;
  for (const auto& vj : j["variables"]) {
    Variable v;
    v.name = vj.at("name").get<std::string>();
    v.kind = kind_from_name(vj.at("kind").get<std::string>());
    v.missing_allowed = vj.value("missing_allowed", false);
    if (v.kind == VariableKind::kOrdinal)
      v.ordinal_levels = vj.at("levels").get<std::vector<long long>>();
    if (v.kind == VariableKind::kNominal)
      v.nominal_levels = vj.at("levels").get<std::vector<std::string>>();
    vars.push_back(std::move(v));
  }
  return Schema(std::move(vars));
}

void save_schema(const Schema& schema, const std::string& path) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : schema.variables()) {
    nlohmann::json vj;
    vj["name"] = v.name;
    vj["kind"] = std::string(kind_name(v.kind));
    vj["missing_allowed"] = v.missing_allowed;
    if (v.kind == VariableKind::kOrdinal) vj["levels"] = v.ordinal_levels;
    if (v.kind == VariableKind::kNominal) vj["levels"] = v.nominal_levels;
    vars.push_back(std::move(vj));
  }
  nlohmann::json j;
  j["variables"] = std::move(vars);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << j.dump(2) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

}  // namespace synthguard
