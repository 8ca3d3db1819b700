#include "synthguard/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include "synthguard/errors.hpp"
#include "synthguard/rng.hpp"

namespace synthguard {

std::string_view kind_name(VariableKind kind) {
  switch (kind) {
    case VariableKind::kQuantitative: return "quantitative";
    case VariableKind::kOrdinal: return "ordinal";
    case VariableKind::kBinary: return "binary";
    case VariableKind::kNominal: return "nominal";
  }
  return "?";
}

VariableKind kind_from_name(std::string_view name) {
  if (name == "quantitative") return VariableKind::kQuantitative;
  if (name == "ordinal") return VariableKind::kOrdinal;
  if (name == "binary") return VariableKind::kBinary;
  if (name == "nominal") return VariableKind::kNominal;
  throw ValidationError("unknown variable kind: " + std::string(name));
}

int Variable::ordinal_rank(double cell) const {
  for (std::size_t i = 0; i < ordinal_levels.size(); ++i) {
    if (static_cast<double>(ordinal_levels[i]) == cell)
      return static_cast<int>(i) + 1;
  }
  return -1;
}

int Variable::category_cardinality() const {
  int base = 0;
  switch (kind) {
    case VariableKind::kBinary: base = 2; break;
    case VariableKind::kNominal: base = static_cast<int>(nominal_levels.size()); break;
    default: throw ValidationError("category_cardinality on numeric variable " + name);
  }
  return base + (missing_allowed ? 1 : 0);
}

void Variable::validate() const {
  if (name.empty()) throw ValidationError("variable with empty name");
  if (name.find_first_of(",\"\n\r") != std::string::npos)
    throw ValidationError("variable name contains CSV metacharacters: " + name);
  if (kind == VariableKind::kOrdinal) {
    if (ordinal_levels.empty())
      throw ValidationError("ordinal variable " + name + " has no levels");
    std::unordered_set<long long> seen(ordinal_levels.begin(), ordinal_levels.end());
    if (seen.size() != ordinal_levels.size())
      throw ValidationError("ordinal variable " + name + " has duplicate levels");
  }
  if (kind == VariableKind::kNominal) {
    if (nominal_levels.empty())
      throw ValidationError("nominal variable " + name + " has no levels");
    std::unordered_set<std::string> seen(nominal_levels.begin(), nominal_levels.end());
    if (seen.size() != nominal_levels.size())
      throw ValidationError("nominal variable " + name + " has duplicate levels");
    for (const auto& l : nominal_levels) {
      if (l.empty() || l.find_first_of(",\"\n\r") != std::string::npos)
        throw ValidationError("nominal level of " + name + " is empty or contains CSV metacharacters");
    }
  }
}

Schema::Schema(std::vector<Variable> variables) : variables_(std::move(variables)) {
  std::unordered_set<std::string> names;
  for (const auto& v : variables_) {
    v.validate();
    if (!names.insert(v.name).second)
      throw ValidationError("duplicate variable name: " + v.name);
  }
}

int Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int Schema::require(std::string_view name) const {
  const int i = index_of(name);
  if (i < 0) throw ValidationError("unknown variable: " + std::string(name));
  return i;
}

Dataset::Dataset(Schema schema, std::size_t n_rows)
    : schema_(std::move(schema)), n_rows_(n_rows) {
  columns_.assign(static_cast<std::size_t>(schema_.size()),
                  std::vector<double>(n_rows, missing_value()));
}

std::vector<double> Dataset::row(std::size_t r) const {
  std::vector<double> out(static_cast<std::size_t>(n_cols()));
  for (int c = 0; c < n_cols(); ++c) out[static_cast<std::size_t>(c)] = cell(r, c);
  return out;
}

void Dataset::append_row(const std::vector<double>& values) {
  if (values.size() != static_cast<std::size_t>(n_cols()))
    throw ValidationError("append_row: wrong number of cells");
  for (int c = 0; c < n_cols(); ++c)
    columns_[static_cast<std::size_t>(c)].push_back(values[static_cast<std::size_t>(c)]);
  ++n_rows_;
}

void validate_cell(const Variable& var, double value, std::size_t row) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("row " + std::to_string(row + 1) + ", column " +
                          var.name + ": " + what);
  };
  if (is_missing(value)) {
    if (!var.missing_allowed) fail("missing value not allowed");
    return;
  }
  switch (var.kind) {
    case VariableKind::kQuantitative:
      if (!std::isfinite(value)) fail("non-finite quantitative value");
      break;
    case VariableKind::kOrdinal:
      if (var.ordinal_rank(value) < 0)
        fail("value " + std::to_string(value) + " is not a declared level");
      break;
    case VariableKind::kBinary:
      if (value != 0.0 && value != 1.0)
        fail("binary value must be 0 or 1");
      break;
    case VariableKind::kNominal: {
      const double idx = value;
      if (idx != std::floor(idx) || idx < 0.0 ||
          idx >= static_cast<double>(var.nominal_levels.size()))
        fail("nominal index out of range");
      break;
    }
  }
}

void Dataset::validate() const {
  for (int c = 0; c < n_cols(); ++c) {
    const Variable& v = schema_.var(c);
    for (std::size_t r = 0; r < n_rows_; ++r) validate_cell(v, cell(r, c), r);
  }
}

bool Dataset::operator==(const Dataset& other) const {
  if (!(schema_ == other.schema_) || n_rows_ != other.n_rows_) return false;
  for (int c = 0; c < n_cols(); ++c) {
    for (std::size_t r = 0; r < n_rows_; ++r) {
      const double a = cell(r, c);
      const double b = other.cell(r, c);
      if (is_missing(a) != is_missing(b)) return false;
      if (!is_missing(a) && a != b) return false;
    }
  }
  return true;
}

Dataset exclude_variables(const Dataset& data,
                          const std::vector<std::string>& names) {
  std::vector<bool> drop(static_cast<std::size_t>(data.n_cols()), false);
  for (const auto& name : names)
    drop[static_cast<std::size_t>(data.schema().require(name))] = true;

  std::vector<Variable> kept;
  std::vector<int> kept_cols;
  for (int c = 0; c < data.n_cols(); ++c) {
    if (!drop[static_cast<std::size_t>(c)]) {
      kept.push_back(data.schema().var(c));
      kept_cols.push_back(c);
    }
  }
  Dataset out(Schema(std::move(kept)), data.n_rows());
  for (std::size_t j = 0; j < kept_cols.size(); ++j) {
    for (std::size_t r = 0; r < data.n_rows(); ++r)
      out.set_cell(r, static_cast<int>(j), data.cell(r, kept_cols[j]));
  }
  return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, std::size_t k,
                                          std::uint64_t seed) {
  const std::size_t n = data.n_rows();
  if (k == 0 || k >= n)
    throw ValidationError("split_holdout: k must satisfy 0 < k < n_rows");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_key(seed, "split_holdout"));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> in_control(n, false);
  for (std::size_t i = 0; i < k; ++i) in_control[idx[i]] = true;

  Dataset train(data.schema(), 0);
  Dataset control(data.schema(), 0);
  for (std::size_t r = 0; r < n; ++r)
    (in_control[r] ? control : train).append_row(data.row(r));
  return {std::move(train), std::move(control)};
}

}  // namespace synthguard
