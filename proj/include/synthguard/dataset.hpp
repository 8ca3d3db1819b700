#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace synthguard {

enum class VariableKind { kQuantitative, kOrdinal, kBinary, kNominal };

std::string_view kind_name(VariableKind kind);
VariableKind kind_from_name(std::string_view name);

// Missing cells are stored as quiet NaN.
inline double missing_value() {
  return std::numeric_limits<double>::quiet_NaN();
}
inline bool is_missing(double v) { return std::isnan(v); }

struct Variable {
  std::string name;
  VariableKind kind = VariableKind::kQuantitative;
  bool missing_allowed = false;
  std::vector<long long> ordinal_levels;    // kOrdinal: ordered, unique
  std::vector<std::string> nominal_levels;  // kNominal: unique labels

  bool is_numeric() const {
    return kind == VariableKind::kQuantitative ||
           kind == VariableKind::kOrdinal;
  }
  // Position of an ordinal level in the declared list, 1-based; used as the
  // rank when ordinals enter variances and distances. -1 if not a level.
  int ordinal_rank(double cell) const;
  // Number of categories a binary/nominal variable can take, including the
  // extra missing slot when missing is allowed.
  int category_cardinality() const;

  void validate() const;

  bool operator==(const Variable&) const = default;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<Variable> variables);

  int size() const { return static_cast<int>(variables_.size()); }
  const Variable& var(int i) const { return variables_[static_cast<std::size_t>(i)]; }
  const std::vector<Variable>& variables() const { return variables_; }

  // -1 when absent.
  int index_of(std::string_view name) const;
  // Throws ValidationError when absent.
  int require(std::string_view name) const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<Variable> variables_;
};

// Columnar typed microdata. Cells are doubles: the value itself for
// quantitative/ordinal/binary variables, the 0-based level index for nominal
// ones, NaN for missing. Treated as immutable once built; all operations
// return new datasets.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Schema schema, std::size_t n_rows = 0);

  const Schema& schema() const { return schema_; }
  std::size_t n_rows() const { return n_rows_; }
  int n_cols() const { return schema_.size(); }

  double cell(std::size_t row, int col) const {
    return columns_[static_cast<std::size_t>(col)][row];
  }
  void set_cell(std::size_t row, int col, double value) {
    columns_[static_cast<std::size_t>(col)][row] = value;
  }

  const std::vector<double>& column(int col) const {
    return columns_[static_cast<std::size_t>(col)];
  }
  std::vector<double> row(std::size_t r) const;
  void append_row(const std::vector<double>& values);

  // Checks every cell against its variable kind; throws ValidationError
  // naming the first offending row and column.
  void validate() const;

  // Bit-exact cell equality, except that missing equals missing.
  bool operator==(const Dataset& other) const;

 private:
  Schema schema_;
  std::size_t n_rows_ = 0;
  std::vector<std::vector<double>> columns_;
};

// Throws ValidationError with a row/column message when the cell does not
// conform to the variable kind (missing not allowed, out-of-level, ...).
void validate_cell(const Variable& var, double value, std::size_t row);

// Removes the named columns; row count unchanged. Unknown names throw.
Dataset exclude_variables(const Dataset& data,
                          const std::vector<std::string>& names);

// Samples k control rows without replacement (deterministic in seed) and
// returns (train, control); both keep the original row order.
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, std::size_t k,
                                          std::uint64_t seed);

}  // namespace synthguard
