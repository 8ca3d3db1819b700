#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "synthguard/csv.hpp"
#include "synthguard/dataset.hpp"
#include "synthguard/errors.hpp"
#include "synthguard/rng.hpp"

using namespace synthguard;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

Schema tiny_schema() {
  Variable flag;
  flag.name = "FLAG";
  flag.kind = VariableKind::kBinary;
  Variable score;
  score.name = "SCORE";
  score.kind = VariableKind::kQuantitative;
  score.missing_allowed = true;
  Variable grade;
  grade.name = "GRADE";
  grade.kind = VariableKind::kOrdinal;
  grade.ordinal_levels = {1, 2, 3};
  Variable color;
  color.name = "COLOR";
  color.kind = VariableKind::kNominal;
  color.nominal_levels = {"red", "green", "blue"};
  color.missing_allowed = true;
  return Schema({flag, score, grade, color});
}

// Random valid dataset for round-trip properties.
Dataset random_dataset(std::uint64_t seed, std::size_t rows) {
  Dataset d(tiny_schema(), 0);
  Rng rng(derive_key(seed, "dataset-gen"));
  for (std::size_t r = 0; r < rows; ++r) {
    const double flag = static_cast<double>(rng.uniform_int(2));
    const double score =
        rng.uniform() < 0.15 ? missing_value() : rng.normal(0.0, 37.5);
    const double grade = static_cast<double>(1 + rng.uniform_int(3));
    const double color = rng.uniform() < 0.1
                             ? missing_value()
                             : static_cast<double>(rng.uniform_int(3));
    d.append_row({flag, score, grade, color});
  }
  return d;
}

}  // namespace

TEST_CASE("load_csv parses binary values") {
  Variable b;
  b.name = "B";
  b.kind = VariableKind::kBinary;
  const Schema schema({b});
  const std::string path = temp_path("sg_binary.csv");
  write_file(path, "B\n0\n1\n0\n");
  const Dataset d = load_csv(path, schema);
  REQUIRE(d.n_rows() == 3);
  CHECK(d.cell(0, 0) == 0.0);
  CHECK(d.cell(1, 0) == 1.0);
  CHECK(d.cell(2, 0) == 0.0);
}

TEST_CASE("load_csv rejects out-of-domain binary naming row and column") {
  Variable b;
  b.name = "B";
  b.kind = VariableKind::kBinary;
  const Schema schema({b});
  const std::string path = temp_path("sg_bad_binary.csv");
  write_file(path, "B\n0\n2\n");
  try {
    load_csv(path, schema);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("B") != std::string::npos);
  }
}

TEST_CASE("load_csv validates header, missing cells and nominal levels") {
  const Schema schema = tiny_schema();
  const std::string path = temp_path("sg_various.csv");

  write_file(path, "FLAG,SCORE,WRONG,COLOR\n");
  CHECK_THROWS_AS(load_csv(path, schema), ValidationError);

  // missing where not allowed (FLAG)
  write_file(path, "FLAG,SCORE,GRADE,COLOR\n,1.5,2,red\n");
  CHECK_THROWS_AS(load_csv(path, schema), ValidationError);

  // out-of-level nominal
  write_file(path, "FLAG,SCORE,GRADE,COLOR\n1,1.5,2,purple\n");
  CHECK_THROWS_AS(load_csv(path, schema), ValidationError);

  // unparsable quantitative
  write_file(path, "FLAG,SCORE,GRADE,COLOR\n1,abc,2,red\n");
  CHECK_THROWS_AS(load_csv(path, schema), ValidationError);

  write_file(path, "FLAG,SCORE,GRADE,COLOR\n1,,3,\n");
  const Dataset d = load_csv(path, schema);
  CHECK(is_missing(d.cell(0, 1)));
  CHECK(is_missing(d.cell(0, 3)));
}

TEST_CASE("bundled fixture loads with 799 rows and 26 columns") {
  const Schema schema =
      load_schema(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.schema.json");
  REQUIRE(schema.size() == 26);
  const Dataset d =
      load_csv(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.csv", schema);
  CHECK(d.n_rows() == 799);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("write_csv / load_csv round-trips bit-exactly") {
  const std::string path = temp_path("sg_roundtrip.csv");
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Dataset d = random_dataset(seed, 40);
    write_csv(d, path);
    const Dataset back = load_csv(path, d.schema());
    CHECK(back == d);
  }
}

TEST_CASE("write_csv encodes MISSING as empty field") {
  const Schema schema = tiny_schema();
  Dataset d(schema, 0);
  d.append_row({1.0, missing_value(), 2.0, 0.0});
  const std::string path = temp_path("sg_missing.csv");
  write_csv(d, path);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(line == "1,,2,red");
}

TEST_CASE("quantitative formatting is fixed and round-trips") {
  CHECK(format_double(178.0) == "178");
  CHECK(format_double(0.1) == "0.1");
  const double third = 1.0 / 3.0;
  CHECK(std::strtod(format_double(third).c_str(), nullptr) == third);
}

TEST_CASE("split_holdout partitions 799 rows into 600 + 199") {
  const Schema schema =
      load_schema(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.schema.json");
  const Dataset d =
      load_csv(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.csv", schema);
  const auto [train, control] = split_holdout(d, 199, 7);
  CHECK(train.n_rows() == 600);
  CHECK(control.n_rows() == 199);
}

TEST_CASE("split_holdout boundary, determinism and partition property") {
  const Dataset d = random_dataset(3, 20);

  const auto [train1, control1] = split_holdout(d, 19, 11);
  CHECK(train1.n_rows() == 1);

  const auto [ta, ca] = split_holdout(d, 7, 42);
  const auto [tb, cb] = split_holdout(d, 7, 42);
  CHECK(ta == tb);
  CHECK(ca == cb);

  // Union of row multisets equals the input: compare sorted serialized rows.
  std::multiset<std::string> original, pieces;
  const auto key = [](const Dataset& data, std::size_t r) {
    std::string k;
    for (int c = 0; c < data.n_cols(); ++c) {
      const double v = data.cell(r, c);
      k += is_missing(v) ? "NA" : format_double(v);
      k += '|';
    }
    return k;
  };
  for (std::size_t r = 0; r < d.n_rows(); ++r) original.insert(key(d, r));
  for (std::size_t r = 0; r < ta.n_rows(); ++r) pieces.insert(key(ta, r));
  for (std::size_t r = 0; r < ca.n_rows(); ++r) pieces.insert(key(ca, r));
  CHECK(original == pieces);

  CHECK_THROWS_AS(split_holdout(d, 0, 1), ValidationError);
  CHECK_THROWS_AS(split_holdout(d, 20, 1), ValidationError);
}

TEST_CASE("exclude_variables") {
  const Schema schema =
      load_schema(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.schema.json");
  const Dataset d =
      load_csv(std::string(SYNTHGUARD_DATA_DIR) + "/prison_sim.csv", schema);

  const Dataset reduced = exclude_variables(
      d, {"SUICIDE.HR", "SUICIDE.SCORE", "CHILDREN.JUDGE", "PERSONALITY"});
  CHECK(reduced.n_cols() == 22);
  CHECK(reduced.n_rows() == d.n_rows());

  CHECK(exclude_variables(d, {}) == d);
  CHECK_THROWS_AS(exclude_variables(d, {"NO_SUCH"}), ValidationError);
}

TEST_CASE("schema validation rejects corrupted cells") {
  Rng rng(derive_key(99, "corrupt"));
  for (int trial = 0; trial < 50; ++trial) {
    Dataset d = random_dataset(1000 + static_cast<std::uint64_t>(trial), 15);
    const std::size_t row = rng.uniform_int(d.n_rows());
    const int col = static_cast<int>(rng.uniform_int(4));
    switch (col) {
      case 0: d.set_cell(row, col, 2.0 + static_cast<double>(rng.uniform_int(5))); break;
      case 1: d.set_cell(row, col, std::numeric_limits<double>::infinity()); break;
      case 2: d.set_cell(row, col, 17.0); break;
      case 3: d.set_cell(row, col, 99.0); break;
    }
    CHECK_THROWS_AS(d.validate(), ValidationError);
  }
}

TEST_CASE("schema invariants") {
  Variable dup;
  dup.name = "X";
  dup.kind = VariableKind::kOrdinal;
  dup.ordinal_levels = {1, 1};
  CHECK_THROWS_AS(Schema({dup}), ValidationError);

  Variable empty_levels;
  empty_levels.name = "Y";
  empty_levels.kind = VariableKind::kNominal;
  CHECK_THROWS_AS(Schema({empty_levels}), ValidationError);

  Variable a, b;
  a.name = b.name = "SAME";
  CHECK_THROWS_AS(Schema({a, b}), ValidationError);
}
