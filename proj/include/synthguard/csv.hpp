#pragma once

#include <string>

#include "synthguard/dataset.hpp"

namespace synthguard {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

// UTF-8, comma-separated, one header row matching the schema names in
// order. Empty field = missing. Nominal cells are level labels; ordinal and
// binary cells are integers; quantitative cells use format_double.
Dataset load_csv(const std::string& path, const Schema& schema);
void write_csv(const Dataset& data, const std::string& path);

// Schema sidecar: {"variables": [{name, kind, missing_allowed, levels}]}.
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

}  // namespace synthguard
