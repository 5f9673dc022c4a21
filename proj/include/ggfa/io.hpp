#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ggfa/model.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

// Schema sidecar: one "name,kind" line per column, kind in
// {continuous, binary}. Blank lines and lines starting with '#' are ignored.
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

// CSV with a header row naming every schema column (any order); cells are
// decimal numbers for continuous columns, 0/1 for binary, empty string for
// missing. Errors cite the 1-based row and the column name.
Dataset load_csv(const std::string& data_path, const Schema& schema);

// Writes columns in the schema's declared order; continuous values with 17
// significant digits so a reload is lossless.
void save_csv(const Dataset& data, const std::string& path);

struct FitMeta {
  double log_lik = 0.0;
  double bic = 0.0;
  int n_params = 0;
  std::uint64_t seed = 0;
  int restarts = 0;
};

// Persisted model document (JSON, format_version 1). Numbers are serialized
// with 17 significant digits; save -> load -> save is byte-identical.
struct ModelFile {
  int format_version = 1;
  Schema schema;
  ModelParams params;
  bool canonical = false;
  std::optional<FitMeta> fit;
};

std::string model_to_string(const ModelFile& m);
void save_model(const ModelFile& m, const std::string& path);
ModelFile load_model(const std::string& path);

// Natural-log transform of named continuous columns in place; throws
// DataError on nonpositive observed values, UsageError on non-continuous or
// unknown names.
void log_transform_columns(Dataset* data, const std::vector<std::string>& names);

}  // namespace ggfa
