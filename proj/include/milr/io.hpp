#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "milr/data_model.hpp"
#include "milr/density_models.hpp"
#include "milr/sgd_trainer.hpp"

namespace milr {

inline constexpr int kModelSchemaVersion = 1;

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(const std::string& text);

/// Header x_1,...,x_dx,y_1,...,y_dy then one row per example.
std::string dataset_to_csv(const Dataset& data);
Dataset dataset_from_csv(const std::string& text);

/// A trained model: the conditional head plus, when trained with the MIL
/// loss, its parametric marginal.
struct ModelDocument {
  ConditionalGaussianHead head;
  std::optional<MarginalGaussian> marginal;
};

/// JSON document with fields schema_version, input_dim, label_dim,
/// activation, sigma_min, sigma_max, layers [{rows, cols, weights, bias}]
/// and the optional marginal {mu, raw_sigma}. Unknown fields are rejected.
std::string model_to_json(const ModelDocument& model);
ModelDocument model_from_json(const std::string& text);

/// Header t,loss,grad_norm_sq,lr.
std::string trace_to_csv(std::span<const TraceRecord> records);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string sha256_hex(const std::string& bytes);

/// Minimal CSV table reader for files this library writes (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);

}  // namespace milr
