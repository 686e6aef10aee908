#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gflow {

struct RunMetrics {
  std::string phase;
  double distribution_cost = 0.0;
  double per_atom_cost = 0.0;
  double mean_steps = 0.0;
  double median_steps = 0.0;
  double validity_rate = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;

  bool operator==(const RunMetrics&) const = default;
};

inline constexpr const char* kMetricsCsvHeader =
    "phase,distribution_cost,per_atom_cost,mean_steps,median_steps,validity_rate,wall_seconds,seed,config_hash";

// Throws Error if rates leave [0, 1], costs or times are negative, or the
// phase contains a comma or newline.
void validate(const RunMetrics& m);

std::string to_csv_row(const RunMetrics& m);
RunMetrics metrics_from_csv_row(const std::string& row);

// Appends rows, writing the header first when the file is new or empty.
void append_metrics(const std::filesystem::path& path, const std::vector<RunMetrics>& rows);
std::vector<RunMetrics> load_metrics(const std::filesystem::path& path);

// 64-bit FNV-1a of the compact JSON dump, as 16 lowercase hex digits.
std::string config_hash(const nlohmann::json& config);

double median(std::vector<double> xs);

}  // namespace gflow
