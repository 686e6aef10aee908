#pragma once

// File formats:
//   .geoms.jsonl  one JSON object per line: {"n", "coords", "features", "tag"?}
//   .gflow.ckpt   one JSON header line, then little-endian f64 parameters
//                 (flow first, autoencoder second)
//   .pairs.bin    one JSON header line {count, k, version, aligned}, then per
//                 pair: u32 n, z0 and z1 as n x (3 + k) row-major f64 blocks,
//                 a source byte and a valid byte
// Doubles are written so that reading them back is bit-exact.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/coupling.hpp"
#include "gflow/flow.hpp"
#include "gflow/geometry.hpp"
#include "gflow/model.hpp"

namespace gflow {

enum class PersistenceKind { io, malformed, version, truncated, empty };

const char* to_string(PersistenceKind k);

class PersistenceError : public Error {
 public:
  PersistenceError(PersistenceKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  PersistenceKind kind() const { return kind_; }

 private:
  PersistenceKind kind_;
};

inline constexpr int kFormatVersion = 1;

nlohmann::json to_json(const PointSet& g, const std::string& tag = {});
Geometry geometry_from_json(const nlohmann::json& j);

void save_geometries(const std::filesystem::path& path, const std::vector<Geometry>& gs);
// An empty file is rejected unless `allow_empty`.
std::vector<Geometry> load_geometries(const std::filesystem::path& path, bool allow_empty = false);

nlohmann::json checkpoint_header(const Model& m);
void save_checkpoint(const std::filesystem::path& path, const Model& m);
Model load_checkpoint(const std::filesystem::path& path);

void save_pairs(const std::filesystem::path& path, const CouplingSet& pairs);
CouplingSet load_pairs(const std::filesystem::path& path);

// Flat JSON run configuration; unknown keys are rejected so typos surface.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

// Raw file contents, for byte-level comparisons.
std::string read_bytes(const std::filesystem::path& path);

}  // namespace gflow
