#include "gflow/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gflow/io.hpp"

namespace gflow {

void validate(const RunMetrics& m) {
  if (m.phase.find_first_of(",\n\r") != std::string::npos) throw Error("phase must not contain ',' or newlines");
  if (!(m.validity_rate >= 0.0 && m.validity_rate <= 1.0)) throw Error("validity_rate must lie in [0, 1]");
  if (!(m.distribution_cost >= 0.0) || !(m.per_atom_cost >= 0.0)) throw Error("costs must be >= 0");
  if (!(m.wall_seconds >= 0.0)) throw Error("wall_seconds must be >= 0");
}

std::string to_csv_row(const RunMetrics& m) {
  validate(m);
  return fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}", m.phase, m.distribution_cost,
                     m.per_atom_cost, m.mean_steps, m.median_steps, m.validity_rate, m.wall_seconds, m.seed,
                     m.config_hash);
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw PersistenceError(PersistenceKind::malformed, "bad number in metrics row: '" + s + "'");
  return v;
}

}  // namespace

RunMetrics metrics_from_csv_row(const std::string& row) {
  std::vector<std::string> f;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!row.empty() && row.back() == ',') f.emplace_back();
  if (f.size() != 9) throw PersistenceError(PersistenceKind::malformed, "metrics row needs 9 fields");
  RunMetrics m;
  m.phase = f[0];
  m.distribution_cost = parse_double(f[1]);
  m.per_atom_cost = parse_double(f[2]);
  m.mean_steps = parse_double(f[3]);
  m.median_steps = parse_double(f[4]);
  m.validity_rate = parse_double(f[5]);
  m.wall_seconds = parse_double(f[6]);
  const auto [ptr, ec] = std::from_chars(f[7].data(), f[7].data() + f[7].size(), m.seed);
  if (ec != std::errc() || ptr != f[7].data() + f[7].size())
    throw PersistenceError(PersistenceKind::malformed, "bad seed in metrics row");
  m.config_hash = f[8];
  return m;
}

void append_metrics(const std::filesystem::path& path, const std::vector<RunMetrics>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string());
  if (fresh) out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
  if (!out) throw PersistenceError(PersistenceKind::io, "write failed for " + path.string());
}

std::vector<RunMetrics> load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PersistenceError(PersistenceKind::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw PersistenceError(PersistenceKind::empty, "metrics file " + path.string());
  if (line != kMetricsCsvHeader) throw PersistenceError(PersistenceKind::version, "unexpected metrics header");
  std::vector<RunMetrics> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(metrics_from_csv_row(line));
  return rows;
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

}  // namespace gflow
