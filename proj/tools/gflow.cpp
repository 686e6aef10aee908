// gflow: command-line driver for dataset generation, training, reflow,
// sampling, coupling evaluation and the built-in self-checks.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 self-test failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gflow/alignment.hpp"
#include "gflow/costs.hpp"
#include "gflow/data.hpp"
#include "gflow/flow.hpp"
#include "gflow/io.hpp"
#include "gflow/metrics.hpp"
#include "gflow/parallel.hpp"
#include "gflow/selftest.hpp"

namespace {

using namespace gflow;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSelftest = 3;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Accepts either a path to a JSON file or an inline JSON object.
nlohmann::json json_arg(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') {
    try {
      return nlohmann::json::parse(arg);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("inline JSON: ") + e.what());
    }
  }
  return read_json_file(arg);
}

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

TrainConfig load_config(const std::string& arg, const Common& common) {
  TrainConfig cfg = arg.empty() ? TrainConfig{} : train_config_from_json(json_arg(arg));
  if (common.seed) cfg.seed = *common.seed;
  return cfg;
}

std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

int cmd_gendata(const std::string& spec_arg, int count, const std::string& out, const Common& common) {
  TemplateSpec spec = spec_arg.empty() ? TemplateSpec{} : template_spec_from_json(json_arg(spec_arg));
  if (common.seed) spec.seed = *common.seed;
  const auto data = make_dataset(spec, count);
  save_geometries(out, data);
  std::map<long, long> hist;
  for (const auto& g : data) ++hist[g.size()];
  std::string sizes;
  for (const auto& [n, c] : hist) sizes += fmt::format(" n{}={}", n, c);
  fmt::print("gendata: wrote {} geometries to {} (seed {}, sizes:{})\n", data.size(), out, spec.seed, sizes);
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& config, const std::string& out,
              std::string loss_out, const std::string& metrics_out, const Common& common) {
  const TrainConfig cfg = load_config(config, common);
  const auto data = load_geometries(data_path);
  const auto start = Clock::now();
  const TrainResult tr = train(data, cfg);
  const double wall = seconds_since(start);
  save_checkpoint(out, tr.model);
  if (loss_out.empty()) loss_out = with_suffix(out, ".loss.csv");
  std::ofstream loss(loss_out);
  loss << "phase,step,loss\n";
  for (std::size_t i = 0; i < tr.ae_loss_curve.size(); ++i) loss << fmt::format("ae,{},{:.17g}\n", i, tr.ae_loss_curve[i]);
  for (std::size_t i = 0; i < tr.loss_curve.size(); ++i) loss << fmt::format("flow,{},{:.17g}\n", i, tr.loss_curve[i]);
  if (!loss) throw PersistenceError(PersistenceKind::io, "cannot write " + loss_out);
  if (!metrics_out.empty()) {
    RunMetrics m;
    m.phase = "train";
    m.validity_rate = 1.0;
    m.wall_seconds = wall;
    m.seed = cfg.seed;
    m.config_hash = config_hash(to_json(cfg));
    append_metrics(metrics_out, {m});
  }
  const double last = tr.loss_curve.empty() ? 0.0 : tr.loss_curve.back();
  fmt::print("train: {} steps, final flow loss {:.6g}, {} parameters, {:.1f}s -> {}\n", tr.loss_curve.size(), last,
             tr.model.param_count(), wall, out);
  return kExitOk;
}

int cmd_reflow(const std::string& ckpt, const std::string& data_path, const std::string& config, int rounds,
               const std::string& purify, int pairs, const std::string& out, const std::string& pairs_out,
               std::string table_out, const std::string& metrics_out, const Common& common) {
  TrainConfig cfg = load_config(config, common);
  cfg.reflow_rounds = rounds;
  cfg.purify = purify == "on";
  if (pairs > 0) cfg.reflow_pairs = pairs;
  validate(cfg);
  const Model model = load_checkpoint(ckpt);
  const auto data = load_geometries(data_path);
  const ValidityRule rule = cfg.validity;
  const auto start = Clock::now();
  const ReflowResult rr = reflow(model, data, cfg, [&](const Geometry& g) { return bool(is_valid(g, rule)); });
  const double wall = seconds_since(start);
  save_checkpoint(out, rr.model);
  save_pairs(pairs_out, rr.pairs);
  if (table_out.empty()) table_out = with_suffix(pairs_out, ".rounds.csv");
  std::ofstream table(table_out);
  table << "round,generated,kept,valid_fraction,random_cost,estimated_cost\n";
  fmt::print("{:>5} {:>9} {:>7} {:>8} {:>12} {:>14}\n", "round", "generated", "kept", "valid", "random_cost",
             "estimated_cost");
  for (const auto& r : rr.rounds) {
    table << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g}\n", r.round, r.generated, r.kept, r.valid_fraction,
                         r.random_cost, r.estimated_cost);
    fmt::print("{:>5} {:>9} {:>7} {:>8.3f} {:>12.5f} {:>14.5f}\n", r.round, r.generated, r.kept, r.valid_fraction,
               r.random_cost, r.estimated_cost);
  }
  if (!metrics_out.empty()) {
    RunMetrics m;
    m.phase = "reflow";
    const CostReport rep = distribution_cost(rr.pairs, DistributionCostOptions{cfg.lambda, false, cfg.omt_max_iters});
    m.distribution_cost = rep.total_cost;
    m.per_atom_cost = rep.per_atom_cost;
    m.validity_rate = rr.rounds.back().valid_fraction;
    m.wall_seconds = wall;
    m.seed = cfg.seed;
    m.config_hash = config_hash(to_json(cfg));
    append_metrics(metrics_out, {m});
  }
  fmt::print("reflow: {} pairs -> {}, model -> {}\n", rr.pairs.size(), pairs_out, out);
  return kExitOk;
}

int cmd_sample(const std::string& ckpt, const std::string& config, int count, const std::string& solver,
               int steps, double rtol, double atol, const std::string& out, std::string metrics_out,
               const Common& common) {
  TrainConfig cfg = load_config(config, common);
  SolverConfig sc;
  sc.method = solver_method_from_string(solver);
  sc.fixed_steps = steps;
  sc.rtol = rtol;
  sc.atol = atol;
  validate(sc);
  const Model model = load_checkpoint(ckpt);
  const auto start = Clock::now();
  const auto samples = generate(model, count, sc, cfg.seed);
  const double wall = seconds_since(start);
  std::vector<Geometry> gs;
  std::vector<double> step_counts, costs;
  long atoms = 0;
  int valid = 0;
  for (const auto& s : samples) {
    gs.push_back(s.geometry);
    step_counts.push_back(s.steps);
    costs.push_back(optimal_molecule_cost(s.z0, s.z1, cfg.lambda, false, cfg.omt_max_iters));
    atoms += s.z0.size();
    if (is_valid(s.geometry, cfg.validity)) ++valid;
  }
  save_geometries(out, gs);
  RunMetrics m;
  m.phase = "sample-" + to_string(sc.method);
  const MeanWithError mc = mean_with_error(costs);
  m.distribution_cost = mc.mean;
  double total = 0.0;
  for (double c : costs) total += c;
  m.per_atom_cost = atoms > 0 ? total / static_cast<double>(atoms) : 0.0;
  m.mean_steps = mean_with_error(step_counts).mean;
  m.median_steps = median(step_counts);
  m.validity_rate = count > 0 ? static_cast<double>(valid) / count : 0.0;
  m.wall_seconds = wall;
  m.seed = cfg.seed;
  m.config_hash = config_hash(to_json(cfg));
  if (metrics_out.empty())
    metrics_out = (std::filesystem::path(out).parent_path() / "metrics.csv").string();
  append_metrics(metrics_out, {m});
  fmt::print("sample: {} geometries, mean steps {:.2f}, median steps {:.1f}, validity {:.3f}, {:.2f}s -> {}\n",
             count, m.mean_steps, m.median_steps, m.validity_rate, wall, out);
  return kExitOk;
}

int cmd_eval(const std::string& pairs_path, double lambda, bool exact, int max_iters, const std::string& space) {
  const CouplingSet pairs = load_pairs(pairs_path);
  DistributionCostOptions opts;
  opts.lambda = lambda;
  opts.exact = exact;
  opts.max_iters = max_iters;
  opts.space = space;
  const CostReport rep = distribution_cost(pairs, opts);
  fmt::print("{}\n{}\n", kCostReportCsvHeader, to_csv_row(rep));
  return kExitOk;
}

int cmd_selftest(const std::string& suite, const Common& common) {
  const auto results = run_selftest(suite, common.seed.value_or(0));
  bool ok = true;
  for (const auto& r : results) {
    fmt::print("{}\n", format_check(r));
    ok = ok && r.passed;
  }
  fmt::print("selftest {}: {}\n", suite, ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gflow: geometric optimal-transport flow matching for featured point clouds"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed overriding the spec/config seed");
  app.add_option("--threads", common.threads, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);

  std::string spec, out, data, config, ckpt, loss_out, metrics_out, pairs_out, table_out, pairs_path, purify = "on",
                                                                                                   solver = "adaptive",
                                                                                                   suite = "all",
                                                                                                   space = "latent";
  int count = 0, rounds = 1, pairs = 0, steps = 100, max_iters = 1;
  double rtol = 1e-4, atol = 1e-5, lambda = 0.5;
  bool exact = false;

  auto* gendata = app.add_subcommand("gendata", "Generate a synthetic .geoms.jsonl dataset");
  gendata->add_option("--spec", spec, "Template spec (JSON file or inline object)");
  gendata->add_option("--count", count, "Number of geometries")->required()->check(CLI::PositiveNumber);
  gendata->add_option("--out", out, "Output .geoms.jsonl")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder and flow");
  train_cmd->add_option("--data", data, "Training .geoms.jsonl")->required();
  train_cmd->add_option("--config", config, "Run config (JSON file or inline object)");
  train_cmd->add_option("--out", out, "Output .gflow.ckpt")->required();
  train_cmd->add_option("--loss-out", loss_out, "Loss curve CSV (default <out>.loss.csv)");
  train_cmd->add_option("--metrics", metrics_out, "Append a metrics.csv row");

  auto* reflow_cmd = app.add_subcommand("reflow", "Estimate, purify and refit the coupling");
  reflow_cmd->add_option("--ckpt", ckpt, "Input .gflow.ckpt")->required();
  reflow_cmd->add_option("--data", data, "Training .geoms.jsonl (random-coupling baseline, pair count)")->required();
  reflow_cmd->add_option("--config", config, "Run config (JSON file or inline object)");
  reflow_cmd->add_option("--rounds", rounds, "Reflow rounds")->check(CLI::PositiveNumber);
  reflow_cmd->add_option("--purify", purify, "Validity filter")->check(CLI::IsMember({"on", "off"}));
  reflow_cmd->add_option("--pairs", pairs, "Estimated pairs per round (default: config, else 10x data)");
  reflow_cmd->add_option("--out", out, "Output .gflow.ckpt")->required();
  reflow_cmd->add_option("--pairs-out", pairs_out, "Output .pairs.bin")->required();
  reflow_cmd->add_option("--table-out", table_out, "Per-round cost table (default <pairs-out>.rounds.csv)");
  reflow_cmd->add_option("--metrics", metrics_out, "Append a metrics.csv row");

  auto* sample_cmd = app.add_subcommand("sample", "Generate geometries by integrating the flow");
  sample_cmd->add_option("--ckpt", ckpt, "Input .gflow.ckpt")->required();
  sample_cmd->add_option("--config", config, "Run config (lambda, validity rule, seed)");
  sample_cmd->add_option("--count", count, "Number of samples")->required()->check(CLI::NonNegativeNumber);
  sample_cmd->add_option("--solver", solver, "ODE solver")->check(CLI::IsMember({"euler", "rk4", "adaptive"}));
  sample_cmd->add_option("--steps", steps, "Steps for euler/rk4")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--rtol", rtol, "Adaptive relative tolerance")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--atol", atol, "Adaptive absolute tolerance")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--out", out, "Output .geoms.jsonl")->required();
  sample_cmd->add_option("--metrics", metrics_out, "metrics.csv to append to (default: next to --out)");

  auto* eval_cmd = app.add_subcommand("eval", "Report the transport cost of a coupling file");
  eval_cmd->add_option("--pairs", pairs_path, "Input .pairs.bin")->required();
  eval_cmd->add_option("--lambda", lambda, "Coordinate/feature trade-off")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_flag("--exact", exact, "Exhaustive oracle (n <= 8)");
  eval_cmd->add_option("--max-iters", max_iters, "OMT alternation budget")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--space", space, "Label for the report")->check(CLI::IsMember({"latent", "data"}));

  auto* selftest_cmd = app.add_subcommand("selftest", "Run built-in self-checks");
  selftest_cmd->add_option("--suite", suite, "Suite")->check(CLI::IsMember({"align", "nn", "flow", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  if (*seed_opt) common.seed = seed_value;
  set_max_threads(common.threads);

  try {
    if (*gendata) return cmd_gendata(spec, count, out, common);
    if (*train_cmd) return cmd_train(data, config, out, loss_out, metrics_out, common);
    if (*reflow_cmd)
      return cmd_reflow(ckpt, data, config, rounds, purify, pairs, out, pairs_out, table_out, metrics_out, common);
    if (*sample_cmd) return cmd_sample(ckpt, config, count, solver, steps, rtol, atol, out, metrics_out, common);
    if (*eval_cmd) return cmd_eval(pairs_path, lambda, exact, max_iters, space);
    if (*selftest_cmd) return cmd_selftest(suite, common);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
