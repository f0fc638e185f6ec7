// v2x-mjls: estimate IPG chains, analyze platoon MJLS stability, simulate.

#include "v2x/errors.hpp"
#include "v2x/io.hpp"
#include "v2x/ipg.hpp"
#include "v2x/markov.hpp"
#include "v2x/mjls.hpp"
#include "v2x/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace v2x;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitUnstable = 3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> gap;
  std::optional<std::size_t> horizon;
  std::optional<double> smoothing;
  std::optional<int> staleness_ms;
  std::optional<std::size_t> jobs;
  std::string chain;
  std::string out;
  bool ideal = false;
  bool require_stable = false;
};

// Config file first, then any flag given on the command line.
scenario::ScenarioConfig effective_config(const Overrides& o) {
  auto c = scenario::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.gap) {
    c.platoon.gap_m = *o.gap;
    c.simulation.gaps_m = {*o.gap};
  }
  if (o.horizon) c.simulation.horizon = *o.horizon;
  if (o.smoothing) c.communication.smoothing = *o.smoothing;
  if (o.staleness_ms) c.communication.timing.staleness_ms = *o.staleness_ms;
  if (!o.chain.empty()) {
    std::vector<scenario::ChainSource> kept;
    for (const auto& s : c.communication.chains)
      if (s.name == o.chain) kept.push_back(s);
    if (kept.empty()) throw std::invalid_argument("no chain named '" + o.chain + "' in the config");
    c.communication.chains = kept;
  }
  c.platoon.check();
  return c;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Root seed (overrides the config)");
  cmd->add_option("--gap", o.gap, "Inter-vehicle gap in metres");
  cmd->add_option("--smoothing", o.smoothing, "Additive smoothing for estimated chains");
  cmd->add_option("--staleness-ms", o.staleness_ms, "Link-up age threshold");
  cmd->add_option("--chain", o.chain, "Use only the named chain from the config");
}

void print_report(const scenario::StabilityRun& run, const scenario::ScenarioConfig& c) {
  const auto& r = run.report;
  std::printf("platoon: %zu vehicles, gap %s m, %zu topology modes, operator dimension %zu\n",
              c.platoon.vehicles, io::format_double(c.platoon.gap_m).c_str(), r.mode_count,
              r.operator_dimension);
  std::printf("rho(S) = %.12f via %s (%zu blocks) -> %s\n", r.rho_s, mjls::to_string(r.method).c_str(),
              r.blocks, r.stable ? "mean-square stable" : "NOT mean-square stable");
  if (r.rho_bernoulli) std::printf("R2(pi) = %.12f\n", *r.rho_bernoulli);
  if (r.n0) std::printf("drop period n0 = %zu\n", *r.n0);
  if (r.alpha && r.zeta) std::printf("E|z_k|^2 <= %.4g * %.6f^k\n", *r.alpha, *r.zeta);
  for (const auto& note : r.notes) std::printf("note: %s\n", note.c_str());
  if (!run.unvisited_rows.empty())
    std::printf("warning: %zu unvisited topology rows set to uniform\n", run.unvisited_rows.size());
}

int cmd_stability(const Overrides& o) {
  const auto c = effective_config(o);
  const auto chains = scenario::load_chains(c);
  const auto pipeline = scenario::build_pipeline(c, chains, c.platoon.gap_m);
  const auto run = scenario::run_stability(c, pipeline);
  print_report(run, c);
  if (!o.out.empty()) {
    json j = io::report_to_json(run.report);
    j["meta"] = c.stamp().json();
    j["gap_m"] = c.platoon.gap_m;
    j["topology_chain"] = io::tpm_to_json(pipeline.chain.tpm, pipeline.chain.unvisited_rows);
    io::write_text(o.out, io::dump(j));
  }
  if (o.require_stable && !run.report.stable) return kExitUnstable;
  return kExitOk;
}

int cmd_simulate(const Overrides& o) {
  const auto c = effective_config(o);
  const auto chains = scenario::load_chains(c);
  const auto pipeline = scenario::build_pipeline(c, chains, c.platoon.gap_m);
  const auto run = scenario::run_simulation(c, pipeline, o.ideal);
  const std::string prefix = o.out.empty() ? "simulation" : o.out;
  io::write_text(prefix + ".trace.csv", io::trace_csv(run.trace, c.stamp()));
  json m = io::metrics_to_json(run.metrics);
  m["meta"] = c.stamp().json();
  m["ideal"] = o.ideal;
  io::write_text(prefix + ".metrics.json", io::dump(m));
  std::printf("%zu steps%s: spacing error %.6f m, speed diff %.6f m/s, accel diff %.6f m/s^2\n",
              run.trace.steps.size(), o.ideal ? " (ideal links)" : "", run.metrics.mean_abs_spacing_error_m,
              run.metrics.mean_speed_diff_mps, run.metrics.mean_accel_diff_mps2);
  return kExitOk;
}

int cmd_sweep(const Overrides& o) {
  const auto c = effective_config(o);
  const auto rows = scenario::run_sweep(c, o.jobs.value_or(1));
  const auto csv = scenario::sweep_csv(rows, c.stamp());
  if (o.out.empty())
    std::cout << csv;
  else
    io::write_text(o.out, csv);
  for (const auto& r : rows)
    std::fprintf(stderr, "%-10s gap %6s m  rho(S) %.9f  dim %zu\n", r.scenario.c_str(),
                 io::format_double(r.gap_m).c_str(), r.rho_s, r.operator_dimension);
  return kExitOk;
}

int cmd_estimate(const std::vector<std::string>& logs, const std::string& out, double smoothing,
                 std::uint64_t seed) {
  std::vector<ipg::ReceptionLog> parsed;
  std::string digest;
  for (const auto& path : logs) {
    parsed.push_back(io::read_reception_log(path));
    digest += io::read_text(path);
  }
  const auto fit = ipg::fit_ipg_chain(parsed, smoothing);
  std::printf("%zu logs, %zu transitions, %zu gaps above %d ms dropped\n", parsed.size(), fit.transitions,
              fit.dropped, ipg::kMaxGapMs);
  for (auto row : fit.estimate.unvisited_rows)
    std::printf("warning: state %s ms never left; row set to uniform\n",
                fit.estimate.tpm.states()[row].c_str());
  json j = io::tpm_to_json(fit.estimate.tpm, fit.estimate.unvisited_rows);
  digest += "smoothing=" + io::format_double(smoothing);
  j["meta"] = io::Stamp{io::hex64(io::fnv1a64(digest)), seed}.json();
  j["meta"]["dropped"] = fit.dropped;
  j["meta"]["transitions"] = fit.transitions;
  if (out.empty())
    std::cout << io::dump(j);
  else
    io::write_text(out, io::dump(j));
  return kExitOk;
}

int cmd_sample_log(const std::string& tpm_path, std::size_t count, std::uint64_t seed, const std::string& out) {
  const auto tpm = io::read_tpm(tpm_path);
  ipg::check_ipg_chain(tpm);
  const auto path = markov::sample_path(tpm, count, markov::invariant_distribution(tpm), seed);
  ipg::ReceptionLog log;
  log.source_id = "tx";
  log.receiver_id = "rx";
  double t = 0.0;
  log.timestamps_ms.push_back(t);
  for (auto s : path.indices) {
    t += ipg::IpgState::from_index(s).gap_ms();
    log.timestamps_ms.push_back(t);
  }
  const std::string csv = io::reception_log_csv(log);
  if (out.empty())
    std::cout << csv;
  else
    io::write_text(out, csv);
  return kExitOk;
}

int cmd_counterexample(const std::string& tpm_path, const std::string& lap_path, double start, double stop,
                       std::size_t count, const std::string& out) {
  const auto tpm = io::read_tpm(tpm_path);
  std::vector<Eigen::MatrixXd> laplacians;
  const auto source = lap_path.empty() ? tpm_path : lap_path;
  const json j = json::parse(io::read_text(source));
  if (j.contains("laplacians")) {
    for (const auto& m : j.at("laplacians")) {
      const auto n = static_cast<Eigen::Index>(m.size());
      Eigen::MatrixXd l(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(m[r].size()) != n) throw ParseError(source, 0, "Laplacian not square");
        for (Eigen::Index k = 0; k < n; ++k) l(r, k) = m[r][k].get<double>();
      }
      laplacians.push_back(std::move(l));
    }
  } else {
    laplacians = scenario::default_counterexample_laplacians();
  }
  if (laplacians.size() != tpm.size())
    throw std::invalid_argument("chain has " + std::to_string(tpm.size()) + " states but " +
                                std::to_string(laplacians.size()) + " Laplacians were given");

  const auto grid = scenario::epsilon_grid(start, stop, count);
  const auto points = mjls::epsilon_sweep(laplacians, tpm, grid);
  const std::string digest = io::read_text(tpm_path) + io::read_text(source) + io::format_double(start) + "," +
                             io::format_double(stop) + "," + std::to_string(count);
  const auto text = io::epsilon_csv(points, {io::hex64(io::fnv1a64(digest)), 0});
  if (out.empty())
    std::cout << text;
  else
    io::write_text(out, text);
  std::size_t above = 0, below = 0;
  for (const auto& p : points) {
    above += p.rho_markov > p.rho_bernoulli;
    below += p.rho_markov < p.rho_bernoulli;
  }
  std::fprintf(stderr, "%zu grid points: Markov radius above Bernoulli at %zu, below at %zu\n", points.size(),
               above, below);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov jump linear system analysis of C-V2X platoons"};
  app.require_subcommand(1);

  Overrides stab, sim, sweep;
  auto* stability = app.add_subcommand("stability", "Spectral stability report for one scenario");
  add_common(stability, stab);
  stability->add_option("--out", stab.out, "Report JSON path");
  stability->add_flag("--require-stable", stab.require_stable, "Exit with 3 when rho(S) >= 1");

  auto* simulate = app.add_subcommand("simulate", "Simulate one platoon run");
  add_common(simulate, sim);
  simulate->add_option("--horizon", sim.horizon, "Steps to simulate");
  simulate->add_option("--out", sim.out, "Output prefix for .trace.csv and .metrics.json");
  simulate->add_flag("--ideal", sim.ideal, "Keep every link up");

  auto* sweep_cmd = app.add_subcommand("sweep", "rho(S) and metrics over gaps and chains");
  add_common(sweep_cmd, sweep);
  sweep_cmd->add_option("--horizon", sweep.horizon, "Steps per simulation run");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep.out, "CSV path (stdout when omitted)");

  std::vector<std::string> logs;
  std::string est_out;
  double est_smoothing = 0.0;
  std::uint64_t est_seed = 0;
  auto* estimate = app.add_subcommand("estimate", "Fit a 10-state IPG chain to reception logs");
  estimate->add_option("logs", logs, "Reception log CSV files")->required()->check(CLI::ExistingFile);
  estimate->add_option("--out", est_out, "TPM JSON path (stdout when omitted)");
  estimate->add_option("--smoothing", est_smoothing, "Additive smoothing per cell")->check(CLI::NonNegativeNumber);
  estimate->add_option("--seed", est_seed, "Recorded in the output metadata");

  std::string sl_tpm, sl_out;
  std::size_t sl_count = 1000;
  std::uint64_t sl_seed = 0;
  auto* sample_log = app.add_subcommand("sample-log", "Synthetic reception log from an IPG chain");
  sample_log->add_option("--tpm", sl_tpm, "IPG TPM JSON")->required()->check(CLI::ExistingFile);
  sample_log->add_option("--count", sl_count, "Number of gaps")->check(CLI::PositiveNumber);
  sample_log->add_option("--seed", sl_seed, "Sampling seed")->required();
  sample_log->add_option("--out", sl_out, "CSV path (stdout when omitted)");

  std::string ce_tpm, ce_lap, ce_out;
  double ce_start = 0.05, ce_stop = 1.2;
  std::size_t ce_count = 24;
  auto* counter = app.add_subcommand("counterexample", "First-order consensus epsilon sweep");
  counter->add_option("--tpm", ce_tpm, "Mode chain (TPM JSON)")->required()->check(CLI::ExistingFile);
  counter->add_option("--laplacians", ce_lap, "JSON with a \"laplacians\" array")->check(CLI::ExistingFile);
  counter->add_option("--eps-start", ce_start, "First epsilon");
  counter->add_option("--eps-stop", ce_stop, "Last epsilon");
  counter->add_option("--eps-count", ce_count, "Grid points")->check(CLI::PositiveNumber);
  counter->add_option("--out", ce_out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*stability) return cmd_stability(stab);
    if (*simulate) return cmd_simulate(sim);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*estimate) return cmd_estimate(logs, est_out, est_smoothing, est_seed);
    if (*sample_log) return cmd_sample_log(sl_tpm, sl_count, sl_seed, sl_out);
    if (*counter) return cmd_counterexample(ce_tpm, ce_lap, ce_start, ce_stop, ce_count, ce_out);
  } catch (const NonConvergenceError& e) {
    std::fprintf(stderr, "error: %s (estimate %.6g, residual %.3g)\n", e.what(), e.estimate(), e.residual());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
