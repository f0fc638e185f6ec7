#pragma once

#include "v2x/dynamics.hpp"
#include "v2x/io.hpp"
#include "v2x/ipg.hpp"
#include "v2x/mjls.hpp"
#include "v2x/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace v2x::scenario {

/// One named set of IPG chains, e.g. "good-link".
struct ChainSource {
  std::string name;
  std::string path;  // relative to the config directory unless absolute
};

enum class Connectivity { product, monte_carlo };

struct CommunicationConfig {
  std::vector<ChainSource> chains;  // first entry drives stability/simulate
  ipg::LinkTiming timing;
  std::size_t link_sample_steps = 200000;
  Connectivity connectivity = Connectivity::product;
  double smoothing = 0.0;
  std::string mode = "base";
  std::string density;
};

struct AnalysisConfig {
  mjls::Method method = mjls::Method::automatic;
  double tolerance = 1e-11;
  std::size_t max_iter = 200000;
  std::size_t dense_cap = mjls::kDefaultDenseCap;
  bool reduce = true;
  std::size_t max_drop_period = 100;
  bool empirical = true;
  std::size_t mc_trajectories = 1000;
  std::size_t mc_horizon = 200;
};

struct SimulationConfig {
  std::size_t horizon = 600;
  std::size_t runs = 5;
  std::vector<double> gaps_m{25, 50, 75, 100, 125, 150, 175};
};

/// Everything one experiment needs. Fields left out of the JSON keep the
/// defaults above; command-line flags are applied on top of the file.
struct ScenarioConfig {
  dynamics::PlatoonConfig platoon;
  std::vector<double> initial_offsets_m;
  dynamics::LeaderProfile leader = dynamics::default_leader_profile();
  CommunicationConfig communication;
  AnalysisConfig analysis;
  SimulationConfig simulation;
  std::optional<std::uint64_t> seed;
  std::filesystem::path base_dir;

  /// Canonical form: every field, sorted keys. The config hash is taken over it.
  nlohmann::json to_json() const;
  std::string hash() const;
  /// Throws std::invalid_argument when a stochastic command has no seed.
  std::uint64_t require_seed() const;
  io::Stamp stamp() const { return {hash(), require_seed()}; }

  std::filesystem::path resolve(const std::string& path) const;
};

ScenarioConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir);
/// Missing file or malformed JSON -> ParseError; bad values -> invalid_argument.
ScenarioConfig load(const std::filesystem::path& path);

/// Link chains, topology chain and closed-loop modes for one gap and chain set.
struct Pipeline {
  topology::PlatoonGraphSpec spec;
  std::vector<markov::TransitionMatrix> link_tpms;
  topology::TopologyChain chain;
  dynamics::ClosedLoopModeSet modes;

  mjls::MjlsModel model() const;
};

/// Random link k (receiver i, source j) spans (i - j) * gap metres and uses the
/// chain nearest that distance; its 2-state chain is estimated with seed + k.
Pipeline build_pipeline(const ScenarioConfig& config, const ipg::IpgChainSet& chains, double gap_m);

ipg::IpgChainSet load_chains(const ScenarioConfig& config, std::size_t which = 0);

mjls::AnalysisOptions analysis_options(const ScenarioConfig& config);

struct StabilityRun {
  mjls::StabilityReport report;
  std::size_t topology_count = 0;
  std::vector<std::size_t> unvisited_rows;
};

StabilityRun run_stability(const ScenarioConfig& config, const Pipeline& pipeline);

struct SimulationRun {
  dynamics::SimulationTrace trace;
  dynamics::MetricsSummary metrics;
};

/// Topology path for run r is sampled with seed + m + r (m random links),
/// starting from the invariant pmf of the topology chain. `ideal` holds the
/// fully connected topology throughout.
SimulationRun run_simulation(const ScenarioConfig& config, const Pipeline& pipeline, bool ideal,
                             std::size_t run = 0);

struct SweepRow {
  double gap_m = 0.0;
  std::string scenario;
  double rho_s = 0.0;
  bool stable = false;
  std::size_t operator_dimension = 0;
  dynamics::MetricsSummary metrics;  // averaged over simulation.runs
};

/// Rows ordered by chain (config order) then gap, whatever `jobs` is.
std::vector<SweepRow> run_sweep(const ScenarioConfig& config, std::size_t jobs);
std::string sweep_csv(const std::vector<SweepRow>& rows, const io::Stamp& stamp);

/// Two directed 3-node Laplacians whose Markov and Bernoulli radii cross.
std::vector<Eigen::MatrixXd> default_counterexample_laplacians();
std::vector<double> epsilon_grid(double start, double stop, std::size_t count);

}  // namespace v2x::scenario
