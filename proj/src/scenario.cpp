#include "v2x/scenario.hpp"

#include "v2x/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace v2x::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument("section '" + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument("unknown key '" + section + "." + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

mjls::Method parse_method(const std::string& s) {
  if (s == "auto") return mjls::Method::automatic;
  if (s == "dense") return mjls::Method::dense;
  if (s == "power") return mjls::Method::power;
  throw std::invalid_argument("analysis.method must be auto, dense or power");
}

}  // namespace

json ScenarioConfig::to_json() const {
  json segments = json::array();
  for (const auto& s : leader.segments) segments.push_back({{"start_s", s.start_s}, {"accel_mps2", s.accel_mps2}});
  json chains = json::array();
  for (const auto& c : communication.chains) chains.push_back({{"name", c.name}, {"path", c.path}});
  json j{
      {"platoon",
       {{"vehicles", platoon.vehicles},
        {"step_s", platoon.step_s},
        {"kp", platoon.kp},
        {"kd", platoon.kd},
        {"gap_m", platoon.gap_m},
        {"mode_form", platoon.form == dynamics::ModeForm::derived ? "derived" : "printed"},
        {"initial_offsets_m", initial_offsets_m}}},
      {"leader", {{"initial_speed_mps", leader.initial_speed_mps}, {"segments", segments}}},
      {"communication",
       {{"chains", chains},
        {"step_ms", communication.timing.step_ms},
        {"staleness_ms", communication.timing.staleness_ms},
        {"link_sample_steps", communication.link_sample_steps},
        {"connectivity", communication.connectivity == Connectivity::product ? "product" : "monte-carlo"},
        {"smoothing", communication.smoothing},
        {"mode", communication.mode},
        {"density", communication.density}}},
      {"analysis",
       {{"method", mjls::to_string(analysis.method)},
        {"tolerance", analysis.tolerance},
        {"max_iter", analysis.max_iter},
        {"dense_cap", analysis.dense_cap},
        {"reduce", analysis.reduce},
        {"max_drop_period", analysis.max_drop_period},
        {"empirical", analysis.empirical},
        {"mc_trajectories", analysis.mc_trajectories},
        {"mc_horizon", analysis.mc_horizon}}},
      {"simulation", {{"horizon", simulation.horizon}, {"runs", simulation.runs}, {"gaps_m", simulation.gaps_m}}},
  };
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

std::string ScenarioConfig::hash() const { return io::hex64(io::fnv1a64(to_json().dump())); }

std::uint64_t ScenarioConfig::require_seed() const {
  if (!seed) throw std::invalid_argument("a seed is required (set \"seed\" in the config or pass --seed)");
  return *seed;
}

fs::path ScenarioConfig::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

ScenarioConfig from_json(const json& j, fs::path base_dir) {
  reject_unknown(j, "config", {"platoon", "leader", "communication", "analysis", "simulation", "seed"});
  ScenarioConfig c;
  c.base_dir = std::move(base_dir);

  if (j.contains("platoon")) {
    const auto& p = j.at("platoon");
    reject_unknown(p, "platoon", {"vehicles", "step_s", "kp", "kd", "gap_m", "mode_form", "initial_offsets_m"});
    read(p, "vehicles", c.platoon.vehicles);
    read(p, "step_s", c.platoon.step_s);
    read(p, "kp", c.platoon.kp);
    read(p, "kd", c.platoon.kd);
    read(p, "gap_m", c.platoon.gap_m);
    read(p, "initial_offsets_m", c.initial_offsets_m);
    if (p.contains("mode_form")) {
      const auto f = p.at("mode_form").get<std::string>();
      if (f == "derived")
        c.platoon.form = dynamics::ModeForm::derived;
      else if (f == "printed")
        c.platoon.form = dynamics::ModeForm::printed;
      else
        throw std::invalid_argument("platoon.mode_form must be derived or printed");
    }
  }
  if (j.contains("leader")) {
    const auto& l = j.at("leader");
    reject_unknown(l, "leader", {"initial_speed_mps", "segments"});
    read(l, "initial_speed_mps", c.leader.initial_speed_mps);
    if (l.contains("segments")) {
      c.leader.segments.clear();
      for (const auto& s : l.at("segments"))
        c.leader.segments.push_back({s.at("start_s").get<double>(), s.at("accel_mps2").get<double>()});
    }
  }
  if (j.contains("communication")) {
    const auto& m = j.at("communication");
    reject_unknown(m, "communication",
                   {"chains", "ipg_tpm", "step_ms", "staleness_ms", "link_sample_steps", "connectivity",
                    "smoothing", "mode", "density"});
    if (m.contains("ipg_tpm")) {
      const auto path = m.at("ipg_tpm").get<std::string>();
      c.communication.chains.push_back({fs::path(path).stem().string(), path});
    }
    if (m.contains("chains"))
      for (const auto& e : m.at("chains"))
        c.communication.chains.push_back({e.at("name").get<std::string>(), e.at("path").get<std::string>()});
    read(m, "step_ms", c.communication.timing.step_ms);
    read(m, "staleness_ms", c.communication.timing.staleness_ms);
    read(m, "link_sample_steps", c.communication.link_sample_steps);
    read(m, "smoothing", c.communication.smoothing);
    read(m, "mode", c.communication.mode);
    read(m, "density", c.communication.density);
    if (c.communication.mode != "base" && c.communication.mode != "cc")
      throw std::invalid_argument("communication.mode must be base or cc");
    if (m.contains("connectivity")) {
      const auto s = m.at("connectivity").get<std::string>();
      if (s == "product")
        c.communication.connectivity = Connectivity::product;
      else if (s == "monte-carlo")
        c.communication.connectivity = Connectivity::monte_carlo;
      else
        throw std::invalid_argument("communication.connectivity must be product or monte-carlo");
    }
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    reject_unknown(a, "analysis",
                   {"method", "tolerance", "max_iter", "dense_cap", "reduce", "max_drop_period", "empirical",
                    "mc_trajectories", "mc_horizon"});
    if (a.contains("method")) c.analysis.method = parse_method(a.at("method").get<std::string>());
    read(a, "tolerance", c.analysis.tolerance);
    read(a, "max_iter", c.analysis.max_iter);
    read(a, "dense_cap", c.analysis.dense_cap);
    read(a, "reduce", c.analysis.reduce);
    read(a, "max_drop_period", c.analysis.max_drop_period);
    read(a, "empirical", c.analysis.empirical);
    read(a, "mc_trajectories", c.analysis.mc_trajectories);
    read(a, "mc_horizon", c.analysis.mc_horizon);
  }
  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    reject_unknown(s, "simulation", {"horizon", "runs", "gaps_m"});
    read(s, "horizon", c.simulation.horizon);
    read(s, "runs", c.simulation.runs);
    read(s, "gaps_m", c.simulation.gaps_m);
  }
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();

  c.platoon.check();
  c.leader.check();
  if (c.simulation.runs == 0) throw std::invalid_argument("simulation.runs must be positive");
  return c;
}

ScenarioConfig load(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

ipg::IpgChainSet load_chains(const ScenarioConfig& config, std::size_t which) {
  if (which >= config.communication.chains.size())
    throw std::invalid_argument("config names no IPG chain (communication.ipg_tpm or communication.chains)");
  return io::read_chain_set(config.resolve(config.communication.chains[which].path));
}

mjls::MjlsModel Pipeline::model() const {
  std::vector<Eigen::MatrixXd> a;
  a.reserve(modes.modes.size());
  for (const auto& m : modes.modes) a.push_back(m.a);
  return mjls::MjlsModel(std::move(a), chain.tpm);
}

Pipeline build_pipeline(const ScenarioConfig& config, const ipg::IpgChainSet& chains, double gap_m) {
  const std::uint64_t seed = config.require_seed();
  dynamics::PlatoonConfig platoon = config.platoon;
  platoon.gap_m = gap_m;
  topology::PlatoonGraphSpec spec(platoon.vehicles);

  std::vector<markov::TransitionMatrix> ipg_chains;
  std::vector<markov::TransitionMatrix> link_tpms;
  for (std::size_t k = 0; k < spec.random_link_count(); ++k) {
    const auto& l = spec.random_links()[k];
    const auto& chain = chains.at(static_cast<double>(l.receiver - l.source) * gap_m);
    ipg_chains.push_back(chain);
    link_tpms.push_back(ipg::link_tpm(chain, config.communication.timing, config.communication.link_sample_steps,
                                      seed + k)
                            .tpm);
  }
  auto chain = config.communication.connectivity == Connectivity::product
                   ? topology::connectivity_chain_product(link_tpms)
                   : topology::connectivity_chain_monte_carlo(ipg_chains, config.communication.timing,
                                                              config.communication.link_sample_steps, seed,
                                                              config.communication.smoothing);
  auto modes = dynamics::build_modes(spec, topology::enumerate_topologies(spec), platoon);
  return {std::move(spec), std::move(link_tpms), std::move(chain), std::move(modes)};
}

mjls::AnalysisOptions analysis_options(const ScenarioConfig& config) {
  mjls::AnalysisOptions o;
  o.spectral.method = config.analysis.method;
  o.spectral.tolerance = config.analysis.tolerance;
  o.spectral.max_iter = config.analysis.max_iter;
  o.spectral.reduce = config.analysis.reduce;
  o.dense_cap = config.analysis.dense_cap;
  o.max_drop_period = config.analysis.max_drop_period;
  o.run_empirical = config.analysis.empirical;
  o.empirical.trajectories = config.analysis.mc_trajectories;
  o.empirical.horizon = config.analysis.mc_horizon;
  o.empirical.seed = config.require_seed();
  return o;
}

StabilityRun run_stability(const ScenarioConfig& config, const Pipeline& pipeline) {
  StabilityRun run;
  run.report = mjls::analyze(pipeline.model(), analysis_options(config));
  run.topology_count = pipeline.spec.topology_count();
  run.unvisited_rows = pipeline.chain.unvisited_rows;
  return run;
}

SimulationRun run_simulation(const ScenarioConfig& config, const Pipeline& pipeline, bool ideal,
                             std::size_t run) {
  const std::size_t horizon = config.simulation.horizon;
  std::vector<std::size_t> path;
  if (ideal) {
    path.assign(horizon, pipeline.spec.topology_count() - 1);
  } else {
    const auto init = markov::invariant_distribution(pipeline.chain.tpm);
    const std::uint64_t seed = config.require_seed() + pipeline.spec.random_link_count() + run;
    path = markov::sample_path(pipeline.chain.tpm, horizon, init, seed).indices;
  }
  dynamics::PlatoonConfig platoon = config.platoon;
  dynamics::SimulationOptions options{horizon, config.initial_offsets_m};
  SimulationRun out;
  out.trace = dynamics::simulate(platoon, pipeline.modes, path, config.leader, options);
  out.metrics = dynamics::metrics(out.trace, platoon);
  return out;
}

std::vector<SweepRow> run_sweep(const ScenarioConfig& config, std::size_t jobs) {
  config.require_seed();
  const auto& sources = config.communication.chains;
  if (sources.empty()) throw std::invalid_argument("sweep needs at least one chain");
  std::vector<ipg::IpgChainSet> sets;
  for (std::size_t s = 0; s < sources.size(); ++s) sets.push_back(load_chains(config, s));

  const std::size_t gaps = config.simulation.gaps_m.size();
  std::vector<SweepRow> rows(sources.size() * gaps);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;

  const auto worker = [&] {
    for (std::size_t cell = next++; cell < rows.size(); cell = next++) {
      try {
        const std::size_t s = cell / gaps;
        const double gap = config.simulation.gaps_m[cell % gaps];
        ScenarioConfig cell_config = config;
        cell_config.platoon.gap_m = gap;
        const auto pipeline = build_pipeline(cell_config, sets[s], gap);
        const auto op = mjls::build_operator(pipeline.model(), config.analysis.dense_cap);
        mjls::SpectralOptions so;
        so.method = config.analysis.method;
        so.tolerance = config.analysis.tolerance;
        so.max_iter = config.analysis.max_iter;
        so.reduce = config.analysis.reduce;
        const auto sr = mjls::spectral_radius(op, so);

        SweepRow row{gap, sources[s].name, sr.value, sr.value < 1.0, op.dimension(), {}};
        for (std::size_t r = 0; r < config.simulation.runs; ++r) {
          const auto m = run_simulation(cell_config, pipeline, false, r).metrics;
          row.metrics.mean_abs_spacing_error_m += m.mean_abs_spacing_error_m;
          row.metrics.mean_speed_diff_mps += m.mean_speed_diff_mps;
          row.metrics.mean_accel_diff_mps2 += m.mean_accel_diff_mps2;
        }
        const auto runs = static_cast<double>(config.simulation.runs);
        row.metrics.mean_abs_spacing_error_m /= runs;
        row.metrics.mean_speed_diff_mps /= runs;
        row.metrics.mean_accel_diff_mps2 /= runs;
        rows[cell] = std::move(row);
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
        next = rows.size();
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(rows.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const io::Stamp& stamp) {
  std::string s = stamp.csv_comment() +
                  "gap_m,scenario,rho_S,stable,operator_dimension,mean_abs_spacing_error_m,"
                  "mean_speed_diff_mps,mean_accel_diff_mps2\n";
  for (const auto& r : rows)
    s += io::format_double(r.gap_m) + "," + r.scenario + "," + io::format_double(r.rho_s) + "," +
         (r.stable ? "true" : "false") + "," + std::to_string(r.operator_dimension) + "," +
         io::format_double(r.metrics.mean_abs_spacing_error_m) + "," +
         io::format_double(r.metrics.mean_speed_diff_mps) + "," +
         io::format_double(r.metrics.mean_accel_diff_mps2) + "\n";
  return s;
}

std::vector<Eigen::MatrixXd> default_counterexample_laplacians() {
  // Out-degree form L = D - A of two directed graphs on three nodes.
  Eigen::MatrixXd l1(3, 3), l2(3, 3);
  l1 << 1, 0, -1,
       -1, 2, -1,
        0, -1, 1;
  l2 << 2, -1, -1,
        0, 0, 0,
        0, 0, 0;
  return {l1, l2};
}

std::vector<double> epsilon_grid(double start, double stop, std::size_t count) {
  if (count == 0) throw std::invalid_argument("epsilon grid needs at least one point");
  if (count == 1) return {start};
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k)
    grid[k] = start + (stop - start) * static_cast<double>(k) / static_cast<double>(count - 1);
  // Snap away accumulated rounding so the CSV shows 0.4, not 0.39999999999999997.
  for (auto& e : grid) e = std::round(e * 1e12) / 1e12;
  return grid;
}

}  // namespace v2x::scenario
