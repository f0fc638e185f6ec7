#include "v2x/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace v2x::dynamics {

void PlatoonConfig::check() const {
  if (vehicles < 2) throw std::invalid_argument("platoon needs at least 2 vehicles");
  if (!(step_s > 0.0)) throw std::invalid_argument("sampling time must be positive");
  if (!(gap_m > 0.0)) throw std::invalid_argument("desired gap must be positive");
  if (!std::isfinite(kp) || !std::isfinite(kd)) throw std::invalid_argument("gains must be finite");
}

VehicleState advance(VehicleState s, double u, double step_s) {
  return {s.x + step_s * s.v + 0.5 * step_s * step_s * u, s.v + step_s * u};
}

ClosedLoopMode build_mode(const Eigen::MatrixXd& laplacian, const PlatoonConfig& config) {
  config.check();
  const Eigen::Index f = laplacian.rows();
  if (laplacian.cols() != f) throw std::invalid_argument("Laplacian must be square");
  const double t = config.step_s;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(f, f);
  const Eigen::MatrixXd& lap = laplacian;

  ClosedLoopMode mode;
  mode.laplacian = lap;
  mode.a.resize(2 * f, 2 * f);
  mode.a.topLeftCorner(f, f) = eye - (config.kp * t * t / 2.0) * lap;
  mode.a.topRightCorner(f, f) = t * eye - (config.kd * t * t / 2.0) * lap;
  mode.a.bottomLeftCorner(f, f) = -config.kp * t * lap;
  mode.a.bottomRightCorner(f, f) =
      (config.form == ModeForm::derived ? eye : Eigen::MatrixXd(t * eye)) - config.kd * t * lap;

  mode.b.resize(2 * f, 2 * f);
  mode.b.topLeftCorner(f, f) = (config.kp * t * t / 2.0) * lap;
  mode.b.topRightCorner(f, f) = (config.kd * t * t / 2.0) * lap;
  mode.b.bottomLeftCorner(f, f) = config.kp * t * lap;
  mode.b.bottomRightCorner(f, f) = config.kd * t * lap;
  return mode;
}

ClosedLoopModeSet build_modes(const topology::PlatoonGraphSpec& spec,
                              const std::vector<topology::TopologyState>& topologies,
                              const PlatoonConfig& config) {
  if (config.vehicles != spec.vehicle_count())
    throw std::invalid_argument("config and graph disagree on vehicle count");
  ClosedLoopModeSet set;
  set.modes.reserve(topologies.size());
  for (const auto& s : topologies) set.modes.push_back(build_mode(topology::laplacian(s, spec), config));
  return set;
}

double LeaderProfile::accel_at(double t_s) const {
  double a = 0.0;
  for (const auto& seg : segments) {
    if (seg.start_s > t_s) break;
    a = seg.accel_mps2;
  }
  return a;
}

void LeaderProfile::check() const {
  for (std::size_t k = 1; k < segments.size(); ++k)
    if (segments[k].start_s < segments[k - 1].start_s)
      throw std::invalid_argument("leader profile times must be nondecreasing");
}

LeaderProfile default_leader_profile() {
  return {20.0, {{0.0, 0.0}, {10.0, -1.0}, {15.0, 0.0}, {25.0, 1.0}, {35.0, 0.0}}};
}

SimulationTrace simulate(const PlatoonConfig& config, const ClosedLoopModeSet& modes,
                         std::span<const std::size_t> mode_path, const LeaderProfile& leader,
                         const SimulationOptions& options) {
  config.check();
  leader.check();
  const auto f = static_cast<Eigen::Index>(config.vehicles - 1);
  if (modes.modes.empty() || modes.dimension() != static_cast<std::size_t>(2 * f))
    throw std::invalid_argument("mode matrices do not match a platoon of " +
                                std::to_string(config.vehicles) + " vehicles");
  if (mode_path.size() < options.horizon)
    throw std::invalid_argument("mode path shorter than the horizon");
  if (!options.initial_offsets_m.empty() &&
      options.initial_offsets_m.size() != static_cast<std::size_t>(f))
    throw std::invalid_argument("initial offsets need one entry per follower");

  const double t = config.step_s;
  VehicleState lead{0.0, leader.initial_speed_mps};
  Eigen::VectorXd z(2 * f), r(2 * f);
  for (Eigen::Index i = 0; i < f; ++i) {
    const double offset = options.initial_offsets_m.empty() ? 0.0 : options.initial_offsets_m[i];
    z(i) = lead.x - static_cast<double>(i + 1) * config.gap_m + offset;
    z(f + i) = lead.v;
  }

  SimulationTrace trace;
  trace.steps.reserve(options.horizon);
  for (std::size_t k = 0; k < options.horizon; ++k) {
    const std::size_t m = mode_path[k];
    if (m >= modes.modes.size()) throw std::invalid_argument("mode index out of range");
    const double a0 = leader.accel_at(static_cast<double>(k) * t);
    for (Eigen::Index i = 0; i < f; ++i) {
      r(i) = lead.x - static_cast<double>(i + 1) * config.gap_m;
      r(f + i) = lead.v;
    }
    const Eigen::VectorXd next = modes.modes[m].a * z + modes.modes[m].b * r;

    TraceStep step;
    step.mode = m;
    step.x.resize(f + 1);
    step.v.resize(f + 1);
    step.a.resize(f + 1);
    step.x(0) = lead.x;
    step.v(0) = lead.v;
    step.a(0) = a0;
    step.x.tail(f) = z.head(f);
    step.v.tail(f) = z.tail(f);
    step.a.tail(f) = (next.tail(f) - z.tail(f)) / t;
    trace.steps.push_back(std::move(step));

    z = next;
    lead = advance(lead, a0, t);
  }
  return trace;
}

SimulationTrace simulate(const PlatoonConfig& config, const topology::PlatoonGraphSpec& spec,
                         std::span<const std::size_t> topology_path, const LeaderProfile& leader,
                         const SimulationOptions& options) {
  const auto modes = build_modes(spec, topology::enumerate_topologies(spec), config);
  return simulate(config, modes, topology_path, leader, options);
}

MetricsSummary metrics(const SimulationTrace& trace, const PlatoonConfig& config,
                       std::size_t first_step) {
  if (trace.steps.empty() || first_step >= trace.steps.size())
    throw std::invalid_argument("metrics need a nonempty trace window");
  MetricsSummary m;
  const std::size_t count = trace.steps.size() - first_step;
  for (std::size_t k = first_step; k < trace.steps.size(); ++k) {
    const auto& s = trace.steps[k];
    const Eigen::Index n = s.x.size();
    double spacing = 0.0;
    for (Eigen::Index i = 1; i < n; ++i) spacing += std::abs(s.x(i - 1) - s.x(i) - config.gap_m);
    m.mean_abs_spacing_error_m += n > 1 ? spacing / static_cast<double>(n - 1) : 0.0;
    m.mean_speed_diff_mps += s.v.maxCoeff() - s.v.minCoeff();
    m.mean_accel_diff_mps2 += s.a.maxCoeff() - s.a.minCoeff();
  }
  m.mean_abs_spacing_error_m /= static_cast<double>(count);
  m.mean_speed_diff_mps /= static_cast<double>(count);
  m.mean_accel_diff_mps2 /= static_cast<double>(count);
  return m;
}

}  // namespace v2x::dynamics
