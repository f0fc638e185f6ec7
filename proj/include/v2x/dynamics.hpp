#pragma once

#include "v2x/topology.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace v2x::dynamics {

/// Closed-loop matrix layout. `derived` is the consistent discretization of the
/// double integrator under u = Kp L (r_pos - x) + Kd L (r_vel - v), with a
/// velocity block I - Kd T L. `printed` keeps the literal T I - Kd T L block.
enum class ModeForm { derived, printed };

struct PlatoonConfig {
  std::size_t vehicles = 5;
  double step_s = 0.1;
  double kp = 0.5;  // 1/s^2
  double kd = 1.4;  // 1/s
  double gap_m = 25.0;
  ModeForm form = ModeForm::derived;

  void check() const;
};

struct VehicleState {
  double x = 0.0;
  double v = 0.0;
};

/// Exact hold discretization of xdd = u over one step of length T.
VehicleState advance(VehicleState s, double u, double step_s);

struct ClosedLoopMode {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd laplacian;
};

struct ClosedLoopModeSet {
  std::vector<ClosedLoopMode> modes;
  std::size_t dimension() const { return modes.empty() ? 0 : modes.front().a.rows(); }
};

/// z_{k+1} = A z_k + B r_k with z = [x; v] over followers.
ClosedLoopMode build_mode(const Eigen::MatrixXd& laplacian, const PlatoonConfig& config);

/// One mode per topology, in the order given.
ClosedLoopModeSet build_modes(const topology::PlatoonGraphSpec& spec,
                              const std::vector<topology::TopologyState>& topologies,
                              const PlatoonConfig& config);

struct LeaderSegment {
  double start_s = 0.0;
  double accel_mps2 = 0.0;
};

/// Piecewise-constant leader acceleration.
struct LeaderProfile {
  double initial_speed_mps = 20.0;
  std::vector<LeaderSegment> segments;

  double accel_at(double t_s) const;
  void check() const;
};

/// 20 m/s until 10 s, -1 m/s^2 down to 15 m/s, hold until 25 s, +1 m/s^2 up
/// to 25 m/s, then hold.
LeaderProfile default_leader_profile();

/// Positions, speeds and applied accelerations of all N vehicles (leader at
/// index 0) at the start of one step, plus the topology mode in force.
struct TraceStep {
  std::size_t mode = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd v;
  Eigen::VectorXd a;
};

struct SimulationTrace {
  std::vector<TraceStep> steps;
};

struct SimulationOptions {
  std::size_t horizon = 600;
  /// Added to each follower's reference position at k = 0 (size N-1 or empty).
  std::vector<double> initial_offsets_m;
};

/// Iterates the closed loop with r_k rebuilt from the leader each step.
/// `mode_path[k]` selects the mode used at step k; follower accelerations are
/// the realized (v_{k+1} - v_k) / T.
SimulationTrace simulate(const PlatoonConfig& config, const ClosedLoopModeSet& modes,
                         std::span<const std::size_t> mode_path, const LeaderProfile& leader,
                         const SimulationOptions& options);

SimulationTrace simulate(const PlatoonConfig& config, const topology::PlatoonGraphSpec& spec,
                         std::span<const std::size_t> topology_path, const LeaderProfile& leader,
                         const SimulationOptions& options);

struct MetricsSummary {
  double mean_abs_spacing_error_m = 0.0;
  double mean_speed_diff_mps = 0.0;
  double mean_accel_diff_mps2 = 0.0;
};

/// Averages over steps [first_step, end) of the trace.
MetricsSummary metrics(const SimulationTrace& trace, const PlatoonConfig& config,
                       std::size_t first_step = 0);

}  // namespace v2x::dynamics
