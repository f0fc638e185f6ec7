#pragma once

#include "v2x/markov.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace v2x::mjls {

/// Homogeneous Markov jump linear system z_{k+1} = A_{theta_k} z_k with the
/// mode process theta driven by `chain`.
class MjlsModel {
 public:
  MjlsModel(std::vector<Eigen::MatrixXd> modes, markov::TransitionMatrix chain);

  const std::vector<Eigen::MatrixXd>& modes() const { return modes_; }
  const markov::TransitionMatrix& chain() const { return chain_; }
  std::size_t mode_count() const { return modes_.size(); }
  std::size_t state_dimension() const { return static_cast<std::size_t>(modes_.front().rows()); }

 private:
  std::vector<Eigen::MatrixXd> modes_;
  markov::TransitionMatrix chain_;
};

inline constexpr std::size_t kDefaultDenseCap = 8192;
/// Largest N * n^2 the implicit operator will accept.
inline constexpr std::size_t kImplicitCap = std::size_t{1} << 26;

/// Second-moment operator S = (P^T (x) I) blkdiag(A_1 (x) A_1, ..., A_N (x) A_N)
/// acting on stacked vec(X_i). Dense when N * n^2 <= dense_cap, otherwise only
/// blockwise products are available.
class StabilityOperator {
 public:
  StabilityOperator(MjlsModel model, std::size_t dense_cap = kDefaultDenseCap);

  const MjlsModel& model() const { return model_; }
  std::size_t dimension() const { return dimension_; }
  bool is_dense() const { return dimension_ <= dense_cap_; }

  /// Materialized S. Throws std::length_error above the dense cap.
  Eigen::MatrixXd matrix() const;

  /// out_j = sum_i p_ij vec(A_i X_i A_i^T), never forming S.
  void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;

  /// Diagonal blocks of an exact block-triangular form of S. The blocks come
  /// from strongly connected components of the union sparsity pattern of the
  /// modes, taken in pairs; pairs (a, b) and (b, a) are similar so only a <= b
  /// is kept. A single block equal to S when the pattern is irreducible.
  std::vector<Eigen::MatrixXd> diagonal_blocks() const;

 private:
  MjlsModel model_;
  std::size_t dense_cap_;
  std::size_t dimension_;
};

StabilityOperator build_operator(const MjlsModel& model, std::size_t dense_cap = kDefaultDenseCap);

enum class Method { automatic, dense, power };

struct SpectralOptions {
  Method method = Method::automatic;
  double tolerance = 1e-11;
  std::size_t max_iter = 200000;
  /// Split S into its diagonal blocks before the dense eigensolve.
  bool reduce = true;
};

struct SpectralResult {
  double value = 0.0;
  Method method = Method::dense;
  std::size_t iterations = 0;
  double residual = 0.0;
  std::size_t blocks = 1;
};

/// Largest eigenvalue magnitude of a square matrix (general eigensolver).
double spectral_radius(const Eigen::MatrixXd& m);

using LinearMap = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Power iteration for the dominant eigenvalue magnitude. Tracks the one-step
/// Rayleigh quotient and a two-step recurrence fit x_{k+2} ~ c1 x_{k+1} + c0 x_k
/// so that +-rho and complex dominant pairs still converge. `restart`, when
/// set, is applied to the iterate every `restart_interval` iterations.
/// Throws NonConvergenceError.
SpectralResult power_spectral_radius(const LinearMap& apply, Eigen::VectorXd start,
                                     double tolerance, std::size_t max_iter,
                                     const std::function<void(Eigen::VectorXd&)>& restart = {},
                                     std::size_t restart_interval = 500);

/// rho(S). `automatic` picks dense below the cap and power otherwise.
SpectralResult spectral_radius(const StabilityOperator& op, const SpectralOptions& options = {});

/// R2(pi) = rho(sum_i pi_i A_i (x) A_i), pi the stationary pmf of the chain.
/// Throws ReducibleChainError.
double bernoulli_radius(const MjlsModel& model, const SpectralOptions& options = {});

/// The same model with the chain replaced by P^n0: the process observed at
/// multiples of n0.
MjlsModel dropped_message_variant(const MjlsModel& model, std::size_t n0);

struct DropPeriodResult {
  std::optional<std::size_t> n0;
  double radius_at_n0 = 0.0;
  /// rho for n0 + 1 also below one.
  bool next_also_stable = false;
  /// rho((P^n)^T (x) I) D) for n = 1, 2, ... as evaluated.
  std::vector<double> radii;
};

/// Smallest n <= max_n with rho(S(P^n)) < 1. Stops early once P^n has
/// converged to the stationary projector without reaching stability.
DropPeriodResult find_drop_period(const MjlsModel& model, std::size_t max_n,
                                  const SpectralOptions& options = {});

enum class Verdict { consistent, inconsistent, inconclusive };
std::string to_string(Verdict v);

struct EmpiricalOptions {
  std::size_t trajectories = 1000;
  std::size_t horizon = 200;
  std::uint64_t seed = 1;
  /// Fit log E|z_k|^2 over k in [fit_begin * horizon, horizon].
  double fit_begin = 0.25;
};

struct EmpiricalReport {
  /// Monte Carlo E|z_k|^2, k = 0..horizon, with E|z_0|^2 = 1.
  std::vector<double> mean_square;
  double fitted_rate = 0.0;
  double rho_s = 0.0;
  bool diverged = false;
  Verdict verdict = Verdict::inconclusive;
  /// Decay-bound parameters when rho_s + 1e-3 < 1: zeta = rho_s + 1e-3 and
  /// alpha = max_k E|z_k|^2 / zeta^k (at least 1).
  std::optional<double> alpha;
  std::optional<double> zeta;
};

inline constexpr double kRateTolerance = 0.05;
inline constexpr double kDivergenceThreshold = 1.05;
inline constexpr double kZetaMargin = 1e-3;

/// Particle estimate of E|z_k|^2: `trajectories` mode paths start from the
/// invariant pmf with an isotropic unit z_0 and are resampled by weight when
/// they degenerate. One random stream per call, seeded by `seed`.
EmpiricalReport empirical_ms_check(const MjlsModel& model, const EmpiricalOptions& options,
                                   const SpectralOptions& spectral = {});

struct EpsilonPoint {
  double epsilon = 0.0;
  double rho_markov = 0.0;
  double rho_bernoulli = 0.0;
};

/// First-order consensus modes (I - 11'/n)(I - eps L_k).
std::vector<Eigen::MatrixXd> first_order_modes(const std::vector<Eigen::MatrixXd>& laplacians,
                                               double epsilon);

std::vector<EpsilonPoint> epsilon_sweep(const std::vector<Eigen::MatrixXd>& laplacians,
                                        const markov::TransitionMatrix& tpm,
                                        const std::vector<double>& epsilons,
                                        const SpectralOptions& options = {});

struct StabilityReport {
  double rho_s = 0.0;
  bool stable = false;
  std::optional<double> rho_bernoulli;
  std::optional<std::size_t> n0;
  std::optional<double> alpha;
  std::optional<double> zeta;
  Method method = Method::dense;
  double tolerance = 0.0;
  std::size_t operator_dimension = 0;
  std::size_t mode_count = 0;
  std::size_t blocks = 1;
  std::vector<std::string> notes;
};

struct AnalysisOptions {
  SpectralOptions spectral;
  std::size_t dense_cap = kDefaultDenseCap;
  std::size_t max_drop_period = 100;
  bool run_empirical = true;
  EmpiricalOptions empirical;
};

StabilityReport analyze(const MjlsModel& model, const AnalysisOptions& options = {});

std::string to_string(Method m);

}  // namespace v2x::mjls
