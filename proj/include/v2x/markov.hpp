#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace v2x::markov {

inline constexpr double kEntrySlack = 1e-12;
inline constexpr double kRowSumTolerance = 1e-9;

struct Violation {
  std::size_t row = 0;
  std::optional<std::size_t> col;  // empty for row-level problems
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the row-stochastic invariants on a raw matrix: square, one label per
/// row, entries in [0, 1] (with kEntrySlack), rows summing to 1 within
/// kRowSumTolerance.
ValidationResult validate(const Eigen::MatrixXd& probs, std::size_t label_count);

/// Row-stochastic matrix over labeled states. Immutable; the constructor
/// rejects anything `validate` would flag.
class TransitionMatrix {
 public:
  TransitionMatrix(std::vector<std::string> states, Eigen::MatrixXd probs);

  /// Labels "0", "1", ... for chains whose states carry no names.
  static TransitionMatrix indexed(Eigen::MatrixXd probs);

  std::size_t size() const { return states_.size(); }
  const std::vector<std::string>& states() const { return states_; }
  const Eigen::MatrixXd& probs() const { return probs_; }
  double operator()(std::size_t from, std::size_t to) const { return probs_(from, to); }

 private:
  std::vector<std::string> states_;
  Eigen::MatrixXd probs_;
};

ValidationResult validate(const TransitionMatrix& tpm);

struct StationaryDistribution {
  Eigen::VectorXd pmf;
};

/// True when the positive-entry support graph is strongly connected.
bool is_irreducible(const TransitionMatrix& tpm);

/// Unique invariant pmf of an irreducible chain, from (P^T - I) pi = 0 with the
/// normalization row appended. Periodic chains are accepted.
/// Throws ReducibleChainError naming the unreachable states.
StationaryDistribution stationary_distribution(const TransitionMatrix& tpm);

/// Like stationary_distribution, but also accepts chains with a single closed
/// communicating class; transient states get zero mass. Throws
/// ReducibleChainError when several closed classes exist.
StationaryDistribution invariant_distribution(const TransitionMatrix& tpm);

/// P^n by repeated squaring. n >= 1.
TransitionMatrix n_step(const TransitionMatrix& tpm, std::size_t n);

struct StatePath {
  std::vector<std::size_t> indices;
  std::uint64_t seed = 0;
};

using InitialState = std::variant<std::size_t, StationaryDistribution>;

/// Step-by-step sampler for one chain; owns its engine.
class ChainSampler {
 public:
  ChainSampler(const TransitionMatrix& tpm, std::uint64_t seed);

  std::size_t draw(const Eigen::VectorXd& pmf);
  std::size_t draw(const InitialState& init);
  std::size_t next(std::size_t from) { return rows_[from](engine_); }

 private:
  std::size_t states_;
  std::mt19937_64 engine_;
  std::vector<std::discrete_distribution<std::size_t>> rows_;
};

/// Draws a path of `length` states. The first element is the initial state
/// (given index, or a draw from the supplied pmf). Deterministic per seed.
StatePath sample_path(const TransitionMatrix& tpm, std::size_t length, const InitialState& init,
                      std::uint64_t seed);

struct TpmEstimate {
  TransitionMatrix tpm;
  Eigen::MatrixXd counts;
  /// Rows with no observed departures and zero smoothing; set to uniform.
  std::vector<std::size_t> unvisited_rows;
};

/// Adds one-step transition counts of `sequence` into `counts`.
void accumulate_transitions(std::span<const std::size_t> sequence, Eigen::MatrixXd& counts);

/// (count(i->j) + smoothing) / (count(i->.) + smoothing * N); unvisited rows
/// become uniform and are listed in `unvisited_rows`.
TpmEstimate tpm_from_counts(const Eigen::MatrixXd& counts, double smoothing,
                            std::vector<std::string> labels = {});

TpmEstimate estimate_tpm(std::span<const std::size_t> sequence, std::size_t state_count,
                         double smoothing = 0.0, std::vector<std::string> labels = {});

}  // namespace v2x::markov
