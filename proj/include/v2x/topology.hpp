#pragma once

#include "v2x/ipg.hpp"
#include "v2x/markov.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace v2x::topology {

/// Directed information link: `receiver` has access to `source`'s state.
struct Link {
  std::size_t receiver = 0;
  std::size_t source = 0;
  friend bool operator==(const Link&, const Link&) = default;
};

/// All-predecessor-leader-following platoon. Vehicle 0 leads. Each follower
/// always sees its predecessor by radar; every farther predecessor (the leader
/// included) is reachable only over an erasure-prone V2V link.
class PlatoonGraphSpec {
 public:
  explicit PlatoonGraphSpec(std::size_t vehicle_count);

  std::size_t vehicle_count() const { return vehicles_; }
  std::size_t follower_count() const { return vehicles_ - 1; }
  const std::vector<Link>& deterministic_links() const { return deterministic_; }
  /// Ordered (2,0), (3,0), (3,1), (4,0), ...; bit k of a topology mask is link k.
  const std::vector<Link>& random_links() const { return random_; }
  std::size_t random_link_count() const { return random_.size(); }
  std::size_t topology_count() const { return std::size_t{1} << random_.size(); }

 private:
  std::size_t vehicles_;
  std::vector<Link> deterministic_;
  std::vector<Link> random_;
};

/// One joint connectivity state. `access(i, j) == 1` iff receiver i has
/// information from source j (sources precede receivers, so the matrix is
/// strictly lower triangular in this receiver-row orientation).
struct TopologyState {
  std::uint64_t bitmask = 0;
  Eigen::MatrixXi access;

  /// 1-based index: 1 = every random link down, 2^m = fully connected.
  std::size_t index() const { return static_cast<std::size_t>(bitmask) + 1; }
};

TopologyState topology_state(const PlatoonGraphSpec& spec, std::uint64_t bitmask);
std::uint64_t bitmask_of(const PlatoonGraphSpec& spec, const Eigen::MatrixXi& access);

/// 2^m states in bitmask order.
std::vector<TopologyState> enumerate_topologies(const PlatoonGraphSpec& spec);

/// In-degree Laplacian over followers 1..N-1 (row/col i-1 is vehicle i).
/// The diagonal counts every source including the leader; only follower
/// sources appear off-diagonal, so leader access acts as pinning.
Eigen::MatrixXd laplacian(const TopologyState& state, const PlatoonGraphSpec& spec);

/// Label like "0b101001" (most significant link first, m digits).
std::string bitmask_label(std::uint64_t bitmask, std::size_t links);

struct TopologyChain {
  markov::TransitionMatrix tpm;
  std::vector<std::size_t> unvisited_rows;
};

/// Exact joint chain of independent 2-state link chains (down = 0, up = 1),
/// indexed by bitmask with link k on bit k.
TopologyChain connectivity_chain_product(const std::vector<markov::TransitionMatrix>& link_tpms);

/// Joint chain estimated from m independently sampled 2-state link chains.
/// Link k uses seed + k and starts from its invariant distribution.
TopologyChain connectivity_chain_monte_carlo(const std::vector<markov::TransitionMatrix>& link_tpms,
                                             std::size_t sample_steps, std::uint64_t seed,
                                             double smoothing = 0.0);

/// Joint chain estimated from m independent IPG-driven link processes; link k
/// uses `chains[k]` and seed + k.
TopologyChain connectivity_chain_monte_carlo(const std::vector<markov::TransitionMatrix>& ipg_chains,
                                             ipg::LinkTiming timing, std::size_t sample_steps,
                                             std::uint64_t seed, double smoothing = 0.0);

/// Same IPG chain on every random link of `spec`.
TopologyChain connectivity_chain_monte_carlo(const markov::TransitionMatrix& ipg_chain,
                                             const PlatoonGraphSpec& spec, ipg::LinkTiming timing,
                                             std::size_t sample_steps, std::uint64_t seed,
                                             double smoothing = 0.0);

}  // namespace v2x::topology
