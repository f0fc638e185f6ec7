#include "v2x/topology.hpp"

#include <stdexcept>

namespace v2x::topology {

namespace {

constexpr std::size_t kMaxRandomLinks = 24;

std::vector<std::string> topology_labels(std::size_t links) {
  std::vector<std::string> labels;
  const std::size_t count = std::size_t{1} << links;
  labels.reserve(count);
  for (std::size_t s = 0; s < count; ++s) labels.push_back(bitmask_label(s, links));
  return labels;
}

TopologyChain joint_from_sequences(const std::vector<std::vector<std::size_t>>& per_link,
                                   std::size_t steps, double smoothing) {
  const std::size_t m = per_link.size();
  std::vector<std::size_t> joint(steps, 0);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t t = 0; t < steps; ++t) joint[t] |= per_link[k][t] << k;
  auto est = markov::estimate_tpm(joint, std::size_t{1} << m, smoothing, topology_labels(m));
  return {std::move(est.tpm), std::move(est.unvisited_rows)};
}

}  // namespace

PlatoonGraphSpec::PlatoonGraphSpec(std::size_t vehicle_count) : vehicles_(vehicle_count) {
  if (vehicle_count < 2) throw std::invalid_argument("platoon needs at least 2 vehicles");
  for (std::size_t i = 1; i < vehicle_count; ++i) deterministic_.push_back({i, i - 1});
  for (std::size_t i = 2; i < vehicle_count; ++i)
    for (std::size_t j = 0; j + 2 <= i; ++j) random_.push_back({i, j});
  if (random_.size() > kMaxRandomLinks)
    throw std::invalid_argument("platoon of " + std::to_string(vehicle_count) +
                                " vehicles has too many random links to enumerate");
}

TopologyState topology_state(const PlatoonGraphSpec& spec, std::uint64_t bitmask) {
  if (bitmask >= spec.topology_count())
    throw std::invalid_argument("topology bitmask out of range");
  const auto n = static_cast<Eigen::Index>(spec.vehicle_count());
  TopologyState state{bitmask, Eigen::MatrixXi::Zero(n, n)};
  for (const auto& l : spec.deterministic_links()) state.access(l.receiver, l.source) = 1;
  for (std::size_t k = 0; k < spec.random_links().size(); ++k)
    if ((bitmask >> k) & 1U) {
      const auto& l = spec.random_links()[k];
      state.access(l.receiver, l.source) = 1;
    }
  return state;
}

std::uint64_t bitmask_of(const PlatoonGraphSpec& spec, const Eigen::MatrixXi& access) {
  const auto n = static_cast<Eigen::Index>(spec.vehicle_count());
  if (access.rows() != n || access.cols() != n)
    throw std::invalid_argument("access matrix has wrong dimension");
  for (const auto& l : spec.deterministic_links())
    if (access(l.receiver, l.source) != 1)
      throw std::invalid_argument("radar link missing from access matrix");
  std::uint64_t mask = 0;
  for (std::size_t k = 0; k < spec.random_links().size(); ++k) {
    const auto& l = spec.random_links()[k];
    if (access(l.receiver, l.source) != 0) mask |= std::uint64_t{1} << k;
  }
  return mask;
}

std::vector<TopologyState> enumerate_topologies(const PlatoonGraphSpec& spec) {
  std::vector<TopologyState> out;
  out.reserve(spec.topology_count());
  for (std::uint64_t s = 0; s < spec.topology_count(); ++s) out.push_back(topology_state(spec, s));
  return out;
}

Eigen::MatrixXd laplacian(const TopologyState& state, const PlatoonGraphSpec& spec) {
  const auto f = static_cast<Eigen::Index>(spec.follower_count());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(f, f);
  for (Eigen::Index i = 1; i <= f; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (state.access(i, j) == 0) continue;
      lap(i - 1, i - 1) += 1.0;
      if (j > 0) lap(i - 1, j - 1) -= 1.0;
    }
  }
  return lap;
}

std::string bitmask_label(std::uint64_t bitmask, std::size_t links) {
  std::string label = "0b";
  if (links == 0) return label + "0";
  for (std::size_t k = links; k-- > 0;) label += ((bitmask >> k) & 1U) ? '1' : '0';
  return label;
}

TopologyChain connectivity_chain_product(const std::vector<markov::TransitionMatrix>& link_tpms) {
  for (const auto& t : link_tpms)
    if (t.size() != 2) throw std::invalid_argument("link chains must have 2 states");
  if (link_tpms.size() > kMaxRandomLinks) throw std::invalid_argument("too many links");
  // kron(P_{m-1}, ..., P_0): link 0 ends up on the least significant bit.
  Eigen::MatrixXd joint = Eigen::MatrixXd::Ones(1, 1);
  for (const auto& link : link_tpms) {
    const Eigen::MatrixXd& p = link.probs();
    Eigen::MatrixXd next(2 * joint.rows(), 2 * joint.cols());
    for (Eigen::Index a = 0; a < 2; ++a)
      for (Eigen::Index b = 0; b < 2; ++b)
        next.block(a * joint.rows(), b * joint.cols(), joint.rows(), joint.cols()) = p(a, b) * joint;
    joint = std::move(next);
  }
  // Rows are products of pmfs; renormalize away accumulated rounding.
  for (Eigen::Index i = 0; i < joint.rows(); ++i) joint.row(i) /= joint.row(i).sum();
  return {markov::TransitionMatrix(topology_labels(link_tpms.size()), std::move(joint)), {}};
}

TopologyChain connectivity_chain_monte_carlo(const std::vector<markov::TransitionMatrix>& link_tpms,
                                             std::size_t sample_steps, std::uint64_t seed,
                                             double smoothing) {
  if (sample_steps < 2) throw std::invalid_argument("need at least 2 sample steps");
  std::vector<std::vector<std::size_t>> per_link;
  for (std::size_t k = 0; k < link_tpms.size(); ++k) {
    if (link_tpms[k].size() != 2) throw std::invalid_argument("link chains must have 2 states");
    const auto init = markov::invariant_distribution(link_tpms[k]);
    per_link.push_back(markov::sample_path(link_tpms[k], sample_steps, init, seed + k).indices);
  }
  return joint_from_sequences(per_link, sample_steps, smoothing);
}

TopologyChain connectivity_chain_monte_carlo(const std::vector<markov::TransitionMatrix>& ipg_chains,
                                             ipg::LinkTiming timing, std::size_t sample_steps,
                                             std::uint64_t seed, double smoothing) {
  if (sample_steps < 2) throw std::invalid_argument("need at least 2 sample steps");
  std::vector<std::vector<std::size_t>> per_link;
  for (std::size_t k = 0; k < ipg_chains.size(); ++k) {
    const auto process = ipg::link_process(ipg_chains[k], sample_steps, timing, seed + k);
    std::vector<std::size_t> seq(sample_steps);
    for (std::size_t t = 0; t < sample_steps; ++t)
      seq[t] = process.up[t] ? ipg::kLinkUp : ipg::kLinkDown;
    per_link.push_back(std::move(seq));
  }
  return joint_from_sequences(per_link, sample_steps, smoothing);
}

TopologyChain connectivity_chain_monte_carlo(const markov::TransitionMatrix& ipg_chain,
                                             const PlatoonGraphSpec& spec, ipg::LinkTiming timing,
                                             std::size_t sample_steps, std::uint64_t seed,
                                             double smoothing) {
  std::vector<markov::TransitionMatrix> chains(spec.random_link_count(), ipg_chain);
  return connectivity_chain_monte_carlo(chains, timing, sample_steps, seed, smoothing);
}

}  // namespace v2x::topology
