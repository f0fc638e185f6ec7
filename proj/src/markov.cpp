#include "v2x/markov.hpp"

#include "v2x/errors.hpp"
#include "v2x/scc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace v2x::markov {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

std::vector<std::vector<std::size_t>> support_graph(const Eigen::MatrixXd& p) {
  std::vector<std::vector<std::size_t>> adj(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) adj[i].push_back(static_cast<std::size_t>(j));
  return adj;
}

std::vector<bool> reachable_from(const std::vector<std::vector<std::size_t>>& adj,
                                 std::size_t start) {
  std::vector<bool> seen(adj.size(), false);
  std::vector<std::size_t> todo{start};
  seen[start] = true;
  while (!todo.empty()) {
    const auto v = todo.back();
    todo.pop_back();
    for (auto w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        todo.push_back(w);
      }
  }
  return seen;
}

std::string join_indices(const std::vector<std::size_t>& idx) {
  std::ostringstream os;
  os << '{';
  for (std::size_t k = 0; k < idx.size(); ++k) os << (k ? "," : "") << idx[k];
  os << '}';
  return os.str();
}

// Solves (P^T - I) pi = 0, sum(pi) = 1 on an irreducible sub-chain.
Eigen::VectorXd solve_invariant(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd system(n + 1, n);
  system.topRows(n) = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  system.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;
  Eigen::VectorXd pi = system.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

std::vector<std::string> default_labels(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  return labels;
}

}  // namespace

ValidationResult validate(const Eigen::MatrixXd& probs, std::size_t label_count) {
  ValidationResult result;
  if (probs.rows() != probs.cols()) {
    result.violations.push_back({0, std::nullopt,
                                 "matrix is " + std::to_string(probs.rows()) + "x" +
                                     std::to_string(probs.cols()) + ", not square"});
    return result;
  }
  if (static_cast<std::size_t>(probs.rows()) != label_count) {
    result.violations.push_back({0, std::nullopt,
                                 std::to_string(probs.rows()) + " rows but " +
                                     std::to_string(label_count) + " state labels"});
  }
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double v = probs(i, j);
      if (!std::isfinite(v) || v < -kEntrySlack || v > 1.0 + kEntrySlack) {
        result.violations.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                     "entry (" + std::to_string(i) + "," + std::to_string(j) +
                                         ") = " + format_number(v) + " outside [0, 1]"});
      }
    }
    const double sum = probs.row(i).sum();
    if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
      result.violations.push_back({static_cast<std::size_t>(i), std::nullopt,
                                   "row " + std::to_string(i) + " sums to " + format_number(sum)});
    }
  }
  return result;
}

ValidationResult validate(const TransitionMatrix& tpm) { return validate(tpm.probs(), tpm.size()); }

TransitionMatrix::TransitionMatrix(std::vector<std::string> states, Eigen::MatrixXd probs)
    : states_(std::move(states)), probs_(std::move(probs)) {
  if (probs_.rows() == 0) throw std::invalid_argument("transition matrix has no states");
  const auto check = validate(probs_, states_.size());
  if (!check.ok()) {
    std::string msg = "invalid transition matrix:";
    for (const auto& v : check.violations) msg += " " + v.message + ";";
    throw std::invalid_argument(msg);
  }
}

TransitionMatrix TransitionMatrix::indexed(Eigen::MatrixXd probs) {
  auto labels = default_labels(static_cast<std::size_t>(probs.rows()));
  return TransitionMatrix(std::move(labels), std::move(probs));
}

bool is_irreducible(const TransitionMatrix& tpm) {
  return detail::strongly_connected_components(support_graph(tpm.probs())).size() == 1;
}

StationaryDistribution stationary_distribution(const TransitionMatrix& tpm) {
  const auto adj = support_graph(tpm.probs());
  const auto forward = reachable_from(adj, 0);
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < forward.size(); ++i)
    if (!forward[i]) bad.push_back(i);
  if (bad.empty()) {
    // Everything reachable from 0; check that 0 is reachable from everything.
    std::vector<std::vector<std::size_t>> reverse(adj.size());
    for (std::size_t v = 0; v < adj.size(); ++v)
      for (auto w : adj[v]) reverse[w].push_back(v);
    const auto backward = reachable_from(reverse, 0);
    for (std::size_t i = 0; i < backward.size(); ++i)
      if (!backward[i]) bad.push_back(i);
    if (!bad.empty())
      throw ReducibleChainError("reducible chain: state 0 unreachable from states " +
                                    join_indices(bad),
                                bad);
  } else {
    throw ReducibleChainError("reducible chain: states " + join_indices(bad) +
                                  " unreachable from state 0",
                              bad);
  }
  return {solve_invariant(tpm.probs())};
}

StationaryDistribution invariant_distribution(const TransitionMatrix& tpm) {
  const auto adj = support_graph(tpm.probs());
  const auto comps = detail::strongly_connected_components(adj);
  if (comps.size() == 1) return {solve_invariant(tpm.probs())};

  std::vector<std::size_t> comp_of(adj.size());
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (auto v : comps[c]) comp_of[v] = c;
  std::vector<std::size_t> closed;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    bool leaves = false;
    for (auto v : comps[c])
      for (auto w : adj[v]) leaves = leaves || comp_of[w] != c;
    if (!leaves) closed.push_back(c);
  }
  if (closed.size() != 1) {
    std::vector<std::size_t> states;
    for (auto c : closed) states.insert(states.end(), comps[c].begin(), comps[c].end());
    throw ReducibleChainError("chain has " + std::to_string(closed.size()) +
                                  " closed classes; states " + join_indices(states),
                              states);
  }
  const auto& members = comps[closed.front()];
  const auto k = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = tpm(members[a], members[b]);
  const Eigen::VectorXd local = solve_invariant(sub);
  Eigen::VectorXd pmf = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tpm.size()));
  for (Eigen::Index a = 0; a < k; ++a) pmf(members[a]) = local(a);
  return {pmf};
}

TransitionMatrix n_step(const TransitionMatrix& tpm, std::size_t n) {
  if (n == 0) throw std::invalid_argument("n_step requires n >= 1");
  Eigen::MatrixXd result = tpm.probs();
  Eigen::MatrixXd base = tpm.probs();
  std::size_t remaining = n - 1;
  while (remaining > 0) {
    if (remaining & 1U) result = result * base;
    remaining >>= 1U;
    if (remaining > 0) base = base * base;
  }
  return TransitionMatrix(tpm.states(), std::move(result));
}

ChainSampler::ChainSampler(const TransitionMatrix& tpm, std::uint64_t seed)
    : states_(tpm.size()), engine_(seed) {
  rows_.reserve(states_);
  std::vector<double> w(states_);
  for (std::size_t i = 0; i < states_; ++i) {
    for (std::size_t j = 0; j < states_; ++j) w[j] = std::max(0.0, tpm(i, j));
    rows_.emplace_back(w.begin(), w.end());
  }
}

std::size_t ChainSampler::draw(const Eigen::VectorXd& pmf) {
  if (static_cast<std::size_t>(pmf.size()) != states_)
    throw std::invalid_argument("initial distribution has wrong length");
  std::discrete_distribution<std::size_t> d(pmf.data(), pmf.data() + pmf.size());
  return d(engine_);
}

std::size_t ChainSampler::draw(const InitialState& init) {
  if (const auto* idx = std::get_if<std::size_t>(&init)) {
    if (*idx >= states_)
      throw std::invalid_argument("initial state " + std::to_string(*idx) + " out of range [0, " +
                                  std::to_string(states_) + ")");
    return *idx;
  }
  return draw(std::get<StationaryDistribution>(init).pmf);
}

StatePath sample_path(const TransitionMatrix& tpm, std::size_t length, const InitialState& init,
                      std::uint64_t seed) {
  if (length == 0) throw std::invalid_argument("sample_path requires length >= 1");
  ChainSampler sampler(tpm, seed);
  StatePath path;
  path.seed = seed;
  path.indices.reserve(length);
  std::size_t state = sampler.draw(init);
  path.indices.push_back(state);
  for (std::size_t k = 1; k < length; ++k) {
    state = sampler.next(state);
    path.indices.push_back(state);
  }
  return path;
}

void accumulate_transitions(std::span<const std::size_t> sequence, Eigen::MatrixXd& counts) {
  const auto n = static_cast<std::size_t>(counts.rows());
  for (std::size_t k = 0; k < sequence.size(); ++k) {
    if (sequence[k] >= n)
      throw std::invalid_argument("state index " + std::to_string(sequence[k]) +
                                  " at position " + std::to_string(k) + " exceeds state count " +
                                  std::to_string(n));
  }
  for (std::size_t k = 1; k < sequence.size(); ++k) counts(sequence[k - 1], sequence[k]) += 1.0;
}

TpmEstimate tpm_from_counts(const Eigen::MatrixXd& counts, double smoothing,
                            std::vector<std::string> labels) {
  if (smoothing < 0.0) throw std::invalid_argument("smoothing must be nonnegative");
  const Eigen::Index n = counts.rows();
  if (labels.empty()) labels = default_labels(static_cast<std::size_t>(n));
  Eigen::MatrixXd probs(n, n);
  std::vector<std::size_t> unvisited;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double total = counts.row(i).sum() + smoothing * static_cast<double>(n);
    if (total <= 0.0) {
      probs.row(i).setConstant(1.0 / static_cast<double>(n));
      unvisited.push_back(static_cast<std::size_t>(i));
      continue;
    }
    for (Eigen::Index j = 0; j < n; ++j) probs(i, j) = (counts(i, j) + smoothing) / total;
  }
  return {TransitionMatrix(std::move(labels), std::move(probs)), counts, std::move(unvisited)};
}

TpmEstimate estimate_tpm(std::span<const std::size_t> sequence, std::size_t state_count,
                         double smoothing, std::vector<std::string> labels) {
  if (sequence.size() < 2)
    throw std::invalid_argument("estimate_tpm needs a sequence of length >= 2, got " +
                                std::to_string(sequence.size()));
  if (state_count == 0) throw std::invalid_argument("state_count must be positive");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state_count),
                                                 static_cast<Eigen::Index>(state_count));
  accumulate_transitions(sequence, counts);
  return tpm_from_counts(counts, smoothing, std::move(labels));
}

}  // namespace v2x::markov
