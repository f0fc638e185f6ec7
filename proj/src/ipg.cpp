#include "v2x/ipg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace v2x::ipg {

IpgState::IpgState(int gap_ms) : gap_ms_(gap_ms) {
  if (gap_ms <= 0 || gap_ms > kMaxGapMs || gap_ms % kResolutionMs != 0)
    throw std::invalid_argument("IPG state must be a multiple of 100 ms in [100, 1000], got " +
                                std::to_string(gap_ms));
}

IpgState IpgState::from_index(std::size_t index) {
  if (index >= kStateCount) throw std::invalid_argument("IPG state index out of range");
  return IpgState(static_cast<int>(index + 1) * kResolutionMs);
}

std::vector<std::string> state_labels() {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < kStateCount; ++i)
    labels.push_back(std::to_string((i + 1) * kResolutionMs));
  return labels;
}

void ReceptionLog::check() const {
  for (std::size_t k = 1; k < timestamps_ms.size(); ++k)
    if (!(timestamps_ms[k] > timestamps_ms[k - 1]))
      throw std::invalid_argument("reception timestamps not strictly increasing at index " +
                                  std::to_string(k));
}

QuantizedLog quantize(const ReceptionLog& log) {
  if (log.timestamps_ms.size() < 2)
    throw std::invalid_argument("quantize needs at least 2 timestamps");
  log.check();
  constexpr double cutoff = kMaxGapMs + kResolutionMs / 2.0;
  QuantizedLog out;
  bool run_open = false;
  for (std::size_t k = 1; k < log.timestamps_ms.size(); ++k) {
    const double gap = log.timestamps_ms[k] - log.timestamps_ms[k - 1];
    if (gap > cutoff) {
      ++out.dropped;
      run_open = false;
      continue;
    }
    // Nearest multiple, ties upward; 1050 lands on the top state.
    auto steps = static_cast<int>(std::floor(gap / kResolutionMs + 0.5));
    steps = std::clamp(steps, 1, static_cast<int>(kStateCount));
    if (!run_open) {
      out.run_starts.push_back(out.states.size());
      run_open = true;
    }
    out.states.emplace_back(steps * kResolutionMs);
  }
  if (out.run_starts.empty()) out.run_starts.push_back(0);
  return out;
}

IpgFit fit_ipg_chain(const std::vector<ReceptionLog>& logs, double smoothing) {
  const auto n = static_cast<Eigen::Index>(kStateCount);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  std::size_t dropped = 0;
  std::size_t transitions = 0;
  for (const auto& log : logs) {
    const auto q = quantize(log);
    dropped += q.dropped;
    for (std::size_t r = 0; r < q.run_starts.size(); ++r) {
      const std::size_t begin = q.run_starts[r];
      const std::size_t end = r + 1 < q.run_starts.size() ? q.run_starts[r + 1] : q.states.size();
      std::vector<std::size_t> run;
      run.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) run.push_back(q.states[k].index());
      markov::accumulate_transitions(run, counts);
      if (run.size() >= 2) transitions += run.size() - 1;
    }
  }
  if (transitions == 0) throw std::invalid_argument("no usable IPG transitions after quantization");
  return {markov::tpm_from_counts(counts, smoothing, state_labels()), dropped, transitions};
}

double LinkProcess::up_fraction() const {
  if (up.empty()) return 0.0;
  return static_cast<double>(std::count(up.begin(), up.end(), true)) /
         static_cast<double>(up.size());
}

void check_ipg_chain(const markov::TransitionMatrix& tpm) {
  if (tpm.size() != kStateCount)
    throw std::invalid_argument("IPG chain must have 10 states (100..1000 ms), got " +
                                std::to_string(tpm.size()));
}

namespace {

void check_timing(const LinkTiming& timing) {
  if (timing.step_ms <= 0 || kResolutionMs % timing.step_ms != 0)
    throw std::invalid_argument("control step " + std::to_string(timing.step_ms) +
                                " ms does not divide 100 ms");
  if (timing.staleness_ms <= 0) throw std::invalid_argument("staleness threshold must be positive");
}

}  // namespace

LinkProcess link_process(const markov::TransitionMatrix& ipg_chain, std::size_t horizon_steps,
                         LinkTiming timing, std::uint64_t seed) {
  check_ipg_chain(ipg_chain);
  check_timing(timing);
  if (horizon_steps == 0) throw std::invalid_argument("link_process horizon must be positive");

  markov::ChainSampler sampler(ipg_chain, seed);
  std::size_t state = sampler.draw(markov::invariant_distribution(ipg_chain).pmf);
  // Integer milliseconds keep the reception grid exact.
  std::int64_t last = 0;
  state = sampler.next(state);
  std::int64_t next = IpgState::from_index(state).gap_ms();

  LinkProcess out;
  out.timing = timing;
  out.up.resize(horizon_steps);
  for (std::size_t k = 0; k < horizon_steps; ++k) {
    const std::int64_t now = static_cast<std::int64_t>(k) * timing.step_ms;
    while (next <= now) {
      last = next;
      state = sampler.next(state);
      next += IpgState::from_index(state).gap_ms();
    }
    const std::int64_t age = now - last + timing.step_ms;
    out.up[k] = age <= timing.staleness_ms;
  }
  return out;
}

markov::TpmEstimate link_tpm(const markov::TransitionMatrix& ipg_chain, LinkTiming timing,
                             std::size_t sample_steps, std::uint64_t seed) {
  if (sample_steps < 2) throw std::invalid_argument("link_tpm needs at least 2 sample steps");
  const auto process = link_process(ipg_chain, sample_steps, timing, seed);
  std::vector<std::size_t> seq(process.up.size());
  for (std::size_t k = 0; k < seq.size(); ++k) seq[k] = process.up[k] ? kLinkUp : kLinkDown;
  return markov::estimate_tpm(seq, 2, 0.0, {"down", "up"});
}

IpgChainSet::IpgChainSet(markov::TransitionMatrix chain) {
  check_ipg_chain(chain);
  entries_.emplace_back(std::numeric_limits<double>::quiet_NaN(), std::move(chain));
}

IpgChainSet::IpgChainSet(std::vector<std::pair<double, markov::TransitionMatrix>> by_distance)
    : entries_(std::move(by_distance)) {
  if (entries_.empty()) throw std::invalid_argument("empty IPG chain set");
  for (const auto& e : entries_) {
    check_ipg_chain(e.second);
    if (!(e.first >= 0.0)) throw std::invalid_argument("chain distances must be nonnegative");
  }
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
}

const markov::TransitionMatrix& IpgChainSet::at(double distance_m) const {
  if (entries_.size() == 1) return entries_.front().second;
  const auto* best = &entries_.front();
  for (const auto& e : entries_)
    if (std::abs(e.first - distance_m) < std::abs(best->first - distance_m)) best = &e;
  return best->second;
}

}  // namespace v2x::ipg
