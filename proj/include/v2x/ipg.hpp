#pragma once

#include "v2x/markov.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace v2x::ipg {

inline constexpr int kResolutionMs = 100;
inline constexpr int kMaxGapMs = 1000;
inline constexpr std::size_t kStateCount = kMaxGapMs / kResolutionMs;
/// Receptions older than this are obsolete; also the largest IPG state.
inline constexpr int kObsolescenceMs = 1000;

/// Inter-packet gap, a positive multiple of 100 ms no larger than 1000 ms.
class IpgState {
 public:
  explicit IpgState(int gap_ms);
  static IpgState from_index(std::size_t index);

  int gap_ms() const { return gap_ms_; }
  std::size_t index() const { return static_cast<std::size_t>(gap_ms_ / kResolutionMs - 1); }
  friend bool operator==(IpgState, IpgState) = default;

 private:
  int gap_ms_;
};

/// State labels "100", "200", ..., "1000".
std::vector<std::string> state_labels();

enum class CommMode { base, cc };

struct LogMetadata {
  std::optional<double> distance_m;
  std::string density;  // "low" | "moderate" | "high", opaque
  std::optional<CommMode> mode;
};

struct ReceptionLog {
  std::vector<double> timestamps_ms;
  std::string source_id;
  std::string receiver_id;
  LogMetadata metadata;

  /// Throws std::invalid_argument unless timestamps are strictly increasing.
  void check() const;
};

struct QuantizedLog {
  std::vector<IpgState> states;
  /// Gaps above 1050 ms (they would round past 1000 ms) are omitted.
  std::size_t dropped = 0;
  /// Offsets into `states` where a new run begins; a dropped gap breaks the
  /// run so no transition is counted across it. Always starts with 0.
  std::vector<std::size_t> run_starts;
};

QuantizedLog quantize(const ReceptionLog& log);

struct IpgFit {
  markov::TpmEstimate estimate;
  std::size_t dropped = 0;
  std::size_t transitions = 0;
};

/// 10-state IPG chain pooled over logs; transitions never span two logs.
IpgFit fit_ipg_chain(const std::vector<ReceptionLog>& logs, double smoothing = 0.0);

struct LinkTiming {
  int step_ms = 100;
  /// Up iff the newest information is at most this old; information received
  /// during a control interval counts as one step old.
  int staleness_ms = 100;
};

struct LinkProcess {
  std::vector<bool> up;
  LinkTiming timing;

  double up_fraction() const;
};

/// Binary link status per control step driven by receptions whose gaps follow
/// `ipg_chain`. A reception happens at t = 0 with its IPG state drawn from the
/// chain's invariant distribution; step k sits at t = k * step_ms.
LinkProcess link_process(const markov::TransitionMatrix& ipg_chain, std::size_t horizon_steps,
                         LinkTiming timing, std::uint64_t seed);

/// 2-state chain over {down = 0, up = 1}, estimated from one long link_process.
markov::TpmEstimate link_tpm(const markov::TransitionMatrix& ipg_chain, LinkTiming timing,
                             std::size_t sample_steps, std::uint64_t seed);

inline constexpr std::size_t kLinkDown = 0;
inline constexpr std::size_t kLinkUp = 1;

/// IPG chains keyed by link distance; lookup returns the entry closest to the
/// requested distance (ties go to the shorter one). A single chain with no
/// distance applies everywhere.
class IpgChainSet {
 public:
  explicit IpgChainSet(markov::TransitionMatrix chain);
  explicit IpgChainSet(std::vector<std::pair<double, markov::TransitionMatrix>> by_distance);

  const markov::TransitionMatrix& at(double distance_m) const;
  const std::vector<std::pair<double, markov::TransitionMatrix>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<double, markov::TransitionMatrix>> entries_;
};

/// Throws unless `tpm` is a 10-state IPG chain.
void check_ipg_chain(const markov::TransitionMatrix& tpm);

}  // namespace v2x::ipg
