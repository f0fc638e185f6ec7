#pragma once

#include "v2x/dynamics.hpp"
#include "v2x/ipg.hpp"
#include "v2x/markov.hpp"
#include "v2x/mjls.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace v2x::io {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

/// Provenance written into every output: CSV files start with
/// "# config_hash=<hex> seed=<n>", JSON files carry a "meta" object.
struct Stamp {
  std::string config_hash;
  std::uint64_t seed = 0;

  std::string csv_comment() const;
  nlohmann::json json() const;
};

std::string read_text(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: whole buffer, binary mode.
void write_text(const std::filesystem::path& path, std::string_view text);

/// {"states": [...], "probs": [[...]]} plus optional "unvisited_rows"/"meta".
nlohmann::json tpm_to_json(const markov::TransitionMatrix& tpm,
                           const std::vector<std::size_t>& unvisited_rows = {});
markov::TransitionMatrix tpm_from_json(const nlohmann::json& j, const std::string& source);
markov::TransitionMatrix read_tpm(const std::filesystem::path& path);

/// A plain TPM file or {"by_distance": [{"distance_m": d, "tpm": {...}}, ...]}.
ipg::IpgChainSet read_chain_set(const std::filesystem::path& path);

/// One state index per line under a `state` header.
std::vector<std::size_t> read_state_csv(const std::filesystem::path& path);
std::string state_csv(std::span<const std::size_t> states);

/// `timestamp_ms,source_id,receiver_id` rows; metadata from `<path>.json` or
/// `<stem>.json` next to it when present. All rows must name one link.
ipg::ReceptionLog read_reception_log(const std::filesystem::path& path);
std::string reception_log_csv(const ipg::ReceptionLog& log);
nlohmann::json metadata_to_json(const ipg::LogMetadata& meta);
ipg::LogMetadata metadata_from_json(const nlohmann::json& j, const std::string& source);

/// `step,topology_index,x0,v0,a0,...` with 1-based topology indices.
std::string trace_csv(const dynamics::SimulationTrace& trace, const Stamp& stamp);
nlohmann::json metrics_to_json(const dynamics::MetricsSummary& m);
nlohmann::json report_to_json(const mjls::StabilityReport& r);

/// `param,rho_markov,rho_bernoulli`.
std::string epsilon_csv(const std::vector<mjls::EpsilonPoint>& points, const Stamp& stamp);

/// Serializes JSON with sorted keys and a trailing newline.
std::string dump(const nlohmann::json& j);

}  // namespace v2x::io
