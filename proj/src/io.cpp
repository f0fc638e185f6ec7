#include "v2x/io.hpp"

#include "v2x/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace v2x::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& text, const std::string& source, std::size_t line) {
  const std::string t = trim(text);
  T value{};
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, value);
  if (ec != std::errc() || ptr != end || t.empty())
    throw ParseError(source, line, "not a number: '" + t + "'");
  return value;
}

/// Lines of a CSV with comment lines ("#...") and blank lines skipped; each
/// entry keeps its 1-based line number.
std::vector<std::pair<std::size_t, std::string>> csv_lines(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(no, t);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

std::string Stamp::csv_comment() const {
  return "# config_hash=" + config_hash + " seed=" + std::to_string(seed) + "\n";
}

json Stamp::json() const { return {{"config_hash", config_hash}, {"seed", seed}}; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json tpm_to_json(const markov::TransitionMatrix& tpm, const std::vector<std::size_t>& unvisited_rows) {
  json probs = json::array();
  for (Eigen::Index i = 0; i < tpm.probs().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < tpm.probs().cols(); ++k) row.push_back(tpm.probs()(i, k));
    probs.push_back(std::move(row));
  }
  json j{{"states", tpm.states()}, {"probs", std::move(probs)}};
  if (!unvisited_rows.empty()) j["unvisited_rows"] = unvisited_rows;
  return j;
}

markov::TransitionMatrix tpm_from_json(const json& j, const std::string& source) {
  if (!j.is_object() || !j.contains("states") || !j.contains("probs"))
    throw ParseError(source, 0, "TPM JSON needs \"states\" and \"probs\"");
  std::vector<std::string> states;
  for (const auto& s : j.at("states")) {
    if (!s.is_string()) throw ParseError(source, 0, "state labels must be strings");
    states.push_back(s.get<std::string>());
  }
  const auto& rows = j.at("probs");
  if (!rows.is_array() || rows.size() != states.size())
    throw ParseError(source, 0, "\"probs\" must have one row per state");
  const auto n = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw ParseError(source, 0, "row " + std::to_string(i) + " has the wrong length");
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number())
        throw ParseError(source, 0, "non-numeric entry in row " + std::to_string(i));
      p(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  const auto check = markov::validate(p, states.size());
  if (!check.ok()) {
    std::string msg = "invalid TPM:";
    for (const auto& v : check.violations) msg += " " + v.message + ";";
    throw ParseError(source, 0, msg);
  }
  return markov::TransitionMatrix(std::move(states), std::move(p));
}

static json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

markov::TransitionMatrix read_tpm(const fs::path& path) {
  return tpm_from_json(parse_json_file(path), path.string());
}

ipg::IpgChainSet read_chain_set(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.contains("by_distance")) return ipg::IpgChainSet(tpm_from_json(j, path.string()));
  std::vector<std::pair<double, markov::TransitionMatrix>> entries;
  for (const auto& e : j.at("by_distance")) {
    if (!e.contains("distance_m") || !e.contains("tpm"))
      throw ParseError(path.string(), 0, "by_distance entries need distance_m and tpm");
    entries.emplace_back(e.at("distance_m").get<double>(), tpm_from_json(e.at("tpm"), path.string()));
  }
  return ipg::IpgChainSet(std::move(entries));
}

std::vector<std::size_t> read_state_csv(const fs::path& path) {
  const auto lines = csv_lines(path);
  const std::string src = path.string();
  if (lines.empty() || lines.front().second != "state")
    throw ParseError(src, lines.empty() ? 1 : lines.front().first, "expected header 'state'");
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k < lines.size(); ++k)
    out.push_back(parse_number<std::size_t>(lines[k].second, src, lines[k].first));
  return out;
}

std::string state_csv(std::span<const std::size_t> states) {
  std::string s = "state\n";
  for (auto v : states) s += std::to_string(v) + "\n";
  return s;
}

json metadata_to_json(const ipg::LogMetadata& meta) {
  json j = json::object();
  if (meta.distance_m) j["distance_m"] = *meta.distance_m;
  if (!meta.density.empty()) j["density"] = meta.density;
  if (meta.mode) j["mode"] = *meta.mode == ipg::CommMode::cc ? "cc" : "base";
  return j;
}

ipg::LogMetadata metadata_from_json(const json& j, const std::string& source) {
  ipg::LogMetadata meta;
  if (!j.is_object()) throw ParseError(source, 0, "metadata must be a JSON object");
  if (j.contains("distance_m")) meta.distance_m = j.at("distance_m").get<double>();
  if (j.contains("density")) meta.density = j.at("density").get<std::string>();
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "base")
      meta.mode = ipg::CommMode::base;
    else if (m == "cc")
      meta.mode = ipg::CommMode::cc;
    else
      throw ParseError(source, 0, "mode must be \"base\" or \"cc\", got \"" + m + "\"");
  }
  return meta;
}

ipg::ReceptionLog read_reception_log(const fs::path& path) {
  const auto lines = csv_lines(path);
  const std::string src = path.string();
  if (lines.empty() || lines.front().second != "timestamp_ms,source_id,receiver_id")
    throw ParseError(src, lines.empty() ? 1 : lines.front().first,
                     "expected header 'timestamp_ms,source_id,receiver_id'");
  ipg::ReceptionLog log;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto [no, text] = lines[k];
    const auto cells = split(text, ',');
    if (cells.size() != 3) throw ParseError(src, no, "expected 3 fields");
    const double t = parse_number<double>(cells[0], src, no);
    const std::string source = trim(cells[1]), receiver = trim(cells[2]);
    if (log.timestamps_ms.empty()) {
      log.source_id = source;
      log.receiver_id = receiver;
    } else {
      if (source != log.source_id || receiver != log.receiver_id)
        throw ParseError(src, no, "log mixes links; split it per (source, receiver)");
      if (!(t > log.timestamps_ms.back()))
        throw ParseError(src, no, "timestamps must be strictly increasing");
    }
    log.timestamps_ms.push_back(t);
  }
  for (const fs::path& side : {fs::path(path.string() + ".json"),
                               fs::path(path).replace_extension(".json")}) {
    if (fs::exists(side)) {
      log.metadata = metadata_from_json(parse_json_file(side), side.string());
      break;
    }
  }
  return log;
}

std::string reception_log_csv(const ipg::ReceptionLog& log) {
  std::string s = "timestamp_ms,source_id,receiver_id\n";
  for (double t : log.timestamps_ms)
    s += format_double(t) + "," + log.source_id + "," + log.receiver_id + "\n";
  return s;
}

std::string trace_csv(const dynamics::SimulationTrace& trace, const Stamp& stamp) {
  std::string s = stamp.csv_comment() + "step,topology_index";
  const Eigen::Index n = trace.steps.empty() ? 0 : trace.steps.front().x.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = std::to_string(i);
    s += ",x" + id + ",v" + id + ",a" + id;
  }
  s += "\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& st = trace.steps[k];
    s += std::to_string(k) + "," + std::to_string(st.mode + 1);
    for (Eigen::Index i = 0; i < n; ++i)
      s += "," + format_double(st.x(i)) + "," + format_double(st.v(i)) + "," + format_double(st.a(i));
    s += "\n";
  }
  return s;
}

json metrics_to_json(const dynamics::MetricsSummary& m) {
  return {{"mean_abs_spacing_error_m", m.mean_abs_spacing_error_m},
          {"mean_speed_diff_mps", m.mean_speed_diff_mps},
          {"mean_accel_diff_mps2", m.mean_accel_diff_mps2}};
}

json report_to_json(const mjls::StabilityReport& r) {
  const auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  return {{"rho_S", r.rho_s},
          {"stable", r.stable},
          {"rho_bernoulli", opt(r.rho_bernoulli)},
          {"n0", opt(r.n0)},
          {"alpha", opt(r.alpha)},
          {"zeta", opt(r.zeta)},
          {"method", mjls::to_string(r.method)},
          {"tolerance", r.tolerance},
          {"operator_dimension", r.operator_dimension},
          {"mode_count", r.mode_count},
          {"blocks", r.blocks},
          {"notes", r.notes}};
}

std::string epsilon_csv(const std::vector<mjls::EpsilonPoint>& points, const Stamp& stamp) {
  std::string s = stamp.csv_comment() + "param,rho_markov,rho_bernoulli\n";
  for (const auto& p : points)
    s += format_double(p.epsilon) + "," + format_double(p.rho_markov) + "," +
         format_double(p.rho_bernoulli) + "\n";
  return s;
}

}  // namespace v2x::io
