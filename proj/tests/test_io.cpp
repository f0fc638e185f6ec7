#include "v2x/errors.hpp"
#include "v2x/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

using namespace v2x;
namespace fs = std::filesystem;

namespace {

// Fresh directory per test case, removed on exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("v2x_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("format_double round-trips and stays short") {
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(25.0) == "25");
  CHECK(io::format_double(-1.5e-20) == "-1.5e-20");
  CHECK(io::format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(io::format_double(std::nan("")) == "nan");
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double v = u(g);
    CHECK(std::stod(io::format_double(v)) == v);
  }
}

TEST_CASE("FNV-1a reference values") {
  CHECK(io::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("stamp formats") {
  const io::Stamp s{"00000000deadbeef", 7};
  CHECK(s.csv_comment() == "# config_hash=00000000deadbeef seed=7\n");
  CHECK(s.json()["seed"] == 7);
  CHECK(s.json()["config_hash"] == "00000000deadbeef");
}

TEST_CASE("TPM JSON round trip") {
  TempDir dir("tpm");
  Eigen::MatrixXd p(3, 3);
  p << 0.2, 0.3, 0.5, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 0, 1;
  const markov::TransitionMatrix tpm({"a", "b", "c"}, p);
  io::write_text(dir.path / "sub" / "t.json", io::dump(io::tpm_to_json(tpm, {2})));
  const auto back = io::read_tpm(dir.path / "sub" / "t.json");
  CHECK(back.states() == tpm.states());
  CHECK(back.probs() == p);
  CHECK(io::tpm_to_json(tpm, {2})["unvisited_rows"] == nlohmann::json::array({2}));
}

TEST_CASE("invalid TPM files raise ParseError") {
  TempDir dir("bad");
  io::write_text(dir.path / "sum.json", R"({"states":["a","b"],"probs":[[0.9,0.2],[0.5,0.5]]})");
  CHECK_THROWS_WITH_AS(io::read_tpm(dir.path / "sum.json"), doctest::Contains("row 0 sums to 1.1"), ParseError);
  io::write_text(dir.path / "shape.json", R"({"states":["a","b"],"probs":[[1.0]]})");
  CHECK_THROWS_AS(io::read_tpm(dir.path / "shape.json"), ParseError);
  io::write_text(dir.path / "syntax.json", "{");
  CHECK_THROWS_AS(io::read_tpm(dir.path / "syntax.json"), ParseError);
  CHECK_THROWS_AS(io::read_tpm(dir.path / "missing.json"), ParseError);
}

TEST_CASE("chain sets by distance") {
  TempDir dir("set");
  nlohmann::json j;
  Eigen::MatrixXd near = Eigen::MatrixXd::Zero(10, 10), far = Eigen::MatrixXd::Zero(10, 10);
  near.col(0).setOnes();
  far.col(9).setOnes();
  const markov::TransitionMatrix a(ipg::state_labels(), near), b(ipg::state_labels(), far);
  j["by_distance"] = {{{"distance_m", 50}, {"tpm", io::tpm_to_json(a)}},
                      {{"distance_m", 150}, {"tpm", io::tpm_to_json(b)}}};
  io::write_text(dir.path / "set.json", io::dump(j));
  const auto set = io::read_chain_set(dir.path / "set.json");
  CHECK(set.entries().size() == 2);
  CHECK(set.at(75).probs() == near);
  CHECK(set.at(125).probs() == far);
}

TEST_CASE("state CSV round trip and errors") {
  TempDir dir("state");
  const std::vector<std::size_t> states{0, 3, 3, 9};
  io::write_text(dir.path / "s.csv", io::state_csv(states));
  CHECK(io::read_state_csv(dir.path / "s.csv") == states);
  io::write_text(dir.path / "bad.csv", "state\n1\n# note\n\nx\n");
  CHECK(error_line([&] { io::read_state_csv(dir.path / "bad.csv"); }) == 5);
}

TEST_CASE("reception log parsing") {
  TempDir dir("log");
  const auto csv = dir.path / "link.csv";
  io::write_text(csv, "# captured on a test bench\ntimestamp_ms,source_id,receiver_id\n0,veh0,veh2\n100,veh0,veh2\n\n300,veh0,veh2\n");
  io::write_text(dir.path / "link.json", R"({"distance_m": 50, "density": "moderate", "mode": "cc"})");
  const auto log = io::read_reception_log(csv);
  CHECK(log.timestamps_ms == std::vector<double>{0, 100, 300});
  CHECK(log.source_id == "veh0");
  CHECK(log.receiver_id == "veh2");
  REQUIRE(log.metadata.distance_m.has_value());
  CHECK(*log.metadata.distance_m == 50);
  CHECK(log.metadata.mode == ipg::CommMode::cc);
  CHECK(io::metadata_to_json(log.metadata)["density"] == "moderate");

  io::write_text(dir.path / "copy.csv", io::reception_log_csv(log));
  CHECK(io::read_reception_log(dir.path / "copy.csv").timestamps_ms == log.timestamps_ms);
}

TEST_CASE("reception log errors carry line numbers") {
  TempDir dir("logerr");
  const auto write = [&](const std::string& body) {
    io::write_text(dir.path / "l.csv", body);
    return error_line([&] { io::read_reception_log(dir.path / "l.csv"); });
  };
  CHECK(write("time,src,dst\n") == 1);
  CHECK(write("timestamp_ms,source_id,receiver_id\n0,a,b\n100,a\n") == 3);
  CHECK(write("timestamp_ms,source_id,receiver_id\n0,a,b\n100,a,b\n100,a,b\n") == 4);
  CHECK(write("timestamp_ms,source_id,receiver_id\n0,a,b\n\n100,a,c\n") == 4);
  CHECK(write("timestamp_ms,source_id,receiver_id\n0,a,b\nsoon,a,b\n") == 3);
  io::write_text(dir.path / "l.csv", "timestamp_ms,source_id,receiver_id\n0,a,b\n");
  io::write_text(dir.path / "l.json", R"({"mode": "fast"})");
  CHECK_THROWS_AS(io::read_reception_log(dir.path / "l.csv"), ParseError);
}

TEST_CASE("trace CSV layout") {
  dynamics::SimulationTrace trace;
  dynamics::TraceStep s;
  s.mode = 63;
  s.x = Eigen::Vector2d(10, -15);
  s.v = Eigen::Vector2d(20, 19.5);
  s.a = Eigen::Vector2d(0, 0.25);
  trace.steps.push_back(s);
  const auto csv = io::trace_csv(trace, {"0123456789abcdef", 3});
  CHECK(csv == "# config_hash=0123456789abcdef seed=3\nstep,topology_index,x0,v0,a0,x1,v1,a1\n0,64,10,20,0,-15,19.5,0.25\n");
}

TEST_CASE("report and epsilon outputs") {
  mjls::StabilityReport r;
  r.rho_s = 0.9;
  r.stable = true;
  r.n0 = 1;
  r.notes = {"x"};
  const auto j = io::report_to_json(r);
  CHECK(j["rho_S"] == 0.9);
  CHECK(j["n0"] == 1);
  CHECK(j["alpha"].is_null());
  CHECK(j["method"] == "dense");

  const auto csv = io::epsilon_csv({{0.4, 1.25, 1.0}}, {"ffffffffffffffff", 0});
  CHECK(csv == "# config_hash=ffffffffffffffff seed=0\nparam,rho_markov,rho_bernoulli\n0.4,1.25,1\n");
  CHECK(io::dump(nlohmann::json{{"b", 1}, {"a", 2}}) == "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
}
