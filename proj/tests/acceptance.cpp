// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and runtime
// budgets are fixed here; the process exits nonzero if any criterion fails.

#include "v2x/errors.hpp"
#include "v2x/io.hpp"
#include "v2x/markov.hpp"
#include "v2x/mjls.hpp"
#include "v2x/scenario.hpp"
#include "v2x/topology.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

using namespace v2x;
using markov::TransitionMatrix;
namespace fs = std::filesystem;

namespace {

const fs::path kData = V2X_DATA_DIR;
const std::string kCli = V2X_CLI;
constexpr std::uint64_t kSeed = 2024;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double eig_radius(const Eigen::MatrixXd& m) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(m, false).eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd random_tpm(std::size_t n, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) p(i, j) = u(g);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<Eigen::MatrixXd> random_modes(std::size_t count, Eigen::Index n, std::mt19937_64& g) {
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<Eigen::MatrixXd> modes;
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n * n; ++i) a.data()[i] = z(g);
    modes.push_back(a);
  }
  return modes;
}

/// Random model (3-5 modes, n = 4) with modes rescaled so that rho(S) = target.
mjls::MjlsModel scaled_model(std::uint64_t seed, double target) {
  std::mt19937_64 g(seed);
  auto modes = random_modes(3 + seed % 3, 4, g);
  const auto chain = TransitionMatrix::indexed(random_tpm(modes.size(), g));
  const double rho = mjls::spectral_radius(mjls::build_operator({modes, chain})).value;
  for (auto& a : modes) a *= std::sqrt(target / rho);
  return {modes, chain};
}

TransitionMatrix two_state(double a, double b) {
  Eigen::MatrixXd p(2, 2);
  p << 1 - a, a, b, 1 - b;
  return TransitionMatrix({"down", "up"}, p);
}

double stationary_residual(const TransitionMatrix& p) {
  const auto pi = markov::stationary_distribution(p).pmf;
  return (pi.transpose() * p.probs() - pi.transpose()).cwiseAbs().maxCoeff();
}

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<TransitionMatrix> g_estimated;  // filled by AC1, reused by AC2

void ac1(Outcome& o) {
  Stopwatch clock;
  double worst = 0.0;
  for (const char* name : {"good-link.json", "bad-link.json"}) {
    const auto p = io::read_tpm(kData / name);
    const auto path = markov::sample_path(p, 1000000, markov::stationary_distribution(p), kSeed);
    const auto est = markov::estimate_tpm(path.indices, p.size());
    g_estimated.push_back(est.tpm);
    const double err = (est.tpm.probs() - p.probs()).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    o.detail << name << " max|dP|=" << fmt(err) << " ";
  }
  const double t = clock.seconds();
  o.require(worst < 0.01, "max entry error < 0.01");
  o.require(t < 10.0, "runtime < 10 s");
  o.detail << "time=" << fmt(t) << "s";
}

void ac2(Outcome& o) {
  std::vector<std::pair<std::string, TransitionMatrix>> chains;
  for (const char* name : {"good-link.json", "bad-link.json", "counterexample.json"})
    chains.emplace_back(name, io::read_tpm(kData / name));
  for (std::size_t k = 0; k < g_estimated.size(); ++k) chains.emplace_back("estimated-" + std::to_string(k), g_estimated[k]);
  const auto config = scenario::load(kData / "scenario.json");
  for (std::size_t c = 0; c < config.communication.chains.size(); ++c) {
    const auto p = scenario::build_pipeline(config, scenario::load_chains(config, c), 25.0);
    chains.emplace_back(config.communication.chains[c].name + "-topology", p.chain.tpm);
    for (std::size_t k = 0; k < p.link_tpms.size(); ++k)
      if (markov::is_irreducible(p.link_tpms[k]))
        chains.emplace_back(config.communication.chains[c].name + "-link" + std::to_string(k), p.link_tpms[k]);
  }
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, p] : chains) {
    if (!markov::is_irreducible(p)) {
      o.detail << name << " reducible (skipped) ";
      continue;
    }
    worst = std::max(worst, stationary_residual(p));
    ++checked;
  }
  o.require(worst < 1e-8, "|pi P - pi|_inf < 1e-8");
  o.detail << checked << " chains, worst residual " << fmt(worst);
}

void ac3(Outcome& o) {
  const std::vector<TransitionMatrix> pool{two_state(0.1, 0.5), two_state(0.7, 0.2), two_state(0.3, 0.05)};
  for (std::size_t m : {2, 3}) {
    const std::vector<TransitionMatrix> links(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
    const auto exact = topology::connectivity_chain_product(links);
    const auto mc = topology::connectivity_chain_monte_carlo(links, 1000000, kSeed + m, 0.0);
    const double err = (mc.tpm.probs() - exact.tpm.probs()).cwiseAbs().maxCoeff();

    const auto pi = markov::stationary_distribution(exact.tpm).pmf;
    std::vector<Eigen::VectorXd> per;
    for (const auto& l : links) per.push_back(markov::stationary_distribution(l).pmf);
    double fact = 0.0;
    for (Eigen::Index s = 0; s < pi.size(); ++s) {
      double prod = 1.0;
      for (std::size_t k = 0; k < m; ++k) prod *= per[k]((s >> k) & 1);
      fact = std::max(fact, std::abs(pi(s) - prod));
    }
    o.require(err < 0.02, "m=" + std::to_string(m) + " Monte Carlo vs product < 0.02");
    o.require(fact < 1e-8, "m=" + std::to_string(m) + " factorization < 1e-8");
    o.detail << "m=" << m << " mc_err=" << fmt(err) << " factor_err=" << fmt(fact) << " ";
  }
}

void ac4(Outcome& o) {
  Stopwatch clock;
  double worst = 0.0;
  mjls::SpectralOptions power;
  power.method = mjls::Method::power;
  power.tolerance = 1e-12;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::mt19937_64 g(kSeed + s);
    const auto modes = random_modes(3 + s % 3, 4, g);
    const mjls::StabilityOperator op({modes, TransitionMatrix::indexed(random_tpm(modes.size(), g))});
    const double dense = eig_radius(op.matrix());
    const double iter = mjls::spectral_radius(op, power).value;
    worst = std::max(worst, std::abs(dense - iter));
  }
  const double t = clock.seconds();
  o.require(worst < 1e-6, "power vs dense < 1e-6");
  o.require(t < 30.0, "runtime < 30 s");
  o.detail << "20 models, worst |diff|=" << fmt(worst) << " time=" << fmt(t) << "s";
}

void ac5(Outcome& o) {
  double constant = 0.0, bernoulli = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::mt19937_64 g(kSeed + 100 + s);
    const auto a = random_modes(1, 4, g).front();
    const std::size_t count = 2 + s % 4;
    const mjls::MjlsModel repeated(std::vector<Eigen::MatrixXd>(count, a),
                                   TransitionMatrix::indexed(random_tpm(count, g)));
    constant = std::max(constant, std::abs(mjls::spectral_radius(mjls::build_operator(repeated)).value -
                                           std::pow(eig_radius(a), 2)));

    const auto modes = random_modes(count, 4, g);
    Eigen::RowVectorXd pi = random_tpm(1 + count, g).row(0).head(count);
    pi /= pi.sum();
    const mjls::MjlsModel iid(modes, TransitionMatrix::indexed(Eigen::VectorXd::Ones(count) * pi));
    bernoulli = std::max(bernoulli, std::abs(mjls::spectral_radius(mjls::build_operator(iid)).value -
                                             mjls::bernoulli_radius(iid)));
  }
  o.require(constant < 1e-9, "rho(S) = rho(A)^2 within 1e-9");
  o.require(bernoulli < 1e-9, "rho(S) = R2(pi) within 1e-9");
  o.detail << "constant-mode err=" << fmt(constant) << " identical-rows err=" << fmt(bernoulli);
}

void ac6(Outcome& o) {
  Stopwatch clock;
  Eigen::MatrixXd p(2, 2);
  p << 0.95, 0.05, 0.05, 0.95;
  const mjls::MjlsModel model({Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::MatrixXd::Constant(1, 1, 1.2)},
                              TransitionMatrix::indexed(p));
  const double rho = mjls::spectral_radius(mjls::build_operator(model)).value;
  const double r2 = mjls::bernoulli_radius(model);
  o.require(r2 < 1.0 && rho > 1.0, "R2(pi) < 1 < rho(S)");
  const auto drop = mjls::find_drop_period(model, 100);
  o.require(drop.n0.has_value(), "finite n0");
  if (drop.n0) {
    const auto variant = mjls::dropped_message_variant(model, *drop.n0);
    const double rv = mjls::spectral_radius(mjls::build_operator(variant)).value;
    o.require(rv < 1.0, "variant rho(S) < 1");
    const auto emp = mjls::empirical_ms_check(variant, {1000, 200, kSeed, 0.25});
    o.require(!emp.diverged && emp.fitted_rate < 1.0, "empirical decay on the subsampled process");
    o.require(emp.verdict == mjls::Verdict::consistent, "empirical rate consistent with rho(S)");
    o.detail << "rho(S)=" << fmt(rho, 4) << " R2=" << fmt(r2, 4) << " n0=" << *drop.n0 << " variant rho=" << fmt(rv, 4)
             << " fitted=" << fmt(emp.fitted_rate, 4) << " ";
  }
  const double t = clock.seconds();
  o.require(t < 10.0, "runtime < 10 s");
  o.detail << "time=" << fmt(t) << "s";
}

void ac7(Outcome& o) {
  Stopwatch clock;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double target = 0.5 + 0.45 * static_cast<double>(s) / 19.0;
    const auto model = scaled_model(kSeed + 200 + s, target);
    const auto r = mjls::empirical_ms_check(model, {1000, 200, kSeed + s, 0.25});
    worst = std::max(worst, std::abs(r.fitted_rate - r.rho_s));
    o.require(r.verdict == mjls::Verdict::consistent, "model " + std::to_string(s) + " rate within 0.05");
  }
  o.detail << "20 stable models (rho 0.5..0.95), worst |rate - rho|=" << fmt(worst) << " ";
  for (double target : {1.2, 1.5}) {
    const auto r = mjls::empirical_ms_check(scaled_model(kSeed + 300 + static_cast<std::uint64_t>(target * 10), target),
                                            {1000, 200, kSeed, 0.25});
    o.require(r.diverged && r.verdict == mjls::Verdict::consistent, "divergence detected at rho=" + fmt(target));
    o.detail << "rho=" << fmt(target) << " fitted=" << fmt(r.fitted_rate, 4) << " ";
  }
  const double t = clock.seconds();
  o.require(t < 120.0, "runtime < 2 min");
  o.detail << "time=" << fmt(t) << "s";
}

void ac8(Outcome& o) {
  const auto config = scenario::load(kData / "scenario.json");
  const double gap = config.platoon.gap_m;
  const auto good = scenario::build_pipeline(config, scenario::load_chains(config, 0), gap);
  const auto ideal = scenario::run_simulation(config, good, true);
  const auto& last = ideal.trace.steps.back();
  double speed_err = 0.0;
  for (Eigen::Index i = 1; i < last.v.size(); ++i) speed_err = std::max(speed_err, std::abs(last.v(i) - 25.0));
  const auto steps = ideal.trace.steps.size();
  const double tail = dynamics::metrics(ideal.trace, config.platoon, steps > 100 ? steps - 100 : 0).mean_abs_spacing_error_m;
  o.require(speed_err < 0.05, "final follower speeds within 0.05 m/s of 25");
  o.require(tail < 0.1, "spacing error over final 100 steps < 0.1 m");

  const auto bad = scenario::build_pipeline(config, scenario::load_chains(config, 1), gap);
  const auto degraded = scenario::run_simulation(config, bad, false);
  o.require(degraded.metrics.mean_abs_spacing_error_m > ideal.metrics.mean_abs_spacing_error_m,
            "bad-link spacing error > ideal");
  o.detail << "final speed err=" << fmt(speed_err) << " tail spacing=" << fmt(tail)
           << " ideal spacing=" << fmt(ideal.metrics.mean_abs_spacing_error_m, 4)
           << " bad-link spacing=" << fmt(degraded.metrics.mean_abs_spacing_error_m, 4);
}

void ac9(Outcome& o) {
  Stopwatch clock;
  const auto config = scenario::load(kData / "scenario.json");
  const auto rows = scenario::run_sweep(config, std::max(1u, std::thread::hardware_concurrency()));
  const double t = clock.seconds();
  o.require(rows.size() == 14, "14 cells");
  double good_max = 0.0;
  for (const auto& r : rows) {
    o.require(std::isfinite(r.rho_s), "finite rho(S)");
    o.require(r.operator_dimension == 4096, "dimension 4096");
    if (r.scenario == "good-link") {
      good_max = std::max(good_max, r.rho_s);
      o.require(r.rho_s < 1.0, "good-link rho(S) < 1 at gap " + fmt(r.gap_m));
    }
  }
  o.require(t < 300.0, "runtime < 5 min");
  o.detail << rows.size() << " cells, max good-link rho(S)=" << fmt(good_max, 6) << " time=" << fmt(t) << "s";
}

void ac10(Outcome& o, const fs::path& work) {
  const auto file = (kData / "counterexample.json").string();
  const auto out = work / "counterexample.csv";
  o.require(run_cli("counterexample --tpm " + file + " --laplacians " + file + " --out " + out.string()) == 0,
            "counterexample command succeeds");
  std::istringstream csv(io::read_text(out));
  std::string line;
  std::size_t above = 0, below = 0, points = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("param", 0) == 0) continue;
    double eps = 0, markov = 0, bernoulli = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &eps, &markov, &bernoulli) != 3) continue;
    ++points;
    above += markov > bernoulli;
    below += markov < bernoulli;
  }
  o.require(above > 0 && below > 0, "curves cross");
  o.detail << points << " epsilon points, markov>bernoulli at " << above << ", markov<bernoulli at " << below;
}

void ac11(Outcome& o, const fs::path& work) {
  const auto cfg = (kData / "scenario.json").string();
  const auto ce = (kData / "counterexample.json").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"stability --config " + cfg + " --out %/stability.json", {"stability.json"}},
      {"simulate --config " + cfg + " --chain bad-link --out %/run", {"run.trace.csv", "run.metrics.json"}},
      {"sweep --config " + cfg + " --out %/sweep.csv", {"sweep.csv"}},
      {"sample-log --tpm " + (kData / "bad-link.json").string() + " --count 100000 --seed 7 --out %/log.csv", {"log.csv"}},
      {"estimate %/log.csv --out %/estimate.json", {"estimate.json"}},
      {"counterexample --tpm " + ce + " --laplacians " + ce + " --out %/ce.csv", {"ce.csv"}},
  };
  for (const char* rep : {"a", "b"}) {
    const auto dir = work / rep;
    fs::create_directories(dir);
    for (const auto& [cmd, files] : commands) {
      std::string c = cmd;
      for (auto p = c.find('%'); p != std::string::npos; p = c.find('%')) c.replace(p, 1, dir.string());
      o.require(run_cli(c) == 0, "command runs: " + cmd.substr(0, cmd.find(' ')));
    }
  }
  std::size_t compared = 0;
  for (const auto& entry : commands)
    for (const auto& f : entry.second) {
      o.require(io::read_text(work / "a" / f) == io::read_text(work / "b" / f), f + " identical");
      ++compared;
    }
  o.detail << compared << " output files byte-identical across two runs";
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "v2x_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"AC1 Markov round trip", ac1},
      {"AC2 stationary correctness", ac2},
      {"AC3 connectivity oracle", ac3},
      {"AC4 spectral cross-validation", ac4},
      {"AC5 constant-mode and Bernoulli identities", ac5},
      {"AC6 drop period at desk scale", ac6},
      {"AC7 empirical mean-square consistency", ac7},
      {"AC8 five-vehicle convergence and degraded run", ac8},
      {"AC9 gap/chain sweep", ac9},
      {"AC10 epsilon-sweep crossing", [&](Outcome& o) { ac10(o, work); }},
      {"AC11 determinism", [&](Outcome& o) { ac11(o, work); }},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  fs::remove_all(work);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
