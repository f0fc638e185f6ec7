#include "v2x/errors.hpp"
#include "v2x/markov.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <random>

using namespace v2x;
using markov::TransitionMatrix;

namespace {

Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(rows.size(), rows.begin()->size());
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Eigen::MatrixXd random_stochastic(std::size_t n, std::uint64_t seed, double zero_fraction = 0.0) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) p(i, j) = (u(g) < zero_fraction && i != j) ? 0.0 : u(g) + 0.01;
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

// Oracle: pi from iterating a row vector many times from the uniform start.
Eigen::RowVectorXd power_pi(const Eigen::MatrixXd& p, int steps) {
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(p.rows(), 1.0 / p.rows());
  for (int k = 0; k < steps; ++k) pi = pi * p;
  return pi;
}

}  // namespace

TEST_CASE("validate accepts the identity") {
  CHECK(markov::validate(Eigen::MatrixXd::Identity(2, 2), 2).ok());
}

TEST_CASE("validate reports a row sum") {
  const auto r = markov::validate(mat({{0.9, 0.2}, {0.5, 0.5}}), 2);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].row == 0);
  CHECK_FALSE(r.violations[0].col.has_value());
  CHECK(r.violations[0].message == "row 0 sums to 1.1");
}

TEST_CASE("validate flags both out-of-range entries of a row") {
  const auto r = markov::validate(mat({{0.9, 0.1}, {-0.1, 1.1}}), 2);
  int entry_hits = 0;
  for (const auto& v : r.violations) {
    CHECK(v.row == 1);
    if (v.col) ++entry_hits;
  }
  CHECK(entry_hits == 2);
}

TEST_CASE("validate: shape and tolerance edges") {
  CHECK_FALSE(markov::validate(Eigen::MatrixXd::Identity(2, 2), 3).ok());
  CHECK_FALSE(markov::validate(Eigen::MatrixXd::Ones(2, 3) / 3.0, 2).ok());
  CHECK(markov::validate(mat({{1.0 - 5e-10, 0.0}, {1.0, -5e-13}}), 2).ok());
  CHECK_FALSE(markov::validate(mat({{1.0 + 5e-9, 0.0}, {0.5, 0.5}}), 2).ok());
  CHECK_THROWS_AS(TransitionMatrix::indexed(mat({{0.9, 0.2}, {0.5, 0.5}})), std::invalid_argument);
}

TEST_CASE("stationary distribution of a two-state chain") {
  const Eigen::MatrixXd p = mat({{0.9, 0.1}, {0.5, 0.5}});
  const auto pi = markov::stationary_distribution(TransitionMatrix::indexed(p)).pmf;
  CHECK(pi(0) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(pi(1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK((power_pi(p, 200).transpose() - pi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stationary distribution: symmetric chains") {
  const auto half = markov::stationary_distribution(TransitionMatrix::indexed(Eigen::MatrixXd::Constant(2, 2, 0.5)));
  CHECK(half.pmf(0) == doctest::Approx(0.5));
  const auto ten = markov::stationary_distribution(TransitionMatrix::indexed(Eigen::MatrixXd::Constant(10, 10, 0.1)));
  for (int i = 0; i < 10; ++i) CHECK(ten.pmf(i) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("stationary distribution: periodic chains are accepted") {
  const auto pi = markov::stationary_distribution(TransitionMatrix::indexed(mat({{0, 1}, {1, 0}}))).pmf;
  CHECK(pi(0) == doctest::Approx(0.5));
}

TEST_CASE("stationary distribution rejects reducible chains and names the states") {
  const auto p = TransitionMatrix::indexed(mat({{1, 0, 0}, {0, 0.5, 0.5}, {0, 0.5, 0.5}}));
  CHECK_FALSE(markov::is_irreducible(p));
  try {
    markov::stationary_distribution(p);
    FAIL("expected ReducibleChainError");
  } catch (const ReducibleChainError& e) {
    CHECK(e.unreachable() == std::vector<std::size_t>{1, 2});
  }
}

TEST_CASE("invariant distribution handles transient states, rejects two closed classes") {
  const auto uni = TransitionMatrix::indexed(mat({{1, 0}, {0.3, 0.7}}));
  const auto pi = markov::invariant_distribution(uni).pmf;
  CHECK(pi(0) == doctest::Approx(1.0));
  CHECK(pi(1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(markov::invariant_distribution(TransitionMatrix::indexed(Eigen::MatrixXd::Identity(2, 2))),
                  ReducibleChainError);
}

TEST_CASE("stationary property on random chains") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = TransitionMatrix::indexed(random_stochastic(2 + s % 9, s, 0.3));
    if (!markov::is_irreducible(p)) continue;
    const auto pi = markov::stationary_distribution(p).pmf;
    CHECK((pi.transpose() * p.probs() - pi.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(pi.minCoeff() >= 0.0);
    CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("n_step examples") {
  const auto p = TransitionMatrix::indexed(mat({{0.9, 0.1}, {0.5, 0.5}}));
  CHECK(markov::n_step(p, 1).probs() == p.probs());
  CHECK(markov::n_step(TransitionMatrix::indexed(mat({{0, 1}, {1, 0}})), 2).probs() == Eigen::MatrixXd::Identity(2, 2));
  const auto p50 = markov::n_step(p, 50).probs();
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(p50(i, 0) - 5.0 / 6.0) < 1e-8);
    CHECK(std::abs(p50(i, 1) - 1.0 / 6.0) < 1e-8);
  }
  CHECK_THROWS(markov::n_step(p, 0));
}

TEST_CASE("n_step semigroup, stationarity and validity") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = TransitionMatrix::indexed(random_stochastic(3 + s % 6, 100 + s));
    for (std::size_t a = 1; a <= 5; ++a) {
      for (std::size_t b = 1; b <= 4; ++b) {
        const auto lhs = markov::n_step(p, a + b).probs();
        const Eigen::MatrixXd rhs = markov::n_step(p, a).probs() * markov::n_step(p, b).probs();
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
    // Oracle: plain repeated multiplication.
    Eigen::MatrixXd direct = p.probs();
    for (int k = 1; k < 7; ++k) direct = direct * p.probs();
    CHECK((markov::n_step(p, 7).probs() - direct).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(markov::validate(markov::n_step(p, 13)).ok());
    const auto pi = markov::stationary_distribution(p).pmf;
    for (std::size_t k : {2, 5, 17})
      CHECK((markov::stationary_distribution(markov::n_step(p, k)).pmf - pi).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("sample_path trivial chains") {
  const auto eye = TransitionMatrix::indexed(Eigen::MatrixXd::Identity(5, 5));
  const auto path = markov::sample_path(eye, 100, std::size_t{3}, 9);
  CHECK(path.indices.size() == 100);
  for (auto s : path.indices) CHECK(s == 3);
  const auto swap = markov::sample_path(TransitionMatrix::indexed(mat({{0, 1}, {1, 0}})), 4, std::size_t{0}, 1);
  CHECK(swap.indices == std::vector<std::size_t>{0, 1, 0, 1});
  CHECK_THROWS_AS(markov::sample_path(eye, 10, std::size_t{5}, 1), std::invalid_argument);
}

TEST_CASE("sample_path is deterministic per seed and frequencies converge") {
  const Eigen::MatrixXd pm = mat({{0.9, 0.1}, {0.5, 0.5}});
  const auto p = TransitionMatrix::indexed(pm);
  const auto init = markov::stationary_distribution(p);
  const auto a = markov::sample_path(p, 1000000, init, 42);
  const auto b = markov::sample_path(p, 1000000, init, 42);
  CHECK(a.indices == b.indices);
  CHECK(a.seed == 42);
  CHECK(markov::sample_path(p, 1000, init, 43).indices != std::vector<std::size_t>(a.indices.begin(), a.indices.begin() + 1000));

  // Oracle: direct counting.
  double c[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t k = 1; k < a.indices.size(); ++k) c[a.indices[k - 1]][a.indices[k]] += 1;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(c[i][j] / (c[i][0] + c[i][1]) - pm(i, j)) < 0.005);
}

TEST_CASE("estimate_tpm examples") {
  const std::vector<std::size_t> alt{0, 1, 0, 1, 0};
  const auto est = markov::estimate_tpm(alt, 2);
  CHECK(est.tpm.probs() == mat({{0, 1}, {1, 0}}));
  CHECK(est.unvisited_rows.empty());

  const std::vector<std::size_t> stuck{0, 0, 0, 0};
  const auto e2 = markov::estimate_tpm(stuck, 2);
  CHECK(e2.tpm.probs() == mat({{1, 0}, {0.5, 0.5}}));
  CHECK(e2.unvisited_rows == std::vector<std::size_t>{1});

  const auto e3 = markov::estimate_tpm(stuck, 2, 1.0);
  CHECK(e3.tpm(0, 0) == doctest::Approx(4.0 / 5.0));
  CHECK(e3.tpm(1, 0) == doctest::Approx(0.5));
  CHECK(e3.unvisited_rows.empty());

  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(markov::estimate_tpm(one, 2), std::invalid_argument);
  const std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(markov::estimate_tpm(bad, 2), std::invalid_argument);
  CHECK_THROWS_AS(markov::estimate_tpm(alt, 2, -1.0), std::invalid_argument);
}

TEST_CASE("round trip: sample then re-estimate a 10-state chain") {
  const auto p = TransitionMatrix::indexed(random_stochastic(10, 7));
  const auto path = markov::sample_path(p, 1000000, markov::stationary_distribution(p), 11);
  const auto est = markov::estimate_tpm(path.indices, 10);
  CHECK((est.tpm.probs() - p.probs()).cwiseAbs().maxCoeff() < 0.01);
  CHECK(markov::validate(est.tpm).ok());
}
