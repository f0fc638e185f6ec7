#include "v2x/mjls.hpp"

#include "v2x/errors.hpp"
#include "v2x/scc.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace v2x::mjls {

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

Eigen::MatrixXd principal(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

// Stacked identity matrices: an interior point of the PSD cone.
Eigen::VectorXd identity_start(std::size_t modes, Eigen::Index n) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(modes) * n * n);
  for (std::size_t i = 0; i < modes; ++i)
    for (Eigen::Index d = 0; d < n; ++d) x(static_cast<Eigen::Index>(i) * n * n + d * n + d) = 1.0;
  return x;
}

void symmetrize_blocks(Eigen::VectorXd& x, Eigen::Index n) {
  const Eigen::Index n2 = n * n;
  for (Eigen::Index off = 0; off + n2 <= x.size(); off += n2) {
    Eigen::Map<Eigen::MatrixXd> block(x.data() + off, n, n);
    const Eigen::MatrixXd sym = 0.5 * (block + block.transpose());
    block = sym;
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::automatic: return "auto";
    case Method::dense: return "dense";
    case Method::power: return "power";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::consistent: return "consistent";
    case Verdict::inconsistent: return "inconsistent";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

MjlsModel::MjlsModel(std::vector<Eigen::MatrixXd> modes, markov::TransitionMatrix chain)
    : modes_(std::move(modes)), chain_(std::move(chain)) {
  if (modes_.empty()) throw std::invalid_argument("MJLS needs at least one mode");
  const Eigen::Index n = modes_.front().rows();
  if (n == 0) throw std::invalid_argument("MJLS modes must be nonempty");
  for (const auto& a : modes_)
    if (a.rows() != n || a.cols() != n)
      throw std::invalid_argument("all MJLS modes must be square with the same dimension");
  if (chain_.size() != modes_.size())
    throw std::invalid_argument("chain has " + std::to_string(chain_.size()) + " states for " +
                                std::to_string(modes_.size()) + " modes");
}

StabilityOperator::StabilityOperator(MjlsModel model, std::size_t dense_cap)
    : model_(std::move(model)), dense_cap_(dense_cap) {
  const std::size_t n = model_.state_dimension();
  const std::size_t modes = model_.mode_count();
  if (n > kImplicitCap / n || modes > kImplicitCap / (n * n))
    throw std::length_error("stability operator dimension exceeds the implicit-operator bound");
  dimension_ = modes * n * n;
}

StabilityOperator build_operator(const MjlsModel& model, std::size_t dense_cap) {
  return StabilityOperator(model, dense_cap);
}

Eigen::MatrixXd StabilityOperator::matrix() const {
  if (!is_dense())
    throw std::length_error("operator of dimension " + std::to_string(dimension_) +
                            " exceeds the dense cap " + std::to_string(dense_cap_));
  const auto& p = model_.chain().probs();
  const auto n2 = static_cast<Eigen::Index>(model_.state_dimension() * model_.state_dimension());
  const auto modes = static_cast<Eigen::Index>(model_.mode_count());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(modes * n2, modes * n2);
  for (Eigen::Index i = 0; i < modes; ++i) {
    const Eigen::MatrixXd k = kron(model_.modes()[i], model_.modes()[i]);
    for (Eigen::Index j = 0; j < modes; ++j)
      if (p(i, j) != 0.0) s.block(j * n2, i * n2, n2, n2) = p(i, j) * k;
  }
  return s;
}

void StabilityOperator::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
  const auto n = static_cast<Eigen::Index>(model_.state_dimension());
  const Eigen::Index n2 = n * n;
  const auto modes = static_cast<Eigen::Index>(model_.mode_count());
  const auto& p = model_.chain().probs();
  out.setZero(in.size());
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < modes; ++i) {
    const auto& a = model_.modes()[i];
    Eigen::Map<const Eigen::MatrixXd> x(in.data() + i * n2, n, n);
    w.noalias() = a * x * a.transpose();
    for (Eigen::Index j = 0; j < modes; ++j) {
      if (p(i, j) == 0.0) continue;
      Eigen::Map<Eigen::MatrixXd> y(out.data() + j * n2, n, n);
      y += p(i, j) * w;
    }
  }
}

std::vector<Eigen::MatrixXd> StabilityOperator::diagonal_blocks() const {
  const auto n = model_.state_dimension();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t a = 0; a < n; ++a)
      for (const auto& m : model_.modes())
        if (m(a, c) != 0.0) {
          adj[c].push_back(a);
          break;
        }
  const auto comps = detail::strongly_connected_components(adj);

  const auto& p = model_.chain().probs();
  const auto modes = static_cast<Eigen::Index>(model_.mode_count());
  std::vector<Eigen::MatrixXd> blocks;
  for (std::size_t c1 = 0; c1 < comps.size(); ++c1) {
    for (std::size_t c2 = c1; c2 < comps.size(); ++c2) {
      const auto s = static_cast<Eigen::Index>(comps[c1].size() * comps[c2].size());
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(modes * s, modes * s);
      for (Eigen::Index i = 0; i < modes; ++i) {
        const auto& a = model_.modes()[i];
        const Eigen::MatrixXd k = kron(principal(a, comps[c2]), principal(a, comps[c1]));
        for (Eigen::Index j = 0; j < modes; ++j)
          if (p(i, j) != 0.0) block.block(j * s, i * s, s, s) = p(i, j) * k;
      }
      blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("spectral radius needs a square matrix");
  if (m.rows() == 0) return 0.0;
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  if (solver.info() != Eigen::Success)
    throw NonConvergenceError("dense eigensolver failed", std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN(), 0);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

SpectralResult power_spectral_radius(const LinearMap& apply, Eigen::VectorXd start,
                                     double tolerance, std::size_t max_iter,
                                     const std::function<void(Eigen::VectorXd&)>& restart,
                                     std::size_t restart_interval) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  double norm = start.norm();
  if (norm == 0.0) throw std::invalid_argument("power iteration needs a nonzero start vector");
  Eigen::VectorXd x = start / norm;
  Eigen::VectorXd y(x.size()), w(x.size());

  double best_estimate = std::numeric_limits<double>::quiet_NaN();
  double best_residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iter; ++it) {
    apply(x, y);
    const double ny = y.norm();
    if (ny == 0.0) return {0.0, Method::power, it, 0.0, 1};
    const double lambda = x.dot(y);
    const double r1 = (y - lambda * x).norm() / ny;
    if (r1 <= tolerance) return {std::abs(lambda), Method::power, it, r1, 1};
    if (r1 < best_residual) {
      best_residual = r1;
      best_estimate = std::abs(lambda);
    }

    apply(y, w);
    const double nw = w.norm();
    if (nw == 0.0) return {0.0, Method::power, it, 0.0, 1};

    // w ~ c1 y + c0 x; the roots of z^2 - c1 z - c0 are the dominant pair.
    Eigen::Matrix2d g;
    g << y.dot(y), y.dot(x), x.dot(y), x.dot(x);
    const double det = g.determinant();
    if (det > 1e-12 * g(0, 0) * g(1, 1)) {
      const Eigen::Vector2d c = g.inverse() * Eigen::Vector2d(w.dot(y), w.dot(x));
      const double r2 = (w - c(0) * y - c(1) * x).norm() / nw;
      const double disc = c(0) * c(0) + 4.0 * c(1);
      const double rho2 = disc >= 0.0
                              ? std::max(std::abs(0.5 * (c(0) + std::sqrt(disc))),
                                         std::abs(0.5 * (c(0) - std::sqrt(disc))))
                              : std::sqrt(-c(1));
      if (r2 <= tolerance) return {rho2, Method::power, it, r2, 1};
      if (r2 < best_residual) {
        best_residual = r2;
        best_estimate = rho2;
      }
    }

    x = w / nw;
    if (restart && restart_interval > 0 && it % restart_interval == 0) {
      restart(x);
      norm = x.norm();
      if (norm == 0.0) return {0.0, Method::power, it, 0.0, 1};
      x /= norm;
    }
  }
  throw NonConvergenceError("power iteration did not converge in " + std::to_string(max_iter) +
                                " iterations",
                            best_estimate, best_residual, max_iter);
}

SpectralResult spectral_radius(const StabilityOperator& op, const SpectralOptions& options) {
  Method method = options.method;
  if (method == Method::automatic) method = op.is_dense() ? Method::dense : Method::power;

  if (method == Method::dense) {
    std::vector<Eigen::MatrixXd> blocks;
    if (options.reduce)
      blocks = op.diagonal_blocks();
    else
      blocks.push_back(op.matrix());
    SpectralResult result{0.0, Method::dense, 0, 0.0, blocks.size()};
    for (const auto& b : blocks) result.value = std::max(result.value, spectral_radius(b));
    return result;
  }

  const auto n = static_cast<Eigen::Index>(op.model().state_dimension());
  return power_spectral_radius([&op](const Eigen::VectorXd& in, Eigen::VectorXd& out) { op.apply(in, out); },
                               identity_start(op.model().mode_count(), n), options.tolerance,
                               options.max_iter,
                               [n](Eigen::VectorXd& x) { symmetrize_blocks(x, n); });
}

double bernoulli_radius(const MjlsModel& model, const SpectralOptions& options) {
  const auto pi = markov::stationary_distribution(model.chain()).pmf;
  const auto n = static_cast<Eigen::Index>(model.state_dimension());
  if (static_cast<std::size_t>(n * n) <= kDefaultDenseCap && options.method != Method::power) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n * n, n * n);
    for (std::size_t i = 0; i < model.mode_count(); ++i)
      if (pi(i) > 0.0) mean += pi(i) * kron(model.modes()[i], model.modes()[i]);
    return spectral_radius(mean);
  }
  const auto apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    Eigen::Map<const Eigen::MatrixXd> x(in.data(), n, n);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < model.mode_count(); ++i)
      if (pi(i) > 0.0) y += pi(i) * (model.modes()[i] * x * model.modes()[i].transpose());
    out = Eigen::Map<const Eigen::VectorXd>(y.data(), n * n);
  };
  return power_spectral_radius(apply, identity_start(1, n), options.tolerance, options.max_iter,
                               [n](Eigen::VectorXd& x) { symmetrize_blocks(x, n); })
      .value;
}

MjlsModel dropped_message_variant(const MjlsModel& model, std::size_t n0) {
  if (n0 == 0) throw std::invalid_argument("drop period must be at least 1");
  if (n0 == 1) return model;
  return MjlsModel(model.modes(), markov::n_step(model.chain(), n0));
}

DropPeriodResult find_drop_period(const MjlsModel& model, std::size_t max_n,
                                  const SpectralOptions& options) {
  DropPeriodResult result;
  std::optional<Eigen::MatrixXd> projector;
  try {
    const auto pi = markov::stationary_distribution(model.chain()).pmf;
    projector = Eigen::VectorXd::Ones(pi.size()) * pi.transpose();
  } catch (const ReducibleChainError&) {
  }

  const auto& p = model.chain().probs();
  Eigen::MatrixXd pn = p;
  const auto radius_for = [&](const Eigen::MatrixXd& power) {
    MjlsModel variant(model.modes(), markov::TransitionMatrix(model.chain().states(), power));
    return spectral_radius(build_operator(variant), options).value;
  };
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (n > 1) pn = pn * p;
    const double rho = radius_for(pn);
    result.radii.push_back(rho);
    if (rho < 1.0) {
      result.n0 = n;
      result.radius_at_n0 = rho;
      result.next_also_stable = radius_for(pn * p) < 1.0;
      return result;
    }
    // P^n has reached the stationary projector; later powers give the same rho.
    if (projector && (pn - *projector).cwiseAbs().maxCoeff() < 1e-13) break;
  }
  return result;
}

EmpiricalReport empirical_ms_check(const MjlsModel& model, const EmpiricalOptions& options,
                                   const SpectralOptions& spectral) {
  if (options.trajectories < 100) throw std::invalid_argument("need at least 100 trajectories");
  if (options.horizon < 4) throw std::invalid_argument("horizon too short to fit a rate");
  EmpiricalReport report;
  report.rho_s = spectral_radius(build_operator(model), spectral).value;

  const auto init = markov::invariant_distribution(model.chain()).pmf;
  const auto n = static_cast<Eigen::Index>(model.state_dimension());
  const std::size_t count = options.trajectories;
  const double uniform = 1.0 / static_cast<double>(count);

  // Each particle carries Z_k = A_{theta_{k-1}} ... A_{theta_0} Z_0 with
  // Z_0 = I / sqrt(n), so |Z_k|_F^2 is E|z_k|^2 over a unit z_0 with isotropic
  // direction given the mode path. Particles are kept normalized; the growth
  // goes into weights, and low effective sample size triggers systematic
  // resampling. The running log of the mean weight is an unbiased estimate
  // of log E|z_k|^2 that stays usable long after plain averaging would be
  // dominated by a handful of paths.
  markov::ChainSampler sampler(model.chain(), options.seed);
  std::mt19937_64 resample_engine(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::MatrixXd> state(count, Eigen::MatrixXd::Identity(n, n) / std::sqrt(static_cast<double>(n)));
  std::vector<Eigen::MatrixXd> spare(count);
  std::vector<std::size_t> mode(count), spare_mode(count);
  std::vector<double> weight(count, uniform);
  for (auto& m : mode) m = sampler.draw(init);

  std::vector<double> log_ms(options.horizon + 1, 0.0);
  double log_scale = 0.0;
  for (std::size_t k = 1; k <= options.horizon; ++k) {
    double total = 0.0;
    for (std::size_t t = 0; t < count; ++t) {
      state[t] = model.modes()[mode[t]] * state[t];
      const double growth = state[t].squaredNorm();
      if (growth > 0.0) state[t] /= std::sqrt(growth);
      weight[t] *= growth;
      total += weight[t];
      mode[t] = sampler.next(mode[t]);
    }
    if (!(total > 0.0)) {
      // Every path hit the zero matrix: E|z_j|^2 = 0 from here on.
      std::fill(log_ms.begin() + static_cast<std::ptrdiff_t>(k), log_ms.end(), -std::numeric_limits<double>::infinity());
      break;
    }
    log_scale += std::log(total);
    log_ms[k] = log_scale;
    double square_sum = 0.0;
    for (auto& w : weight) {
      w /= total;
      square_sum += w * w;
    }
    if (1.0 / square_sum < 0.5 * static_cast<double>(count)) {
      std::uniform_real_distribution<double> offset(0.0, uniform);
      double position = offset(resample_engine), cumulative = weight[0];
      std::size_t source = 0;
      for (std::size_t t = 0; t < count; ++t) {
        while (position > cumulative && source + 1 < count) cumulative += weight[++source];
        spare[t] = state[source];
        spare_mode[t] = mode[source];
        position += uniform;
      }
      state.swap(spare);
      mode.swap(spare_mode);
      std::fill(weight.begin(), weight.end(), uniform);
    }
  }
  report.mean_square.resize(log_ms.size());
  for (std::size_t k = 0; k < log_ms.size(); ++k) report.mean_square[k] = std::exp(log_ms[k]);

  // Least squares slope of log E|z_k|^2 over the tail.
  const auto first = static_cast<std::size_t>(options.fit_begin * static_cast<double>(options.horizon));
  double sk = 0, sy = 0, skk = 0, sky = 0, points = 0;
  for (std::size_t k = first; k <= options.horizon; ++k) {
    if (!std::isfinite(log_ms[k])) continue;
    const double kk = static_cast<double>(k), y = log_ms[k];
    sk += kk;
    sy += y;
    skk += kk * kk;
    sky += kk * y;
    points += 1;
  }
  report.fitted_rate = points >= 2 ? std::exp((points * sky - sk * sy) / (points * skk - sk * sk)) : 0.0;
  report.diverged = report.fitted_rate > 1.0;

  if (report.rho_s < 1.0)
    report.verdict = std::abs(report.fitted_rate - report.rho_s) <= kRateTolerance
                         ? Verdict::consistent
                         : Verdict::inconsistent;
  else if (report.rho_s > kDivergenceThreshold)
    report.verdict = report.diverged ? Verdict::consistent : Verdict::inconsistent;
  else
    report.verdict = Verdict::inconclusive;

  const double zeta = report.rho_s + kZetaMargin;
  if (zeta < 1.0) {
    double alpha = 1.0;
    double scale = 1.0;
    for (double m : report.mean_square) {
      if (std::isfinite(m)) alpha = std::max(alpha, m / scale);
      scale *= zeta;
    }
    report.alpha = alpha;
    report.zeta = zeta;
  }
  return report;
}

std::vector<Eigen::MatrixXd> first_order_modes(const std::vector<Eigen::MatrixXd>& laplacians,
                                               double epsilon) {
  if (laplacians.empty()) throw std::invalid_argument("need at least one Laplacian");
  const Eigen::Index n = laplacians.front().rows();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd centering = eye - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  std::vector<Eigen::MatrixXd> modes;
  for (const auto& l : laplacians) {
    if (l.rows() != n || l.cols() != n)
      throw std::invalid_argument("Laplacians must be square with equal dimension");
    modes.push_back(centering * (eye - epsilon * l));
  }
  return modes;
}

std::vector<EpsilonPoint> epsilon_sweep(const std::vector<Eigen::MatrixXd>& laplacians,
                                        const markov::TransitionMatrix& tpm,
                                        const std::vector<double>& epsilons,
                                        const SpectralOptions& options) {
  std::vector<EpsilonPoint> out;
  out.reserve(epsilons.size());
  for (double eps : epsilons) {
    MjlsModel model(first_order_modes(laplacians, eps), tpm);
    out.push_back({eps, spectral_radius(build_operator(model), options).value,
                   bernoulli_radius(model, options)});
  }
  return out;
}

StabilityReport analyze(const MjlsModel& model, const AnalysisOptions& options) {
  const auto op = build_operator(model, options.dense_cap);
  const auto sr = spectral_radius(op, options.spectral);

  StabilityReport report;
  report.rho_s = sr.value;
  report.stable = sr.value < 1.0;
  report.method = sr.method;
  report.tolerance = sr.method == Method::power ? options.spectral.tolerance
                                                : std::numeric_limits<double>::epsilon();
  report.operator_dimension = op.dimension();
  report.mode_count = model.mode_count();
  report.blocks = sr.blocks;

  try {
    report.rho_bernoulli = bernoulli_radius(model, options.spectral);
  } catch (const ReducibleChainError& e) {
    report.notes.push_back(std::string("no Bernoulli radius: ") + e.what());
  }

  if (report.stable) {
    report.n0 = 1;
  } else {
    const auto drop = find_drop_period(model, options.max_drop_period, options.spectral);
    report.n0 = drop.n0;
    if (!drop.n0) report.notes.push_back("no drop period up to " + std::to_string(options.max_drop_period));
  }

  if (options.run_empirical && report.stable) {
    const auto emp = empirical_ms_check(model, options.empirical, options.spectral);
    report.alpha = emp.alpha;
    report.zeta = emp.zeta;
    report.notes.push_back("empirical rate " + std::to_string(emp.fitted_rate) + " (" +
                           to_string(emp.verdict) + ")");
  }
  return report;
}

}  // namespace v2x::mjls
