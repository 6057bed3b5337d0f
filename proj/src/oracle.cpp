#include "nullctl/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace nullctl {

namespace {

constexpr double kGradTol = 1e-10;
constexpr long kMaxIters = 200000;

struct Eval {
  double value = 0.0;
  double scale = 0.0;  // sum of |term| magnitudes
  Vector grad;
};

}  // namespace

Oracle::Oracle(const SemidiscreteSystem& system, DualParameters params, int intervals)
    : system_(system), params_(params), intervals_(intervals) {
  if (system.state_dim() > 50) {
    throw std::invalid_argument("system: oracle requires state dimension <= 50");
  }
  if (intervals < 2 || intervals % 2 != 0) {
    throw std::invalid_argument("intervals: composite Simpson needs an even count >= 2");
  }
  dt_ = system.horizon / intervals;
  weights_.resize(static_cast<std::size_t>(intervals) + 1);
  for (int k = 0; k <= intervals; ++k) {
    const bool edge = k == 0 || k == intervals;
    weights_[static_cast<std::size_t>(k)] = edge ? dt_ / 3.0 : (k % 2 == 1 ? 4.0 : 2.0) * dt_ / 3.0;
  }
  step_fwd_ = (dt_ * system.a).exp();
  step_adj_ = (dt_ * system.a.transpose()).exp();
  terminal_ = (system.horizon * system.a).exp();

  // Null-controllability gate: the p = 2 Gramian must be safely nonsingular.
  const auto n = system.state_dim();
  Matrix gram = Matrix::Zero(n, n);
  Matrix flow_b = system.b;
  for (int k = 0; k <= intervals; ++k) {
    gram.noalias() += weights_[static_cast<std::size_t>(k)] * (flow_b * flow_b.transpose());
    if (k < intervals) flow_b = step_fwd_ * flow_b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (gram + gram.transpose()));
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("system: Gramian eigendecomposition failed");
  }
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(n - 1);
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw std::invalid_argument(
        "system: p = 2 Gramian is numerically singular (not null controllable at tolerance)");
  }
}

Matrix Oracle::adjoint_observations(const Vector& psi) const {
  Matrix obs(system_.control_dim(), intervals_ + 1);
  Vector w = psi;
  obs.col(0) = system_.b.transpose() * w;
  for (int k = 1; k <= intervals_; ++k) {
    w = step_adj_ * w;
    obs.col(k) = system_.b.transpose() * w;
  }
  return obs;
}

double Oracle::unpenalized_j(const Vector& psi, const Vector& y0) const {
  if (psi.size() != system_.state_dim() || y0.size() != system_.state_dim()) {
    throw std::invalid_argument("psi/y0: dimension does not match the system state");
  }
  const Matrix obs = adjoint_observations(psi);
  double integral = 0.0;
  for (int k = 0; k <= intervals_; ++k) {
    integral += weights_[static_cast<std::size_t>(k)] * std::pow(obs.col(k).norm(), params_.p);
  }
  return integral / params_.p + y0.dot(terminal_.transpose() * psi);
}

Vector Oracle::unpenalized_grad(const Vector& psi, const Vector& y0) const {
  const Matrix obs = adjoint_observations(psi);
  Vector acc = system_.b * (weights_.back() * p_power_map(obs.col(intervals_), params_.p));
  for (int k = intervals_ - 1; k >= 0; --k) {
    acc = step_fwd_ * acc +
          system_.b * (weights_[static_cast<std::size_t>(k)] * p_power_map(obs.col(k), params_.p));
  }
  return acc + terminal_ * y0;
}

Oracle::DualMinimum Oracle::dual_value(const Vector& y0) const {
  if (y0.size() != system_.state_dim()) {
    throw std::invalid_argument("y0: dimension does not match the system state");
  }
  auto eval = [this, &y0](const Vector& psi) {
    const Matrix obs = adjoint_observations(psi);
    double integral = 0.0;
    for (int k = 0; k <= intervals_; ++k) {
      integral += weights_[static_cast<std::size_t>(k)] * std::pow(obs.col(k).norm(), params_.p);
    }
    Eval e;
    const double lin = y0.dot(terminal_.transpose() * psi);
    e.value = integral / params_.p + lin;
    e.scale = std::abs(integral / params_.p) + std::abs(lin);
    e.grad = unpenalized_grad(psi, y0);
    return e;
  };

  Vector psi = Vector::Zero(system_.state_dim());
  Eval cur = eval(psi);
  double alpha = 1.0;
  for (long iter = 0; iter < kMaxIters; ++iter) {
    const double gn = cur.grad.norm();
    if (gn <= kGradTol) return {cur.value, psi};

    double a = alpha;
    bool accepted = false;
    Vector cand;
    Eval next;
    for (int bt = 0; bt < 64; ++bt) {
      cand = psi - a * cur.grad;
      next = eval(cand);
      const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (cur.scale + next.scale);
      if (std::isfinite(next.value) && next.value <= cur.value - 1e-4 * a * gn * gn + noise) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) {
      throw std::runtime_error("oracle: dual minimization stalled before reaching tolerance");
    }
    const Vector s = cand - psi;
    const Vector y = next.grad - cur.grad;
    const double sy = s.dot(y);
    const double yy = y.squaredNorm();
    alpha = (std::isfinite(sy) && std::isfinite(yy) && sy > 0.0 && yy > 0.0) ? sy / yy : a;
    psi = cand;
    cur = next;
  }
  if (cur.grad.norm() <= kGradTol) return {cur.value, psi};
  throw std::runtime_error("oracle: dual minimization hit the iteration budget");
}

DualityReport Oracle::duality_gap(const Vector& y0) const {
  if (params_.p <= 1.0) {
    throw std::invalid_argument("p: the duality audit requires p > 1");
  }
  const DualMinimum dm = dual_value(y0);
  const Matrix obs = adjoint_observations(dm.psi);
  const int big_k = intervals_;

  DualityReport report;
  report.dual_value = dm.value;
  report.times.resize(static_cast<std::size_t>(big_k) + 1);
  report.control_samples.resize(system_.control_dim(), big_k + 1);

  // u(t_k) = ||obs(T - t_k)||^{p-2} obs(T - t_k); uniform grid mirrors exactly.
  double primal_integral = 0.0;
  double young = 0.0;
  for (int k = 0; k <= big_k; ++k) {
    report.times[static_cast<std::size_t>(k)] = k * dt_;
    const Vector u = p_power_map(obs.col(big_k - k), params_.p);
    report.control_samples.col(k) = u;
    const double uq = std::pow(u.norm(), params_.q);
    const double op = std::pow(obs.col(big_k - k).norm(), params_.p);
    primal_integral += weights_[static_cast<std::size_t>(k)] * uq;
    young = std::max(young, std::abs(uq - op));
  }
  report.primal_value = primal_integral / params_.q;
  report.gap = report.primal_value + report.dual_value;
  report.young_equality_residual = young;

  // Forward drive: y(T) = e^{TA} y0 + sum_k w_k e^{(T-t_k)A} B u_k.
  Vector acc = system_.b * (weights_.back() * report.control_samples.col(0));
  for (int j = big_k - 1; j >= 0; --j) {
    acc = step_fwd_ * acc + system_.b * (weights_[static_cast<std::size_t>(j)] *
                                         report.control_samples.col(big_k - j));
  }
  const Vector y_terminal = terminal_ * y0 + acc;
  report.steering_residual = y_terminal.norm();
  report.steered = report.steering_residual <= 1e-6 * y0.norm() ||
                   (y0.norm() == 0.0 && report.steering_residual == 0.0);
  return report;
}

Vector p2_gramian_solve(const SemidiscreteSystem& system, const Propagator& prop,
                        const DualParameters& params, const Vector& y0) {
  if (std::abs(params.p - 2.0) > 1e-14) {
    throw std::invalid_argument("p: p2_gramian_solve requires p = 2");
  }
  if (y0.size() != system.state_dim()) {
    throw std::invalid_argument("y0: dimension does not match the system state");
  }
  const QuadGrid grid = make_quad_grid(system.horizon, params.quad_nodes);
  const auto n = system.state_dim();
  Matrix gram = Matrix::Zero(n, n);
  Matrix eb(n, system.control_dim());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (Eigen::Index c = 0; c < system.control_dim(); ++c) {
      eb.col(c) = prop.apply(grid.nodes[k], system.b.col(c));
    }
    gram.noalias() += grid.weights[k] * (eb * eb.transpose());
  }
  gram = 0.5 * (gram + gram.transpose());
  if (params.penalty) {
    gram.diagonal().array() += std::pow(system.h, params.beta);
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("gramian: eigendecomposition failed");
  }
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(n - 1);
  if (!(lo > 0.0) || lo <= hi * 1e-14) {
    throw std::runtime_error("gramian: matrix is numerically singular");
  }
  return gram.ldlt().solve(Vector(-prop.apply(system.horizon, y0)));
}

}  // namespace nullctl
