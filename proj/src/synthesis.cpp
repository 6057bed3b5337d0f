#include "nullctl/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nullctl {

namespace {

// Reconstructs the quadrature grid a control was sampled on and verifies the
// sample times node-for-node.
QuadGrid matching_grid(const SemidiscreteSystem& system, const ControlSignal& control) {
  const auto m = static_cast<std::size_t>(control.size());
  if (control.times.size() != m) {
    throw std::invalid_argument("control: sample count does not match the time grid");
  }
  if (m == 0 || m % 4 != 0) {
    throw std::invalid_argument("control: time grid is not a four-point panel quadrature");
  }
  if (control.values.rows() != system.control_dim()) {
    throw std::invalid_argument("control: sample dimension does not match the system input");
  }
  const QuadGrid grid = make_quad_grid(system.horizon, static_cast<int>(m / 4));
  const double tol = 1e-12 * std::max(1.0, system.horizon);
  for (std::size_t k = 0; k < m; ++k) {
    if (std::abs(control.times[k] - grid.nodes[k]) > tol) {
      std::ostringstream msg;
      msg << "control: time grid mismatch at node " << k << " (got " << control.times[k]
          << ", quadrature has " << grid.nodes[k] << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  if (!control.values.allFinite()) {
    throw std::invalid_argument("control: samples contain non-finite entries");
  }
  return grid;
}

}  // namespace

ControlSignal build_control(const SemidiscreteSystem& system, const Propagator& prop,
                            const DualParameters& params, const Vector& phi) {
  const DualEngine engine(system, prop, params);
  const Matrix obs = engine.observations(phi);  // col j: B^T e^{t_j A^T} phi
  const auto m = obs.cols();

  ControlSignal control;
  control.times = engine.grid().nodes;
  control.p = params.p;
  control.q = params.q;
  control.values.resize(obs.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    control.values.col(k) = p_power_map(obs.col(m - 1 - k), params.p);
  }
  return control;
}

Vector simulate_forward(const SemidiscreteSystem& system, const Propagator& prop,
                        const InitialData& init, const ControlSignal& control) {
  if (init.y0.size() != system.state_dim()) {
    throw std::invalid_argument("y0: dimension does not match the system state");
  }
  const QuadGrid grid = matching_grid(system, control);
  const auto m = control.size();

  // e^{(T-t_k)A} u_k summed over k equals e^{t_j A} u_{m-1-j} summed over j:
  // the panel rule is symmetric about T/2, so T - t_k is the mirrored node.
  Matrix coeffs(control.values.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    coeffs.col(j) =
        grid.weights[static_cast<std::size_t>(j)] * control.values.col(m - 1 - j);
  }
  Vector y = prop.apply(system.horizon, init.y0);
  y += prop.weighted_input_sum(grid.nodes, coeffs);
  if (!y.allFinite()) {
    throw std::runtime_error("simulate_forward: terminal state is non-finite");
  }
  return y;
}

SynthesisResult audit_identities(const SemidiscreteSystem& system, const DualParameters& params,
                                 SynthesisResult result) {
  const double p = params.p;
  if (p <= 1.0) {
    throw std::invalid_argument("p: the estimate audit requires p > 1");
  }
  if (result.phi.size() != system.state_dim() ||
      result.y_terminal.size() != system.state_dim()) {
    throw std::invalid_argument("result: phi and y_terminal must match the system state");
  }
  const QuadGrid grid = matching_grid(system, result.control);

  double lp = 0.0;
  double lq = 0.0;
  for (Eigen::Index k = 0; k < result.control.size(); ++k) {
    const double r = result.control.values.col(k).norm();
    const double w = grid.weights[static_cast<std::size_t>(k)];
    lp += w * std::pow(r, p);
    lq += w * std::pow(r, params.q);
  }
  result.lp_control_norm_p = lp;
  result.lq_control_norm_q = lq;

  const double hbeta = params.penalty ? std::pow(system.h, params.beta) : 0.0;
  result.terminal_residual = (result.y_terminal + hbeta * p_power_map(result.phi, p)).norm();

  // Smallest M with  lp <= M^{p/(p-1)} ||y0||^{p/(p-1)},
  //                  h^beta ||phi||^p <= M^{p/(p-1)} ||y0||^{p/(p-1)},
  //                  ||y(T)|| <= M^{1/(p-1)} h^{beta/p} ||y0||^{1/(p-1)}.
  EstimateAudit audit;
  audit.control_lp.lhs = lp;
  audit.penalty.lhs = hbeta * std::pow(result.phi.norm(), p);
  audit.terminal.lhs = result.y_terminal.norm();
  const double y0n = result.y0_norm;
  if (y0n > 0.0) {
    const double pe = p / (p - 1.0);
    const double m1 = std::pow(audit.control_lp.lhs, 1.0 / pe) / y0n;
    const double m2 = std::pow(audit.penalty.lhs, 1.0 / pe) / y0n;
    const double m3 = std::pow(
        audit.terminal.lhs / (std::pow(system.h, params.beta / p) * std::pow(y0n, 1.0 / (p - 1.0))),
        p - 1.0);
    audit.fitted_m = std::max({m1, m2, m3});
    audit.control_lp.rhs = std::pow(audit.fitted_m * y0n, pe);
    audit.penalty.rhs = audit.control_lp.rhs;
    audit.terminal.rhs = std::pow(audit.fitted_m, 1.0 / (p - 1.0)) *
                         std::pow(system.h, params.beta / p) * std::pow(y0n, 1.0 / (p - 1.0));
  }
  result.estimate_audit = audit;
  return result;
}

SynthesisResult run_synthesis(const SemidiscreteSystem& system, const Propagator& prop,
                              const DualParameters& params, const InitialData& init,
                              const OptimizerConfig& config) {
  const DualEngine engine(system, prop, params, init.y0);
  OptimizerResult opt = minimize_dual(engine, config);

  SynthesisResult result;
  result.phi = opt.phi;
  result.grad_norm = opt.grad_norm;
  result.iterations = opt.iterations;
  result.termination = opt.termination;
  result.diverged = opt.diverged;
  result.trace = std::move(opt.trace);
  result.y0_norm = std::sqrt(system.h) * init.y0.norm();
  result.control = build_control(system, prop, params, result.phi);
  result.y_terminal = simulate_forward(system, prop, init, result.control);
  return audit_identities(system, params, std::move(result));
}

ControlSignal resample_control(const ControlSignal& control, double horizon, int points) {
  if (points < 2) {
    throw std::invalid_argument("points: need at least two output samples");
  }
  if (control.size() == 0) {
    throw std::invalid_argument("control: cannot resample an empty signal");
  }
  ControlSignal out;
  out.p = control.p;
  out.q = control.q;
  out.times.resize(static_cast<std::size_t>(points));
  out.values.resize(control.values.rows(), points);
  const auto m = control.size();
  for (int i = 0; i < points; ++i) {
    const double t = horizon * static_cast<double>(i) / (points - 1);
    out.times[static_cast<std::size_t>(i)] = t;
    if (t <= control.times.front()) {
      out.values.col(i) = control.values.col(0);
    } else if (t >= control.times.back()) {
      out.values.col(i) = control.values.col(m - 1);
    } else {
      const auto it = std::upper_bound(control.times.begin(), control.times.end(), t);
      const auto hi = static_cast<Eigen::Index>(it - control.times.begin());
      const double t0 = control.times[static_cast<std::size_t>(hi - 1)];
      const double t1 = control.times[static_cast<std::size_t>(hi)];
      const double w = (t - t0) / (t1 - t0);
      out.values.col(i) = (1.0 - w) * control.values.col(hi - 1) + w * control.values.col(hi);
    }
  }
  return out;
}

}  // namespace nullctl
