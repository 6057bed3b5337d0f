#pragma once

#include "nullctl/optimize.hpp"

namespace nullctl {

/// Control sampled on the dual quadrature grid: values.col(k) approximates
/// u(t_k) = ||B^T e^{(T-t_k)A^T} phi||^{p-2} B^T e^{(T-t_k)A^T} phi.
struct ControlSignal {
  std::vector<double> times;  // strictly increasing, inside [0, horizon]
  Matrix values;              // n_u x times.size()
  double p = 2.0;
  double q = 2.0;

  [[nodiscard]] Eigen::Index size() const { return values.cols(); }
};

/// Left/right side of one a-priori estimate.
struct EstimatePair {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// The three cost estimates with M fitted per run as the smallest constant
/// satisfying all of
///   int ||u||^p        <= M^{p/(p-1)} ||y0||^{p/(p-1)},
///   h^beta ||phi||^p   <= M^{p/(p-1)} ||y0||^{p/(p-1)},
///   ||y(T)||           <= M^{1/(p-1)} h^{beta/p} ||y0||^{1/(p-1)}.
struct EstimateAudit {
  EstimatePair control_lp;
  EstimatePair penalty;
  EstimatePair terminal;
  double fitted_m = 0.0;
};

struct SynthesisResult {
  Vector phi;
  ControlSignal control;
  Vector y_terminal;
  double lp_control_norm_p = 0.0;   // int_0^T ||u||^p dt
  double lq_control_norm_q = 0.0;   // int_0^T ||u||^q dt
  double terminal_residual = 0.0;   // ||y(T) + h^beta ||phi||^{p-2} phi||
  EstimateAudit estimate_audit;
  double y0_norm = 0.0;             // sqrt(h)-weighted (grid L^2) norm of y0
  double grad_norm = 0.0;
  long iterations = 0;
  Termination termination = Termination::GradTolMet;
  bool diverged = false;
  std::vector<TraceRow> trace;
};

/// Samples the dual-minimizer control on the quadrature grid. The inner
/// observation at T - t_k is taken at the mirrored node t_{m-1-k}, which the
/// symmetric panel rule makes the same point, so the samples reuse the exact
/// flow evaluations of the dual functional.
[[nodiscard]] ControlSignal build_control(const SemidiscreteSystem& system, const Propagator& prop,
                                          const DualParameters& params, const Vector& phi);

/// Mild-solution terminal state y(T) = e^{TA} y0 + sum_k w_k e^{(T-t_k)A} B u_k
/// with the weights of the quadrature grid the control was sampled on.
/// Throws when the control's time grid is not that quadrature grid.
[[nodiscard]] Vector simulate_forward(const SemidiscreteSystem& system, const Propagator& prop,
                                      const InitialData& init, const ControlSignal& control);

/// Fills the norm integrals, the terminal-identity residual and the estimate
/// audit on a result that already has phi, control and y_terminal.
[[nodiscard]] SynthesisResult audit_identities(const SemidiscreteSystem& system,
                                               const DualParameters& params,
                                               SynthesisResult result);

/// Full pipeline: minimize the dual functional, reconstruct the control,
/// simulate forward, audit.
[[nodiscard]] SynthesisResult run_synthesis(const SemidiscreteSystem& system,
                                            const Propagator& prop, const DualParameters& params,
                                            const InitialData& init,
                                            const OptimizerConfig& config);

/// Piecewise-linear resample onto a uniform grid of `points` samples spanning
/// [0, horizon] (constant extension beyond the first/last node).
[[nodiscard]] ControlSignal resample_control(const ControlSignal& control, double horizon,
                                             int points);

}  // namespace nullctl
