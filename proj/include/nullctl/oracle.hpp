#pragma once

#include "nullctl/dual.hpp"

namespace nullctl {

/// Duality audit of one small dense system. Sign convention: the primal
/// value (1/q) int ||u||^q and the dual minimum J* cancel, so gap =
/// primal_value + dual_value vanishes at the optimum.
struct DualityReport {
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  std::vector<double> times;  // oracle grid the control was sampled on
  Matrix control_samples;     // n_u x times.size()
  double young_equality_residual = 0.0;  // max_k | ||u_k||^q - ||obs_k||^p |
  double steering_residual = 0.0;        // ||y(T)|| with the oracle control
  bool steered = false;                  // steering_residual <= 1e-6 ||y0||
};

/// Independent ground-truth engine for small dense systems: composite-Simpson
/// time quadrature and Pade matrix exponentials, sharing no code with the
/// production propagator/dual path. Rejects systems with state dimension
/// above 50 or a p = 2 controllability Gramian conditioned worse than 1e12.
class Oracle {
 public:
  Oracle(const SemidiscreteSystem& system, DualParameters params, int intervals = 2048);

  /// Minimum of the unpenalized dual functional
  ///   (1/p) int_0^T ||B^T e^{tA^T} psi||^p dt + <e^{TA^T} psi, y0>
  /// found by gradient descent to ||grad|| <= 1e-10.
  struct DualMinimum {
    double value = 0.0;
    Vector psi;
  };
  [[nodiscard]] DualMinimum dual_value(const Vector& y0) const;

  /// Full duality audit: optimal control from the dual minimizer, primal
  /// cost, gap, pointwise Young equality, terminal steering.
  [[nodiscard]] DualityReport duality_gap(const Vector& y0) const;

  [[nodiscard]] double unpenalized_j(const Vector& psi, const Vector& y0) const;

 private:
  [[nodiscard]] Vector unpenalized_grad(const Vector& psi, const Vector& y0) const;
  [[nodiscard]] Matrix adjoint_observations(const Vector& psi) const;  // n_u x (intervals+1)

  SemidiscreteSystem system_;
  DualParameters params_;
  int intervals_;
  double dt_ = 0.0;
  std::vector<double> weights_;  // composite Simpson weights on 0..intervals
  Matrix step_fwd_;              // e^{dt A}
  Matrix step_adj_;              // e^{dt A^T}
  Matrix terminal_;              // e^{T A}
};

/// phi solving (G + h^beta I) phi = -e^{TA} y0 with G the p = 2 controllability
/// Gramian assembled on the dual module's quadrature grid — the closed-form
/// minimizer the p = 2 optimizer must reproduce. Throws when the matrix is
/// numerically singular.
[[nodiscard]] Vector p2_gramian_solve(const SemidiscreteSystem& system, const Propagator& prop,
                                      const DualParameters& params, const Vector& y0);

}  // namespace nullctl
