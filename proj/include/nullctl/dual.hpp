#pragma once

#include <optional>
#include <vector>

#include "nullctl/propagator.hpp"
#include "nullctl/quadrature.hpp"
#include "nullctl/system.hpp"

namespace nullctl {

/// Parameters of the penalized dual functional
///   J(phi) = (1/p) int_0^T ||B^T e^{tA^T} phi||^p dt
///          + (1/p) h^beta ||phi||^p + <e^{TA^T} phi, y0>.
/// q is the conjugate exponent (the control lives in L^q). gamma, s, theta
/// are recorded for the admissibility window only and do not enter J.
struct DualParameters {
  double p = 1.2;
  double q = 6.0;
  double beta = 0.16;
  int quad_nodes = 64;  // composite Gauss-Legendre panels, four points each
  double gamma = 0.75;
  double s = 2.0;
  double theta = 0.32;
  bool penalty = true;  // include the h^beta term

  /// Theorem window: theta + (1-theta)*gamma < 1/p and 0 <= beta <= s(1-gamma)theta.
  [[nodiscard]] bool admissible() const;
};

/// Validated constructor; derives q = p/(p-1) when q is not supplied.
/// Throws std::invalid_argument naming the offending field.
[[nodiscard]] DualParameters make_dual_parameters(double p, double beta, int quad_nodes = 64,
                                                  std::optional<double> q = std::nullopt,
                                                  double gamma = 0.75, double s = 2.0,
                                                  double theta = 0.32, bool penalty = true);

/// v |-> ||v||^{p-2} v with the continuous extension 0 at v = 0 (Euclidean
/// norm). Computed as ||v||^{p-1} * (v/||v||) so near-underflow inputs stay
/// finite. Requires p in [1, 2].
[[nodiscard]] Vector p_power_map(const Vector& v, double p);

/// Functional value, gradient and quadrature provenance at one point.
struct DualState {
  Vector phi;
  double j_value = 0.0;
  Vector grad;
  int quad_panels = 0;
  int quad_points = 0;
};

/// Evaluation engine binding (system, propagator, parameters, y0). Caches the
/// quadrature grid, e^{TA} y0, and, on the spectral path, the node-by-mode
/// exponential table, so repeated evaluations cost two thin mat-vecs.
class DualEngine {
 public:
  DualEngine(const SemidiscreteSystem& system, const Propagator& prop, DualParameters params,
             Vector y0 = Vector());

  [[nodiscard]] const QuadGrid& grid() const { return grid_; }
  [[nodiscard]] const DualParameters& params() const { return params_; }
  [[nodiscard]] const Vector& terminal_pull() const { return d_; }  // e^{TA} y0
  [[nodiscard]] double penalty_weight() const { return hbeta_; }    // h^beta or 0

  /// B^T e^{t_k A^T} phi for every quadrature node; n_u x m.
  [[nodiscard]] Matrix observations(const Vector& phi) const;

  [[nodiscard]] double value(const Vector& phi) const;

  /// Value plus the sum of |term| magnitudes (for noise-aware comparisons).
  struct ValueParts {
    double value;
    double scale;
  };
  [[nodiscard]] ValueParts value_with_scale(const Vector& phi) const;

  /// Gradient of the time-integral term only:
  ///   int ||B^T e^{tA^T} phi||^{p-2} e^{tA} B B^T e^{tA^T} phi dt.
  [[nodiscard]] Vector gramian_apply(const Vector& phi) const;

  [[nodiscard]] Vector gradient(const Vector& phi) const;
  [[nodiscard]] DualState state(const Vector& phi) const;

  /// Smooth surrogate of J: every Euclidean norm r becomes sqrt(r^2 + mu^2)
  /// before the p-th power (mu is rescaled by input_scale() for the penalty
  /// term so both terms blur at comparable magnitudes). mu = 0 recovers J;
  /// mu > 0 makes the functional C^2 with a bounded Hessian, which the
  /// curvature stage of the minimizer requires when p < 2.
  [[nodiscard]] double value_smoothed(const Vector& phi, double mu) const;
  [[nodiscard]] Vector gradient_smoothed(const Vector& phi, double mu) const;

  /// Dense Hessian of the surrogate. At mu = 0 nodes with a vanishing
  /// observation are dropped: their exact curvature is unbounded for p < 2.
  [[nodiscard]] Matrix hessian_smoothed(const Vector& phi, double mu) const;

  /// max_k ||e^{t_k A} B||_F over the quadrature nodes; converts input-side
  /// magnitudes into state-side ones.
  [[nodiscard]] double input_scale() const;

 private:
  [[nodiscard]] Vector input_superposition(const Matrix& coeffs) const;  // sum_k e^{t_k A} B c_k
  /// Per input channel j, the n x m table of e^{t_k A} B e_j (built lazily).
  [[nodiscard]] const std::vector<Matrix>& flow_table() const;
  void check_phi(const Vector& phi) const;
  void check_mu(double mu) const;

  const SemidiscreteSystem* system_;
  const Propagator* prop_;
  DualParameters params_;
  QuadGrid grid_;
  Vector d_;
  double hbeta_ = 0.0;

  bool spectral_ = false;
  Matrix exp_table_;  // n x m, e^{t_k lambda_i}
  Matrix wb_;         // Q^T B

  mutable std::vector<Matrix> flow_table_;  // lazy; one n x m block per input
  mutable double input_scale_ = 0.0;
  mutable bool flow_ready_ = false;
};

/// One-shot wrappers with the engine constructed per call.
[[nodiscard]] double evaluate_j(const SemidiscreteSystem& system, const Propagator& prop,
                                const DualParameters& params, const InitialData& init,
                                const Vector& phi);
[[nodiscard]] Vector gramian_apply(const SemidiscreteSystem& system, const Propagator& prop,
                                   const DualParameters& params, const Vector& phi);
[[nodiscard]] Vector gradient_j(const SemidiscreteSystem& system, const Propagator& prop,
                                const DualParameters& params, const InitialData& init,
                                const Vector& phi);

}  // namespace nullctl
