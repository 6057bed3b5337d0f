#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>

namespace nullctl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Spatial discretization flavor for the 1-D boundary-controlled heat system.
enum class Scheme {
  /// Dirichlet elimination: n interior unknowns, control enters scaled by 1/h^2.
  Eliminated,
  /// Boundary values kept as state coordinates with zero rows in A and B = e_1 + e_{n+2}.
  PaperVerbatim,
};

[[nodiscard]] std::string to_string(Scheme s);
[[nodiscard]] Scheme scheme_from_string(const std::string& name);

/// Immutable semidiscrete system y' = A y + B u on [0, horizon].
/// h is the mesh parameter used as the penalty base; for non-mesh systems it is
/// a formal parameter in (0, 1).
struct SemidiscreteSystem {
  Matrix a;          // n_x x n_x
  Matrix b;          // n_x x n_u
  double h = 0.5;    // mesh width, in (0, 1)
  double horizon = 1.0;
  bool symmetric = false;  // true iff a == a^T to 1e-12 relative
  std::optional<Scheme> scheme;  // set when built by build_heat1d
  std::string name;

  [[nodiscard]] Eigen::Index state_dim() const { return a.rows(); }
  [[nodiscard]] Eigen::Index control_dim() const { return b.cols(); }
};

/// Wrap a user-supplied dense pair (A, B). Validates shapes/finiteness and
/// detects symmetry.
[[nodiscard]] SemidiscreteSystem make_system(Matrix a, Matrix b, double h, double horizon,
                                             std::string name = "dense");

/// Finite-difference model of y_t = y_xx + c^2 y on (0,1) with Dirichlet
/// boundary control applied (as the same scalar) at both ends; h = 1/(n+1).
[[nodiscard]] SemidiscreteSystem build_heat1d(int n, double c, double horizon, Scheme scheme);

/// Initial state, either sampled from a function on [0,1] or supplied raw.
struct InitialData {
  Vector y0;
  enum class Source { SampledFunction, RawVector } source = Source::RawVector;
};

/// Sample f at the system's spatial nodes (interior i*h for Eliminated,
/// all of (i-1)*h including the boundary for PaperVerbatim).
[[nodiscard]] InitialData sample_initial(const SemidiscreteSystem& system,
                                         const std::function<double(double)>& f);

/// Validate a raw initial vector against the system dimension.
[[nodiscard]] InitialData raw_initial(const SemidiscreteSystem& system, Vector y0);

}  // namespace nullctl
