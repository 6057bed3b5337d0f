#pragma once

#include <string>
#include <vector>

#include "nullctl/dual.hpp"

namespace nullctl {

enum class OptimMethod { PaperGradient, AdaptiveGradient };

[[nodiscard]] std::string to_string(OptimMethod method);
[[nodiscard]] OptimMethod optim_method_from_string(const std::string& name);

struct OptimizerConfig {
  OptimMethod method = OptimMethod::AdaptiveGradient;
  double step = 1.0;          // fixed step for PaperGradient, first trial for Adaptive
  double grad_tol = 1e-8;     // stop when ||grad|| <= grad_tol
  long max_iters = 100000;
  long trace_every = 1;       // record every k-th iterate (0 disables tracing)
};

/// Throws std::invalid_argument naming the offending field.
void validate_optimizer_config(const OptimizerConfig& config);

enum class Termination { GradTolMet, MaxIters, StepFailure };

[[nodiscard]] std::string to_string(Termination t);

struct TraceRow {
  long iter = 0;
  double j_value = 0.0;
  double grad_norm = 0.0;
  double phi_norm = 0.0;
};

struct OptimizerResult {
  Vector phi;
  double j_value = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;
  Termination termination = Termination::GradTolMet;
  bool diverged = false;  // PaperGradient only: sustained growth of J
  std::vector<TraceRow> trace;
};

/// Minimize the penalized dual functional starting from phi0 (zero when
/// empty). AdaptiveGradient uses Barzilai-Borwein trial steps safeguarded by
/// a backtracking descent test, an exact line minimization along the current
/// ray, and a periodic curvature endgame (damped Newton on the smoothed
/// surrogate with shrinking width) that copes with the merely
/// Hoelder-continuous gradients arising for p < 2; it returns the best
/// iterate seen. PaperGradient iterates phi <- phi - step * grad verbatim
/// and flags divergence after ten consecutive increases of J.
[[nodiscard]] OptimizerResult minimize_dual(const DualEngine& engine, const OptimizerConfig& config,
                                            const Vector& phi0 = Vector());

}  // namespace nullctl
