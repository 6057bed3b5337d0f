#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nullctl/dual.hpp"

namespace nullctl {

enum class ObsMethod { EigP2, ProjectedDescent, RandomSphere };

[[nodiscard]] std::string to_string(ObsMethod method);

/// Lower observability constant for one mesh: the minimum over unit psi of
///   [ int_0^T ||B^T e^{tA^T} psi||^p dt + h^beta ||psi||^p ] / ||e^{TA^T} psi||^p.
struct ObservabilityRecord {
  double h = 0.0;
  double beta = 0.0;
  double p = 2.0;
  double constant_estimate = 0.0;
  Vector certificate;  // unit vector achieving the estimate
  ObsMethod method = ObsMethod::EigP2;
};

/// p = 2 is solved exactly as a generalized symmetric eigenproblem; p != 2
/// runs projected gradient descent on the sphere from the p = 2 certificate
/// and cross-checks against `samples` random unit vectors (the reported
/// constant never exceeds any sample's quotient). `force_descent` routes
/// p = 2 through the descent path too (for cross-validation).
[[nodiscard]] ObservabilityRecord observability_constant(const SemidiscreteSystem& system,
                                                         const Propagator& prop,
                                                         const DualParameters& params,
                                                         unsigned seed = 42, int samples = 10000,
                                                         bool force_descent = false);

/// One sweep row: the lower constant plus the upper constant
///   C' = max over unit psi of  int_0^T ||B^T e^{tA^T} psi||^p dt + h^beta,
/// the right-hand inequality in the observability window.
struct SweepRecord {
  int n = 0;
  ObservabilityRecord record;
  double c_upper = 0.0;
  bool degenerate = false;  // no observation and no penalty: constants collapse
};

/// Sweep over prebuilt systems (any count >= 1).
[[nodiscard]] std::vector<SweepRecord> uniformity_sweep(
    const std::vector<SemidiscreteSystem>& systems, const DualParameters& params,
    unsigned seed = 42, int samples = 10000);

/// Convenience sweep over heat1d meshes; requires at least three mesh sizes.
[[nodiscard]] std::vector<SweepRecord> uniformity_sweep(const std::vector<int>& n_values,
                                                        const DualParameters& params,
                                                        Scheme scheme = Scheme::Eliminated,
                                                        double c = 1.0, double horizon = 1.0,
                                                        unsigned seed = 42, int samples = 10000);

enum class RateQuantity {
  SemigroupConsistency,    // || e^{tA_h} P_h psi - P_h S(t) psi ||, slope ~ 2
  DualObservationBound,    // t^gamma ||B^T e^{tA^T} psi_h|| / ||psi_h||, bounded
  ObservationConsistency,  // | obs_h(t) - obs_ref(t) |
};

[[nodiscard]] std::string to_string(RateQuantity quantity);

struct RateFit {
  RateQuantity quantity = RateQuantity::SemigroupConsistency;
  std::vector<double> h_values;
  std::vector<double> errors;  // measured value per mesh, same order as h_values
  double slope = 0.0;          // least-squares slope of log(error) vs log(h)
  double intercept = 0.0;
  bool fit_skipped = false;  // all measurements zero (e.g. psi = 0)
  int n_ref = 0;             // reference mesh used as ground truth (0 if none)
};

/// Measures the mesh-refinement behaviour of `quantity` on eliminated heat1d
/// meshes at time t_eval, against a reference mesh n_ref = ref_mult * max(n).
/// psi defaults to sin(pi x) when not supplied.
[[nodiscard]] RateFit rate_fit(RateQuantity quantity, const std::vector<int>& n_values,
                               double t_eval, const DualParameters& params,
                               const std::function<double(double)>& psi = {}, double c = 1.0,
                               double horizon = 1.0, int ref_mult = 8);

}  // namespace nullctl
