#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "nullctl/system.hpp"

namespace nullctl {

/// Options for the integrator fallback; steps_per_unit = 0 means "auto":
/// start from the default 2048 steps per unit time and double until a
/// one-step vs. two-half-steps test on the all-ones vector agrees to 1e-10.
struct PropagatorOptions {
  std::int64_t steps_per_unit = 0;
  bool force_integrator = false;  // skip the spectral path even for symmetric A
};

/// Semigroup engine for e^{tA}. Symmetric systems use a dense eigendecomposition;
/// everything else uses a fixed-step fourth-order one-step integrator whose
/// span matrices are cached per time difference. Immutable after construction;
/// apply() is safe to call concurrently.
class Propagator {
 public:
  enum class Kind { Spectral, Integrator };

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] bool warning() const { return warning_; }
  [[nodiscard]] const SemidiscreteSystem& system() const { return *system_; }
  [[nodiscard]] std::int64_t steps_per_unit() const { return steps_per_unit_; }

  /// Spectral data; empty for integrator kind.
  [[nodiscard]] const Vector& eigenvalues() const { return eigenvalues_; }
  [[nodiscard]] const Matrix& basis() const { return basis_; }

  /// e^{tA} v (or e^{tA^T} v when adjoint). Rejects t < 0 and non-finite v.
  [[nodiscard]] Vector apply(double t, const Vector& v, bool adjoint = false) const;

  /// Dense e^{span A}; cached per exact span value for the integrator kind.
  [[nodiscard]] Matrix span_matrix(double span) const;

  /// Samples e^{t_k A} v (adjoint: e^{t_k A^T} v) for strictly increasing times.
  /// Column k of the result is the sample at times[k].
  [[nodiscard]] Matrix flow_samples(const std::vector<double>& times, const Vector& v,
                                    bool adjoint = false) const;

  /// sum_k e^{t_k A} B u_k for strictly increasing times; u is n_u x m.
  [[nodiscard]] Vector weighted_input_sum(const std::vector<double>& times, const Matrix& u) const;

 private:
  friend Propagator make_propagator(const SemidiscreteSystem&, const PropagatorOptions&);

  struct SpanCache {
    std::mutex mutex;
    std::map<std::uint64_t, std::shared_ptr<const Matrix>> entries;
  };

  std::shared_ptr<const SemidiscreteSystem> system_;
  Kind kind_ = Kind::Integrator;
  bool warning_ = false;
  std::int64_t steps_per_unit_ = 2048;

  Vector eigenvalues_;  // spectral only
  Matrix basis_;        // spectral only: A = Q diag(eigenvalues) Q^T

  std::shared_ptr<SpanCache> cache_ = std::make_shared<SpanCache>();
};

[[nodiscard]] Propagator make_propagator(const SemidiscreteSystem& system,
                                         const PropagatorOptions& options = {});

}  // namespace nullctl
