#include "nullctl/propagator.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace nullctl {

namespace {

constexpr std::int64_t kDefaultStepsPerUnit = 2048;
constexpr std::int64_t kMaxStepsPerUnit = std::int64_t{1} << 40;
constexpr double kLocalTruncationTol = 1e-10;

std::uint64_t key_of(double t) {
  std::uint64_t k;
  std::memcpy(&k, &t, sizeof k);
  return k;
}

// One step of the classical fourth-order method on y' = A y is exactly the
// degree-4 Taylor polynomial of e^{dt A} applied to y.
Vector taylor4_step(const Matrix& a, double dt, const Vector& y, bool adjoint) {
  auto mul = [&](const Vector& v) -> Vector { return adjoint ? Vector(a.transpose() * v) : Vector(a * v); };
  Vector k1 = mul(y);
  Vector k2 = mul(k1);
  Vector k3 = mul(k2);
  Vector k4 = mul(k3);
  return y + dt * k1 + (dt * dt / 2.0) * k2 + (dt * dt * dt / 6.0) * k3 + (dt * dt * dt * dt / 24.0) * k4;
}

Matrix taylor4_step_matrix(const Matrix& a, double dt) {
  const Eigen::Index n = a.rows();
  const Matrix i = Matrix::Identity(n, n);
  // Horner form: I + dtA (I + dtA/2 (I + dtA/3 (I + dtA/4))).
  Matrix acc = i + (dt / 4.0) * a;
  acc = i + (dt / 3.0) * (a * acc);
  acc = i + (dt / 2.0) * (a * acc);
  acc = i + dt * (a * acc);
  return acc;
}

std::int64_t pick_steps_per_unit(const Matrix& a) {
  const Eigen::Index n = a.rows();
  const Vector ones = Vector::Ones(n);
  std::int64_t steps = kDefaultStepsPerUnit;
  while (steps < kMaxStepsPerUnit) {
    const double dt = 1.0 / static_cast<double>(steps);
    const Vector full = taylor4_step(a, dt, ones, false);
    Vector half = taylor4_step(a, dt / 2.0, ones, false);
    half = taylor4_step(a, dt / 2.0, half, false);
    const double scale = std::max(half.cwiseAbs().maxCoeff(), 1.0);
    const bool finite = full.allFinite() && half.allFinite();
    if (finite && (full - half).cwiseAbs().maxCoeff() <= kLocalTruncationTol * scale) break;
    steps *= 2;
  }
  return steps;
}

}  // namespace

Propagator make_propagator(const SemidiscreteSystem& system, const PropagatorOptions& options) {
  Propagator prop;
  prop.system_ = std::make_shared<const SemidiscreteSystem>(system);
  const Matrix& a = prop.system_->a;

  if (system.symmetric && !options.force_integrator) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() == Eigen::Success) {
      const Matrix& q = es.eigenvectors();
      const Vector& lam = es.eigenvalues();
      const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
      const double recon = (q * lam.asDiagonal() * q.transpose() - a).cwiseAbs().maxCoeff();
      const Eigen::Index n = a.rows();
      const double ortho = (q.transpose() * q - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
      if (recon <= 1e-9 * scale && ortho <= 1e-10) {
        prop.kind_ = Propagator::Kind::Spectral;
        prop.eigenvalues_ = lam;
        prop.basis_ = q;
        return prop;
      }
    }
    // Decomposition failed its quality gates; fall back and flag it.
    prop.warning_ = true;
  }

  prop.kind_ = Propagator::Kind::Integrator;
  prop.steps_per_unit_ = options.steps_per_unit > 0 ? options.steps_per_unit : pick_steps_per_unit(a);
  return prop;
}

Vector Propagator::apply(double t, const Vector& v, bool adjoint) const {
  if (t < 0.0 || !std::isfinite(t)) throw std::invalid_argument("t: must be finite and nonnegative");
  if (v.size() != system_->state_dim()) throw std::invalid_argument("v: length does not match state dimension");
  if (!v.allFinite()) throw std::invalid_argument("v: contains a non-finite entry");
  if (t == 0.0) return v;

  if (kind_ == Kind::Spectral) {
    // Symmetric A: the adjoint flow coincides with the forward flow.
    Vector w = basis_.transpose() * v;
    w.array() *= (t * eigenvalues_.array()).exp();
    return basis_ * w;
  }
  const Matrix e = span_matrix(t);
  return adjoint ? Vector(e.transpose() * v) : Vector(e * v);
}

Matrix Propagator::span_matrix(double span) const {
  if (span < 0.0 || !std::isfinite(span)) throw std::invalid_argument("span: must be finite and nonnegative");
  const Eigen::Index n = system_->state_dim();
  if (span == 0.0) return Matrix::Identity(n, n);

  if (kind_ == Kind::Spectral) {
    return basis_ * (span * eigenvalues_.array()).exp().matrix().asDiagonal() * basis_.transpose();
  }

  const std::uint64_t key = key_of(span);
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->entries.find(key);
    if (it != cache_->entries.end()) return *it->second;
  }

  // 2^j uniform steps with j chosen so the step count matches steps_per_unit;
  // building the one-step matrix once and squaring j times is the same method
  // at logarithmic cost.
  const double wanted = span * static_cast<double>(steps_per_unit_);
  int j = 0;
  while ((double(std::int64_t{1} << j)) < wanted && j < 62) ++j;
  Matrix e = taylor4_step_matrix(system_->a, span / static_cast<double>(std::int64_t{1} << j));
  for (int s = 0; s < j; ++s) e = Matrix(e * e);
  if (!e.allFinite()) throw std::runtime_error("span_matrix: integration diverged (span " + std::to_string(span) + ")");

  auto stored = std::make_shared<const Matrix>(std::move(e));
  std::lock_guard<std::mutex> lock(cache_->mutex);
  cache_->entries.emplace(key, stored);
  return *stored;
}

Matrix Propagator::flow_samples(const std::vector<double>& times, const Vector& v, bool adjoint) const {
  if (v.size() != system_->state_dim()) throw std::invalid_argument("v: length does not match state dimension");
  if (!v.allFinite()) throw std::invalid_argument("v: contains a non-finite entry");
  const Eigen::Index n = system_->state_dim();
  Matrix out(n, static_cast<Eigen::Index>(times.size()));

  if (kind_ == Kind::Spectral) {
    Vector w = basis_.transpose() * v;
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (times[k] < 0.0) throw std::invalid_argument("times: must be nonnegative");
      Vector scaled = (times[k] * eigenvalues_.array()).exp() * w.array();
      out.col(static_cast<Eigen::Index>(k)) = basis_ * scaled;
    }
    return out;
  }

  double prev = 0.0;
  Vector cur = v;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (t < prev) throw std::invalid_argument("times: must be nondecreasing and nonnegative");
    if (t > prev) {
      const Matrix e = span_matrix(t - prev);
      cur = adjoint ? Vector(e.transpose() * cur) : Vector(e * cur);
    }
    out.col(static_cast<Eigen::Index>(k)) = cur;
    prev = t;
  }
  return out;
}

Vector Propagator::weighted_input_sum(const std::vector<double>& times, const Matrix& u) const {
  if (u.rows() != system_->control_dim() || u.cols() != static_cast<Eigen::Index>(times.size())) {
    throw std::invalid_argument("u: expected control_dim x #times sample matrix");
  }
  const Eigen::Index n = system_->state_dim();
  if (times.empty()) return Vector::Zero(n);

  if (kind_ == Kind::Spectral) {
    const Matrix wb = basis_.transpose() * system_->b;  // n x n_u
    Vector acc = Vector::Zero(n);
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (times[k] < 0.0) throw std::invalid_argument("times: must be nonnegative");
      Vector g = wb * u.col(static_cast<Eigen::Index>(k));
      acc.array() += (times[k] * eigenvalues_.array()).exp() * g.array();
    }
    return basis_ * acc;
  }

  // Horner over the semigroup: sum_k e^{t_k A} g_k
  //   = e^{t_0 A}(g_0 + e^{(t_1-t_0)A}(g_1 + ...)).
  Vector acc = system_->b * u.col(static_cast<Eigen::Index>(times.size()) - 1);
  for (std::size_t k = times.size() - 1; k-- > 0;) {
    const double gap = times[k + 1] - times[k];
    if (gap < 0.0) throw std::invalid_argument("times: must be nondecreasing");
    if (gap > 0.0) acc = span_matrix(gap) * acc;
    acc += system_->b * u.col(static_cast<Eigen::Index>(k));
  }
  if (times[0] > 0.0) acc = span_matrix(times[0]) * acc;
  return acc;
}

}  // namespace nullctl
