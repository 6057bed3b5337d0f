#include "nullctl/dual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nullctl {

namespace {

void require_p(double p) {
  if (!std::isfinite(p) || p < 1.0 || p > 2.0) {
    std::ostringstream msg;
    msg << "p: exponent must lie in [1, 2], got " << p;
    throw std::invalid_argument(msg.str());
  }
}

[[noreturn]] void throw_nonfinite(const char* what, int node, double t) {
  std::ostringstream msg;
  msg << what << ": non-finite value at quadrature node " << node << " (t = " << t << ")";
  throw std::runtime_error(msg.str());
}

}  // namespace

bool DualParameters::admissible() const {
  return theta + (1.0 - theta) * gamma < 1.0 / p && beta >= 0.0 && beta <= s * (1.0 - gamma) * theta;
}

DualParameters make_dual_parameters(double p, double beta, int quad_nodes, std::optional<double> q,
                                    double gamma, double s, double theta, bool penalty) {
  require_p(p);
  if (!std::isfinite(beta) || beta < 0.0) {
    throw std::invalid_argument("beta: penalty exponent must be finite and >= 0");
  }
  if (quad_nodes < 1) {
    throw std::invalid_argument("quad_nodes: need at least one quadrature panel");
  }
  if (!std::isfinite(gamma) || gamma <= 0.0 || gamma >= 1.0) {
    throw std::invalid_argument("gamma: must lie in (0, 1)");
  }
  if (!std::isfinite(s) || s <= 0.0) {
    throw std::invalid_argument("s: must be positive");
  }
  if (!std::isfinite(theta) || theta <= 0.0 || theta >= 1.0) {
    throw std::invalid_argument("theta: must lie in (0, 1)");
  }

  DualParameters params;
  params.p = p;
  params.beta = beta;
  params.quad_nodes = quad_nodes;
  params.gamma = gamma;
  params.s = s;
  params.theta = theta;
  params.penalty = penalty;
  if (p == 1.0) {
    if (q.has_value()) {
      throw std::invalid_argument("q: p = 1 has no finite conjugate exponent");
    }
    params.q = std::numeric_limits<double>::infinity();
    return params;
  }
  const double conj = p / (p - 1.0);
  if (q.has_value()) {
    if (!std::isfinite(*q) || std::abs(*q - conj) > 1e-12 * conj) {
      std::ostringstream msg;
      msg << "q: must equal p/(p-1) = " << conj << ", got " << *q;
      throw std::invalid_argument(msg.str());
    }
    params.q = *q;
  } else {
    params.q = conj;
  }
  return params;
}

Vector p_power_map(const Vector& v, double p) {
  require_p(p);
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(v.size());
  return std::pow(norm, p - 1.0) * (v / norm);
}

DualEngine::DualEngine(const SemidiscreteSystem& system, const Propagator& prop,
                       DualParameters params, Vector y0)
    : system_(&system),
      prop_(&prop),
      params_(params),
      grid_(make_quad_grid(system.horizon, params.quad_nodes)) {
  require_p(params_.p);
  if (prop.system().state_dim() != system.state_dim() ||
      prop.system().control_dim() != system.control_dim() ||
      prop.system().horizon != system.horizon) {
    throw std::invalid_argument("prop: propagator was built for a different system");
  }
  hbeta_ = params_.penalty ? std::pow(system.h, params_.beta) : 0.0;
  if (y0.size() == 0) {
    d_ = Vector::Zero(system.state_dim());
  } else {
    if (y0.size() != system.state_dim()) {
      throw std::invalid_argument("y0: dimension does not match the system state");
    }
    d_ = prop.apply(system.horizon, y0);
  }

  spectral_ = prop.kind() == Propagator::Kind::Spectral;
  if (spectral_) {
    const Vector& lam = prop.eigenvalues();
    const auto n = lam.size();
    const auto m = static_cast<Eigen::Index>(grid_.size());
    exp_table_.resize(n, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      exp_table_.col(k) = (grid_.nodes[static_cast<std::size_t>(k)] * lam.array()).exp();
    }
    wb_ = prop.basis().transpose() * system.b;
  }
}

void DualEngine::check_phi(const Vector& phi) const {
  if (phi.size() != system_->state_dim()) {
    throw std::invalid_argument("phi: dimension does not match the system state");
  }
  if (!phi.allFinite()) {
    throw std::invalid_argument("phi: contains non-finite entries");
  }
}

Matrix DualEngine::observations(const Vector& phi) const {
  check_phi(phi);
  const auto m = static_cast<Eigen::Index>(grid_.size());
  const auto n_u = system_->control_dim();
  Matrix obs(n_u, m);
  if (spectral_) {
    const Vector c = prop_->basis().transpose() * phi;
    for (Eigen::Index r = 0; r < n_u; ++r) {
      obs.row(r) = (exp_table_.transpose() * wb_.col(r).cwiseProduct(c)).transpose();
    }
  } else {
    // <e^{t_k A} b_j, phi> through the cached flow table: one thin mat-vec
    // per input channel instead of a fresh semigroup walk.
    const std::vector<Matrix>& flow = flow_table();
    for (Eigen::Index r = 0; r < n_u; ++r) {
      obs.row(r) = (flow[static_cast<std::size_t>(r)].transpose() * phi).transpose();
    }
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!obs.col(k).allFinite()) {
      throw_nonfinite("observations", static_cast<int>(k), grid_.nodes[static_cast<std::size_t>(k)]);
    }
  }
  return obs;
}

double DualEngine::value(const Vector& phi) const { return value_with_scale(phi).value; }

DualEngine::ValueParts DualEngine::value_with_scale(const Vector& phi) const {
  const Matrix obs = observations(phi);
  const double p = params_.p;
  double integral = 0.0;
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    const double r = obs.col(k).norm();
    integral += grid_.weights[static_cast<std::size_t>(k)] * std::pow(r, p);
  }
  const double term_obs = integral / p;
  const double term_pen = hbeta_ * std::pow(phi.norm(), p) / p;
  const double term_lin = phi.dot(d_);
  const double value = term_obs + term_pen + term_lin;
  if (!std::isfinite(value)) {
    throw std::runtime_error("value: functional evaluated to a non-finite number");
  }
  return {value, std::abs(term_obs) + std::abs(term_pen) + std::abs(term_lin)};
}

Vector DualEngine::input_superposition(const Matrix& coeffs) const {
  if (spectral_) {
    const auto n = exp_table_.rows();
    Vector acc = Vector::Zero(n);
    for (Eigen::Index r = 0; r < coeffs.rows(); ++r) {
      acc += wb_.col(r).cwiseProduct(exp_table_ * coeffs.row(r).transpose());
    }
    return prop_->basis() * acc;
  }
  const std::vector<Matrix>& flow = flow_table();
  Vector acc = Vector::Zero(system_->state_dim());
  for (Eigen::Index r = 0; r < coeffs.rows(); ++r) {
    acc += flow[static_cast<std::size_t>(r)] * coeffs.row(r).transpose();
  }
  return acc;
}

Vector DualEngine::gramian_apply(const Vector& phi) const {
  const Matrix obs = observations(phi);
  const double p = params_.p;
  Matrix coeffs(obs.rows(), obs.cols());
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    coeffs.col(k) = grid_.weights[static_cast<std::size_t>(k)] * p_power_map(obs.col(k), p);
    if (!coeffs.col(k).allFinite()) {
      throw_nonfinite("gramian_apply", static_cast<int>(k),
                      grid_.nodes[static_cast<std::size_t>(k)]);
    }
  }
  return input_superposition(coeffs);
}

Vector DualEngine::gradient(const Vector& phi) const {
  Vector g = gramian_apply(phi);
  if (hbeta_ != 0.0) g += hbeta_ * p_power_map(phi, params_.p);
  g += d_;
  if (!g.allFinite()) {
    throw std::runtime_error("gradient: non-finite result");
  }
  return g;
}

DualState DualEngine::state(const Vector& phi) const {
  DualState st;
  st.phi = phi;
  st.j_value = value(phi);
  st.grad = gradient(phi);
  st.quad_panels = grid_.panels;
  st.quad_points = static_cast<int>(grid_.size());
  return st;
}

void DualEngine::check_mu(double mu) const {
  if (!std::isfinite(mu) || mu < 0.0) {
    throw std::invalid_argument("mu: smoothing width must be finite and >= 0");
  }
}

const std::vector<Matrix>& DualEngine::flow_table() const {
  if (flow_ready_) return flow_table_;
  const auto m = static_cast<Eigen::Index>(grid_.size());
  const auto n_u = system_->control_dim();
  flow_table_.resize(static_cast<std::size_t>(n_u));
  for (Eigen::Index j = 0; j < n_u; ++j) {
    if (spectral_) {
      const Matrix scaled = exp_table_.array().colwise() * wb_.col(j).array();
      flow_table_[static_cast<std::size_t>(j)] = prop_->basis() * scaled;
    } else {
      flow_table_[static_cast<std::size_t>(j)] =
          prop_->flow_samples(grid_.nodes, system_->b.col(j), /*adjoint=*/false);
    }
  }
  input_scale_ = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    double sq = 0.0;
    for (const Matrix& block : flow_table_) sq += block.col(k).squaredNorm();
    input_scale_ = std::max(input_scale_, std::sqrt(sq));
  }
  flow_ready_ = true;
  return flow_table_;
}

double DualEngine::input_scale() const {
  (void)flow_table();
  return input_scale_;
}

double DualEngine::value_smoothed(const Vector& phi, double mu) const {
  check_mu(mu);
  if (mu == 0.0) return value(phi);
  const Matrix obs = observations(phi);
  const double p = params_.p;
  const double mu2 = mu * mu;
  double integral = 0.0;
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    const double t2 = obs.col(k).squaredNorm() + mu2;
    integral += grid_.weights[static_cast<std::size_t>(k)] * std::pow(t2, 0.5 * p);
  }
  double value = integral / p + phi.dot(d_);
  if (hbeta_ != 0.0) {
    const double scale = input_scale();
    const double mu_phi = scale > 0.0 ? mu / scale : mu;
    value += hbeta_ * std::pow(phi.squaredNorm() + mu_phi * mu_phi, 0.5 * p) / p;
  }
  if (!std::isfinite(value)) {
    throw std::runtime_error("value_smoothed: functional evaluated to a non-finite number");
  }
  return value;
}

Vector DualEngine::gradient_smoothed(const Vector& phi, double mu) const {
  check_mu(mu);
  if (mu == 0.0) return gradient(phi);
  const Matrix obs = observations(phi);
  const double p = params_.p;
  const bool quad = std::abs(p - 2.0) < 1e-14;
  const double mu2 = mu * mu;
  Matrix coeffs(obs.rows(), obs.cols());
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    const double t2 = obs.col(k).squaredNorm() + mu2;
    const double s = quad ? 1.0 : std::pow(t2, 0.5 * (p - 2.0));
    coeffs.col(k) = (grid_.weights[static_cast<std::size_t>(k)] * s) * obs.col(k);
  }
  Vector g = input_superposition(coeffs);
  if (hbeta_ != 0.0) {
    const double scale = input_scale();
    const double mu_phi = scale > 0.0 ? mu / scale : mu;
    const double r2 = phi.squaredNorm() + mu_phi * mu_phi;
    g += hbeta_ * (quad ? 1.0 : std::pow(r2, 0.5 * (p - 2.0))) * phi;
  }
  g += d_;
  if (!g.allFinite()) {
    throw std::runtime_error("gradient_smoothed: non-finite result");
  }
  return g;
}

Matrix DualEngine::hessian_smoothed(const Vector& phi, double mu) const {
  check_mu(mu);
  const Matrix obs = observations(phi);
  const auto n = system_->state_dim();
  const auto n_u = system_->control_dim();
  const double p = params_.p;
  const bool quad = std::abs(p - 2.0) < 1e-14;
  const double mu2 = mu * mu;
  const std::vector<Matrix>& flow = flow_table();
  Matrix hess = Matrix::Zero(n, n);
  auto lower = hess.selfadjointView<Eigen::Lower>();
  Vector mixed(n);
  for (Eigen::Index k = 0; k < obs.cols(); ++k) {
    const double t2 = obs.col(k).squaredNorm() + mu2;
    if (!quad && t2 == 0.0) continue;  // unbounded curvature; continuous part vanishes
    const double ws = grid_.weights[static_cast<std::size_t>(k)] *
                      (quad ? 1.0 : std::pow(t2, 0.5 * (p - 2.0)));
    for (Eigen::Index j = 0; j < n_u; ++j) {
      lower.rankUpdate(flow[static_cast<std::size_t>(j)].col(k), ws);
    }
    if (!quad) {
      mixed.setZero();
      for (Eigen::Index j = 0; j < n_u; ++j) {
        mixed += obs(j, k) * flow[static_cast<std::size_t>(j)].col(k);
      }
      lower.rankUpdate(mixed, ws * (p - 2.0) / t2);
    }
  }
  if (hbeta_ != 0.0) {
    if (quad) {
      hess.diagonal().array() += hbeta_;
    } else {
      const double scale = input_scale();
      const double mu_phi = scale > 0.0 ? mu / scale : mu;
      const double r2 = phi.squaredNorm() + mu_phi * mu_phi;
      if (r2 > 0.0) {
        const double s2 = std::pow(r2, 0.5 * (p - 2.0));
        hess.diagonal().array() += hbeta_ * s2;
        lower.rankUpdate(phi, hbeta_ * s2 * (p - 2.0) / r2);
      }
    }
  }
  Matrix full = hess.selfadjointView<Eigen::Lower>();
  if (!full.allFinite()) {
    throw std::runtime_error("hessian_smoothed: non-finite result");
  }
  return full;
}

double evaluate_j(const SemidiscreteSystem& system, const Propagator& prop,
                  const DualParameters& params, const InitialData& init, const Vector& phi) {
  return DualEngine(system, prop, params, init.y0).value(phi);
}

Vector gramian_apply(const SemidiscreteSystem& system, const Propagator& prop,
                     const DualParameters& params, const Vector& phi) {
  return DualEngine(system, prop, params).gramian_apply(phi);
}

Vector gradient_j(const SemidiscreteSystem& system, const Propagator& prop,
                  const DualParameters& params, const InitialData& init, const Vector& phi) {
  return DualEngine(system, prop, params, init.y0).gradient(phi);
}

}  // namespace nullctl
