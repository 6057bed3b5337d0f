#include "nullctl/system.hpp"

#include <cmath>
#include <stdexcept>

namespace nullctl {

namespace {

bool nearly_symmetric(const Matrix& a) {
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return true;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " contains a non-finite entry");
}

}  // namespace

std::string to_string(Scheme s) {
  return s == Scheme::Eliminated ? "eliminated" : "paper-verbatim";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "eliminated") return Scheme::Eliminated;
  if (name == "paper-verbatim") return Scheme::PaperVerbatim;
  throw std::invalid_argument("scheme: expected \"eliminated\" or \"paper-verbatim\", got \"" + name + "\"");
}

SemidiscreteSystem make_system(Matrix a, Matrix b, double h, double horizon, std::string name) {
  if (a.rows() != a.cols()) throw std::invalid_argument("a: must be square");
  if (b.rows() != a.rows()) throw std::invalid_argument("b: row count must match state dimension");
  if (b.cols() < 1) throw std::invalid_argument("b: needs at least one control column");
  require_finite(a, "a");
  require_finite(b, "b");
  if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("h: must lie in (0, 1)");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon: must be positive and finite");

  SemidiscreteSystem sys;
  sys.symmetric = nearly_symmetric(a);
  sys.a = std::move(a);
  sys.b = std::move(b);
  sys.h = h;
  sys.horizon = horizon;
  sys.name = std::move(name);
  return sys;
}

SemidiscreteSystem build_heat1d(int n, double c, double horizon, Scheme scheme) {
  if (n < 2) throw std::invalid_argument("n: need at least 2 interior nodes");
  if (!std::isfinite(c)) throw std::invalid_argument("c: must be finite");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon: must be positive and finite");

  const double h = 1.0 / (n + 1);
  const double inv_h2 = 1.0 / (h * h);
  const double diag = (c * c * h * h - 2.0) * inv_h2;

  SemidiscreteSystem sys;
  sys.h = h;
  sys.horizon = horizon;
  sys.scheme = scheme;

  if (scheme == Scheme::Eliminated) {
    sys.a = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      sys.a(i, i) = diag;
      if (i > 0) sys.a(i, i - 1) = inv_h2;
      if (i + 1 < n) sys.a(i, i + 1) = inv_h2;
    }
    // The same scalar Dirichlet value drives both ends, so the eliminated
    // stencil pushes u/h^2 into the first and last interior equations.
    sys.b = Matrix::Zero(n, 1);
    sys.b(0, 0) = inv_h2;
    sys.b(n - 1, 0) = inv_h2;
    sys.symmetric = true;
    sys.name = "heat1d-eliminated-n" + std::to_string(n);
  } else {
    // Boundary values are carried as states with zero dynamics rows; the
    // interior rows keep the full three-point stencil, including the
    // couplings into the boundary columns.
    const int m = n + 2;
    sys.a = Matrix::Zero(m, m);
    for (int i = 1; i <= n; ++i) {
      sys.a(i, i) = diag;
      sys.a(i, i - 1) = inv_h2;
      sys.a(i, i + 1) = inv_h2;
    }
    sys.b = Matrix::Zero(m, 1);
    sys.b(0, 0) = 1.0;
    sys.b(m - 1, 0) = 1.0;
    sys.symmetric = false;
    sys.name = "heat1d-verbatim-n" + std::to_string(n);
  }
  return sys;
}

InitialData sample_initial(const SemidiscreteSystem& system, const std::function<double(double)>& f) {
  if (!system.scheme) {
    throw std::invalid_argument("sample_initial: system has no spatial grid (built from a raw matrix pair)");
  }
  const double h = system.h;
  const Eigen::Index m = system.state_dim();
  InitialData init;
  init.source = InitialData::Source::SampledFunction;
  init.y0.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = (*system.scheme == Scheme::Eliminated) ? (static_cast<double>(i) + 1.0) * h
                                                            : static_cast<double>(i) * h;
    const double v = f(x);
    if (!std::isfinite(v)) {
      throw std::invalid_argument("sample_initial: f produced a non-finite value at node " +
                                  std::to_string(i) + " (x = " + std::to_string(x) + ")");
    }
    init.y0[i] = v;
  }
  return init;
}

InitialData raw_initial(const SemidiscreteSystem& system, Vector y0) {
  if (y0.size() != system.state_dim()) {
    throw std::invalid_argument("y0: length " + std::to_string(y0.size()) + " does not match state dimension " +
                                std::to_string(system.state_dim()));
  }
  if (!y0.allFinite()) throw std::invalid_argument("y0: contains a non-finite entry");
  InitialData init;
  init.y0 = std::move(y0);
  init.source = InitialData::Source::RawVector;
  return init;
}

}  // namespace nullctl
