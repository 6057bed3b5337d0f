#include "nullctl/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace nullctl {

namespace {

constexpr double kArmijoSlope = 1e-4;
constexpr int kMaxBacktracks = 64;
constexpr int kDivergenceStreak = 10;
// Relative floor for a useful update: once ||step|| falls below this fraction
// of ||phi|| no representable progress is possible.
constexpr double kStepFloor = 1e-16;

// Curvature endgame: for p < 2 the gradient is only Hoelder continuous where
// the observation vanishes, so first-order steps slow to a sublinear crawl.
// The endgame minimizes the smoothed surrogate with damped Newton while the
// smoothing width shrinks geometrically, then polishes against the exact
// gradient using the surrogate Hessian as metric.
constexpr int kEndgamePeriod = 25;  // accepted gradient steps between endgames
constexpr int kMaxLevels = 80;      // smoothing levels, width shrinks 10x each
constexpr int kNewtonPerLevel = 60;
constexpr int kStagnantLevels = 6;   // levels without halving ||grad|| => floor
constexpr double kLevelShrink = 0.1;
constexpr double kPolishWidth = 1e-5;  // polish width per unit peak observation
constexpr int kMaxStalls = 2;          // floored endgames in a row => give up

struct Point {
  Vector phi;
  DualEngine::ValueParts vp{0.0, 0.0};
  Vector grad;
  double grad_norm = 0.0;
};

Point evaluate(const DualEngine& engine, Vector phi) {
  Point pt;
  pt.phi = std::move(phi);
  pt.vp = engine.value_with_scale(pt.phi);
  pt.grad = engine.gradient(pt.phi);
  pt.grad_norm = pt.grad.norm();
  return pt;
}

class Recorder {
 public:
  Recorder(std::vector<TraceRow>& trace, long every) : trace_(trace), every_(every) {}

  void maybe(long iter, const Point& pt) {
    if (every_ > 0 && iter % every_ == 0) record(iter, pt);
  }
  void final(long iter, const Point& pt) {
    if (every_ > 0 && (trace_.empty() || trace_.back().iter != iter)) record(iter, pt);
  }

 private:
  void record(long iter, const Point& pt) {
    trace_.push_back({iter, pt.vp.value, pt.grad_norm, pt.phi.norm()});
  }
  std::vector<TraceRow>& trace_;
  long every_;
};

double peak_observation(const DualEngine& engine, const Vector& phi) {
  const Matrix obs = engine.observations(phi);
  double peak = 0.0;
  for (Eigen::Index k = 0; k < obs.cols(); ++k) peak = std::max(peak, obs.col(k).norm());
  return peak;
}

// Exact minimization of J along the ray {scale * phi}: J minus its linear
// term is p-homogeneous, so the optimal scale has a closed form. Applied only
// when it strictly lowers J.
void ray_rescale(const DualEngine& engine, Point& cur, Point& best) {
  const double p = engine.params().p;
  if (p <= 1.0) return;
  const double dv = engine.terminal_pull().dot(cur.phi);
  const double hom = cur.vp.value - dv;
  if (!(dv < 0.0) || !(hom > 0.0)) return;
  const double scale = std::pow(-dv / (p * hom), 1.0 / (p - 1.0));
  if (!std::isfinite(scale) || scale <= 0.0 || std::abs(scale - 1.0) <= 1e-12) return;
  try {
    Point scaled = evaluate(engine, scale * cur.phi);
    if (scaled.vp.value < cur.vp.value) {
      cur = std::move(scaled);
      if (cur.vp.value < best.vp.value) best = cur;
    }
  } catch (const std::runtime_error&) {
  }
}

void curvature_endgame(const DualEngine& engine, const OptimizerConfig& config, Recorder& recorder,
                       Point& cur, Point& best, long& iter) {
  const double p = engine.params().p;
  const bool quadratic = std::abs(p - 2.0) < 1e-14;
  const Point entry = cur;

  const auto note = [&](Point&& pt) {
    cur = std::move(pt);
    ++iter;
    recorder.maybe(iter, cur);
    if (cur.vp.value < best.vp.value) best = cur;
  };

  // Damped Newton at fixed smoothing width. Smoothed mode line-searches the
  // surrogate; exact mode (polish) line-searches J itself with the exact
  // gradient. Accepted steps are traced with the true value and gradient.
  // A pass ends when its objective stops moving by more than rounding noise
  // or (polish) when the gradient norm stops shrinking.
  const auto newton_pass = [&](double mu, bool exact) {
    double pass_grad = cur.grad_norm;
    int no_gain = 0;
    for (int it = 0; it < kNewtonPerLevel; ++it) {
      if (cur.grad_norm <= config.grad_tol || iter >= config.max_iters) return;
      Vector gm;
      double fm = 0.0;
      if (exact) {
        gm = cur.grad;
        fm = cur.vp.value;
      } else {
        gm = engine.gradient_smoothed(cur.phi, mu);
        fm = engine.value_smoothed(cur.phi, mu);
        const double noise = 1e-12 * std::abs(fm) / std::max(cur.phi.norm(), 1e-300);
        if (gm.norm() <= std::max(1e-3 * config.grad_tol, noise)) return;
      }
      const Matrix hess = engine.hessian_smoothed(cur.phi, mu);
      const Vector dir = hess.ldlt().solve(-gm);
      const double slope = gm.dot(dir);
      if (!std::isfinite(slope) || slope >= 0.0) return;
      double a = 1.0;
      bool moved = false;
      double accepted_f = fm;
      for (int bt = 0; bt < kMaxBacktracks && !moved; ++bt) {
        try {
          Vector trial_phi = cur.phi + a * dir;
          if (exact) {
            Point trial = evaluate(engine, std::move(trial_phi));
            if (trial.vp.value <= fm + kArmijoSlope * a * slope) {
              accepted_f = trial.vp.value;
              note(std::move(trial));
              moved = true;
            }
          } else {
            const double ft = engine.value_smoothed(trial_phi, mu);
            if (ft <= fm + kArmijoSlope * a * slope) {
              accepted_f = ft;
              note(evaluate(engine, std::move(trial_phi)));
              moved = true;
            }
          }
        } catch (const std::runtime_error&) {
        }
        a *= 0.5;
      }
      if (!moved) return;
      if (fm - accepted_f <= 64.0 * std::numeric_limits<double>::epsilon() *
                                 (std::abs(fm) + std::abs(accepted_f))) {
        return;  // below representable progress
      }
      if (exact) {
        if (cur.grad_norm < 0.9 * pass_grad) {
          pass_grad = cur.grad_norm;
          no_gain = 0;
        } else if (++no_gain >= 8) {
          return;  // value still creeps but the gradient is wedged
        }
      }
    }
  };

  if (quadratic) {  // surrogate and Hessian are exact: plain damped Newton
    newton_pass(0.0, /*exact=*/true);
    return;
  }

  const double peak = peak_observation(engine, cur.phi);
  if (peak > 0.0) {
    double mu = peak;
    double ref = cur.grad_norm;
    int stagnant = 0;
    for (int level = 0; level < kMaxLevels; ++level) {
      if (cur.grad_norm <= config.grad_tol || iter >= config.max_iters) break;
      newton_pass(mu, /*exact=*/false);
      if (cur.grad_norm <= 0.5 * ref) {
        ref = cur.grad_norm;
        stagnant = 0;
      } else if (++stagnant >= kStagnantLevels) {
        break;
      }
      mu *= kLevelShrink;
    }
  }
  newton_pass(kPolishWidth * peak_observation(engine, cur.phi), /*exact=*/true);

  // Never hand back a point that is worse on both counts than the entry.
  if (cur.grad_norm > entry.grad_norm && cur.vp.value >= entry.vp.value) cur = entry;
}

}  // namespace

void validate_optimizer_config(const OptimizerConfig& config) {
  if (!std::isfinite(config.step) || config.step <= 0.0) {
    throw std::invalid_argument("step: must be positive and finite");
  }
  if (!std::isfinite(config.grad_tol) || config.grad_tol <= 0.0) {
    throw std::invalid_argument("grad_tol: must be positive and finite");
  }
  if (config.max_iters < 0) {
    throw std::invalid_argument("max_iters: must be >= 0");
  }
  if (config.trace_every < 0) {
    throw std::invalid_argument("trace_every: must be >= 0");
  }
}

std::string to_string(OptimMethod method) {
  switch (method) {
    case OptimMethod::PaperGradient: return "paper-gradient";
    case OptimMethod::AdaptiveGradient: return "adaptive-gradient";
  }
  throw std::invalid_argument("method: unknown optimizer method");
}

OptimMethod optim_method_from_string(const std::string& name) {
  if (name == "paper-gradient") return OptimMethod::PaperGradient;
  if (name == "adaptive-gradient") return OptimMethod::AdaptiveGradient;
  throw std::invalid_argument("method: expected paper-gradient or adaptive-gradient, got '" + name +
                              "'");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::GradTolMet: return "grad_tol_met";
    case Termination::MaxIters: return "max_iters";
    case Termination::StepFailure: return "step_failure";
  }
  throw std::invalid_argument("termination: unknown value");
}

OptimizerResult minimize_dual(const DualEngine& engine, const OptimizerConfig& config,
                              const Vector& phi0) {
  validate_optimizer_config(config);
  const auto n = engine.terminal_pull().size();
  Vector start = phi0.size() == 0 ? Vector(Vector::Zero(n)) : phi0;

  OptimizerResult result;
  Recorder recorder(result.trace, config.trace_every);

  Point cur = evaluate(engine, std::move(start));
  Point best = cur;
  recorder.maybe(0, cur);

  long iter = 0;
  result.termination = Termination::MaxIters;
  double alpha = config.step;
  long increases = 0;
  long since_endgame = 0;
  double window_ref = cur.grad_norm;
  int stalls = 0;

  while (true) {
    if (cur.grad_norm <= config.grad_tol) {
      result.termination = Termination::GradTolMet;
      break;
    }
    if (iter >= config.max_iters) {
      result.termination = Termination::MaxIters;
      break;
    }

    if (config.method == OptimMethod::PaperGradient) {
      bool blew_up = false;
      Point next;
      try {
        next = evaluate(engine, cur.phi - config.step * cur.grad);
      } catch (const std::runtime_error&) {
        blew_up = true;  // overflowed past representable range
      }
      if (!blew_up) {
        increases = next.vp.value > cur.vp.value ? increases + 1 : 0;
        cur = std::move(next);
        ++iter;
        recorder.maybe(iter, cur);
        if (cur.vp.value < best.vp.value) best = cur;
      }
      if (blew_up || increases >= kDivergenceStreak) {
        result.diverged = true;
        result.termination = Termination::StepFailure;
        if (blew_up) ++iter;
        break;
      }
      continue;
    }

    // Adaptive: Barzilai-Borwein trial step, backtracking descent test with a
    // rounding-noise allowance so sub-epsilon disagreements do not stall. The
    // curvature endgame takes over periodically and whenever backtracking
    // cannot move.
    bool need_endgame = since_endgame >= kEndgamePeriod;

    if (!need_endgame) {
      double a = alpha;
      bool accepted = false;
      Point next;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        const double step_size = a * cur.grad_norm;
        if (step_size <= kStepFloor * cur.phi.norm()) break;
        bool usable = true;
        try {
          next = evaluate(engine, cur.phi - a * cur.grad);
        } catch (const std::runtime_error&) {
          usable = false;
        }
        if (usable) {
          const double noise =
              64.0 * std::numeric_limits<double>::epsilon() * (cur.vp.scale + next.vp.scale);
          const double target =
              cur.vp.value - kArmijoSlope * a * cur.grad_norm * cur.grad_norm + noise;
          if (next.vp.value <= target) {
            accepted = true;
            break;
          }
        }
        a *= 0.5;
      }
      if (accepted) {
        const Vector s = next.phi - cur.phi;
        const Vector y = next.grad - cur.grad;
        const double sy = s.dot(y);
        const double yy = y.squaredNorm();
        alpha = (std::isfinite(sy) && std::isfinite(yy) && sy > 0.0 && yy > 0.0) ? sy / yy : a;

        cur = std::move(next);
        ray_rescale(engine, cur, best);
        ++iter;
        recorder.maybe(iter, cur);
        if (cur.vp.value < best.vp.value) best = cur;
        ++since_endgame;
        continue;
      }
      need_endgame = true;  // no descent step representable from here
    }

    if (cur.grad_norm <= 0.5 * window_ref) stalls = 0;  // the window made progress
    const double before = cur.grad_norm;
    curvature_endgame(engine, config, recorder, cur, best, iter);
    since_endgame = 0;
    window_ref = cur.grad_norm;
    // Restart the secant memory at the scale of a full relative move so the
    // backtracking range can reach the (possibly very narrow) valley width.
    alpha = cur.phi.norm() > 0.0
                ? std::min(config.step, cur.phi.norm() / std::max(cur.grad_norm, 1e-300))
                : config.step;
    if (cur.grad_norm <= 0.5 * before || cur.grad_norm <= config.grad_tol) {
      stalls = 0;
      continue;
    }
    if (++stalls >= kMaxStalls) {
      result.termination = Termination::StepFailure;
      break;
    }
  }

  recorder.final(iter, cur);
  if (cur.vp.value < best.vp.value) best = cur;

  // Report the iterate that satisfied the tolerance; otherwise the best seen.
  const Point& out = result.termination == Termination::GradTolMet ? cur : best;
  result.phi = out.phi;
  result.j_value = out.vp.value;
  result.grad_norm = out.grad_norm;
  result.iterations = iter;
  return result;
}

}  // namespace nullctl
