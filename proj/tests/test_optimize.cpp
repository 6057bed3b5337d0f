#include <doctest.h>

#include <cmath>
#include <optional>

#include "nullctl/optimize.hpp"
#include "nullctl/oracle.hpp"
#include "support.hpp"

using namespace nullctl;
using testsupport::thrown_message;

namespace {

SemidiscreteSystem scalar_system() {
  Matrix a(1, 1), b(1, 1);
  a << -1.0;
  b << 1.0;
  return make_system(a, b, 0.5, 1.0, "scalar");
}

}  // namespace

TEST_CASE("optimizer names and configuration are validated") {
  CHECK(to_string(OptimMethod::PaperGradient) == "paper-gradient");
  CHECK(to_string(OptimMethod::AdaptiveGradient) == "adaptive-gradient");
  CHECK(optim_method_from_string("paper-gradient") == OptimMethod::PaperGradient);
  CHECK(optim_method_from_string("adaptive-gradient") == OptimMethod::AdaptiveGradient);
  CHECK(thrown_message([] { (void)optim_method_from_string("bogus"); }).starts_with("method:"));

  CHECK(to_string(Termination::GradTolMet) == "grad_tol_met");
  CHECK(to_string(Termination::MaxIters) == "max_iters");
  CHECK(to_string(Termination::StepFailure) == "step_failure");

  OptimizerConfig config;
  validate_optimizer_config(config);  // defaults are fine
  config.max_iters = 0;
  validate_optimizer_config(config);  // a zero budget is allowed

  auto broken = [](auto mutate) {
    OptimizerConfig c;
    mutate(c);
    return thrown_message([&] { validate_optimizer_config(c); });
  };
  CHECK(broken([](OptimizerConfig& c) { c.step = 0.0; }).starts_with("step:"));
  CHECK(broken([](OptimizerConfig& c) { c.grad_tol = 0.0; }).starts_with("grad_tol:"));
  CHECK(broken([](OptimizerConfig& c) { c.max_iters = -1; }).starts_with("max_iters:"));
  CHECK(broken([](OptimizerConfig& c) { c.trace_every = -1; }).starts_with("trace_every:"));
}

TEST_CASE("fixed-step descent converges on the scalar quadratic") {
  const auto sys = scalar_system();
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(2.0, 2.0, 64);  // h^beta = 0.25
  const DualEngine engine(sys, prop, params, Vector::Ones(1));

  const double g = (1.0 - std::exp(-2.0)) / 2.0 + 0.25;
  const double d = std::exp(-1.0);

  OptimizerConfig config;
  config.method = OptimMethod::PaperGradient;
  config.step = 1.0;  // contraction factor |1 - step g| ~ 0.32
  config.grad_tol = 1e-10;
  config.max_iters = 2000;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::GradTolMet);
  CHECK_FALSE(result.diverged);
  CHECK(result.grad_norm <= 1e-10);
  CHECK(result.iterations > 0);
  CHECK(result.phi(0) == doctest::Approx(-d / g).epsilon(1e-9));
  CHECK(result.j_value == doctest::Approx(-d * d / (2.0 * g)).epsilon(1e-12));
}

TEST_CASE("fixed-step descent flags sustained divergence") {
  const auto sys = scalar_system();
  const auto prop = make_propagator(sys);
  const DualEngine engine(sys, prop, make_dual_parameters(2.0, 2.0, 64), Vector::Ones(1));

  OptimizerConfig config;
  config.method = OptimMethod::PaperGradient;
  config.step = 10.0;  // amplification factor |1 - step g| > 1
  config.grad_tol = 1e-10;
  config.max_iters = 5000;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::StepFailure);
  CHECK(result.diverged);
}

TEST_CASE("the adaptive method reaches machine-precision gradients at p = 2") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(2.0, 2.0);
  const auto init = sample_initial(sys, [](double x) { return std::exp(-x * x); });
  const DualEngine engine(sys, prop, params, init.y0);

  OptimizerConfig config;
  config.grad_tol = 1e-12;
  config.max_iters = 5000;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::GradTolMet);
  CHECK(result.grad_norm <= 1e-12);
  CHECK(engine.gradient(result.phi).norm() <= 1e-12);

  const Vector direct = p2_gramian_solve(sys, prop, params, init.y0);
  CHECK((result.phi - direct).norm() <= 1e-9 * (1.0 + direct.norm()));
}

TEST_CASE("the adaptive method solves the nonsmooth exponent to tight tolerance") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(1.2, 2.0);
  const auto init = sample_initial(sys, [](double x) { return std::exp(-x * x); });
  const DualEngine engine(sys, prop, params, init.y0);

  OptimizerConfig config;
  config.grad_tol = 1e-9;
  config.max_iters = 20000;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::GradTolMet);
  CHECK(result.grad_norm <= 1e-9);
  CHECK(result.j_value < 0.0);  // strictly better than the zero start
}

TEST_CASE("published settings stop immediately on the eliminated default") {
  // the gradient at phi = 0 is e^{TA} y0, whose norm is already below 1e-2
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(1.2, 2.0);
  const auto init = sample_initial(sys, [](double x) { return std::exp(-x * x); });
  const DualEngine engine(sys, prop, params, init.y0);

  OptimizerConfig config;
  config.method = OptimMethod::PaperGradient;
  config.step = 0.01;
  config.grad_tol = 1e-2;
  config.max_iters = 1000;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::GradTolMet);
  CHECK(result.iterations == 0);
  CHECK(result.phi.norm() == 0.0);
}

TEST_CASE("a warm start at the solution returns without iterating") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(2.0, 2.0);
  const auto init = sample_initial(sys, [](double x) { return std::exp(-x * x); });
  const DualEngine engine(sys, prop, params, init.y0);
  const Vector star = p2_gramian_solve(sys, prop, params, init.y0);

  OptimizerConfig config;
  config.grad_tol = 1e-8;
  const auto result = minimize_dual(engine, config, star);

  CHECK(result.termination == Termination::GradTolMet);
  CHECK(result.iterations == 0);
  CHECK((result.phi - star).norm() == 0.0);
}

TEST_CASE("an exhausted budget reports max_iters with the best iterate") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto prop = make_propagator(sys);
  const auto params = make_dual_parameters(2.0, 2.0);
  const auto init = sample_initial(sys, [](double x) { return std::exp(-x * x); });
  const DualEngine engine(sys, prop, params, init.y0);

  OptimizerConfig config;
  config.grad_tol = 1e-14;
  config.max_iters = 2;
  const auto result = minimize_dual(engine, config);

  CHECK(result.termination == Termination::MaxIters);
  CHECK(result.iterations == 2);
  CHECK(result.j_value <= engine.value(Vector::Zero(10)));
}

TEST_CASE("the trace records the start, the cadence and the final iterate") {
  const auto sys = scalar_system();
  const auto prop = make_propagator(sys);
  const DualEngine engine(sys, prop, make_dual_parameters(2.0, 2.0, 64), Vector::Ones(1));

  OptimizerConfig config;
  config.method = OptimMethod::PaperGradient;
  config.step = 0.5;
  config.grad_tol = 1e-8;
  config.max_iters = 500;
  config.trace_every = 2;
  const auto result = minimize_dual(engine, config);

  REQUIRE(result.trace.size() >= 2);
  CHECK(result.trace.front().iter == 0);
  CHECK(result.trace.front().phi_norm == 0.0);
  CHECK(result.trace.front().j_value == 0.0);  // J(0) = 0 for this functional
  CHECK(result.trace.back().iter == result.iterations);
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].iter > result.trace[i - 1].iter);
  }

  config.trace_every = 0;
  CHECK(minimize_dual(engine, config).trace.empty());
}

TEST_CASE("a warm start must match the state dimension") {
  const auto sys = scalar_system();
  const auto prop = make_propagator(sys);
  const DualEngine engine(sys, prop, make_dual_parameters(2.0, 2.0, 64), Vector::Ones(1));
  OptimizerConfig config;
  CHECK(thrown_message([&] { (void)minimize_dual(engine, config, Vector::Ones(3)); })
            .starts_with("phi"));
}
