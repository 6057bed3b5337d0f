#include <doctest.h>

#include <cmath>
#include <limits>

#include "nullctl/system.hpp"
#include "support.hpp"

using namespace nullctl;
using testsupport::thrown_message;

TEST_CASE("eliminated heat1d assembles the interior Dirichlet stencil") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const double h = 1.0 / 11.0;
  CHECK(sys.state_dim() == 10);
  CHECK(sys.control_dim() == 1);
  CHECK(sys.h == doctest::Approx(h).epsilon(1e-15));
  CHECK(sys.horizon == 1.0);
  CHECK(sys.symmetric);
  CHECK(sys.scheme == Scheme::Eliminated);

  const double diag = -2.0 / (h * h) + 1.0;  // c^2 = 1 reaction term
  const double off = 1.0 / (h * h);
  for (int i = 0; i < 10; ++i) {
    CHECK(sys.a(i, i) == doctest::Approx(diag).epsilon(1e-14));
  }
  CHECK(sys.a(3, 4) == doctest::Approx(off).epsilon(1e-14));
  CHECK(sys.a(4, 3) == doctest::Approx(off).epsilon(1e-14));
  CHECK(sys.a(0, 2) == 0.0);

  // the boundary data reaches only the first and last interior nodes, scaled 1/h^2
  CHECK(sys.b(0, 0) == doctest::Approx(off).epsilon(1e-14));
  CHECK(sys.b(9, 0) == doctest::Approx(off).epsilon(1e-14));
  CHECK(sys.b.middleRows(1, 8).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("paper-verbatim heat1d keeps the boundary coordinates as state") {
  const auto sys = build_heat1d(10, 1.0, 1.0, Scheme::PaperVerbatim);
  CHECK(sys.state_dim() == 12);
  CHECK(sys.control_dim() == 1);
  CHECK_FALSE(sys.symmetric);
  CHECK(sys.scheme == Scheme::PaperVerbatim);

  // boundary rows carry no dynamics; the control feeds them directly
  CHECK(sys.a.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sys.a.row(11).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sys.b(0, 0) == 1.0);
  CHECK(sys.b(11, 0) == 1.0);
  CHECK(sys.b.middleRows(1, 10).cwiseAbs().maxCoeff() == 0.0);

  const double h = 1.0 / 11.0;
  CHECK(sys.a(1, 1) == doctest::Approx(-2.0 / (h * h) + 1.0).epsilon(1e-14));
  CHECK(sys.a(1, 0) == doctest::Approx(1.0 / (h * h)).epsilon(1e-14));
  CHECK(sys.a(1, 2) == doctest::Approx(1.0 / (h * h)).epsilon(1e-14));
}

TEST_CASE("heat1d eigenvalues match the discrete Dirichlet closed form") {
  const int n = 10;
  const double c = 1.0;
  const auto sys = build_heat1d(n, c, 1.0, Scheme::Eliminated);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sys.a);
  REQUIRE(eig.info() == Eigen::Success);
  const double pi = std::acos(-1.0);
  for (int k = 1; k <= n; ++k) {
    const double s = std::sin(0.5 * k * pi * sys.h);
    const double expected = c * c - 4.0 / (sys.h * sys.h) * s * s;
    // Eigen reports eigenvalues in ascending order: index n-k holds mode k
    CHECK(eig.eigenvalues()(n - k) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("system construction validates shapes and parameters") {
  const Matrix a = -Matrix::Identity(2, 2);
  const Matrix b = Matrix::Ones(2, 1);
  CHECK(thrown_message([&] { (void)make_system(Matrix::Ones(2, 3), b, 0.5, 1.0); })
            .starts_with("a:"));
  CHECK(thrown_message([&] { (void)make_system(a, Matrix::Ones(3, 1), 0.5, 1.0); })
            .starts_with("b:"));
  CHECK(thrown_message([&] { (void)make_system(a, Matrix::Zero(2, 0), 0.5, 1.0); })
            .starts_with("b:"));
  CHECK(thrown_message([&] { (void)make_system(a, b, 0.0, 1.0); }).starts_with("h:"));
  CHECK(thrown_message([&] { (void)make_system(a, b, 1.0, 1.0); }).starts_with("h:"));
  CHECK(thrown_message([&] { (void)make_system(a, b, 0.5, 0.0); }).starts_with("horizon:"));
  Matrix bad = a;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(thrown_message([&] { (void)make_system(bad, b, 0.5, 1.0); })
            .starts_with("a contains a non-finite entry"));

  CHECK(thrown_message([] { (void)build_heat1d(1, 1.0, 1.0, Scheme::Eliminated); })
            .starts_with("n:"));
  CHECK(thrown_message([] {
          (void)build_heat1d(4, std::numeric_limits<double>::infinity(), 1.0, Scheme::Eliminated);
        }).starts_with("c:"));
}

TEST_CASE("make_system detects symmetry and records the name") {
  Matrix a(2, 2);
  a << -1.0, 0.5, 0.5, -2.0;
  const auto sys = make_system(a, Matrix::Identity(2, 2), 0.5, 2.0, "demo");
  CHECK(sys.symmetric);
  CHECK(sys.name == "demo");
  CHECK(sys.horizon == 2.0);
  CHECK_FALSE(sys.scheme.has_value());
  a(0, 1) = 0.25;
  CHECK_FALSE(make_system(a, Matrix::Identity(2, 2), 0.5, 2.0).symmetric);
}

TEST_CASE("initial data sampling follows each scheme's spatial grid") {
  const auto elim = build_heat1d(10, 1.0, 1.0, Scheme::Eliminated);
  const auto init = sample_initial(elim, [](double x) { return x; });
  CHECK(init.source == InitialData::Source::SampledFunction);
  REQUIRE(init.y0.size() == 10);
  CHECK(init.y0(0) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
  CHECK(init.y0(9) == doctest::Approx(10.0 / 11.0).epsilon(1e-15));

  const auto verb = build_heat1d(10, 1.0, 1.0, Scheme::PaperVerbatim);
  const auto viny = sample_initial(verb, [](double x) { return std::exp(-x * x); });
  REQUIRE(viny.y0.size() == 12);
  CHECK(viny.y0(0) == 1.0);                               // x = 0 endpoint
  CHECK(viny.y0(11) == doctest::Approx(std::exp(-1.0)));  // x = 1 endpoint

  CHECK(thrown_message([&] {
          (void)sample_initial(elim, [](double) { return std::numeric_limits<double>::quiet_NaN(); });
        }).starts_with("sample_initial:"));
  const auto dense = make_system(-Matrix::Identity(2, 2), Matrix::Ones(2, 1), 0.5, 1.0);
  CHECK(thrown_message([&] { (void)sample_initial(dense, [](double) { return 1.0; }); })
            .starts_with("sample_initial:"));
}

TEST_CASE("raw initial vectors are validated against the state dimension") {
  const auto sys = build_heat1d(4, 1.0, 1.0, Scheme::Eliminated);
  const auto init = raw_initial(sys, Vector::Ones(4));
  CHECK(init.source == InitialData::Source::RawVector);
  CHECK((init.y0 - Vector::Ones(4)).norm() == 0.0);
  CHECK(thrown_message([&] { (void)raw_initial(sys, Vector::Ones(5)); }).starts_with("y0:"));
  Vector bad = Vector::Ones(4);
  bad(2) = std::numeric_limits<double>::infinity();
  CHECK(thrown_message([&] { (void)raw_initial(sys, bad); }).starts_with("y0:"));
}

TEST_CASE("scheme names round-trip through their parser") {
  CHECK(to_string(Scheme::Eliminated) == "eliminated");
  CHECK(to_string(Scheme::PaperVerbatim) == "paper-verbatim");
  CHECK(scheme_from_string("eliminated") == Scheme::Eliminated);
  CHECK(scheme_from_string("paper-verbatim") == Scheme::PaperVerbatim);
  CHECK(thrown_message([] { (void)scheme_from_string("bogus"); }).starts_with("scheme:"));
}
