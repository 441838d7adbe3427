#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "iqcmhe/model.hpp"

using namespace iqcmhe;
using model::Matrix;
using model::Scenario;
using model::Vector;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector vec1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("example uncertainty values") {
  const Scenario s = model::build_example_scenario();
  CHECK(s.uncertainty.delta(vec1(0.0))(0) == 0.0);
  CHECK(s.uncertainty.delta(vec1(3.0))(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.envelope.A.lo(0, 0) == doctest::Approx(1.25));
  CHECK(s.envelope.A.hi(0, 0) == doctest::Approx(1.35));
}

TEST_CASE("uncertainty is bounded and slope restricted in [0, 0.25]") {
  const Scenario s = model::build_example_scenario();
  Rng rng(3);
  for (int k = 0; k < 2000; ++k) {
    const double a = rng.uniform(-50.0, 50.0);
    const double b = rng.uniform(-50.0, 50.0);
    const double da = s.uncertainty.delta(vec1(a))(0);
    CHECK(std::abs(da) <= 0.5 + 1e-15);
    if (std::abs(a - b) > 1e-9) {
      const double db = s.uncertainty.delta(vec1(b))(0);
      const double slope = (da - db) / (a - b);
      CHECK(slope >= -1e-12);
      CHECK(slope <= 0.25 + 1e-12);
    }
  }
}

TEST_CASE("plant_step at the equilibrium") {
  const Scenario s = model::build_example_scenario();
  const Vector u0 = s.controller.kappa(Vector::Zero(2));
  CHECK(u0.cwiseAbs().maxCoeff() == 0.0);
  auto r = model::plant_step(s, Vector::Zero(2), Vector::Zero(1), u0);
  CHECK(r.x_next.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.y.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.v.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.d.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("plant_step hand-computed values") {
  const Scenario s = model::build_example_scenario();
  auto r = model::plant_step(s, vec2(1.0, 0.0), vec1(0.0), Vector::Zero(2));
  CHECK(r.v(0) == doctest::Approx(1.0));
  CHECK(r.d(0) == doctest::Approx(0.25));
  CHECK(r.x_next(0) == doctest::Approx(1.3 - 0.25 - 0.1 * std::sin(0.5)).epsilon(1e-14));
  CHECK(r.x_next(1) == doctest::Approx(0.6));

  auto r2 = model::plant_step(s, vec2(0.0, 1.0), vec1(0.05), Vector::Zero(2));
  CHECK(r2.y(0) == doctest::Approx(1.05));
}

TEST_CASE("plant_step rejects disturbance outside W") {
  const Scenario s = model::build_example_scenario();
  CHECK_THROWS_AS(model::plant_step(s, Vector::Zero(2), vec1(0.2), Vector::Zero(2)),
                  DomainViolation);
}

TEST_CASE("envelope validation passes on the built-in scenario") {
  const Scenario s = model::build_example_scenario();
  auto rep = model::validate_envelope(s, 10000, 12345);
  CHECK(rep.all_pass);
  CHECK(rep.worst_violation <= 1e-9);
}

TEST_CASE("shrunk interval fails the difference-dynamics block") {
  Scenario s = model::build_example_scenario();
  s.envelope.A.lo(0, 0) = 1.3;
  s.envelope.A.hi(0, 0) = 1.3;
  auto rep = model::validate_envelope(s, 2000, 7);
  bool f_diff_failed = false;
  for (const auto& b : rep.blocks)
    if (b.block == "f_diff") f_diff_failed = !b.pass;
  CHECK(f_diff_failed);
}

TEST_CASE("zero plant with zero envelope passes") {
  Scenario s = model::build_example_scenario();
  s.plant.f = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Vector::Zero(2);
  };
  s.plant.h = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Vector::Zero(1);
  };
  s.plant.g = [](const Vector&, const Vector&) { return Vector::Zero(1); };
  s.plant.f_x = s.plant.f_w = s.plant.f_d = nullptr;
  s.plant.h_x = s.plant.h_w = s.plant.h_d = nullptr;
  s.plant.g_x = s.plant.g_w = nullptr;
  s.controller.kappa = [](const Vector&) { return Vector::Zero(2); };
  model::LipschitzEnvelope z;
  using model::IntervalMatrix;
  z.A = z.A_abs = IntervalMatrix::zero(2, 2);
  z.B_w = z.B_w_abs = IntervalMatrix::zero(2, 1);
  z.B_d = z.B_d_abs = IntervalMatrix::zero(2, 1);
  z.B_u = IntervalMatrix::zero(2, 2);
  z.C = IntervalMatrix::zero(1, 2);
  z.D_w = IntervalMatrix::zero(1, 1);
  z.D_d = IntervalMatrix::zero(1, 1);
  z.C_v = z.C_v_abs = IntervalMatrix::zero(1, 2);
  z.E_w = z.E_w_abs = IntervalMatrix::zero(1, 1);
  s.envelope = z;
  auto rep = model::validate_envelope(s, 500, 99);
  CHECK(rep.all_pass);
}

TEST_CASE("analytic jacobians agree with finite differences") {
  const Scenario s = model::build_example_scenario();
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const Vector x = vec2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Vector w = vec1(rng.uniform(-0.1, 0.1));
    const Vector d = vec1(rng.uniform(-0.5, 0.5));
    const Vector u = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    auto ja = model::plant_jacobians(s.plant, x, w, d, u);
    model::PlantModel numeric = s.plant;
    numeric.f_x = numeric.f_w = numeric.f_d = nullptr;
    numeric.h_x = numeric.h_w = numeric.h_d = nullptr;
    numeric.g_x = numeric.g_w = nullptr;
    auto jn = model::plant_jacobians(numeric, x, w, d, u);
    CHECK((ja.f_x - jn.f_x).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((ja.f_d - jn.f_d).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((ja.h_x - jn.h_x).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((ja.g_x - jn.g_x).cwiseAbs().maxCoeff() <= 1e-8);
  }
}
