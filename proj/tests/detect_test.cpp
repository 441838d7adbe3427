#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "iqcmhe/detect.hpp"

using namespace iqcmhe;
using detect::Matrix;
using detect::Vector;

namespace {

const double kRho = std::sqrt(0.86);

iqc::MultiplierTemplate example_template() {
  return iqc::combine({iqc::build_zames_falb_template(2, 0.0, 0.25, 1, kRho),
                       iqc::build_static_polytopic_template(0.0, 0.25, 1)});
}

detect::VerifyOptions fast_options() {
  detect::VerifyOptions opts;
  opts.interior_samples = 200;
  return opts;
}

// x+ = 0.5 x + w, y = x + w, no uncertainty channel
model::Scenario scalar_scenario() {
  model::Scenario s;
  s.name = "scalar";
  s.plant.n = 1;
  s.plant.n_w = 1;
  s.plant.p = 1;
  s.plant.q = 1;
  s.plant.m = 1;
  s.plant.l = 1;
  s.plant.f = [](const Vector& x, const Vector& w, const Vector&, const Vector&) {
    return Vector::Constant(1, 0.5 * x(0) + w(0));
  };
  s.plant.h = [](const Vector& x, const Vector& w, const Vector&, const Vector&) {
    return Vector::Constant(1, x(0) + w(0));
  };
  s.plant.g = [](const Vector& x, const Vector&) { return x; };
  s.controller.l = 1;
  s.controller.kappa = [](const Vector&) { return Vector::Zero(1); };
  s.uncertainty.q = 1;
  s.uncertainty.p = 1;
  s.uncertainty.delta = [](const Vector&) { return Vector::Zero(1); };
  s.X = model::BoxSet::unbounded(1);
  s.W = model::BoxSet::symmetric(1, 0.1);
  s.U = model::BoxSet::unbounded(1);
  s.Y = model::BoxSet::unbounded(1);
  using model::IntervalMatrix;
  s.envelope.A = s.envelope.A_abs = IntervalMatrix::point(Matrix::Constant(1, 1, 0.5));
  s.envelope.B_w = s.envelope.B_w_abs = IntervalMatrix::point(Matrix::Constant(1, 1, 1.0));
  s.envelope.B_d = s.envelope.B_d_abs = IntervalMatrix::zero(1, 1);
  s.envelope.B_u = IntervalMatrix::zero(1, 1);
  s.envelope.C = IntervalMatrix::point(Matrix::Constant(1, 1, 1.0));
  s.envelope.D_w = IntervalMatrix::point(Matrix::Constant(1, 1, 1.0));
  s.envelope.D_d = IntervalMatrix::zero(1, 1);
  s.envelope.C_v = s.envelope.C_v_abs = IntervalMatrix::point(Matrix::Constant(1, 1, 1.0));
  s.envelope.E_w = s.envelope.E_w_abs = IntervalMatrix::zero(1, 1);
  s.x0 = Vector::Zero(1);
  s.xhat0 = Vector::Zero(1);
  return s;
}

model::Scenario unobservable_scenario() {
  model::Scenario s = scalar_scenario();
  s.name = "unobservable";
  s.plant.n = 2;
  s.plant.f = [](const Vector& x, const Vector&, const Vector&, const Vector&) {
    return Vector(2.0 * x);
  };
  s.plant.h = [](const Vector& x, const Vector& w, const Vector&, const Vector&) {
    return Vector::Constant(1, x(0) + w(0));
  };
  s.plant.g = [](const Vector& x, const Vector&) { return Vector::Constant(1, x(0)); };
  s.controller.kappa = [](const Vector&) { return Vector::Zero(1); };
  using model::IntervalMatrix;
  s.envelope.A = s.envelope.A_abs = IntervalMatrix::point(2.0 * Matrix::Identity(2, 2));
  s.envelope.B_w = s.envelope.B_w_abs = IntervalMatrix::zero(2, 1);
  s.envelope.B_d = s.envelope.B_d_abs = IntervalMatrix::zero(2, 1);
  s.envelope.B_u = IntervalMatrix::zero(2, 2);
  Matrix c_row(1, 2);
  c_row << 1.0, 0.0;
  s.envelope.C = IntervalMatrix::point(c_row);
  s.envelope.C_v = s.envelope.C_v_abs = IntervalMatrix::point(c_row);
  s.X = model::BoxSet::unbounded(2);
  s.x0 = Vector::Zero(2);
  s.xhat0 = Vector::Zero(2);
  return s;
}

}  // namespace

TEST_CASE("extended system dimensions and vertex count for the example") {
  const auto scenario = model::build_example_scenario();
  const auto tpl = example_template();
  const auto ext = detect::assemble_extended_vertices(scenario.envelope, tpl.filter);
  CHECK(ext.dims.n_chi == 12);
  CHECK(ext.dims.n_nu == 6);
  CHECK(ext.dims.n_zeta == 21);
  CHECK(ext.free_interval_count == 2);  // the two sine-slope entries
  CHECK(ext.vertices.size() == 4);
}

TEST_CASE("all-point envelope yields exactly one vertex") {
  auto scenario = model::build_example_scenario();
  scenario.envelope.A.lo(0, 0) = scenario.envelope.A.hi(0, 0) = 1.3;
  scenario.envelope.A_abs = scenario.envelope.A;
  const auto tpl = example_template();
  const auto ext = detect::assemble_extended_vertices(scenario.envelope, tpl.filter);
  CHECK(ext.vertices.size() == 1);
}

TEST_CASE("zero envelope and empty filter give a zero system matrix") {
  auto scenario = scalar_scenario();
  using model::IntervalMatrix;
  scenario.envelope.A = scenario.envelope.A_abs = IntervalMatrix::zero(1, 1);
  scenario.envelope.B_w = scenario.envelope.B_w_abs = IntervalMatrix::zero(1, 1);
  scenario.envelope.C = IntervalMatrix::zero(1, 1);
  scenario.envelope.D_w = IntervalMatrix::zero(1, 1);
  const auto filter = iqc::FilterRealization::empty(0);
  const auto ext = detect::assemble_extended_vertices(scenario.envelope, filter);
  REQUIRE(ext.vertices.size() == 1);
  CHECK(ext.vertices[0].A.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("too many free intervals is rejected") {
  auto scenario = model::build_example_scenario();
  scenario.envelope.A.lo = Matrix::Constant(2, 2, -1.0);
  scenario.envelope.A.hi = Matrix::Constant(2, 2, 1.0);
  scenario.envelope.A_abs = scenario.envelope.A;
  scenario.envelope.B_u.lo = Matrix::Constant(2, 2, -1.0);
  scenario.envelope.B_u.hi = Matrix::Constant(2, 2, 1.0);
  scenario.envelope.B_w.lo = Matrix::Constant(2, 1, -1.0);
  scenario.envelope.B_w.hi = Matrix::Constant(2, 1, 1.0);
  scenario.envelope.B_w_abs = scenario.envelope.B_w;
  scenario.envelope.C_v_abs.lo = Matrix::Constant(1, 2, -1.0);
  scenario.envelope.C_v_abs.hi = Matrix::Constant(1, 2, 1.0);
  const auto tpl = example_template();
  CHECK_THROWS_AS(detect::assemble_extended_vertices(scenario.envelope, tpl.filter),
                  TooManyVertices);
}

TEST_CASE("section-VI feasibility dichotomy") {
  const auto scenario = model::build_example_scenario();
  auto opts = fast_options();

  auto combined = detect::verify_detectability(scenario, example_template(), kRho, opts);
  REQUIRE(combined.status == detect::VerifyStatus::Certified);
  CHECK(combined.margin > 1e-6);
  CHECK(combined.certificate->dims.n_psi == 4);
  CHECK(combined.certificate->dims.n_z == 8);
  CHECK(combined.interior_max_eig <= opts.interior_tol);

  auto static_only = detect::verify_detectability(
      scenario, iqc::build_static_polytopic_template(0.0, 0.25, 1), kRho, opts);
  CHECK(static_only.status == detect::VerifyStatus::Infeasible);
}

TEST_CASE("certified example satisfies the stored vertex LMIs and P11 > 0") {
  const auto scenario = model::build_example_scenario();
  auto outcome = detect::verify_detectability(scenario, example_template(), kRho, fast_options());
  REQUIRE(outcome.status == detect::VerifyStatus::Certified);
  const auto& cert = *outcome.certificate;

  const auto ext = detect::assemble_extended_vertices(scenario.envelope, cert.multiplier.filter);
  for (const auto& v : ext.vertices)
    CHECK(numkit::max_eigenvalue(detect::evaluate_lmi(cert, v)) <= -cert.margin + 1e-7);
  CHECK(numkit::min_eigenvalue(cert.P0) > 0.0);

  // storage positivity: P - diag(0, rho^-2 Z) > 0
  Matrix p1 = cert.P;
  const int psi_off = 2 * cert.dims.n + cert.dims.n_psi;
  p1.block(psi_off, psi_off, cert.dims.n_psi, cert.dims.n_psi) -=
      cert.multiplier.Z / cert.rho2();
  CHECK(numkit::min_eigenvalue(p1) > 0.0);
}

TEST_CASE("nominal baseline: feasible for the example, infeasible when unobservable") {
  const auto scenario = model::build_example_scenario();
  auto nominal = detect::verify_nominal(scenario, kRho, fast_options());
  REQUIRE(nominal.status == detect::VerifyStatus::Certified);
  CHECK(nominal.certificate->dims.p == 0);
  CHECK(nominal.certificate->dims.n_chi == 4);

  auto scalar = detect::verify_nominal(scalar_scenario(), kRho, fast_options());
  CHECK(scalar.status == detect::VerifyStatus::Certified);

  auto bad = detect::verify_nominal(unobservable_scenario(), kRho, fast_options());
  CHECK(bad.status == detect::VerifyStatus::Infeasible);
}

TEST_CASE("dissipation holds along sampled trajectory pairs") {
  const auto scenario = model::build_example_scenario();
  auto outcome = detect::verify_detectability(scenario, example_template(), kRho, fast_options());
  REQUIRE(outcome.status == detect::VerifyStatus::Certified);
  auto rep = detect::validate_certificate(*outcome.certificate, scenario, 100, 50, 42);
  CHECK(rep.checks == 5000);
  CHECK(rep.worst_violation <= 1e-7);

  // corrupted certificate must be caught
  auto corrupted = *outcome.certificate;
  corrupted.P = -corrupted.P;
  auto bad = detect::validate_certificate(corrupted, scenario, 10, 20, 42);
  CHECK(bad.worst_violation > 1e-3);
}

TEST_CASE("identical pair with zero disturbance has nonpositive dissipation") {
  const auto scenario = model::build_example_scenario();
  auto outcome = detect::verify_detectability(scenario, example_template(), kRho, fast_options());
  REQUIRE(outcome.status == detect::VerifyStatus::Certified);
  const auto& cert = *outcome.certificate;

  Vector x(2);
  x << 1.0, -0.5;
  Vector w = Vector::Zero(1);
  Vector psi = Vector::Zero(4);
  const Vector xhat = x;  // tilde trajectory identical, xhat = x
  const Vector u = scenario.controller.kappa(xhat);
  const Vector v = scenario.plant.g(x, w);
  const Vector d = scenario.uncertainty.delta(v);
  const Vector y = scenario.plant.h(x, w, d, u);
  auto [psi_next, z] = iqc::filter_step(cert.multiplier.filter, psi, v, d);
  const Vector x_next = scenario.plant.f(x, w, d, u);
  Vector chi(12), chi_next(12);
  chi << Vector::Zero(2), Vector::Zero(4), x, psi;
  chi_next << Vector::Zero(2), Vector::Zero(4), x_next, psi_next;
  CHECK(detect::dissipation_value(cert, chi, chi_next, w, w, xhat, x, y, y, z, z) <= 1e-9);
}

TEST_CASE("envelope inflation can only shrink the margin") {
  const auto scenario = model::build_example_scenario();
  auto base = detect::verify_detectability(scenario, example_template(), kRho, fast_options());
  REQUIRE(base.status == detect::VerifyStatus::Certified);

  auto inflated = model::build_example_scenario();
  const double w0 = inflated.envelope.A.hi(0, 0) - inflated.envelope.A.lo(0, 0);
  inflated.envelope.A.lo(0, 0) -= 0.1 * w0;
  inflated.envelope.A.hi(0, 0) += 0.1 * w0;
  inflated.envelope.A_abs = inflated.envelope.A;
  auto out2 = detect::verify_detectability(inflated, example_template(), kRho, fast_options());
  CHECK(out2.margin <= base.margin + 1e-7);
}

TEST_CASE("certificate JSON round trip is byte-identical and hash-checked") {
  const auto scenario = model::build_example_scenario();
  auto outcome = detect::verify_detectability(scenario, example_template(), kRho, fast_options());
  REQUIRE(outcome.status == detect::VerifyStatus::Certified);
  const auto& cert = *outcome.certificate;

  const std::string path = "/tmp/iqcmhe_cert_test.json";
  detect::save_certificate(path, cert);
  auto loaded = detect::load_certificate(path);
  CHECK((loaded.P - cert.P).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.multiplier.M - cert.multiplier.M).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.margin == cert.margin);

  const std::string once = detect::certificate_to_json(cert).dump(2);
  const std::string twice = detect::certificate_to_json(loaded).dump(2);
  CHECK(once == twice);

  // hash tampering is detected
  auto j = detect::certificate_to_json(cert);
  j["margin"] = cert.margin + 1.0;
  CHECK_THROWS_AS(detect::certificate_from_json(j), InvalidCertificate);
  std::remove(path.c_str());
}
