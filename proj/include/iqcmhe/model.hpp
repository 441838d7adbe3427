#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iqcmhe/numkit.hpp"
#include "iqcmhe/rng.hpp"

namespace iqcmhe::model {

using numkit::Matrix;
using numkit::Vector;

struct BoxSet {
  Vector lower, upper;  // entries may be +-inf

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& x, double tol = 0.0) const;
  Vector clamp(const Vector& x) const;
  bool is_bounded() const;

  static BoxSet unbounded(int dim);
  static BoxSet symmetric(int dim, double radius);

  // Box with infinite bounds replaced by +-fallback, for sampling probes.
  BoxSet bounded_probe(double fallback) const;
  Vector sample(Rng& rng) const;  // requires bounded box
};

using VectorMap4 = std::function<Vector(const Vector&, const Vector&, const Vector&, const Vector&)>;
using VectorMap2 = std::function<Vector(const Vector&, const Vector&)>;
using MatrixMap4 = std::function<Matrix(const Vector&, const Vector&, const Vector&, const Vector&)>;
using MatrixMap2 = std::function<Matrix(const Vector&, const Vector&)>;

// x+ = f(x, w, d, u), y = h(x, w, d, u), v = g(x, w).
// The Jacobian fields are optional; central differences are used when absent.
struct PlantModel {
  int n = 0, n_w = 0, p = 0, q = 0, m = 0, l = 0;
  VectorMap4 f, h;
  VectorMap2 g;
  MatrixMap4 f_x, f_w, f_d, h_x, h_w, h_d;
  MatrixMap2 g_x, g_w;
};

struct ControllerModel {
  int l = 0;
  std::function<Vector(const Vector&)> kappa;
};

// Used only by the simulator, never by the estimator.
struct UncertaintyModel {
  int q = 0, p = 0;
  std::function<Vector(const Vector&)> delta;
};

struct IntervalMatrix {
  Matrix lo, hi;

  Eigen::Index rows() const { return lo.rows(); }
  Eigen::Index cols() const { return lo.cols(); }
  Matrix mid() const { return 0.5 * (lo + hi); }
  Matrix width() const { return hi - lo; }

  static IntervalMatrix point(const Matrix& m) { return {m, m}; }
  static IntervalMatrix zero(Eigen::Index r, Eigen::Index c) {
    return point(Matrix::Zero(r, c));
  }

  // Interval hull of {M x : M in [lo, hi]} accumulated into (out_lo, out_hi).
  void accumulate_range(const Vector& x, Vector& out_lo, Vector& out_hi) const;
};

// Slope-interval data for the difference and absolute LPV embeddings.
//   e_x+ = A e_x + B_w e_w + B_d e_d            (difference dynamics)
//   e_y  = C e_x + D_w e_w + D_d e_d            (difference output)
//   e_v  = C_v e_x + E_w e_w                    (difference auxiliary output)
//   x+   = A_abs x + B_w_abs w + B_u xhat + B_d_abs d
//   v    = C_v_abs x + E_w_abs w
struct LipschitzEnvelope {
  IntervalMatrix A, B_w, B_d;
  IntervalMatrix C, D_w, D_d;
  IntervalMatrix C_v, E_w;
  IntervalMatrix A_abs, B_w_abs, B_u, B_d_abs;
  IntervalMatrix C_v_abs, E_w_abs;
};

struct Scenario {
  std::string name;
  PlantModel plant;
  ControllerModel controller;
  UncertaintyModel uncertainty;
  BoxSet X, W, U, Y;
  LipschitzEnvelope envelope;
  Vector x0, xhat0;
  double d_probe_halfwidth = 0.5;    // d sampling range for envelope validation
  double state_probe_halfwidth = 5.0;  // probe radius where X is unbounded
};

/// The built-in two-state example with the saturating uncertainty
/// Delta(v) = 0.125 (|v+2| - |v-2|) and a linear stabilizing controller.
Scenario build_example_scenario();

/// Scenario lookup by name ("example1"); throws BadParams on unknown names.
Scenario scenario_by_name(const std::string& name);
std::vector<std::string> scenario_names();

struct PlantStepResult {
  Vector x_next, y, v, d;
};

/// One step of the true uncertain plant; throws DomainViolation if w is
/// outside W.
PlantStepResult plant_step(const Scenario& s, const Vector& x, const Vector& w, const Vector& u);

struct EnvelopeBlockReport {
  std::string block;
  bool pass = true;
  double worst_violation = 0.0;
};

struct EnvelopeReport {
  std::vector<EnvelopeBlockReport> blocks;
  bool all_pass = true;
  double worst_violation = 0.0;
  int samples = 0;
};

/// Samples trajectory-pair points and checks that actual differences of
/// f, h, g (and the absolute forms) lie inside the envelope's interval hull.
EnvelopeReport validate_envelope(const Scenario& s, int sample_count, std::uint64_t seed,
                                 double tol = 1e-9);

// Jacobians of the plant maps at a point (analytic when provided, central
// differences otherwise).
struct PlantJacobians {
  Matrix f_x, f_w, f_d;
  Matrix h_x, h_w, h_d;
  Matrix g_x, g_w;
};
PlantJacobians plant_jacobians(const PlantModel& plant, const Vector& x, const Vector& w,
                               const Vector& d, const Vector& u);

}  // namespace iqcmhe::model
