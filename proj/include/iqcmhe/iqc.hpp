#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iqcmhe/model.hpp"
#include "iqcmhe/numkit.hpp"

namespace iqcmhe::iqc {

using numkit::Matrix;
using numkit::Vector;

// Stable filter realization psi+ = A psi + B col(v, d), z = C psi + D col(v, d)
// with psi_0 = 0; v and d both live in R^p.
struct FilterRealization {
  Matrix A, B, C, D;
  int p = 0;

  int n_psi() const { return static_cast<int>(A.rows()); }
  int n_z() const { return static_cast<int>(C.rows()); }
  static FilterRealization empty(int p);
};

// X(theta) = constant + sum_i theta_i coeffs[i], all symmetric.
struct AffineMatrixSet {
  Matrix constant;
  std::vector<Matrix> coeffs;

  Matrix at(const Vector& theta) const;
};

struct LinearConstraint {
  Vector a;
  double b = 0.0;
};

// Location of one family's scalars inside a (possibly combined) template.
struct FamilySegment {
  enum class Kind { ZamesFalb, StaticPolytopic, Parametric };
  Kind kind = Kind::StaticPolytopic;
  int var_offset = 0;
  int nu = 0;
  int p = 0;
  double alpha = 0.0, beta = 0.0;
};

// A family of (M, Z) pairs affine in free scalars, together with the linear
// and vertex LMI constraints that make any feasible point a valid point-wise
// rho-IQC multiplier.
struct MultiplierTemplate {
  FilterRealization filter;
  double rho = 0.0;
  bool rho_agnostic = false;  // static families work for every rho in (0,1)
  int num_vars = 0;
  AffineMatrixSet m_map;  // n_z x n_z
  AffineMatrixSet z_map;  // n_psi x n_psi
  std::vector<LinearConstraint> equalities;    // a^T theta = b
  std::vector<LinearConstraint> inequalities;  // a^T theta <= b
  std::vector<AffineMatrixSet> vertex_psd;     // G(theta) >= 0
  std::vector<FamilySegment> segments;
  std::string recipe;  // serializable description of the family stack

  MultiplierTemplate with_rho(double rho_value) const;
};

struct MultiplierInstance {
  FilterRealization filter;
  double rho = 0.0;
  Matrix M, Z;
  std::string recipe;
};

/// Zames-Falb FIR family for slope-restricted nonlinearities: free W, Q with
/// W - diag(Q,0) + diag(0, rho^-2 Q) symmetric doubly hyperdominant.
MultiplierTemplate build_zames_falb_template(int nu, double alpha, double beta, int p,
                                             double rho);

/// Static polytopic family: M in S^{2p} with vertex nonnegativity over
/// delta in {alpha,beta}^p plus M22 <= 0 so vertex checking is sufficient.
MultiplierTemplate build_static_polytopic_template(double alpha, double beta, int p);

// User-chosen filter core Phi for the parametric family.
struct FilterCore {
  Matrix A, B, C, D;
  static FilterCore memoryless(int p);  // A empty, D = I_p
};

/// Parametric family for Delta(v) = delta v, delta in [a, b], with the
/// doubled filter Psi = I_2 (x) Phi composed with the sector transform T.
MultiplierTemplate build_parametric_template(double a, double b, const FilterCore& phi,
                                             double rho);

/// Filter stacking; members must share p, and every non-rho-agnostic member
/// must carry the same rho.
MultiplierTemplate combine(const std::vector<MultiplierTemplate>& templates);

/// Instantiates (M, Z) from free scalars, checking the template constraints
/// to the given tolerance.
MultiplierInstance instantiate(const MultiplierTemplate& tpl, const Vector& theta,
                               double tol = 1e-7);

/// Repairs solver-tolerance-level constraint violations so the family
/// guarantees hold exactly: clips Zames-Falb hyperdominance, restores vertex
/// nonnegativity of static multipliers. Perturbations are O(solver residual).
Vector polish_theta(const MultiplierTemplate& tpl, const Vector& theta);

/// One filter step: (psi_next, z).
std::pair<Vector, Vector> filter_step(const FilterRealization& f, const Vector& psi,
                                      const Vector& v, const Vector& d);

struct IqcCheckReport {
  double min_value = std::numeric_limits<double>::infinity();
  long steps = 0;
  int worst_trajectory = -1;
  int worst_step = -1;
};

/// Samples v trajectories (uniform i.i.d. and sinusoidal probes), runs the
/// filter on (v, Delta(v)) and reports the minimum of the point-wise rho-IQC
/// left side over all steps.
IqcCheckReport check_pointwise_iqc_empirical(const MultiplierInstance& inst,
                                             const model::UncertaintyModel& delta,
                                             int trajectories, int length,
                                             std::uint64_t seed);

/// Left side of the point-wise rho-IQC inequality for one transition.
double pointwise_iqc_value(const MultiplierInstance& inst, const Vector& psi,
                           const Vector& psi_next, const Vector& z);

}  // namespace iqcmhe::iqc
