#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "iqcmhe/numkit.hpp"

namespace iqcmhe::sdp {

using numkit::Matrix;
using numkit::Vector;

// Affine matrix-valued constraint F(x) = constant + sum_j x_j coeffs[j].
// When with_margin is set, the solver enforces F(x) - t I >= 0 with the
// common margin t it maximizes; otherwise plain F(x) >= 0.
struct AffineBlock {
  int dim = 0;
  Matrix constant;
  std::map<int, Matrix> coeffs;  // variable index -> symmetric coefficient
  bool with_margin = true;
  std::string label;
};

// a^T x (= or <=) b
struct LinearConstraint {
  Vector a;
  double b = 0.0;
};

struct AffineSdp {
  int num_vars = 0;
  std::vector<AffineBlock> blocks;
  std::vector<LinearConstraint> equalities;
  std::vector<LinearConstraint> inequalities;
};

struct SolveOptions {
  double tol_gap = 1e-9;
  double tol_feas = 1e-9;
  // A stalled run whose iterate is feasible to tol_feas is still reported
  // Optimal when its relative gap is below this; the margin is then only
  // accurate to the gap, which feasibility consumers do not depend on.
  double accept_gap = 1e-5;
  int max_iters = 200;
  double margin_cap = 1e7;   // t above this is treated as unbounded
  double var_bound = 0.0;    // when > 0, adds |x_i| <= var_bound safeguards
  double step_fraction = 0.98;
  int verbosity = 0;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vector values;        // variable values (without the internal margin var)
  double margin = 0.0;  // achieved t*
  int iterations = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::string message;
};

/// Maximize the common slack t subject to all blocks (minus t I where flagged)
/// being positive semidefinite and the affine equalities/inequalities holding.
SolveResult solve_max_margin(const AffineSdp& problem, const SolveOptions& opts = {});

/// Plain-text dump of the problem (dims, constants, coefficients) for
/// external cross-checking.
void dump_problem(const AffineSdp& problem, std::ostream& os);

/// Evaluate one block at given variable values.
Matrix eval_block(const AffineBlock& block, const Vector& x);

/// Independent feasibility re-check: smallest block margin (min over blocks of
/// min eigenvalue, margin blocks shifted by t), worst equality/inequality
/// residuals. Used by tests and by detect's round-trip validation.
struct FeasibilityReport {
  double min_block_margin = 0.0;
  double worst_equality = 0.0;
  double worst_inequality = 0.0;
};
FeasibilityReport check_feasibility(const AffineSdp& problem, const Vector& x, double t);

}  // namespace iqcmhe::sdp
