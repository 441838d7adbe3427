#include "iqcmhe/sdp.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace iqcmhe::sdp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ReducedBlock {
  int dim = 0;
  Matrix g0;
  std::map<int, Matrix> coeffs;  // reduced variable index -> coefficient
  std::string label;
};

// Reduced problem: maximize z[mt] subject to g0 + sum z_i coeffs_i >= 0.
struct Reduced {
  int m = 0;   // reduced variable count, margin var is index m-1
  std::vector<ReducedBlock> blocks;
  // user x = x_part + n_map * z_head  (z_head = z without margin var)
  Vector x_part;
  Matrix n_map;
};

double fro(const Matrix& a) { return a.norm(); }

// Largest step alpha with x + alpha d staying PSD (x > 0), via Cholesky of x.
double max_step(const Matrix& x, const Matrix& d) {
  Eigen::LLT<Matrix> llt(x);
  if (llt.info() != Eigen::Success) return 0.0;
  const Matrix l = llt.matrixL();
  Matrix w = l.triangularView<Eigen::Lower>().solve(d);
  w = l.triangularView<Eigen::Lower>().solve(Matrix(w.transpose()));
  const double lam = numkit::min_eigenvalue(numkit::symmetrized(w));
  if (lam >= -1e-14) return kInf;
  return -1.0 / lam;
}

struct Iterate {
  std::vector<Matrix> x;      // primal
  std::vector<Matrix> s;      // dual slack
  std::vector<Matrix> s_inv;  // explicit inverses (dims are small)
  Vector z;
};

}  // namespace

Matrix eval_block(const AffineBlock& block, const Vector& x) {
  Matrix f = block.constant;
  for (const auto& [j, g] : block.coeffs) f += x(j) * g;
  return f;
}

FeasibilityReport check_feasibility(const AffineSdp& problem, const Vector& x, double t) {
  FeasibilityReport rep;
  rep.min_block_margin = kInf;
  for (const auto& b : problem.blocks) {
    Matrix f = eval_block(b, x);
    if (b.with_margin) f -= t * Matrix::Identity(b.dim, b.dim);
    rep.min_block_margin = std::min(rep.min_block_margin, numkit::min_eigenvalue(f));
  }
  for (const auto& e : problem.equalities)
    rep.worst_equality = std::max(rep.worst_equality, std::abs(e.a.dot(x) - e.b));
  for (const auto& i : problem.inequalities)
    rep.worst_inequality = std::max(rep.worst_inequality, i.a.dot(x) - i.b);
  return rep;
}

void dump_problem(const AffineSdp& problem, std::ostream& os) {
  os << "affine_sdp num_vars " << problem.num_vars << " blocks " << problem.blocks.size()
     << " equalities " << problem.equalities.size() << " inequalities "
     << problem.inequalities.size() << "\n";
  os << std::setprecision(17);
  auto dump_matrix = [&os](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << " " << m(r, c);
      os << "\n";
    }
  };
  int bi = 0;
  for (const auto& b : problem.blocks) {
    os << "block " << bi++ << " dim " << b.dim << " margin " << (b.with_margin ? 1 : 0)
       << " label " << (b.label.empty() ? "-" : b.label) << "\nconstant\n";
    dump_matrix(b.constant);
    for (const auto& [j, g] : b.coeffs) {
      os << "coeff var " << j << "\n";
      dump_matrix(g);
    }
  }
  auto dump_linear = [&](const char* tag, const std::vector<LinearConstraint>& cs) {
    int k = 0;
    for (const auto& c : cs) {
      os << tag << " " << k++ << " b " << c.b << " a";
      for (Eigen::Index j = 0; j < c.a.size(); ++j) os << " " << c.a(j);
      os << "\n";
    }
  };
  dump_linear("eq", problem.equalities);
  dump_linear("ineq", problem.inequalities);
}

namespace {

// Eliminate equality constraints and fold scalar inequalities / safeguards
// into 1x1 blocks. Returns nullopt when the equalities are inconsistent.
std::optional<Reduced> reduce(const AffineSdp& p, const SolveOptions& opts,
                              std::string* error) {
  const int n = p.num_vars;
  Vector x_part = Vector::Zero(n);
  Matrix n_map;

  if (p.equalities.empty()) {
    n_map = Matrix::Identity(n, n);
  } else {
    // Restrict the elimination to variables that appear in some equality so
    // that the rest keep their sparse identity columns.
    std::set<int> support_set;
    for (const auto& e : p.equalities)
      for (Eigen::Index j = 0; j < e.a.size(); ++j)
        if (e.a(j) != 0.0) support_set.insert(static_cast<int>(j));
    std::vector<int> support(support_set.begin(), support_set.end());
    const int ns = static_cast<int>(support.size());
    Matrix a_eq(p.equalities.size(), ns);
    Vector b_eq(p.equalities.size());
    for (size_t r = 0; r < p.equalities.size(); ++r) {
      for (int c = 0; c < ns; ++c) a_eq(r, c) = p.equalities[r].a(support[c]);
      b_eq(r) = p.equalities[r].b;
    }
    Eigen::JacobiSVD<Matrix> svd(a_eq, Eigen::ComputeThinU | Eigen::ComputeFullV);
    svd.setThreshold(1e-12);
    const int rank = static_cast<int>(svd.rank());
    Vector xs = svd.solve(b_eq);
    if ((a_eq * xs - b_eq).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + b_eq.cwiseAbs().maxCoeff())) {
      if (error) *error = "equality constraints are inconsistent";
      return std::nullopt;
    }
    const Matrix kernel = svd.matrixV().rightCols(ns - rank);
    // Assemble x = x_part + n_map * xi with passthrough vars first.
    std::vector<int> free_vars;
    for (int j = 0; j < n; ++j)
      if (!support_set.count(j)) free_vars.push_back(j);
    const int k = static_cast<int>(free_vars.size()) + (ns - rank);
    n_map = Matrix::Zero(n, k);
    for (size_t c = 0; c < free_vars.size(); ++c) n_map(free_vars[c], c) = 1.0;
    for (int c = 0; c < ns - rank; ++c)
      for (int r = 0; r < ns; ++r)
        n_map(support[r], static_cast<int>(free_vars.size()) + c) = kernel(r, c);
    for (int r = 0; r < ns; ++r) x_part(support[r]) = xs(r);
  }

  const int k = static_cast<int>(n_map.cols());
  Reduced red;
  red.x_part = x_part;
  red.n_map = n_map;
  red.m = k + 1;  // + margin variable
  const int mt = k;

  auto transform_block = [&](const AffineBlock& b, bool margin) {
    ReducedBlock rb;
    rb.dim = b.dim;
    rb.label = b.label;
    rb.g0 = b.constant;
    for (const auto& [j, g] : b.coeffs) {
      rb.g0 += x_part(j) * g;
      for (int c = 0; c < k; ++c) {
        const double w = n_map(j, c);
        if (w == 0.0) continue;
        auto it = rb.coeffs.find(c);
        if (it == rb.coeffs.end())
          rb.coeffs.emplace(c, w * g);
        else
          it->second += w * g;
      }
    }
    if (margin) {
      Matrix mi = -Matrix::Identity(b.dim, b.dim);
      auto it = rb.coeffs.find(mt);
      if (it == rb.coeffs.end())
        rb.coeffs.emplace(mt, mi);
      else
        it->second += mi;
    }
    // prune tiny fill-in
    for (auto it = rb.coeffs.begin(); it != rb.coeffs.end();) {
      if (it->second.cwiseAbs().maxCoeff() < 1e-300)
        it = rb.coeffs.erase(it);
      else
        ++it;
    }
    return rb;
  };

  for (const auto& b : p.blocks) red.blocks.push_back(transform_block(b, b.with_margin));
  for (const auto& iq : p.inequalities) {
    AffineBlock b;
    b.dim = 1;
    b.constant = Matrix::Constant(1, 1, iq.b);
    for (Eigen::Index j = 0; j < iq.a.size(); ++j)
      if (iq.a(j) != 0.0) b.coeffs.emplace(static_cast<int>(j), Matrix::Constant(1, 1, -iq.a(j)));
    b.with_margin = false;
    b.label = "ineq";
    red.blocks.push_back(transform_block(b, false));
  }
  // margin cap: cap - t >= 0
  {
    ReducedBlock rb;
    rb.dim = 1;
    rb.g0 = Matrix::Constant(1, 1, opts.margin_cap);
    rb.coeffs.emplace(mt, Matrix::Constant(1, 1, -1.0));
    rb.label = "margin_cap";
    red.blocks.push_back(std::move(rb));
  }
  if (opts.var_bound > 0.0) {
    for (int j = 0; j < n; ++j) {
      for (double sign : {1.0, -1.0}) {
        AffineBlock b;
        b.dim = 1;
        b.constant = Matrix::Constant(1, 1, opts.var_bound);
        b.coeffs.emplace(j, Matrix::Constant(1, 1, sign));
        b.with_margin = false;
        b.label = "var_bound";
        red.blocks.push_back(transform_block(b, false));
      }
    }
  }
  return red;
}

}  // namespace

SolveResult solve_max_margin(const AffineSdp& problem, const SolveOptions& opts) {
  SolveResult result;
  for (const auto& b : problem.blocks) {
    if (b.dim <= 0 || b.constant.rows() != b.dim || b.constant.cols() != b.dim) {
      result.message = "malformed block";
      return result;
    }
    for (const auto& [j, g] : b.coeffs) {
      if (j < 0 || j >= problem.num_vars || g.rows() != b.dim || g.cols() != b.dim) {
        result.message = "malformed block coefficient";
        return result;
      }
    }
  }
  for (const auto& e : problem.equalities) {
    if (e.a.size() != problem.num_vars) {
      result.message = "malformed equality";
      return result;
    }
    bool all_zero = e.a.cwiseAbs().maxCoeff() == 0.0;
    if (all_zero && std::abs(e.b) > 1e-12) {
      result.status = SolveStatus::Infeasible;
      result.message = "inconsistent equality 0 = b";
      return result;
    }
  }

  std::string reduce_error;
  auto reduced_opt = reduce(problem, opts, &reduce_error);
  if (!reduced_opt) {
    result.status = SolveStatus::Infeasible;
    result.message = reduce_error;
    return result;
  }
  Reduced& red = *reduced_opt;

  // Drop variables that touch no block (their value is immaterial; fix 0).
  std::vector<char> used(red.m, 0);
  for (const auto& b : red.blocks)
    for (const auto& [j, g] : b.coeffs) used[j] = 1;
  std::vector<int> compact(red.m, -1);
  int m = 0;
  for (int j = 0; j < red.m; ++j)
    if (used[j]) compact[j] = m++;
  const int mt = compact[red.m - 1];  // margin var always used (cap block)
  std::vector<ReducedBlock> blocks;
  blocks.reserve(red.blocks.size());
  for (auto& b : red.blocks) {
    ReducedBlock nb;
    nb.dim = b.dim;
    nb.g0 = std::move(b.g0);
    nb.label = std::move(b.label);
    for (auto& [j, g] : b.coeffs) nb.coeffs.emplace(compact[j], std::move(g));
    blocks.push_back(std::move(nb));
  }

  const int nblocks = static_cast<int>(blocks.size());
  double total_dim = 0.0;
  double g0_norm = 1.0;
  for (const auto& b : blocks) {
    total_dim += b.dim;
    g0_norm = std::max(g0_norm, fro(b.g0));
  }

  Iterate it;
  it.z = Vector::Zero(m);
  it.x.resize(nblocks);
  it.s.resize(nblocks);
  it.s_inv.resize(nblocks);
  for (int b = 0; b < nblocks; ++b) {
    const int d = blocks[b].dim;
    double coeff_norm = 1.0;
    for (const auto& [j, g] : blocks[b].coeffs) coeff_norm = std::max(coeff_norm, fro(g));
    const double eta = std::max({10.0, fro(blocks[b].g0), coeff_norm});
    it.s[b] = eta * Matrix::Identity(d, d);
    it.x[b] = std::max(10.0, g0_norm / eta) * Matrix::Identity(d, d);
  }

  Vector c = Vector::Zero(m);
  c(mt) = 1.0;

  auto finish = [&](SolveStatus status, const std::string& msg, int iters, double gap,
                    double pinf, double dinf) {
    result.status = status;
    result.message = msg;
    result.iterations = iters;
    result.gap = gap;
    result.primal_residual = pinf;
    result.dual_residual = dinf;
    Vector z_full = Vector::Zero(red.m);
    for (int j = 0; j < red.m; ++j)
      if (compact[j] >= 0) z_full(j) = it.z(compact[j]);
    result.margin = z_full(red.m - 1);
    result.values = red.x_part + red.n_map * z_full.head(red.m - 1);
    return result;
  };

  double best_feas = kInf, best_gap = kInf;
  Vector best_z = it.z;
  double mu_window = kInf;

  int iter = 0;
  double relgap = kInf, pinf = kInf, dinf = kInf;
  for (iter = 0; iter < opts.max_iters; ++iter) {
    // residuals
    std::vector<Matrix> r_d(nblocks);
    Vector r_p = -c;
    double mu = 0.0;
    for (int b = 0; b < nblocks; ++b) {
      Matrix g = blocks[b].g0;
      for (const auto& [j, gj] : blocks[b].coeffs) {
        g += it.z(j) * gj;
        r_p(j) -= (gj.array() * it.x[b].array()).sum();
      }
      r_d[b] = g - it.s[b];
      mu += (it.x[b].array() * it.s[b].array()).sum();
    }
    const double comp = mu;
    mu /= total_dim;

    double p_obj = 0.0;
    for (int b = 0; b < nblocks; ++b)
      p_obj += (blocks[b].g0.array() * it.x[b].array()).sum();
    const double d_obj = c.dot(it.z);

    pinf = r_p.cwiseAbs().maxCoeff() / 2.0;
    dinf = 0.0;
    for (int b = 0; b < nblocks; ++b) dinf = std::max(dinf, fro(r_d[b]));
    dinf /= (1.0 + g0_norm);
    relgap = std::abs(comp) / (1.0 + std::abs(p_obj) + std::abs(d_obj));

    const double feas = std::max(pinf, dinf);
    if ((feas <= opts.tol_feas && relgap < best_gap) ||
        (best_feas > opts.tol_feas && feas < best_feas)) {
      best_feas = feas;
      best_gap = relgap;
      best_z = it.z;
    }

    if (pinf <= opts.tol_feas && dinf <= opts.tol_feas && relgap <= opts.tol_gap) {
      if (it.z(mt) > 0.99 * opts.margin_cap)
        return finish(SolveStatus::Unbounded, "margin reached cap", iter, relgap, pinf, dinf);
      return finish(SolveStatus::Optimal, "converged", iter, relgap, pinf, dinf);
    }

    // progress stall detection: mu barely moves over a window of iterations
    if (iter % 8 == 7) {
      if (mu > 0.7 * mu_window && feas <= opts.tol_feas && relgap <= opts.accept_gap) break;
      mu_window = mu;
    }

    // factorizations
    bool fact_ok = true;
    for (int b = 0; b < nblocks; ++b) {
      Eigen::LLT<Matrix> llt(it.s[b]);
      if (llt.info() != Eigen::Success) {
        fact_ok = false;
        break;
      }
      it.s_inv[b] = llt.solve(Matrix::Identity(blocks[b].dim, blocks[b].dim));
    }
    if (!fact_ok) break;

    // Schur complement M_ij = sum_b tr(G_i X G_j S^-1)
    Matrix schur = Matrix::Zero(m, m);
    std::vector<std::vector<Matrix>> w_all(nblocks);
    std::vector<std::vector<int>> keys(nblocks);
    for (int b = 0; b < nblocks; ++b) {
      for (const auto& [j, gj] : blocks[b].coeffs) {
        keys[b].push_back(j);
        w_all[b].push_back(it.x[b] * gj * it.s_inv[b]);
      }
      const auto& ks = keys[b];
      for (size_t aj = 0; aj < ks.size(); ++aj) {
        const Matrix& gi = blocks[b].coeffs.at(ks[aj]);
        for (size_t bj = 0; bj < ks.size(); ++bj) {
          schur(ks[aj], ks[bj]) += (gi.array() * w_all[b][bj].transpose().array()).sum();
        }
      }
    }
    schur = numkit::symmetrized(schur);

    Eigen::LDLT<Matrix> ldlt;
    double ridge = 0.0;
    const double ridge0 = 1e-13 * (1.0 + schur.trace() / m);
    for (int attempt = 0; attempt < 4; ++attempt) {
      Matrix reg = schur;
      if (ridge > 0.0) reg += ridge * Matrix::Identity(m, m);
      ldlt.compute(reg);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) break;
      ridge = (ridge == 0.0) ? ridge0 : ridge * 1e3;
    }
    auto schur_solve = [&](const Vector& rhs) {
      Vector sol = ldlt.solve(rhs);
      for (int refine = 0; refine < 2; ++refine) {
        const Vector resid = rhs - schur * sol;
        sol += ldlt.solve(resid);
      }
      return sol;
    };

    auto solve_direction = [&](double sigma_mu, const std::vector<Matrix>* corr_x,
                               const std::vector<Matrix>* corr_s, Vector& dz,
                               std::vector<Matrix>& dx, std::vector<Matrix>& ds) {
      Vector rhs = c;
      for (int b = 0; b < nblocks; ++b) {
        Matrix rc_sinv = sigma_mu * it.s_inv[b];
        if (corr_x) rc_sinv -= (*corr_x)[b] * (*corr_s)[b] * it.s_inv[b];
        const Matrix xr_sinv = it.x[b] * r_d[b] * it.s_inv[b];
        for (const auto& [j, gj] : blocks[b].coeffs)
          rhs(j) += (gj.array() * (rc_sinv - xr_sinv).array()).sum();
      }
      dz = schur_solve(rhs);
      dx.resize(nblocks);
      ds.resize(nblocks);
      for (int b = 0; b < nblocks; ++b) {
        ds[b] = r_d[b];
        for (const auto& [j, gj] : blocks[b].coeffs) ds[b] += dz(j) * gj;
        Matrix rc = sigma_mu * Matrix::Identity(blocks[b].dim, blocks[b].dim) -
                    it.x[b] * it.s[b];
        if (corr_x) rc -= (*corr_x)[b] * (*corr_s)[b];
        dx[b] = numkit::symmetrized((rc - it.x[b] * ds[b]) * it.s_inv[b]);
      }
    };

    Vector dz_aff;
    std::vector<Matrix> dx_aff, ds_aff;
    solve_direction(0.0, nullptr, nullptr, dz_aff, dx_aff, ds_aff);

    double ap_aff = 1.0, ad_aff = 1.0;
    for (int b = 0; b < nblocks; ++b) {
      ap_aff = std::min(ap_aff, opts.step_fraction * max_step(it.x[b], dx_aff[b]));
      ad_aff = std::min(ad_aff, opts.step_fraction * max_step(it.s[b], ds_aff[b]));
    }
    double mu_aff = 0.0;
    for (int b = 0; b < nblocks; ++b)
      mu_aff += ((it.x[b] + ap_aff * dx_aff[b]).array() *
                 (it.s[b] + ad_aff * ds_aff[b]).array())
                    .sum();
    mu_aff = std::max(mu_aff / total_dim, 0.0);
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    Vector dz;
    std::vector<Matrix> dx, ds;
    solve_direction(sigma * mu, &dx_aff, &ds_aff, dz, dx, ds);
    if (!dz.allFinite()) break;

    double ap = 1.0, ad = 1.0;
    for (int b = 0; b < nblocks; ++b) {
      ap = std::min(ap, opts.step_fraction * max_step(it.x[b], dx[b]));
      ad = std::min(ad, opts.step_fraction * max_step(it.s[b], ds[b]));
    }
    if (ap < 1e-10 && ad < 1e-10) break;

    for (int b = 0; b < nblocks; ++b) {
      it.x[b] = numkit::symmetrized(it.x[b] + ap * dx[b]);
      it.s[b] = numkit::symmetrized(it.s[b] + ad * ds[b]);
    }
    it.z += ad * dz;

    if (opts.verbosity > 0) {
      std::fprintf(stderr,
                   "sdp iter %3d mu %9.3e pinf %9.3e dinf %9.3e gap %9.3e sigma %6.3f "
                   "ap %6.4f ad %6.4f t %.6e\n",
                   iter, mu, pinf, dinf, relgap, sigma, ap, ad, it.z(mt));
    }
  }

  // Not fully converged: a feasible iterate with a small remaining gap is a
  // valid (slightly suboptimal) margin solution.
  it.z = best_z;
  if (best_feas <= opts.tol_feas && best_gap <= opts.accept_gap) {
    std::ostringstream note;
    note << "stalled feasible with gap " << best_gap;
    auto r = finish(SolveStatus::Optimal, note.str(), iter, best_gap, best_feas, best_feas);
    if (it.z(mt) > 0.99 * opts.margin_cap) r.status = SolveStatus::Unbounded;
    return r;
  }
  std::ostringstream diag;
  diag << "stalled: pinf " << pinf << " dinf " << dinf << " gap " << relgap << " after "
       << iter << " iterations";
  return finish(SolveStatus::NumericalFailure, diag.str(), iter, relgap, pinf, dinf);
}

}  // namespace iqcmhe::sdp
