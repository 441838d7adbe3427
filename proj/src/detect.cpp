#include "iqcmhe/detect.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqcmhe/errors.hpp"

namespace iqcmhe::detect {

using json = nlohmann::json;

namespace {

ExtendedDims make_dims(const model::LipschitzEnvelope& env,
                       const iqc::FilterRealization& filter) {
  ExtendedDims d;
  d.n = static_cast<int>(env.A.rows());
  d.n_w = static_cast<int>(env.B_w.cols());
  d.m = static_cast<int>(env.C.rows());
  d.q = static_cast<int>(env.C_v.rows());
  d.p = filter.p;
  d.n_psi = filter.n_psi();
  d.n_z = filter.n_z();
  if (d.p > 0 && d.q != d.p)
    throw DimMismatch("extended system: envelope q must equal the filter channel count p");
  d.n_chi = 2 * d.n + 2 * d.n_psi;
  d.n_nu = 2 * d.n_w + 2 * d.p + d.n;
  d.n_zeta = 2 * d.n_w + d.m + d.n + 2 * d.n_z;
  return d;
}

// Interval entry locations across the six parameter groups; the absolute
// auxiliary-output pair appears twice (independent copies for the true and
// the model trajectory).
struct EntryRef {
  Matrix EnvelopeSample::* field;
  const model::IntervalMatrix* interval;
  int i, j;
};

struct FieldRef {
  Matrix EnvelopeSample::* field;
  const model::IntervalMatrix* interval;
};

std::vector<FieldRef> field_list(const model::LipschitzEnvelope& env, int p_eff) {
  std::vector<FieldRef> fields = {
      {&EnvelopeSample::A, &env.A},
      {&EnvelopeSample::B_w, &env.B_w},
      {&EnvelopeSample::C, &env.C},
      {&EnvelopeSample::D_w, &env.D_w},
      {&EnvelopeSample::A_abs, &env.A_abs},
      {&EnvelopeSample::B_w_abs, &env.B_w_abs},
      {&EnvelopeSample::B_u, &env.B_u},
  };
  if (p_eff > 0) {
    fields.push_back({&EnvelopeSample::B_d, &env.B_d});
    fields.push_back({&EnvelopeSample::D_d, &env.D_d});
    fields.push_back({&EnvelopeSample::C_v, &env.C_v});
    fields.push_back({&EnvelopeSample::E_w, &env.E_w});
    fields.push_back({&EnvelopeSample::B_d_abs, &env.B_d_abs});
    fields.push_back({&EnvelopeSample::C_v5, &env.C_v_abs});
    fields.push_back({&EnvelopeSample::E_w5, &env.E_w_abs});
    fields.push_back({&EnvelopeSample::C_v6, &env.C_v_abs});
    fields.push_back({&EnvelopeSample::E_w6, &env.E_w_abs});
  }
  return fields;
}

std::vector<EntryRef> free_entries(const std::vector<FieldRef>& fields) {
  std::vector<EntryRef> out;
  for (const auto& f : fields) {
    for (Eigen::Index i = 0; i < f.interval->rows(); ++i)
      for (Eigen::Index j = 0; j < f.interval->cols(); ++j)
        if (f.interval->hi(i, j) > f.interval->lo(i, j))
          out.push_back({f.field, f.interval, static_cast<int>(i), static_cast<int>(j)});
  }
  return out;
}

}  // namespace

EnvelopeSample envelope_midpoint(const model::LipschitzEnvelope& env, int p_eff) {
  EnvelopeSample s;
  for (const auto& f : field_list(env, p_eff)) s.*(f.field) = f.interval->mid();
  if (p_eff == 0) {
    const int n = static_cast<int>(env.A.rows());
    const int n_w = static_cast<int>(env.B_w.cols());
    const int m = static_cast<int>(env.C.rows());
    s.B_d = s.B_d_abs = Matrix::Zero(n, 0);
    s.D_d = Matrix::Zero(m, 0);
    s.C_v = s.C_v5 = s.C_v6 = Matrix::Zero(0, n);
    s.E_w = s.E_w5 = s.E_w6 = Matrix::Zero(0, n_w);
  }
  return s;
}

EnvelopeSample envelope_random(const model::LipschitzEnvelope& env, int p_eff, Rng& rng) {
  EnvelopeSample s = envelope_midpoint(env, p_eff);
  for (const auto& e : free_entries(field_list(env, p_eff)))
    (s.*(e.field))(e.i, e.j) = rng.uniform(e.interval->lo(e.i, e.j), e.interval->hi(e.i, e.j));
  return s;
}

VertexSystem assemble_system(const EnvelopeSample& s, const iqc::FilterRealization& filter) {
  const int n = static_cast<int>(s.A.rows());
  const int n_w = static_cast<int>(s.B_w.cols());
  const int m = static_cast<int>(s.C.rows());
  const int p = filter.p;
  const int n_psi = filter.n_psi();
  const int n_z = filter.n_z();
  const int n_chi = 2 * n + 2 * n_psi;
  const int n_nu = 2 * n_w + 2 * p + n;
  const int n_zeta = 2 * n_w + m + n + 2 * n_z;

  // chi = col(e_x, e_psi, x, psi)
  const int ex = 0, epsi = n, xx = n + n_psi, psi = 2 * n + n_psi;
  // nu = col(e_w, d, d_tilde, w, xhat)
  const int ew = 0, dd = n_w, dt = n_w + p, ww = n_w + 2 * p, xh = 2 * n_w + 2 * p;
  // zeta = col(e_w, w, e_y, xhat - x_tilde, z, z_tilde)
  const int z_ey = 2 * n_w, z_xd = 2 * n_w + m,
            z_z = 2 * n_w + m + n, z_zt = 2 * n_w + m + n + n_z;

  const Matrix b_v = filter.B.leftCols(p);
  const Matrix b_d = filter.B.rightCols(p);
  const Matrix d_v = filter.D.leftCols(p);
  const Matrix d_d = filter.D.rightCols(p);

  VertexSystem out;
  out.A = Matrix::Zero(n_chi, n_chi);
  out.B = Matrix::Zero(n_chi, n_nu);
  out.C = Matrix::Zero(n_zeta, n_chi);
  out.D = Matrix::Zero(n_zeta, n_nu);

  out.A.block(ex, ex, n, n) = s.A;
  out.A.block(epsi, ex, n_psi, n) = b_v * s.C_v;
  out.A.block(epsi, epsi, n_psi, n_psi) = filter.A;
  out.A.block(xx, xx, n, n) = s.A_abs;
  out.A.block(psi, xx, n_psi, n) = b_v * s.C_v5;
  out.A.block(psi, psi, n_psi, n_psi) = filter.A;

  out.B.block(ex, ew, n, n_w) = s.B_w;
  out.B.block(ex, dd, n, p) = s.B_d;
  out.B.block(ex, dt, n, p) = -s.B_d;
  out.B.block(epsi, ew, n_psi, n_w) = b_v * s.E_w;
  out.B.block(epsi, dd, n_psi, p) = b_d;
  out.B.block(epsi, dt, n_psi, p) = -b_d;
  out.B.block(xx, dd, n, p) = s.B_d_abs;
  out.B.block(xx, ww, n, n_w) = s.B_w_abs;
  out.B.block(xx, xh, n, n) = s.B_u;
  out.B.block(psi, dd, n_psi, p) = b_d;
  out.B.block(psi, ww, n_psi, n_w) = b_v * s.E_w5;

  out.C.block(z_ey, ex, m, n) = s.C;
  out.C.block(z_xd, ex, n, n) = Matrix::Identity(n, n);
  out.C.block(z_xd, xx, n, n) = -Matrix::Identity(n, n);
  out.C.block(z_z, xx, n_z, n) = d_v * s.C_v5;
  out.C.block(z_z, psi, n_z, n_psi) = filter.C;
  out.C.block(z_zt, ex, n_z, n) = -d_v * s.C_v6;
  out.C.block(z_zt, epsi, n_z, n_psi) = -filter.C;
  out.C.block(z_zt, xx, n_z, n) = d_v * s.C_v6;
  out.C.block(z_zt, psi, n_z, n_psi) = filter.C;

  out.D.block(0, ew, n_w, n_w) = Matrix::Identity(n_w, n_w);
  out.D.block(n_w, ww, n_w, n_w) = Matrix::Identity(n_w, n_w);
  out.D.block(z_ey, ew, m, n_w) = s.D_w;
  out.D.block(z_ey, dd, m, p) = s.D_d;
  out.D.block(z_ey, dt, m, p) = -s.D_d;
  out.D.block(z_xd, xh, n, n) = Matrix::Identity(n, n);
  out.D.block(z_z, dd, n_z, p) = d_d;
  out.D.block(z_z, ww, n_z, n_w) = d_v * s.E_w5;
  out.D.block(z_zt, ew, n_z, n_w) = -d_v * s.E_w6;
  out.D.block(z_zt, dt, n_z, p) = d_d;
  out.D.block(z_zt, ww, n_z, n_w) = d_v * s.E_w6;
  return out;
}

ExtendedVertexSystem assemble_extended_vertices(const model::LipschitzEnvelope& env,
                                                const iqc::FilterRealization& filter) {
  ExtendedVertexSystem out;
  out.dims = make_dims(env, filter);
  const auto fields = field_list(env, filter.p);
  const auto entries = free_entries(fields);
  out.free_interval_count = static_cast<int>(entries.size());
  if (entries.size() > 20)
    throw TooManyVertices("extended system: more than 20 non-degenerate scalar intervals (" +
                          std::to_string(entries.size()) + ")");
  const EnvelopeSample mid = envelope_midpoint(env, filter.p);
  out.midpoint = assemble_system(mid, filter);
  const unsigned long count = 1UL << entries.size();
  out.vertices.reserve(count);
  for (unsigned long mask = 0; mask < count; ++mask) {
    EnvelopeSample s = mid;
    for (size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      (s.*(e.field))(e.i, e.j) =
          ((mask >> k) & 1) ? e.interval->hi(e.i, e.j) : e.interval->lo(e.i, e.j);
    }
    out.vertices.push_back(assemble_system(s, filter));
  }
  return out;
}

namespace {

// Variable layout of the verification SDP.
struct Layout {
  int p_off, q_off, q0_off, r_off, r0_off, mhat_off, theta_off, total;
  ExtendedDims d;

  static int sym_count(int n) { return n * (n + 1) / 2; }

  Layout(const ExtendedDims& dims, int theta_vars) : d(dims) {
    p_off = 0;
    q_off = p_off + sym_count(d.n_chi);
    q0_off = q_off + sym_count(d.n_w);
    r_off = q0_off + sym_count(d.n_w);
    r0_off = r_off + sym_count(d.m);
    mhat_off = r0_off + sym_count(d.n);
    theta_off = mhat_off + sym_count(d.n_z);
    total = theta_off + theta_vars;
  }
};

// (i, j) pair for a vech index within a dim-n symmetric matrix.
std::pair<int, int> vech_pair(int n, int k) {
  int i = 0;
  int remaining = k;
  int row_len = n;
  while (remaining >= row_len) {
    remaining -= row_len;
    --row_len;
    ++i;
  }
  return {i, i + remaining};
}

Matrix sym_from_values(const sdp::Vector& x, int off, int n) {
  Matrix m(n, n);
  int k = off;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      m(i, j) = m(j, i) = x(k);
      ++k;
    }
  return m;
}

// Builds the negated verification LMI block (which must be >= t I) at one
// parameter point, as an affine function of all decision variables.
struct LmiBlockBuilder {
  const Layout& lay;
  double rho2;
  Matrix ab, cd;  // [A B] and [C D]
  int dim;

  LmiBlockBuilder(const VertexSystem& s, const Layout& l, double r2) : lay(l), rho2(r2) {
    dim = l.d.n_chi + l.d.n_nu;
    ab.resize(l.d.n_chi, dim);
    ab << s.A, s.B;
    cd.resize(l.d.n_zeta, dim);
    cd << s.C, s.D;
  }

  // R^T E_{ij} R for the symmetric unit basis at (i, j)
  static Matrix slice_coeff(const Matrix& slice, int i, int j) {
    Matrix out = slice.row(i).transpose() * slice.row(j);
    if (i != j)
      out += slice.row(j).transpose() * slice.row(i);
    else
      out = numkit::symmetrized(out);
    return numkit::symmetrized(out);
  }

  sdp::AffineBlock build(const iqc::MultiplierTemplate& tpl, const std::string& label) const {
    const auto& d = lay.d;
    sdp::AffineBlock b;
    b.dim = dim;
    b.label = label;
    b.with_margin = true;

    const Matrix rz = cd.middleRows(2 * d.n_w + d.m + d.n, d.n_z);
    const Matrix rzt = cd.middleRows(2 * d.n_w + d.m + d.n + d.n_z, d.n_z);

    b.constant = Matrix::Zero(dim, dim);
    if (d.n_z > 0 && tpl.m_map.constant.size() > 0)
      b.constant -= rz.transpose() * tpl.m_map.constant * rz;

    // P entries: diag(rho^2 E, 0) - [A B]^T E [A B]
    for (int k = 0; k < Layout::sym_count(d.n_chi); ++k) {
      const auto [i, j] = vech_pair(d.n_chi, k);
      Matrix coeff = -slice_coeff(ab, i, j);
      coeff(i, j) += rho2;
      if (i != j) coeff(j, i) += rho2;
      b.coeffs.emplace(lay.p_off + k, numkit::symmetrized(coeff));
    }
    auto add_weight = [&](int off, int rows_off, int nn, double sign) {
      if (nn == 0) return;
      const Matrix slice = cd.middleRows(rows_off, nn);
      for (int k = 0; k < Layout::sym_count(nn); ++k) {
        const auto [i, j] = vech_pair(nn, k);
        auto it = b.coeffs.find(off + k);
        if (it == b.coeffs.end())
          b.coeffs.emplace(off + k, Matrix(sign * slice_coeff(slice, i, j)));
        else
          it->second += sign * slice_coeff(slice, i, j);
      }
    };
    add_weight(lay.q_off, 0, d.n_w, 1.0);
    add_weight(lay.q0_off, d.n_w, d.n_w, 1.0);
    add_weight(lay.r_off, 2 * d.n_w, d.m, 1.0);
    add_weight(lay.r0_off, 2 * d.n_w + d.m, d.n, 1.0);
    // Mhat appears as -M - Mhat on the z slot and +Mhat on the z_tilde slot
    for (int k = 0; k < Layout::sym_count(d.n_z); ++k) {
      const auto [i, j] = vech_pair(d.n_z, k);
      Matrix coeff = -slice_coeff(rz, i, j) + slice_coeff(rzt, i, j);
      b.coeffs.emplace(lay.mhat_off + k, std::move(coeff));
    }
    // multiplier scalars act through -M(theta) on the z slot
    for (int t = 0; t < tpl.num_vars; ++t) {
      if (d.n_z == 0) break;
      const Matrix& mt = tpl.m_map.coeffs[static_cast<size_t>(t)];
      if (mt.size() == 0 || mt.cwiseAbs().maxCoeff() == 0.0) continue;
      b.coeffs.emplace(lay.theta_off + t,
                       numkit::symmetrized(-rz.transpose() * mt * rz));
    }
    return b;
  }
};

iqc::MultiplierTemplate empty_template(double rho) {
  iqc::MultiplierTemplate tpl;
  tpl.filter = iqc::FilterRealization::empty(0);
  tpl.rho = rho;
  tpl.num_vars = 0;
  tpl.m_map.constant = Matrix::Zero(0, 0);
  tpl.z_map.constant = Matrix::Zero(0, 0);
  tpl.recipe = "nominal";
  return tpl;
}

VerifyOutcome verify_impl(const model::Scenario& scenario, iqc::MultiplierTemplate tpl,
                          double rho, const VerifyOptions& opts) {
  if (!(rho > 0.0 && rho < 1.0)) throw BadParams("verify: rho must lie in (0, 1)");
  if (tpl.rho_agnostic)
    tpl = tpl.with_rho(rho);
  else if (std::abs(tpl.rho - rho) > 1e-12)
    throw BadParams("verify: template rho differs from requested rho");

  VerifyOutcome out;
  const auto ext = assemble_extended_vertices(scenario.envelope, tpl.filter);
  const ExtendedDims& d = ext.dims;
  const Layout lay(d, tpl.num_vars);
  const double rho2 = rho * rho;

  sdp::AffineSdp prob;
  prob.num_vars = lay.total;

  int vi = 0;
  for (const auto& v : ext.vertices) {
    LmiBlockBuilder bb(v, lay, rho2);
    prob.blocks.push_back(bb.build(tpl, "vertex_" + std::to_string(vi++)));
  }
  {
    LmiBlockBuilder bb(ext.midpoint, lay, rho2);
    prob.blocks.push_back(bb.build(tpl, "midpoint"));
  }

  // P - diag(0, rho^-2 Z) with margin
  {
    sdp::AffineBlock b;
    b.dim = d.n_chi;
    b.label = "storage";
    b.with_margin = true;
    b.constant = Matrix::Zero(d.n_chi, d.n_chi);
    const int psi_off = 2 * d.n + d.n_psi;
    if (d.n_psi > 0 && tpl.z_map.constant.size() > 0)
      b.constant.block(psi_off, psi_off, d.n_psi, d.n_psi) -= tpl.z_map.constant / rho2;
    for (int k = 0; k < Layout::sym_count(d.n_chi); ++k) {
      const auto [i, j] = vech_pair(d.n_chi, k);
      Matrix e = Matrix::Zero(d.n_chi, d.n_chi);
      e(i, j) = e(j, i) = 1.0;
      b.coeffs.emplace(lay.p_off + k, std::move(e));
    }
    for (int t = 0; t < tpl.num_vars; ++t) {
      if (d.n_psi == 0) break;
      const Matrix& zt = tpl.z_map.coeffs[static_cast<size_t>(t)];
      if (zt.size() == 0 || zt.cwiseAbs().maxCoeff() == 0.0) continue;
      Matrix e = Matrix::Zero(d.n_chi, d.n_chi);
      e.block(psi_off, psi_off, d.n_psi, d.n_psi) = -zt / rho2;
      b.coeffs.emplace(lay.theta_off + t, std::move(e));
    }
    prob.blocks.push_back(std::move(b));
  }

  // weight positive semidefiniteness (no margin: plain PSD per the problem)
  auto weight_block = [&](int off, int nn, const std::string& label) {
    if (nn == 0) return;
    sdp::AffineBlock b;
    b.dim = nn;
    b.label = label;
    b.with_margin = false;
    b.constant = Matrix::Zero(nn, nn);
    for (int k = 0; k < Layout::sym_count(nn); ++k) {
      const auto [i, j] = vech_pair(nn, k);
      Matrix e = Matrix::Zero(nn, nn);
      e(i, j) = e(j, i) = 1.0;
      b.coeffs.emplace(off + k, std::move(e));
    }
    prob.blocks.push_back(std::move(b));
  };
  weight_block(lay.q_off, d.n_w, "Q_psd");
  weight_block(lay.q0_off, d.n_w, "Q0_psd");
  weight_block(lay.r_off, d.m, "R_psd");
  weight_block(lay.r0_off, d.n, "R0_psd");
  weight_block(lay.mhat_off, d.n_z, "Mhat_psd");

  // multiplier family vertex LMIs (no margin)
  int gi = 0;
  for (const auto& g : tpl.vertex_psd) {
    sdp::AffineBlock b;
    b.dim = static_cast<int>(g.constant.rows());
    if (b.dim == 0) continue;
    b.label = "multiplier_vertex_" + std::to_string(gi++);
    b.with_margin = false;
    b.constant = g.constant;
    for (int t = 0; t < tpl.num_vars; ++t)
      if (g.coeffs[static_cast<size_t>(t)].cwiseAbs().maxCoeff() != 0.0)
        b.coeffs.emplace(lay.theta_off + t, g.coeffs[static_cast<size_t>(t)]);
    prob.blocks.push_back(std::move(b));
  }

  auto lift = [&](const iqc::LinearConstraint& c) {
    sdp::LinearConstraint out_c;
    out_c.a = sdp::Vector::Zero(lay.total);
    out_c.a.segment(lay.theta_off, tpl.num_vars) = c.a;
    out_c.b = c.b;
    return out_c;
  };
  for (const auto& e : tpl.equalities) prob.equalities.push_back(lift(e));
  for (const auto& c : tpl.inequalities) prob.inequalities.push_back(lift(c));

  // trace normalization keeps the homogeneous margin problem bounded
  {
    sdp::LinearConstraint cap;
    cap.a = sdp::Vector::Zero(lay.total);
    auto add_diag = [&](int off, int nn) {
      for (int k = 0, idx = 0; k < nn; ++k) {
        cap.a(off + idx) += 1.0;
        idx += nn - k;
      }
    };
    add_diag(lay.p_off, d.n_chi);
    add_diag(lay.q_off, d.n_w);
    add_diag(lay.q0_off, d.n_w);
    add_diag(lay.r_off, d.m);
    add_diag(lay.r0_off, d.n);
    add_diag(lay.mhat_off, d.n_z);
    cap.b = opts.scale_factor * d.n_chi;
    prob.inequalities.push_back(cap);
  }

  if (!opts.debug_dump.empty()) {
    std::ofstream dump(opts.debug_dump);
    sdp::dump_problem(prob, dump);
  }

  auto res = sdp::solve_max_margin(prob, opts.sdp);
  out.margin = res.margin;
  if (res.status == sdp::SolveStatus::NumericalFailure ||
      res.status == sdp::SolveStatus::Unbounded) {
    out.status = VerifyStatus::SolverFailure;
    out.message = "sdp: " + res.message;
    return out;
  }
  if (res.status == sdp::SolveStatus::Infeasible || res.margin <= opts.margin_accept) {
    out.status = VerifyStatus::Infeasible;
    out.message = "margin " + std::to_string(res.margin) + " below acceptance threshold";
    return out;
  }

  DetectabilityCertificate cert;
  cert.scenario = scenario.name;
  cert.rho = rho;
  cert.dims = d;
  cert.margin = res.margin;
  cert.P = sym_from_values(res.values, lay.p_off, d.n_chi);
  cert.Q = sym_from_values(res.values, lay.q_off, d.n_w);
  cert.Q0 = sym_from_values(res.values, lay.q0_off, d.n_w);
  cert.R = sym_from_values(res.values, lay.r_off, d.m);
  cert.R0 = sym_from_values(res.values, lay.r0_off, d.n);
  cert.Mhat = sym_from_values(res.values, lay.mhat_off, d.n_z);
  cert.P0 = cert.P.topLeftCorner(d.n + d.n_psi, d.n + d.n_psi);

  if (tpl.num_vars > 0) {
    sdp::Vector theta = res.values.segment(lay.theta_off, tpl.num_vars);
    theta = iqc::polish_theta(tpl, theta);
    cert.multiplier = iqc::instantiate(tpl, theta);
  } else {
    cert.multiplier = iqc::MultiplierInstance{tpl.filter, rho, Matrix::Zero(0, 0),
                                              Matrix::Zero(0, 0), tpl.recipe};
  }

  if (numkit::min_eigenvalue(cert.P0) <= 0.0) {
    out.status = VerifyStatus::SolverFailure;
    out.message = "returned P11 is not positive definite";
    return out;
  }

  // round-trip re-check of the stored vertex LMIs
  double worst_vertex = -1e300;
  for (const auto& v : ext.vertices)
    worst_vertex = std::max(worst_vertex, numkit::max_eigenvalue(evaluate_lmi(cert, v)));
  worst_vertex =
      std::max(worst_vertex, numkit::max_eigenvalue(evaluate_lmi(cert, ext.midpoint)));
  if (worst_vertex > -res.margin + 1e-7) {
    out.status = VerifyStatus::SolverFailure;
    out.message = "vertex LMI re-check failed: max eigenvalue " + std::to_string(worst_vertex);
    return out;
  }

  // random interior validation of the parameter box
  Rng rng(opts.seed, 0x696e7472ULL);
  double interior_max = -1e300;
  for (int k = 0; k < opts.interior_samples; ++k) {
    const EnvelopeSample s = envelope_random(scenario.envelope, d.p, rng);
    const VertexSystem sys = assemble_system(s, tpl.filter);
    interior_max = std::max(interior_max, numkit::max_eigenvalue(evaluate_lmi(cert, sys)));
  }
  out.interior_max_eig = interior_max;
  if (opts.interior_samples > 0 && interior_max > opts.interior_tol) {
    out.status = VerifyStatus::InteriorViolation;
    out.message = "interior sampling found LMI violation " + std::to_string(interior_max);
    return out;
  }

  out.status = VerifyStatus::Certified;
  out.certificate = std::move(cert);
  out.message = "certified with margin " + std::to_string(res.margin);
  return out;
}

}  // namespace

VerifyOutcome verify_detectability(const model::Scenario& scenario,
                                   const iqc::MultiplierTemplate& tpl, double rho,
                                   const VerifyOptions& opts) {
  return verify_impl(scenario, tpl, rho, opts);
}

VerifyOutcome verify_nominal(const model::Scenario& scenario, double rho,
                             const VerifyOptions& opts) {
  return verify_impl(scenario, empty_template(rho), rho, opts);
}

Matrix evaluate_lmi(const DetectabilityCertificate& cert, const VertexSystem& sys) {
  const ExtendedDims& d = cert.dims;
  const int dim = d.n_chi + d.n_nu;
  Matrix ab(d.n_chi, dim), cd(d.n_zeta, dim);
  ab << sys.A, sys.B;
  cd << sys.C, sys.D;
  Matrix pp = Matrix::Zero(d.n_zeta, d.n_zeta);
  int off = 0;
  pp.block(off, off, d.n_w, d.n_w) = cert.Q;
  off += d.n_w;
  pp.block(off, off, d.n_w, d.n_w) = cert.Q0;
  off += d.n_w;
  pp.block(off, off, d.m, d.m) = cert.R;
  off += d.m;
  pp.block(off, off, d.n, d.n) = cert.R0;
  off += d.n;
  if (d.n_z > 0) {
    pp.block(off, off, d.n_z, d.n_z) = -(cert.multiplier.M + cert.Mhat);
    off += d.n_z;
    pp.block(off, off, d.n_z, d.n_z) = cert.Mhat;
  }
  Matrix lmi = ab.transpose() * cert.P * ab - cd.transpose() * pp * cd;
  lmi.topLeftCorner(d.n_chi, d.n_chi) -= cert.rho2() * cert.P;
  return numkit::symmetrized(lmi);
}

double dissipation_value(const DetectabilityCertificate& cert, const Vector& chi,
                         const Vector& chi_next, const Vector& w, const Vector& w_tilde,
                         const Vector& xhat, const Vector& x_tilde, const Vector& y,
                         const Vector& y_tilde, const Vector& z, const Vector& z_tilde) {
  const double lhs = chi_next.dot(cert.P * chi_next);
  double rhs = cert.rho2() * chi.dot(cert.P * chi);
  rhs += w.dot(cert.Q0 * w);
  const Vector ew = w - w_tilde;
  rhs += ew.dot(cert.Q * ew);
  const Vector exh = xhat - x_tilde;
  rhs += exh.dot(cert.R0 * exh);
  const Vector ey = y - y_tilde;
  rhs += ey.dot(cert.R * ey);
  if (z.size() > 0) {
    rhs += z_tilde.dot(cert.Mhat * z_tilde);
    rhs -= z.dot((cert.multiplier.M + cert.Mhat) * z);
  }
  return lhs - rhs;
}

DissipationReport validate_certificate(const DetectabilityCertificate& cert,
                                       const model::Scenario& scenario, int pairs,
                                       int length, std::uint64_t seed) {
  DissipationReport rep;
  const auto& pl = scenario.plant;
  const auto& filter = cert.multiplier.filter;
  const int n_psi = filter.n_psi();
  const double probe = scenario.state_probe_halfwidth;
  const model::BoxSet x_box = scenario.X.bounded_probe(probe);
  const model::BoxSet start_box = scenario.X.bounded_probe(0.5 * probe);
  const model::BoxSet d_box = model::BoxSet::symmetric(pl.p, scenario.d_probe_halfwidth);

  Rng master(seed, 0x64697373ULL);
  for (int pair = 0; pair < pairs; ++pair) {
    Rng rng = master.split(static_cast<std::uint64_t>(pair));
    Vector x = start_box.sample(rng), xt = start_box.sample(rng);
    Vector psi = Vector::Zero(n_psi), psit = Vector::Zero(n_psi);
    for (int k = 0; k < length; ++k) {
      if (!x_box.contains(x) || !x_box.contains(xt)) {
        // keep the pair inside the envelope-validated region
        x = start_box.sample(rng);
        xt = start_box.sample(rng);
      }
      const Vector w = scenario.W.sample(rng);
      const Vector wt = scenario.W.sample(rng);
      const Vector dt = d_box.sample(rng);
      const Vector xhat = start_box.sample(rng);
      const Vector u = scenario.controller.kappa(xhat);

      const Vector v = pl.g(x, w);
      const Vector d = scenario.uncertainty.delta(v);
      const Vector y = pl.h(x, w, d, u);
      const Vector vt = pl.g(xt, wt);
      const Vector yt = pl.h(xt, wt, dt, u);

      Vector psi_next = psi, psit_next = psit;
      Vector z(0), zt(0);
      if (cert.dims.p > 0) {
        auto [pn, zz] = iqc::filter_step(filter, psi, v, d);
        auto [ptn, zzt] = iqc::filter_step(filter, psit, vt, dt);
        psi_next = pn;
        z = zz;
        psit_next = ptn;
        zt = zzt;
      }
      const Vector x_next = pl.f(x, w, d, u);
      const Vector xt_next = pl.f(xt, wt, dt, u);

      Vector chi(cert.dims.n_chi), chi_next(cert.dims.n_chi);
      chi << (x - xt), (psi - psit), x, psi;
      chi_next << (x_next - xt_next), (psi_next - psit_next), x_next, psi_next;

      rep.worst_violation =
          std::max(rep.worst_violation, dissipation_value(cert, chi, chi_next, w, wt,
                                                          xhat, xt, y, yt, z, zt));
      ++rep.checks;

      x = x_next;
      xt = xt_next;
      psi = psi_next;
      psit = psit_next;
    }
  }
  return rep;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index jj = 0; jj < m.cols(); ++jj) data.push_back(m(i, jj));
  j["data"] = data;
  return j;
}

Matrix matrix_from_json(const json& j) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<int>(data.size()) != rows * cols)
    throw InvalidCertificate("matrix payload size mismatch");
  Matrix m(rows, cols);
  int k = 0;
  for (int i = 0; i < rows; ++i)
    for (int jj = 0; jj < cols; ++jj) m(i, jj) = data[static_cast<size_t>(k++)];
  return m;
}

void hash_feed(std::uint64_t& h, const char* bytes, size_t len) {
  for (size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 0x100000001b3ULL;
  }
}

void hash_feed_matrix(std::uint64_t& h, const Matrix& m) {
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const int len = std::snprintf(buf, sizeof(buf), "%.17g,", m(i, j));
      hash_feed(h, buf, static_cast<size_t>(len));
    }
}

}  // namespace

std::string certificate_hash(const DetectabilityCertificate& cert) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  hash_feed(h, cert.scenario.data(), cert.scenario.size());
  char buf[128];
  int len = std::snprintf(buf, sizeof(buf), "|%.17g|%.17g|%d,%d,%d,%d,%d,%d,%d|", cert.rho,
                          cert.margin, cert.dims.n, cert.dims.n_w, cert.dims.p, cert.dims.q,
                          cert.dims.m, cert.dims.n_psi, cert.dims.n_z);
  hash_feed(h, buf, static_cast<size_t>(len));
  for (const Matrix* m : {&cert.P, &cert.Q, &cert.Q0, &cert.R, &cert.R0, &cert.Mhat,
                          &cert.P0, &cert.multiplier.M, &cert.multiplier.Z,
                          &cert.multiplier.filter.A, &cert.multiplier.filter.B,
                          &cert.multiplier.filter.C, &cert.multiplier.filter.D})
    hash_feed_matrix(h, *m);
  hash_feed(h, cert.multiplier.recipe.data(), cert.multiplier.recipe.size());
  len = std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return "fnv1a64:" + std::string(buf, static_cast<size_t>(len));
}

json certificate_to_json(const DetectabilityCertificate& cert) {
  json j;
  j["format"] = "iqcmhe-certificate";
  j["version"] = 1;
  j["scenario"] = cert.scenario;
  j["rho2"] = cert.rho2();
  j["margin"] = cert.margin;
  j["dims"] = {{"n", cert.dims.n},     {"n_w", cert.dims.n_w}, {"p", cert.dims.p},
               {"q", cert.dims.q},     {"m", cert.dims.m},     {"n_psi", cert.dims.n_psi},
               {"n_z", cert.dims.n_z}};
  j["P"] = matrix_to_json(cert.P);
  j["Q"] = matrix_to_json(cert.Q);
  j["Q0"] = matrix_to_json(cert.Q0);
  j["R"] = matrix_to_json(cert.R);
  j["R0"] = matrix_to_json(cert.R0);
  j["Mhat"] = matrix_to_json(cert.Mhat);
  j["P0"] = matrix_to_json(cert.P0);
  j["multiplier"] = {{"rho", cert.multiplier.rho},
                     {"recipe", cert.multiplier.recipe},
                     {"p", cert.multiplier.filter.p},
                     {"A", matrix_to_json(cert.multiplier.filter.A)},
                     {"B", matrix_to_json(cert.multiplier.filter.B)},
                     {"C", matrix_to_json(cert.multiplier.filter.C)},
                     {"D", matrix_to_json(cert.multiplier.filter.D)},
                     {"M", matrix_to_json(cert.multiplier.M)},
                     {"Z", matrix_to_json(cert.multiplier.Z)}};
  j["hash"] = certificate_hash(cert);
  return j;
}

DetectabilityCertificate certificate_from_json(const json& j) {
  if (j.value("format", "") != "iqcmhe-certificate")
    throw InvalidCertificate("not a certificate file");
  DetectabilityCertificate cert;
  cert.scenario = j.at("scenario").get<std::string>();
  cert.rho = std::sqrt(j.at("rho2").get<double>());
  cert.margin = j.at("margin").get<double>();
  const auto& dims = j.at("dims");
  cert.dims.n = dims.at("n").get<int>();
  cert.dims.n_w = dims.at("n_w").get<int>();
  cert.dims.p = dims.at("p").get<int>();
  cert.dims.q = dims.at("q").get<int>();
  cert.dims.m = dims.at("m").get<int>();
  cert.dims.n_psi = dims.at("n_psi").get<int>();
  cert.dims.n_z = dims.at("n_z").get<int>();
  cert.dims.n_chi = 2 * cert.dims.n + 2 * cert.dims.n_psi;
  cert.dims.n_nu = 2 * cert.dims.n_w + 2 * cert.dims.p + cert.dims.n;
  cert.dims.n_zeta = 2 * cert.dims.n_w + cert.dims.m + cert.dims.n + 2 * cert.dims.n_z;
  cert.P = matrix_from_json(j.at("P"));
  cert.Q = matrix_from_json(j.at("Q"));
  cert.Q0 = matrix_from_json(j.at("Q0"));
  cert.R = matrix_from_json(j.at("R"));
  cert.R0 = matrix_from_json(j.at("R0"));
  cert.Mhat = matrix_from_json(j.at("Mhat"));
  cert.P0 = matrix_from_json(j.at("P0"));
  const auto& mult = j.at("multiplier");
  cert.multiplier.rho = mult.at("rho").get<double>();
  cert.multiplier.recipe = mult.at("recipe").get<std::string>();
  cert.multiplier.filter.p = mult.at("p").get<int>();
  cert.multiplier.filter.A = matrix_from_json(mult.at("A"));
  cert.multiplier.filter.B = matrix_from_json(mult.at("B"));
  cert.multiplier.filter.C = matrix_from_json(mult.at("C"));
  cert.multiplier.filter.D = matrix_from_json(mult.at("D"));
  cert.multiplier.M = matrix_from_json(mult.at("M"));
  cert.multiplier.Z = matrix_from_json(mult.at("Z"));
  if (j.contains("hash") && j.at("hash").get<std::string>() != certificate_hash(cert))
    throw InvalidCertificate("certificate hash mismatch");
  return cert;
}

void save_certificate(const std::string& path, const DetectabilityCertificate& cert) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << certificate_to_json(cert).dump(2) << "\n";
}

DetectabilityCertificate load_certificate(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  json j;
  is >> j;
  return certificate_from_json(j);
}

}  // namespace iqcmhe::detect
