#include "iqcmhe/iqc.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "iqcmhe/errors.hpp"
#include "iqcmhe/rng.hpp"

namespace iqcmhe::iqc {

using numkit::kron;

FilterRealization FilterRealization::empty(int p) {
  FilterRealization f;
  f.A = Matrix::Zero(0, 0);
  f.B = Matrix::Zero(0, 2 * p);
  f.C = Matrix::Zero(0, 0);
  f.D = Matrix::Zero(0, 2 * p);
  f.p = p;
  return f;
}

Matrix AffineMatrixSet::at(const Vector& theta) const {
  Matrix out = constant;
  for (size_t i = 0; i < coeffs.size(); ++i) out += theta(static_cast<Eigen::Index>(i)) * coeffs[i];
  return out;
}

MultiplierTemplate MultiplierTemplate::with_rho(double rho_value) const {
  if (rho_value <= 0.0 || rho_value >= 1.0)
    throw BadParams("multiplier rho must lie in (0, 1)");
  if (!rho_agnostic && std::abs(rho_value - rho) > 1e-12)
    throw BadParams("template rho does not match requested rho");
  MultiplierTemplate out = *this;
  out.rho = rho_value;
  out.rho_agnostic = false;
  return out;
}

namespace {

// T = [[beta I, -I], [-alpha I, I]]
Matrix sector_transform(double alpha, double beta, int p) {
  Matrix t = Matrix::Zero(2 * p, 2 * p);
  t.topLeftCorner(p, p) = beta * Matrix::Identity(p, p);
  t.topRightCorner(p, p) = -Matrix::Identity(p, p);
  t.bottomLeftCorner(p, p) = -alpha * Matrix::Identity(p, p);
  t.bottomRightCorner(p, p) = Matrix::Identity(p, p);
  return t;
}

Vector pad(const Vector& a, int lo, int total) {
  Vector out = Vector::Zero(total);
  out.segment(lo, a.size()) = a;
  return out;
}

}  // namespace

MultiplierTemplate build_zames_falb_template(int nu, double alpha, double beta, int p,
                                             double rho) {
  if (nu < 1) throw BadParams("zames_falb: nu must be >= 1");
  if (!(beta > alpha)) throw BadParams("zames_falb: beta must exceed alpha");
  if (!(rho > 0.0 && rho < 1.0)) throw BadParams("zames_falb: rho must lie in (0, 1)");
  if (p < 1) throw BadParams("zames_falb: p must be >= 1");

  const int wd = nu + 1;  // W is wd x wd, Q is nu x nu
  MultiplierTemplate tpl;
  tpl.rho = rho;

  Matrix jordan = Matrix::Zero(nu, nu);
  for (int i = 0; i + 1 < nu; ++i) jordan(i, i + 1) = 1.0;
  Matrix b_slot = Matrix::Zero(nu, 1);
  b_slot(nu - 1, 0) = 1.0;
  Matrix c_slot = Matrix::Zero(wd, nu);
  c_slot.topLeftCorner(nu, nu) = Matrix::Identity(nu, nu);
  Matrix d_slot = Matrix::Zero(wd, 1);
  d_slot(wd - 1, 0) = 1.0;

  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix ip = Matrix::Identity(p, p);
  const Matrix t = sector_transform(alpha, beta, p);

  FilterRealization f;
  f.p = p;
  f.A = kron(i2, kron(jordan, ip));
  f.B = kron(i2, kron(b_slot, ip)) * t;
  f.C = kron(i2, kron(c_slot, ip));
  f.D = kron(i2, kron(d_slot, ip)) * t;
  tpl.filter = f;

  const int n_z = f.n_z(), n_psi = f.n_psi();
  const int w_vars = wd * wd;
  tpl.num_vars = w_vars + nu * nu;
  tpl.m_map.constant = Matrix::Zero(n_z, n_z);
  tpl.z_map.constant = Matrix::Zero(n_psi, n_psi);

  const int zb = wd * p;  // half-size of z
  for (int i = 0; i < wd; ++i) {
    for (int j = 0; j < wd; ++j) {
      Matrix w_unit = Matrix::Zero(wd, wd);
      w_unit(i, j) = 1.0;
      Matrix m = Matrix::Zero(n_z, n_z);
      m.block(0, zb, zb, zb) = kron(w_unit, ip);
      m.block(zb, 0, zb, zb) = kron(w_unit, ip).transpose();
      tpl.m_map.coeffs.push_back(m);
      tpl.z_map.coeffs.push_back(Matrix::Zero(n_psi, n_psi));
    }
  }
  const int pb = nu * p;  // half-size of psi
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nu; ++j) {
      Matrix q_unit = Matrix::Zero(nu, nu);
      q_unit(i, j) = 1.0;
      Matrix z = Matrix::Zero(n_psi, n_psi);
      z.block(0, pb, pb, pb) = kron(q_unit, ip);
      z.block(pb, 0, pb, pb) = kron(q_unit, ip).transpose();
      tpl.z_map.coeffs.push_back(z);
      tpl.m_map.coeffs.push_back(Matrix::Zero(n_z, n_z));
    }
  }

  // Wbar = W - diag(Q, 0) + diag(0, rho^-2 Q), entry-wise affine in theta.
  const double rinv2 = 1.0 / (rho * rho);
  auto wbar_entry = [&](int i, int j) {
    Vector a = Vector::Zero(tpl.num_vars);
    a(i * wd + j) = 1.0;
    if (i < nu && j < nu) a(w_vars + i * nu + j) -= 1.0;
    if (i >= 1 && j >= 1) a(w_vars + (i - 1) * nu + (j - 1)) += rinv2;
    return a;
  };

  for (int i = 0; i < wd; ++i) {
    for (int j = i + 1; j < wd; ++j) {
      tpl.equalities.push_back({wbar_entry(i, j) - wbar_entry(j, i), 0.0});
      tpl.inequalities.push_back({wbar_entry(i, j), 0.0});
      tpl.inequalities.push_back({wbar_entry(j, i), 0.0});
    }
  }
  for (int i = 0; i < wd; ++i) {
    Vector row = Vector::Zero(tpl.num_vars), col = Vector::Zero(tpl.num_vars);
    for (int j = 0; j < wd; ++j) {
      row += wbar_entry(i, j);
      col += wbar_entry(j, i);
    }
    tpl.inequalities.push_back({-row, 0.0});
    tpl.inequalities.push_back({-col, 0.0});
  }

  FamilySegment seg;
  seg.kind = FamilySegment::Kind::ZamesFalb;
  seg.nu = nu;
  seg.p = p;
  seg.alpha = alpha;
  seg.beta = beta;
  tpl.segments.push_back(seg);

  std::ostringstream os;
  os << "zames_falb(nu=" << nu << ",alpha=" << alpha << ",beta=" << beta << ",p=" << p << ")";
  tpl.recipe = os.str();
  return tpl;
}

MultiplierTemplate build_static_polytopic_template(double alpha, double beta, int p) {
  if (!(beta > alpha)) throw BadParams("static_polytopic: beta must exceed alpha");
  if (p < 1) throw BadParams("static_polytopic: p must be >= 1");

  MultiplierTemplate tpl;
  tpl.rho_agnostic = true;
  tpl.rho = 0.0;

  FilterRealization f = FilterRealization::empty(p);
  f.C = Matrix::Zero(2 * p, 0);
  f.D = Matrix::Identity(2 * p, 2 * p);
  tpl.filter = f;

  const int d = 2 * p;
  tpl.num_vars = d * (d + 1) / 2;
  tpl.m_map.constant = Matrix::Zero(d, d);
  tpl.z_map.constant = Matrix::Zero(0, 0);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      Matrix m = Matrix::Zero(d, d);
      m(i, j) = m(j, i) = 1.0;
      tpl.m_map.coeffs.push_back(m);
      tpl.z_map.coeffs.push_back(Matrix::Zero(0, 0));
    }
  }

  // vertex nonnegativity of [I; diag(delta)]^T M [I; diag(delta)]
  for (unsigned long mask = 0; mask < (1UL << p); ++mask) {
    Matrix basis(2 * p, p);
    basis.topRows(p) = Matrix::Identity(p, p);
    Vector delta(p);
    for (int i = 0; i < p; ++i) delta(i) = ((mask >> i) & 1) ? beta : alpha;
    basis.bottomRows(p) = Matrix(delta.asDiagonal());
    AffineMatrixSet g;
    g.constant = Matrix::Zero(p, p);
    for (const auto& m : tpl.m_map.coeffs)
      g.coeffs.push_back(basis.transpose() * m * basis);
    tpl.vertex_psd.push_back(std::move(g));
  }
  // -M22 >= 0 makes the vertex quadratic concave per delta_i, so vertices suffice
  {
    AffineMatrixSet g;
    g.constant = Matrix::Zero(p, p);
    for (const auto& m : tpl.m_map.coeffs) g.coeffs.push_back(-m.bottomRightCorner(p, p));
    tpl.vertex_psd.push_back(std::move(g));
  }

  FamilySegment seg;
  seg.kind = FamilySegment::Kind::StaticPolytopic;
  seg.p = p;
  seg.alpha = alpha;
  seg.beta = beta;
  tpl.segments.push_back(seg);

  std::ostringstream os;
  os << "static_polytopic(alpha=" << alpha << ",beta=" << beta << ",p=" << p << ")";
  tpl.recipe = os.str();
  return tpl;
}

FilterCore FilterCore::memoryless(int p) {
  FilterCore c;
  c.A = Matrix::Zero(0, 0);
  c.B = Matrix::Zero(0, p);
  c.C = Matrix::Zero(p, 0);
  c.D = Matrix::Identity(p, p);
  return c;
}

MultiplierTemplate build_parametric_template(double a, double b, const FilterCore& phi,
                                             double rho) {
  if (!(b > a)) throw BadParams("parametric: b must exceed a");
  if (!(rho > 0.0 && rho < 1.0)) throw BadParams("parametric: rho must lie in (0, 1)");
  const int n_phi = static_cast<int>(phi.A.rows());
  const int p = static_cast<int>(phi.B.cols());
  const int n_c = static_cast<int>(phi.C.rows());
  if (phi.A.cols() != n_phi || phi.B.rows() != n_phi || phi.C.cols() != n_phi ||
      phi.D.rows() != n_c || phi.D.cols() != p)
    throw DimMismatch("parametric: inconsistent Phi dimensions");

  MultiplierTemplate tpl;
  tpl.rho = rho;

  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix t = sector_transform(a, b, p);  // [[b I, -I], [-a I, I]]

  FilterRealization f;
  f.p = p;
  f.A = kron(i2, phi.A);
  f.B = kron(i2, phi.B) * t;
  f.C = kron(i2, phi.C);
  f.D = kron(i2, phi.D) * t;
  tpl.filter = f;

  const int n_z = f.n_z(), n_psi = f.n_psi();
  // variables: vech(M1), vech(M3), vec(W2), vech(Z1), vech(Z3), vec(Q2)
  const int sym_c = n_c * (n_c + 1) / 2, sym_f = n_phi * (n_phi + 1) / 2;
  const int off_m1 = 0;
  const int off_m3 = off_m1 + sym_c;
  const int off_w2 = off_m3 + sym_c;
  const int off_z1 = off_w2 + n_c * n_c;
  const int off_z3 = off_z1 + sym_f;
  const int off_q2 = off_z3 + sym_f;
  tpl.num_vars = off_q2 + n_phi * n_phi;

  tpl.m_map.constant = Matrix::Zero(n_z, n_z);
  tpl.z_map.constant = Matrix::Zero(n_psi, n_psi);
  tpl.m_map.coeffs.assign(tpl.num_vars, Matrix::Zero(n_z, n_z));
  tpl.z_map.coeffs.assign(tpl.num_vars, Matrix::Zero(n_psi, n_psi));

  std::vector<Matrix> m1_basis, m3_basis, m2_basis, z1_basis, z3_basis, z2_basis;
  int var = off_m1;
  for (int i = 0; i < n_c; ++i)
    for (int j = i; j < n_c; ++j) {
      Matrix e = Matrix::Zero(n_c, n_c);
      e(i, j) = e(j, i) = 1.0;
      tpl.m_map.coeffs[var].topLeftCorner(n_c, n_c) = e;
      m1_basis.push_back(e);
      ++var;
    }
  for (int i = 0; i < n_c; ++i)
    for (int j = i; j < n_c; ++j) {
      Matrix e = Matrix::Zero(n_c, n_c);
      e(i, j) = e(j, i) = 1.0;
      tpl.m_map.coeffs[var].bottomRightCorner(n_c, n_c) = e;
      m3_basis.push_back(e);
      ++var;
    }
  for (int i = 0; i < n_c; ++i)
    for (int j = 0; j < n_c; ++j) {
      Matrix e = Matrix::Zero(n_c, n_c);
      e(i, j) = 1.0;
      tpl.m_map.coeffs[var].topRightCorner(n_c, n_c) = e;
      tpl.m_map.coeffs[var].bottomLeftCorner(n_c, n_c) = e.transpose();
      m2_basis.push_back(e + e.transpose());  // M2 = W2 + W2^T
      ++var;
    }
  for (int i = 0; i < n_phi; ++i)
    for (int j = i; j < n_phi; ++j) {
      Matrix e = Matrix::Zero(n_phi, n_phi);
      e(i, j) = e(j, i) = 1.0;
      tpl.z_map.coeffs[var].topLeftCorner(n_phi, n_phi) = e;
      z1_basis.push_back(e);
      ++var;
    }
  for (int i = 0; i < n_phi; ++i)
    for (int j = i; j < n_phi; ++j) {
      Matrix e = Matrix::Zero(n_phi, n_phi);
      e(i, j) = e(j, i) = 1.0;
      tpl.z_map.coeffs[var].bottomRightCorner(n_phi, n_phi) = e;
      z3_basis.push_back(e);
      ++var;
    }
  for (int i = 0; i < n_phi; ++i)
    for (int j = 0; j < n_phi; ++j) {
      Matrix e = Matrix::Zero(n_phi, n_phi);
      e(i, j) = 1.0;
      tpl.z_map.coeffs[var].topRightCorner(n_phi, n_phi) = e;
      tpl.z_map.coeffs[var].bottomLeftCorner(n_phi, n_phi) = e.transpose();
      z2_basis.push_back(e + e.transpose());  // Z2 = Q2 + Q2^T
      ++var;
    }

  // vertex LMI for i in {1,2,3}:
  // (-Z_i on [I 0]) + rho^-2 Z_i on [A B] + M_i on [C D] >= 0
  Matrix pre_i = Matrix::Zero(n_phi, n_phi + p);
  pre_i.leftCols(n_phi) = Matrix::Identity(n_phi, n_phi);
  Matrix pre_ab(n_phi, n_phi + p);
  if (n_phi > 0)
    pre_ab << phi.A, phi.B;
  Matrix pre_cd(n_c, n_phi + p);
  pre_cd << phi.C, phi.D;
  const double rinv2 = 1.0 / (rho * rho);

  auto make_vertex = [&](int which) {
    AffineMatrixSet g;
    g.constant = Matrix::Zero(n_phi + p, n_phi + p);
    g.coeffs.assign(tpl.num_vars, Matrix::Zero(n_phi + p, n_phi + p));
    auto add_z = [&](int var_index, const Matrix& zb) {
      g.coeffs[var_index] += -pre_i.transpose() * zb * pre_i +
                             rinv2 * pre_ab.transpose() * zb * pre_ab;
    };
    auto add_m = [&](int var_index, const Matrix& mb) {
      g.coeffs[var_index] += pre_cd.transpose() * mb * pre_cd;
    };
    if (which == 1) {
      for (int k = 0; k < sym_c; ++k) add_m(off_m1 + k, m1_basis[k]);
      for (int k = 0; k < sym_f; ++k) add_z(off_z1 + k, z1_basis[k]);
    } else if (which == 2) {
      for (int k = 0; k < n_c * n_c; ++k) add_m(off_w2 + k, m2_basis[k]);
      for (int k = 0; k < n_phi * n_phi; ++k) add_z(off_q2 + k, z2_basis[k]);
    } else {
      for (int k = 0; k < sym_c; ++k) add_m(off_m3 + k, m3_basis[k]);
      for (int k = 0; k < sym_f; ++k) add_z(off_z3 + k, z3_basis[k]);
    }
    return g;
  };
  for (int i = 1; i <= 3; ++i) tpl.vertex_psd.push_back(make_vertex(i));

  FamilySegment seg;
  seg.kind = FamilySegment::Kind::Parametric;
  seg.p = p;
  seg.alpha = a;
  seg.beta = b;
  tpl.segments.push_back(seg);

  std::ostringstream os;
  os << "parametric(a=" << a << ",b=" << b << ",n_phi=" << n_phi << ",p=" << p << ")";
  tpl.recipe = os.str();
  return tpl;
}

MultiplierTemplate combine(const std::vector<MultiplierTemplate>& templates) {
  if (templates.empty()) throw BadParams("combine: no templates given");
  if (templates.size() == 1) return templates.front();

  const int p = templates.front().filter.p;
  double rho = 0.0;
  bool have_rho = false;
  for (const auto& t : templates) {
    if (t.filter.p != p) throw DimMismatch("combine: templates disagree on p");
    if (t.rho_agnostic) continue;
    if (have_rho && std::abs(t.rho - rho) > 1e-12)
      throw DimMismatch("combine: templates disagree on rho");
    rho = t.rho;
    have_rho = true;
  }

  MultiplierTemplate out;
  out.rho = have_rho ? rho : 0.0;
  out.rho_agnostic = !have_rho;
  int n_psi = 0, n_z = 0, n_vars = 0;
  for (const auto& t : templates) {
    n_psi += t.filter.n_psi();
    n_z += t.filter.n_z();
    n_vars += t.num_vars;
  }
  out.num_vars = n_vars;

  FilterRealization f;
  f.p = p;
  f.A = Matrix::Zero(n_psi, n_psi);
  f.B = Matrix::Zero(n_psi, 2 * p);
  f.C = Matrix::Zero(n_z, n_psi);
  f.D = Matrix::Zero(n_z, 2 * p);
  out.m_map.constant = Matrix::Zero(n_z, n_z);
  out.z_map.constant = Matrix::Zero(n_psi, n_psi);
  out.m_map.coeffs.assign(n_vars, Matrix());
  out.z_map.coeffs.assign(n_vars, Matrix());

  int psi_off = 0, z_off = 0, var_off = 0;
  std::ostringstream recipe;
  bool first = true;
  for (const auto& t : templates) {
    const int np = t.filter.n_psi(), nz = t.filter.n_z();
    f.A.block(psi_off, psi_off, np, np) = t.filter.A;
    f.B.middleRows(psi_off, np) = t.filter.B;
    f.C.block(z_off, psi_off, nz, np) = t.filter.C;
    f.D.middleRows(z_off, nz) = t.filter.D;
    out.m_map.constant.block(z_off, z_off, nz, nz) = t.m_map.constant;
    out.z_map.constant.block(psi_off, psi_off, np, np) = t.z_map.constant;
    for (int k = 0; k < t.num_vars; ++k) {
      Matrix m = Matrix::Zero(n_z, n_z);
      m.block(z_off, z_off, nz, nz) = t.m_map.coeffs[k];
      out.m_map.coeffs[var_off + k] = std::move(m);
      Matrix z = Matrix::Zero(n_psi, n_psi);
      z.block(psi_off, psi_off, np, np) = t.z_map.coeffs[k];
      out.z_map.coeffs[var_off + k] = std::move(z);
    }
    for (const auto& e : t.equalities)
      out.equalities.push_back({pad(e.a, var_off, n_vars), e.b});
    for (const auto& iq : t.inequalities)
      out.inequalities.push_back({pad(iq.a, var_off, n_vars), iq.b});
    for (const auto& g : t.vertex_psd) {
      AffineMatrixSet gg;
      gg.constant = g.constant;
      gg.coeffs.assign(n_vars, Matrix::Zero(g.constant.rows(), g.constant.cols()));
      for (int k = 0; k < t.num_vars; ++k) gg.coeffs[var_off + k] = g.coeffs[k];
      out.vertex_psd.push_back(std::move(gg));
    }
    for (FamilySegment seg : t.segments) {
      seg.var_offset += var_off;
      out.segments.push_back(seg);
    }
    recipe << (first ? "" : " + ") << t.recipe;
    first = false;
    psi_off += np;
    z_off += nz;
    var_off += t.num_vars;
  }
  out.filter = f;
  out.recipe = recipe.str();
  return out;
}

MultiplierInstance instantiate(const MultiplierTemplate& tpl, const Vector& theta,
                               double tol) {
  if (theta.size() != tpl.num_vars)
    throw DimMismatch("instantiate: wrong number of multiplier scalars");
  if (tpl.rho_agnostic || tpl.rho <= 0.0 || tpl.rho >= 1.0)
    throw BadParams("instantiate: template has no concrete rho");
  for (const auto& e : tpl.equalities)
    if (std::abs(e.a.dot(theta) - e.b) > tol)
      throw BadParams("instantiate: equality constraint violated");
  for (const auto& iq : tpl.inequalities)
    if (iq.a.dot(theta) - iq.b > tol)
      throw BadParams("instantiate: inequality constraint violated");
  for (const auto& g : tpl.vertex_psd)
    if (numkit::min_eigenvalue(g.at(theta)) < -tol)
      throw BadParams("instantiate: vertex LMI constraint violated");

  MultiplierInstance inst;
  inst.filter = tpl.filter;
  inst.rho = tpl.rho;
  inst.M = numkit::symmetrized(tpl.m_map.at(theta));
  inst.Z = numkit::symmetrized(tpl.z_map.at(theta));
  inst.recipe = tpl.recipe;
  return inst;
}

Vector polish_theta(const MultiplierTemplate& tpl, const Vector& theta) {
  Vector out = theta;
  for (const auto& seg : tpl.segments) {
    if (seg.kind == FamilySegment::Kind::ZamesFalb) {
      const int wd = seg.nu + 1;
      const int w_vars = wd * wd;
      const double rinv2 = 1.0 / (tpl.rho * tpl.rho);
      Matrix w(wd, wd), q(seg.nu, seg.nu);
      for (int i = 0; i < wd; ++i)
        for (int j = 0; j < wd; ++j) w(i, j) = out(seg.var_offset + i * wd + j);
      for (int i = 0; i < seg.nu; ++i)
        for (int j = 0; j < seg.nu; ++j)
          q(i, j) = out(seg.var_offset + w_vars + i * seg.nu + j);
      Matrix wbar = w;
      wbar.topLeftCorner(seg.nu, seg.nu) -= q;
      wbar.bottomRightCorner(seg.nu, seg.nu) += rinv2 * q;
      wbar = numkit::symmetrized(wbar);
      for (int i = 0; i < wd; ++i)
        for (int j = 0; j < wd; ++j)
          if (i != j && wbar(i, j) > 0.0) wbar(i, j) = 0.0;
      for (int i = 0; i < wd; ++i) {
        const double deficit =
            std::max({0.0, -wbar.row(i).sum(), -wbar.col(i).sum()});
        wbar(i, i) += deficit;
      }
      Matrix w_new = wbar;
      w_new.topLeftCorner(seg.nu, seg.nu) += q;
      w_new.bottomRightCorner(seg.nu, seg.nu) -= rinv2 * q;
      for (int i = 0; i < wd; ++i)
        for (int j = 0; j < wd; ++j) out(seg.var_offset + i * wd + j) = w_new(i, j);
    } else if (seg.kind == FamilySegment::Kind::StaticPolytopic) {
      const int d = 2 * seg.p;
      Matrix m(d, d);
      int k = seg.var_offset;
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          m(i, j) = m(j, i) = out(k);
          ++k;
        }
      const double m22_excess =
          std::max(0.0, numkit::max_eigenvalue(m.bottomRightCorner(seg.p, seg.p)));
      m.bottomRightCorner(seg.p, seg.p) -=
          m22_excess * Matrix::Identity(seg.p, seg.p);
      double vertex_min = 0.0;
      for (unsigned long mask = 0; mask < (1UL << seg.p); ++mask) {
        Matrix basis(d, seg.p);
        basis.topRows(seg.p) = Matrix::Identity(seg.p, seg.p);
        Vector delta(seg.p);
        for (int i = 0; i < seg.p; ++i)
          delta(i) = ((mask >> i) & 1) ? seg.beta : seg.alpha;
        basis.bottomRows(seg.p) = Matrix(delta.asDiagonal());
        vertex_min = std::min(
            vertex_min, numkit::min_eigenvalue(basis.transpose() * m * basis));
      }
      if (vertex_min < 0.0)
        m.topLeftCorner(seg.p, seg.p) -= vertex_min * Matrix::Identity(seg.p, seg.p);
      k = seg.var_offset;
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
          out(k) = m(i, j);
          ++k;
        }
    }
    // parametric multipliers are left untouched; their vertex LMIs are only
    // enforced to solver tolerance
  }
  return out;
}

std::pair<Vector, Vector> filter_step(const FilterRealization& f, const Vector& psi,
                                      const Vector& v, const Vector& d) {
  if (psi.size() != f.n_psi() || v.size() != f.p || d.size() != f.p)
    throw DimMismatch("filter_step: dimension mismatch");
  Vector in(2 * f.p);
  in << v, d;
  Vector psi_next = f.A * psi + f.B * in;
  Vector z = f.C * psi + f.D * in;
  return {std::move(psi_next), std::move(z)};
}

double pointwise_iqc_value(const MultiplierInstance& inst, const Vector& psi,
                           const Vector& psi_next, const Vector& z) {
  double value = z.dot(inst.M * z);
  if (psi.size() > 0) {
    const double rinv2 = 1.0 / (inst.rho * inst.rho);
    value += -psi.dot(inst.Z * psi) + rinv2 * psi_next.dot(inst.Z * psi_next);
  }
  return value;
}

IqcCheckReport check_pointwise_iqc_empirical(const MultiplierInstance& inst,
                                             const model::UncertaintyModel& delta,
                                             int trajectories, int length,
                                             std::uint64_t seed) {
  if (delta.q != inst.filter.p || delta.p != inst.filter.p)
    throw DimMismatch("iqc check: uncertainty channel count differs from filter p");
  IqcCheckReport rep;
  const int p = inst.filter.p;
  Rng master(seed, 0x697163ULL);
  for (int traj = 0; traj < trajectories; ++traj) {
    Rng rng = master.split(static_cast<std::uint64_t>(traj));
    const bool sinusoid = (traj % 2) == 1;
    Vector amp(p), omega(p), phase(p);
    for (int i = 0; i < p; ++i) {
      amp(i) = rng.uniform(0.5, 5.0);
      omega(i) = rng.uniform(0.05, 0.6);
      phase(i) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    Vector psi = Vector::Zero(inst.filter.n_psi());
    for (int k = 0; k < length; ++k) {
      Vector v(p);
      if (sinusoid) {
        for (int i = 0; i < p; ++i) v(i) = amp(i) * std::sin(omega(i) * k + phase(i));
      } else {
        for (int i = 0; i < p; ++i) v(i) = rng.uniform(-5.0, 5.0);
      }
      const Vector d = delta.delta(v);
      auto [psi_next, z] = filter_step(inst.filter, psi, v, d);
      const double value = pointwise_iqc_value(inst, psi, psi_next, z);
      ++rep.steps;
      if (value < rep.min_value) {
        rep.min_value = value;
        rep.worst_trajectory = traj;
        rep.worst_step = k;
      }
      psi = psi_next;
    }
  }
  return rep;
}

}  // namespace iqcmhe::iqc
