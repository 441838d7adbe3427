#include "iqcmhe/model.hpp"

#include <cmath>
#include <limits>

#include "iqcmhe/errors.hpp"

namespace iqcmhe::model {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool BoxSet::contains(const Vector& x, double tol) const {
  if (x.size() != lower.size()) throw DimMismatch("BoxSet::contains: dimension mismatch");
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) < lower(i) - tol || x(i) > upper(i) + tol) return false;
  return true;
}

Vector BoxSet::clamp(const Vector& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

bool BoxSet::is_bounded() const {
  for (Eigen::Index i = 0; i < lower.size(); ++i)
    if (!std::isfinite(lower(i)) || !std::isfinite(upper(i))) return false;
  return true;
}

BoxSet BoxSet::unbounded(int dim) {
  return {Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf)};
}

BoxSet BoxSet::symmetric(int dim, double radius) {
  return {Vector::Constant(dim, -radius), Vector::Constant(dim, radius)};
}

BoxSet BoxSet::bounded_probe(double fallback) const {
  BoxSet out = *this;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(out.lower(i))) out.lower(i) = -fallback;
    if (!std::isfinite(out.upper(i))) out.upper(i) = fallback;
  }
  return out;
}

Vector BoxSet::sample(Rng& rng) const {
  Vector x(lower.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lower(i), upper(i));
  return x;
}

void IntervalMatrix::accumulate_range(const Vector& x, Vector& out_lo, Vector& out_hi) const {
  for (Eigen::Index i = 0; i < rows(); ++i) {
    for (Eigen::Index j = 0; j < cols(); ++j) {
      const double a = lo(i, j) * x(j);
      const double b = hi(i, j) * x(j);
      out_lo(i) += std::min(a, b);
      out_hi(i) += std::max(a, b);
    }
  }
}

Scenario build_example_scenario() {
  Scenario s;
  s.name = "example1";

  const int n = 2, n_w = 1, p = 1, q = 1, m = 1, l = 2;
  Matrix a0(2, 2);
  a0 << 1.3, -0.4, 0.6, 0.75;
  Matrix k(2, 2);
  k << 0.5, -0.41, 0.4, -0.75;

  PlantModel plant;
  plant.n = n;
  plant.n_w = n_w;
  plant.p = p;
  plant.q = q;
  plant.m = m;
  plant.l = l;
  plant.f = [a0](const Vector& x, const Vector&, const Vector& d, const Vector& u) {
    Vector xn = a0 * x + u;
    xn(0) += -d(0) - 0.1 * std::sin(0.5 * x(0));
    return xn;
  };
  plant.h = [](const Vector& x, const Vector& w, const Vector&, const Vector&) {
    return Vector::Constant(1, x(1) + w(0));
  };
  plant.g = [](const Vector& x, const Vector&) { return Vector::Constant(1, x(0)); };
  plant.f_x = [a0](const Vector& x, const Vector&, const Vector&, const Vector&) {
    Matrix j = a0;
    j(0, 0) += -0.05 * std::cos(0.5 * x(0));
    return j;
  };
  plant.f_w = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Matrix::Zero(2, 1);
  };
  plant.f_d = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    Matrix j(2, 1);
    j << -1.0, 0.0;
    return j;
  };
  plant.h_x = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    Matrix j(1, 2);
    j << 0.0, 1.0;
    return j;
  };
  plant.h_w = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Matrix::Identity(1, 1);
  };
  plant.h_d = [](const Vector&, const Vector&, const Vector&, const Vector&) {
    return Matrix::Zero(1, 1);
  };
  plant.g_x = [](const Vector&, const Vector&) {
    Matrix j(1, 2);
    j << 1.0, 0.0;
    return j;
  };
  plant.g_w = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); };
  s.plant = plant;

  s.controller.l = l;
  s.controller.kappa = [k](const Vector& xhat) { return Vector(k * xhat); };

  s.uncertainty.q = q;
  s.uncertainty.p = p;
  s.uncertainty.delta = [](const Vector& v) {
    return Vector::Constant(1, 0.125 * (std::abs(v(0) + 2.0) - std::abs(v(0) - 2.0)));
  };

  s.X = BoxSet::unbounded(n);
  s.W = BoxSet::symmetric(n_w, 0.1);
  s.U = BoxSet::unbounded(l);
  s.Y = BoxSet::unbounded(m);

  // Slope of -0.1 sin(0.5 x1) is -0.05 cos(0.5 x1) in [-0.05, 0.05]; every
  // other entry is exact.
  IntervalMatrix a_env = IntervalMatrix::point(a0);
  a_env.lo(0, 0) = 1.25;
  a_env.hi(0, 0) = 1.35;
  Matrix b_d(2, 1);
  b_d << -1.0, 0.0;
  Matrix c_row(1, 2), cv_row(1, 2);
  c_row << 0.0, 1.0;
  cv_row << 1.0, 0.0;

  LipschitzEnvelope env;
  env.A = a_env;
  env.B_w = IntervalMatrix::zero(n, n_w);
  env.B_d = IntervalMatrix::point(b_d);
  env.C = IntervalMatrix::point(c_row);
  env.D_w = IntervalMatrix::point(Matrix::Identity(1, 1));
  env.D_d = IntervalMatrix::zero(m, p);
  env.C_v = IntervalMatrix::point(cv_row);
  env.E_w = IntervalMatrix::zero(q, n_w);
  env.A_abs = a_env;
  env.B_w_abs = IntervalMatrix::zero(n, n_w);
  env.B_u = IntervalMatrix::point(k);
  env.B_d_abs = IntervalMatrix::point(b_d);
  env.C_v_abs = IntervalMatrix::point(cv_row);
  env.E_w_abs = IntervalMatrix::zero(q, n_w);
  s.envelope = env;

  s.x0 = Vector(2);
  s.x0 << 2.0, -2.0;
  s.xhat0 = Vector::Zero(2);
  s.d_probe_halfwidth = 0.5;
  s.state_probe_halfwidth = 5.0;
  return s;
}

Scenario scenario_by_name(const std::string& name) {
  if (name == "example1") return build_example_scenario();
  throw BadParams("unknown scenario: " + name);
}

std::vector<std::string> scenario_names() { return {"example1"}; }

PlantStepResult plant_step(const Scenario& s, const Vector& x, const Vector& w,
                           const Vector& u) {
  if (!s.W.contains(w, 1e-12)) throw DomainViolation("plant_step: disturbance outside W");
  PlantStepResult r;
  r.v = s.plant.g(x, w);
  r.d = s.uncertainty.delta(r.v);
  r.x_next = s.plant.f(x, w, r.d, u);
  r.y = s.plant.h(x, w, r.d, u);
  return r;
}

namespace {

Matrix central_diff(const std::function<Vector(const Vector&)>& fn, const Vector& at,
                    Eigen::Index out_dim) {
  Matrix j(out_dim, at.size());
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(at(k)));
    Vector lo = at, hi = at;
    lo(k) -= h;
    hi(k) += h;
    j.col(k) = (fn(hi) - fn(lo)) / (2.0 * h);
  }
  return j;
}

}  // namespace

PlantJacobians plant_jacobians(const PlantModel& plant, const Vector& x, const Vector& w,
                               const Vector& d, const Vector& u) {
  PlantJacobians j;
  auto fx = [&](const Vector& xx) { return plant.f(xx, w, d, u); };
  auto fw = [&](const Vector& ww) { return plant.f(x, ww, d, u); };
  auto fd = [&](const Vector& dd) { return plant.f(x, w, dd, u); };
  auto hx = [&](const Vector& xx) { return plant.h(xx, w, d, u); };
  auto hw = [&](const Vector& ww) { return plant.h(x, ww, d, u); };
  auto hd = [&](const Vector& dd) { return plant.h(x, w, dd, u); };
  auto gx = [&](const Vector& xx) { return plant.g(xx, w); };
  auto gw = [&](const Vector& ww) { return plant.g(x, ww); };
  j.f_x = plant.f_x ? plant.f_x(x, w, d, u) : central_diff(fx, x, plant.n);
  j.f_w = plant.f_w ? plant.f_w(x, w, d, u) : central_diff(fw, w, plant.n);
  j.f_d = plant.f_d ? plant.f_d(x, w, d, u) : central_diff(fd, d, plant.n);
  j.h_x = plant.h_x ? plant.h_x(x, w, d, u) : central_diff(hx, x, plant.m);
  j.h_w = plant.h_w ? plant.h_w(x, w, d, u) : central_diff(hw, w, plant.m);
  j.h_d = plant.h_d ? plant.h_d(x, w, d, u) : central_diff(hd, d, plant.m);
  j.g_x = plant.g_x ? plant.g_x(x, w) : central_diff(gx, x, plant.q);
  j.g_w = plant.g_w ? plant.g_w(x, w) : central_diff(gw, w, plant.q);
  return j;
}

namespace {

double hull_violation(const Vector& y, const Vector& lo, const Vector& hi) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    worst = std::max({worst, lo(i) - y(i), y(i) - hi(i)});
  return worst;
}

}  // namespace

EnvelopeReport validate_envelope(const Scenario& s, int sample_count, std::uint64_t seed,
                                 double tol) {
  if (sample_count < 1) throw BadParams("validate_envelope: sample_count must be >= 1");
  const auto& pl = s.plant;
  EnvelopeReport rep;
  rep.samples = sample_count;

  EnvelopeBlockReport f_diff{"f_diff"}, h_diff{"h_diff"}, g_diff{"g_diff"},
      f_abs{"f_abs"}, g_abs{"g_abs"};

  Rng rng(seed, 0x656e76ULL);
  const BoxSet x_box = s.X.bounded_probe(s.state_probe_halfwidth);
  const BoxSet u_box = s.U.bounded_probe(s.state_probe_halfwidth);
  const BoxSet d_box = BoxSet::symmetric(pl.p, s.d_probe_halfwidth);

  for (int k = 0; k < sample_count; ++k) {
    const Vector x = x_box.sample(rng), xt = x_box.sample(rng);
    const Vector w = s.W.sample(rng), wt = s.W.sample(rng);
    const Vector d = d_box.sample(rng), dt = d_box.sample(rng);
    const Vector u = u_box.sample(rng);
    const Vector xhat = x_box.sample(rng);

    const Vector e_x = x - xt, e_w = w - wt, e_d = d - dt;

    {  // difference dynamics
      const Vector df = pl.f(x, w, d, u) - pl.f(xt, wt, dt, u);
      Vector lo = Vector::Zero(pl.n), hi = Vector::Zero(pl.n);
      s.envelope.A.accumulate_range(e_x, lo, hi);
      s.envelope.B_w.accumulate_range(e_w, lo, hi);
      s.envelope.B_d.accumulate_range(e_d, lo, hi);
      f_diff.worst_violation = std::max(f_diff.worst_violation, hull_violation(df, lo, hi));
    }
    {  // difference output
      const Vector dh = pl.h(x, w, d, u) - pl.h(xt, wt, dt, u);
      Vector lo = Vector::Zero(pl.m), hi = Vector::Zero(pl.m);
      s.envelope.C.accumulate_range(e_x, lo, hi);
      s.envelope.D_w.accumulate_range(e_w, lo, hi);
      s.envelope.D_d.accumulate_range(e_d, lo, hi);
      h_diff.worst_violation = std::max(h_diff.worst_violation, hull_violation(dh, lo, hi));
    }
    {  // difference auxiliary output
      const Vector dg = pl.g(x, w) - pl.g(xt, wt);
      Vector lo = Vector::Zero(pl.q), hi = Vector::Zero(pl.q);
      s.envelope.C_v.accumulate_range(e_x, lo, hi);
      s.envelope.E_w.accumulate_range(e_w, lo, hi);
      g_diff.worst_violation = std::max(g_diff.worst_violation, hull_violation(dg, lo, hi));
    }
    {  // absolute dynamics with u = kappa(xhat); anchored at f(0,0,0,kappa(0)) = 0
      const Vector fx = pl.f(x, w, d, s.controller.kappa(xhat));
      Vector lo = Vector::Zero(pl.n), hi = Vector::Zero(pl.n);
      s.envelope.A_abs.accumulate_range(x, lo, hi);
      s.envelope.B_w_abs.accumulate_range(w, lo, hi);
      s.envelope.B_u.accumulate_range(xhat, lo, hi);
      s.envelope.B_d_abs.accumulate_range(d, lo, hi);
      f_abs.worst_violation = std::max(f_abs.worst_violation, hull_violation(fx, lo, hi));
    }
    {  // absolute auxiliary output, g(0,0) = 0
      const Vector gv = pl.g(x, w);
      Vector lo = Vector::Zero(pl.q), hi = Vector::Zero(pl.q);
      s.envelope.C_v_abs.accumulate_range(x, lo, hi);
      s.envelope.E_w_abs.accumulate_range(w, lo, hi);
      g_abs.worst_violation = std::max(g_abs.worst_violation, hull_violation(gv, lo, hi));
    }
  }

  for (auto* blk : {&f_diff, &h_diff, &g_diff, &f_abs, &g_abs}) {
    blk->pass = blk->worst_violation <= tol;
    rep.worst_violation = std::max(rep.worst_violation, blk->worst_violation);
    rep.all_pass = rep.all_pass && blk->pass;
    rep.blocks.push_back(*blk);
  }
  return rep;
}

}  // namespace iqcmhe::model
