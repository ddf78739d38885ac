// SPDX-License-Identifier: Apache-2.0
#include "tfenn/tensegrity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

namespace tfenn {

void TensegrityParams::validate() const {
  if (!(ell > 0 && k_bar > 0 && k_cable > 0 && buckling_strain > 0))
    throw std::invalid_argument("tensegrity stiffnesses, size and buckling strain must be positive");
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("prestress ratio must lie in (0, 1]");
}

TensegrityCell build_tensegrity_cell(const TensegrityParams& p) {
  p.validate();
  TensegrityCell cell;
  // Coordinates in sixths of the cell size.
  std::vector<std::pair<int, int>> grid = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}, {2, 0}, {0, 2}, {-2, 0}, {0, -2}};
  for (int sx : {1, -1})
    for (int sy : {1, -1}) {
      grid.push_back({3 * sx, sy});
      grid.push_back({sx, 3 * sy});
      grid.push_back({3 * sx, 3 * sy});
    }
  std::map<std::pair<int, int>, int> id;
  for (const auto& g : grid) {
    id[g] = static_cast<int>(cell.nodes.size());
    cell.nodes.emplace_back(g.first * p.ell / 6.0, g.second * p.ell / 6.0);
  }
  cell.n_interior = 8;
  cell.area = p.ell * p.ell;

  auto add = [&](std::pair<int, int> u, std::pair<int, int> v, MemberKind kind) {
    Member m;
    m.a = id.at(u);
    m.b = id.at(v);
    m.kind = kind;
    const double len = (cell.nodes[m.a] - cell.nodes[m.b]).norm();
    if (kind == MemberKind::kBar) {
      m.k = p.k_bar;
      m.rest = len;
      m.p_cr = p.buckling_strain * p.k_bar * p.ell;
    } else {
      m.k = p.k_cable;
      m.rest = p.alpha * len;
    }
    cell.members.push_back(m);
  };
  add({-2, 0}, {2, 0}, MemberKind::kBar);
  add({0, -2}, {0, 2}, MemberKind::kBar);
  for (int sx : {1, -1})
    for (int sy : {1, -1}) {
      add({3 * sx, sy}, {sx, 3 * sy}, MemberKind::kBar);
      add({sx, sy}, {3 * sx, 3 * sy}, MemberKind::kBar);
    }
  for (int sx : {1, -1})
    for (int sy : {1, -1}) {
      add({3 * sx, sy}, {sx, sy}, MemberKind::kCable);
      add({sx, sy}, {sx, 3 * sy}, MemberKind::kCable);
      add({sx, 3 * sy}, {3 * sx, 3 * sy}, MemberKind::kCable);
      add({3 * sx, 3 * sy}, {3 * sx, sy}, MemberKind::kCable);
      add({3 * sx, sy}, {2 * sx, 0}, MemberKind::kCable);
      add({2 * sx, 0}, {sx, sy}, MemberKind::kCable);
      add({sx, sy}, {0, 2 * sy}, MemberKind::kCable);
      add({0, 2 * sy}, {sx, 3 * sy}, MemberKind::kCable);
    }
  return cell;
}

MemberResponse member_energy_force(const Member& m, double length) {
  const double delta = length - m.rest;
  if (m.kind == MemberKind::kCable) {
    if (delta <= 0) return {0.0, 0.0};
    return {0.5 * m.k * delta * delta, m.k * delta};
  }
  const double d_cr = -m.p_cr / m.k;
  if (delta >= d_cr) return {0.5 * m.k * delta * delta, m.k * delta};
  return {0.5 * m.k * d_cr * d_cr - m.p_cr * (delta - d_cr), -m.p_cr};
}

double cell_energy(const TensegrityCell& cell, const std::vector<Eigen::Vector2d>& x,
                   std::vector<Eigen::Vector2d>* grad) {
  if (grad != nullptr) grad->assign(x.size(), Eigen::Vector2d::Zero());
  double e = 0.0;
  for (const Member& m : cell.members) {
    const Eigen::Vector2d d = x[m.a] - x[m.b];
    const double len = d.norm();
    const MemberResponse r = member_energy_force(m, len);
    e += r.energy;
    if (grad != nullptr && r.force != 0.0) {
      const Eigen::Vector2d g = r.force / len * d;
      (*grad)[m.a] += g;
      (*grad)[m.b] -= g;
    }
  }
  return e;
}

namespace {

struct Problem {
  const TensegrityCell& cell;
  std::vector<Eigen::Vector2d> x;

  int dofs() const { return 2 * cell.n_interior; }

  Eigen::VectorXd get() const {
    Eigen::VectorXd v(dofs());
    for (int i = 0; i < cell.n_interior; ++i) v.segment<2>(2 * i) = x[i];
    return v;
  }
  void set(const Eigen::VectorXd& v) {
    for (int i = 0; i < cell.n_interior; ++i) x[i] = v.segment<2>(2 * i);
  }
  double eval(const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    set(v);
    std::vector<Eigen::Vector2d> full;
    const double e = cell_energy(cell, x, &full);
    g.resize(dofs());
    for (int i = 0; i < cell.n_interior; ++i) g.segment<2>(2 * i) = full[i];
    return e;
  }
  // E(v + s) - E(v) summed per member from the length increments, which keeps
  // its relative accuracy when the change is far below the energy's own ulp.
  double energy_change(const Eigen::VectorXd& v, const Eigen::VectorXd& s) {
    set(v);
    auto shift = [&](int i) {
      return i < cell.n_interior ? Eigen::Vector2d(s.segment<2>(2 * i)) : Eigen::Vector2d::Zero();
    };
    double total = 0.0;
    for (const Member& m : cell.members) {
      const Eigen::Vector2d d0 = x[m.a] - x[m.b];
      const Eigen::Vector2d dd = shift(m.a) - shift(m.b);
      const Eigen::Vector2d d1 = d0 + dd;
      const double l0 = d0.norm(), l1 = d1.norm();
      const double dl = dd.dot(d0 + d1) / (l0 + l1);
      const double a = l0 - m.rest, b = a + dl;
      if (m.kind == MemberKind::kCable) {
        if (a > 0 && b > 0)
          total += 0.5 * m.k * dl * (a + b);
        else if (a > 0 || b > 0)
          total += member_energy_force(m, m.rest + b).energy - member_energy_force(m, m.rest + a).energy;
        continue;
      }
      const double d_cr = -m.p_cr / m.k;
      if (a >= d_cr && b >= d_cr)
        total += 0.5 * m.k * dl * (a + b);
      else if (a < d_cr && b < d_cr)
        total -= m.p_cr * dl;
      else
        total += member_energy_force(m, m.rest + b).energy - member_energy_force(m, m.rest + a).energy;
    }
    return total;
  }
};

}  // namespace

Equilibrium cell_equilibrium(const TensegrityCell& cell, const Eigen::Matrix2d& f, const SolverOptions& opts) {
  if (!(f.determinant() > 0)) throw std::invalid_argument("deformation gradient must have positive determinant");
  Problem prob{cell, {}};
  for (const auto& x0 : cell.nodes) prob.x.push_back(f * x0);

  double k_max = 0.0, ell = 0.0;
  for (const Member& m : cell.members) k_max = std::max(k_max, m.k);
  for (const auto& x0 : cell.nodes) ell = std::max(ell, 2.0 * x0.cwiseAbs().maxCoeff());
  const int restart_every = 2 * prob.dofs();
  constexpr double kArmijo = 1e-4;

  Equilibrium out;
  Eigen::VectorXd v = prob.get(), g, g_new, d, v_new;
  double e = prob.eval(v, g);
  // Energy per unit length of the starting configuration sets the force scale.
  const double tol = opts.tolerance * std::max(1.0, std::abs(e) / ell);
  d = -g;
  if (opts.record_energy) out.energy_trace.push_back(e);
  double step_hint = 1.0 / std::max(1.0, k_max);
  int since_restart = 0;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= tol) {
      out.converged = true;
      break;
    }
    double slope = g.dot(d);
    if (slope >= 0) {
      d = -g;
      slope = -g.squaredNorm();
      since_restart = 0;
    }
    // Secant estimate of the minimizer along d from one trial gradient.
    double alpha = step_hint;
    {
      Eigen::VectorXd g_trial;
      prob.eval(v + alpha * d, g_trial);
      const double slope_trial = g_trial.dot(d);
      if (slope_trial > slope) {
        const double a_sec = alpha * slope / (slope - slope_trial);
        if (std::isfinite(a_sec) && a_sec > 0) alpha = std::min(a_sec, 1e3 * step_hint);
      }
    }
    double de = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      de = prob.energy_change(v, alpha * d);
      if (de <= kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (since_restart == 0) break;  // steepest descent made no progress: roundoff floor
      d = -g;
      since_restart = 0;
      continue;
    }
    v_new = v + alpha * d;
    prob.eval(v_new, g_new);
    step_hint = alpha;
    const double beta_pr = g_new.dot(g_new - g) / g.squaredNorm();
    ++since_restart;
    if (beta_pr < 0 || since_restart >= restart_every) {
      d = -g_new;
      since_restart = 0;
    } else {
      d = -g_new + beta_pr * d;
    }
    v = v_new;
    g = g_new;
    e += de;
    if (opts.record_energy) out.energy_trace.push_back(e);
  }
  if (!out.converged && g.lpNorm<Eigen::Infinity>() <= tol) out.converged = true;
  prob.set(v);
  out.positions = prob.x;
  out.energy = cell_energy(cell, out.positions, nullptr);
  out.gradient_norm = g.lpNorm<Eigen::Infinity>();
  out.iterations = it;
  if (!out.converged) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "tensegrity equilibrium did not converge after %d iterations (|grad| = %.3e)", it,
                  out.gradient_norm);
    throw NumericalError(buf);
  }
  return out;
}

CellStress cell_stress(const TensegrityCell& cell, const Eigen::Matrix2d& f, const Equilibrium& eq) {
  std::vector<Eigen::Vector2d> grad;
  cell_energy(cell, eq.positions, &grad);
  Eigen::Matrix2d xf = Eigen::Matrix2d::Zero();
  for (int i = cell.n_interior; i < cell.n_nodes(); ++i) xf += cell.nodes[i] * grad[i].transpose();
  const Eigen::Matrix2d s = xf * f.inverse().transpose() / cell.area;
  CellStress out;
  out.asymmetry = (s - s.transpose()).norm();
  out.stress = SymTensor::from_matrix(SmallMat(s));
  return out;
}

Dataset gen_tensegrity(const TensegrityParams& p, std::size_t n, double eig_low, double eig_high, std::uint64_t seed,
                       double rotate_deg, TensegrityGenStats* stats) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  const TensegrityCell cell = build_tensegrity_cell(p);
  Dataset ds;
  ds.dim = 2;
  ds.n = n;
  ds.seed = seed;
  char buf[400];
  std::snprintf(buf, sizeof(buf),
                "tensegrity(ell=%.17g,k_bar=%.17g,k_cable=%.17g,alpha=%.17g,buckling=%.17g,eig=%.17g:%.17g,rot=%.17g)",
                p.ell, p.k_bar, p.k_cable, p.alpha, p.buckling_strain, eig_low, eig_high, rotate_deg);
  ds.generator = buf;
  ds.inputs.resize(n * 3);
  ds.outputs.resize(n * 3);
  const Rotation q = Rotation::from_angle(rotate_deg * std::numbers::pi / 180.0);
  const Rotation qt(SmallMat(q.matrix().transpose()));
  const Rng base(seed);
  std::size_t resampled = 0;
  double max_asym = 0.0;
  const long long count = static_cast<long long>(n);
  constexpr int kAttempts = 20;
  constexpr std::size_t kVerifyEvery = 100;

#pragma omp parallel for schedule(dynamic, 8) reduction(+ : resampled) reduction(max : max_asym)
  for (long long i = 0; i < count; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    bool done = false;
    for (int attempt = 0; attempt < kAttempts && !done; ++attempt) {
      const Eigen::Matrix2d f = random_deformation(2, eig_low, eig_high, rng);
      try {
        const Equilibrium eq = cell_equilibrium(cell, f);
        const CellStress cs = cell_stress(cell, f, eq);
        if (static_cast<std::size_t>(i) % kVerifyEvery == 0) {
          // The response must depend on C only.
          const Eigen::Matrix2d rf = random_rotation(2, rng).matrix() * f;
          const CellStress cs2 = cell_stress(cell, rf, cell_equilibrium(cell, rf));
          const double gap = (cs2.stress - cs.stress).norm();
          if (gap > 1e-6 * std::max(1.0, cs.stress.norm()))
            throw NumericalError("tensegrity response depends on the rotation part of F");
        }
        SymTensor c = SymTensor::from_matrix(SmallMat(f.transpose() * f));
        SymTensor s = cs.stress;
        if (rotate_deg != 0.0) {
          c = rotate_sym(c, qt);
          s = rotate_sym(s, qt);
        }
        for (int k = 0; k < 3; ++k) {
          ds.inputs[i * 3 + k] = c.mandel()[k];
          ds.outputs[i * 3 + k] = s.mandel()[k];
        }
        max_asym = std::max(max_asym, cs.asymmetry / std::max(1e-300, cs.stress.norm()));
        done = true;
      } catch (const NumericalError&) {
        ++resampled;
      }
    }
    if (!done) {
      // Deterministic failure: propagate after the loop.
      ds.inputs[i * 3] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(ds.inputs[i * 3])) throw NumericalError("tensegrity sample " + std::to_string(i) + " failed to converge");
  if (stats != nullptr) {
    stats->resampled = resampled;
    stats->max_asymmetry = max_asym;
  }
  return ds;
}

}  // namespace tfenn
