// SPDX-License-Identifier: Apache-2.0
//
// Planar tensegrity unit cell: pin-jointed bars (linear up to a buckling load,
// constant load beyond) and tension-only cables, with the twelve boundary
// nodes driven by a deformation gradient and the eight interior nodes found by
// energy minimization with Polak-Ribiere conjugate gradients.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "tfenn/data.hpp"

namespace tfenn {

enum class MemberKind { kBar, kCable };

struct Member {
  int a = 0, b = 0;
  MemberKind kind = MemberKind::kCable;
  double k = 1.0;
  double rest = 1.0;
  double p_cr = 0.0;  // bars only
};

struct TensegrityParams {
  double ell = 1.0;
  double k_bar = 100.0;
  double k_cable = 1.0;
  double alpha = 0.95;           // cable rest length / geometric length
  double buckling_strain = 0.05;  // P_cr = buckling_strain * k_bar * ell
  void validate() const;
};

struct TensegrityCell {
  std::vector<Eigen::Vector2d> nodes;  // rest positions; interior nodes first
  int n_interior = 8;
  std::vector<Member> members;
  double area = 1.0;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  bool is_boundary(int i) const { return i >= n_interior; }
};

TensegrityCell build_tensegrity_cell(const TensegrityParams& p);

struct MemberResponse {
  double energy = 0.0;
  double force = 0.0;  // dE/dlength, tension positive
};

MemberResponse member_energy_force(const Member& m, double length);

struct SolverOptions {
  int max_iterations = 100000;
  double tolerance = 1e-10;  // relative to max(1, E0 / ell), E0 the starting energy
  bool record_energy = false;
};

struct Equilibrium {
  std::vector<Eigen::Vector2d> positions;  // all nodes, deformed
  double energy = 0.0;
  double gradient_norm = 0.0;  // max-norm over interior dofs
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy_trace;  // accepted iterates, when recorded
};

/// Total energy and the gradient with respect to every node position.
double cell_energy(const TensegrityCell& cell, const std::vector<Eigen::Vector2d>& x,
                   std::vector<Eigen::Vector2d>* grad);

/// Boundary nodes at F X_b; interior nodes start at F X_i. Throws
/// NumericalError if the iteration limit is reached.
Equilibrium cell_equilibrium(const TensegrityCell& cell, const Eigen::Matrix2d& f, const SolverOptions& opts = {});

struct CellStress {
  SymTensor stress{2};
  double asymmetry = 0.0;  // |S - S^T|_F before symmetrization
};

/// S = (1/A0) sum_b X_b f_b^T F^-T over boundary nodes, symmetrized.
CellStress cell_stress(const TensegrityCell& cell, const Eigen::Matrix2d& f, const Equilibrium& eq);

struct TensegrityGenStats {
  std::size_t resampled = 0;
  double max_asymmetry = 0.0;
};

/// Pairs (C = F^T F, S). A nonzero rotation (degrees) maps both tensors by
/// Q C Q^T and Q S Q^T with Q the counter-clockwise rotation.
Dataset gen_tensegrity(const TensegrityParams& p, std::size_t n, double eig_low, double eig_high, std::uint64_t seed,
                       double rotate_deg = 0.0, TensegrityGenStats* stats = nullptr);

}  // namespace tfenn
