#pragma once

#include "mpmflow/solvers.hpp"

namespace mpmflow {

//! Geometric V-cycle on the fluid pressure block of a pressure system,
//! Jacobi on all other rows. Coarse operators are Galerkin products
//! R A P with an 8-cell average restriction and trilinear prolongation;
//! the coarsest level is solved densely.
class MultigridPreconditioner : public Preconditioner {
 public:
  MultigridPreconditioner(const BlockSystem& sys, const SolveOptions& opt);
  void apply(const std::vector<double>& r, std::vector<double>& z) override;

  std::size_t level_count() const { return levels_.size(); }

 private:
  struct Level {
    std::int32_t d = 0, h = 0, w = 0;  // cell lattice dims at this level
    CsrMatrix a;
    CsrMatrix restrict_op;  // to next coarser level
    CsrMatrix prolong_op;   // from next coarser level
    std::vector<double> inv_diag;
  };

  void vcycle(std::size_t level, const std::vector<double>& b,
              std::vector<double>& x);
  void smooth(const Level& lv, const std::vector<double>& b,
              std::vector<double>& x, bool backward);

  const BlockSystem* sys_;
  std::vector<Level> levels_;
  std::vector<double> coarse_dense_;  // LU factors, row-major
  std::vector<std::int32_t> coarse_piv_;
  std::vector<double> jacobi_inv_diag_;  // full-system Jacobi fallback rows
  int sweeps_ = 3;
};

}  // namespace mpmflow
