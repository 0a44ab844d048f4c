#pragma once

#include <functional>
#include <string>

#include "mpmflow/pressure_system.hpp"
#include "mpmflow/sparse.hpp"

namespace mpmflow {

struct SolveOptions {
  double tolerance = 1e-6;          // relative residual target
  std::int64_t max_iterations = 0;  // 0 -> solver default, scaled by N^(1/3)
  //! Optional row label for error messages (grid coordinates when solving
  //! a pressure system).
  std::function<std::string(std::int64_t)> row_name;
};

struct SolveReport {
  std::int64_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  //! Relative residual after each iteration, history[0] = initial state,
  //! so its length is iterations + 1.
  std::vector<double> history;
};

std::int64_t default_gs_iterations(std::int64_t n);
std::int64_t default_mgpcg_iterations(std::int64_t n);

//! ||b - A x|| / ||b||; 0 when both vanish, inf when only ||b|| does.
double relative_residual(const CsrMatrix& a, const std::vector<double>& b,
                         const std::vector<double>& x);

//! Lexicographic Gauss-Seidel sweeps until the relative residual target or
//! the iteration cap. One iteration = one full forward sweep.
SolveReport gauss_seidel_solve(const CsrMatrix& a,
                               const std::vector<double>& b,
                               std::vector<double>& x,
                               const SolveOptions& opt = {});

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  virtual void apply(const std::vector<double>& r,
                     std::vector<double>& z) = 0;
};

class JacobiPreconditioner : public Preconditioner {
 public:
  JacobiPreconditioner(const CsrMatrix& a, const SolveOptions& opt);
  void apply(const std::vector<double>& r, std::vector<double>& z) override;

 private:
  std::vector<double> inv_diag_;
};

//! Flexible preconditioned conjugate gradient. The beta recurrence uses
//! the Polak-Ribiere form so a mildly nonsymmetric preconditioner (the
//! multigrid V-cycle with non-adjoint transfers) stays stable.
SolveReport pcg_solve(const CsrMatrix& a, const std::vector<double>& b,
                      std::vector<double>& x, Preconditioner& prec,
                      const SolveOptions& opt = {});

//! PCG with all-Jacobi preconditioning, for systems that carry no grid
//! geometry.
SolveReport mgpcg_solve(const CsrMatrix& a, const std::vector<double>& b,
                        std::vector<double>& x, const SolveOptions& opt = {});

//! PCG with the geometric multigrid V-cycle on the fluid pressure block
//! and Jacobi on the remaining rows.
SolveReport mgpcg_solve(const BlockSystem& sys, const std::vector<double>& b,
                        std::vector<double>& x, const SolveOptions& opt = {});

enum class SolverKind { GaussSeidel, MgPcg };

SolveReport solve_pressure(const BlockSystem& sys, std::vector<double>& x,
                           SolverKind kind, const SolveOptions& opt = {});

}  // namespace mpmflow
