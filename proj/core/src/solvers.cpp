#include "mpmflow/solvers.hpp"

#include <cmath>
#include <limits>

#include "mpmflow/error.hpp"
#include "mpmflow/multigrid.hpp"

namespace mpmflow {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string default_row_name(std::int64_t r) {
  return "row " + std::to_string(r);
}

void check_diagonal(const CsrMatrix& a, const SolveOptions& opt) {
  std::vector<double> d = a.diagonal();
  for (std::size_t r = 0; r < d.size(); ++r)
    if (d[r] <= 0.0)
      throw NumericalError(
          "singular system: nonpositive diagonal at " +
          (opt.row_name ? opt.row_name(static_cast<std::int64_t>(r))
                        : default_row_name(static_cast<std::int64_t>(r))));
}

//! Shared trivial-case handling. Returns true when the solve is already
//! finished (zero rhs or exact initial guess).
bool handle_trivial(const CsrMatrix& a, const std::vector<double>& b,
                    std::vector<double>& x, const SolveOptions& opt,
                    SolveReport& out) {
  double nb = norm2(b);
  if (nb == 0.0) {
    std::vector<double> ax = a.apply(x);
    if (norm2(ax) != 0.0) x.assign(x.size(), 0.0);
    out.iterations = 0;
    out.relative_residual = 0.0;
    out.converged = true;
    out.history = {0.0};
    return true;
  }
  double rel = relative_residual(a, b, x);
  if (rel <= opt.tolerance) {
    out.iterations = 0;
    out.relative_residual = rel;
    out.converged = true;
    out.history = {rel};
    return true;
  }
  return false;
}

}  // namespace

std::int64_t default_gs_iterations(std::int64_t n) {
  return 100 * static_cast<std::int64_t>(
                   std::ceil(std::cbrt(static_cast<double>(std::max<std::int64_t>(n, 1)))));
}

std::int64_t default_mgpcg_iterations(std::int64_t n) {
  return 10 * static_cast<std::int64_t>(
                  std::ceil(std::cbrt(static_cast<double>(std::max<std::int64_t>(n, 1)))));
}

double relative_residual(const CsrMatrix& a, const std::vector<double>& b,
                         const std::vector<double>& x) {
  std::vector<double> r = a.apply(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  double nb = norm2(b);
  double nr = norm2(r);
  if (nb == 0.0)
    return nr == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return nr / nb;
}

SolveReport gauss_seidel_solve(const CsrMatrix& a,
                               const std::vector<double>& b,
                               std::vector<double>& x,
                               const SolveOptions& opt) {
  MPMFLOW_CHECK(a.rows() == a.cols(), "system must be square");
  MPMFLOW_CHECK(static_cast<std::int64_t>(b.size()) == a.rows() &&
                    static_cast<std::int64_t>(x.size()) == a.rows(),
                "vector size mismatch");
  check_diagonal(a, opt);

  SolveReport rep;
  if (handle_trivial(a, b, x, opt, rep)) return rep;

  const std::int64_t max_it =
      opt.max_iterations > 0 ? opt.max_iterations
                             : default_gs_iterations(a.rows());
  rep.history.push_back(relative_residual(a, b, x));
  for (std::int64_t it = 1; it <= max_it; ++it) {
    for (std::int64_t r = 0; r < a.rows(); ++r) {
      auto cols = a.row_cols(r);
      auto vals = a.row_vals(r);
      double s = b[r];
      double diag = 0.0;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] == r)
          diag = vals[k];
        else
          s -= vals[k] * x[cols[k]];
      }
      x[r] = s / diag;
    }
    double rel = relative_residual(a, b, x);
    rep.history.push_back(rel);
    rep.iterations = it;
    rep.relative_residual = rel;
    if (rel <= opt.tolerance) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

JacobiPreconditioner::JacobiPreconditioner(const CsrMatrix& a,
                                           const SolveOptions& opt) {
  check_diagonal(a, opt);
  inv_diag_ = a.diagonal();
  for (double& d : inv_diag_) d = 1.0 / d;
}

void JacobiPreconditioner::apply(const std::vector<double>& r,
                                 std::vector<double>& z) {
  z.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv_diag_[i] * r[i];
}

SolveReport pcg_solve(const CsrMatrix& a, const std::vector<double>& b,
                      std::vector<double>& x, Preconditioner& prec,
                      const SolveOptions& opt) {
  MPMFLOW_CHECK(a.rows() == a.cols(), "system must be square");
  MPMFLOW_CHECK(static_cast<std::int64_t>(b.size()) == a.rows() &&
                    static_cast<std::int64_t>(x.size()) == a.rows(),
                "vector size mismatch");
  check_diagonal(a, opt);

  SolveReport rep;
  if (handle_trivial(a, b, x, opt, rep)) return rep;

  const std::int64_t max_it =
      opt.max_iterations > 0 ? opt.max_iterations
                             : default_mgpcg_iterations(a.rows());
  const double nb = norm2(b);

  std::vector<double> r = a.apply(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  rep.history.push_back(norm2(r) / nb);

  std::vector<double> z;
  prec.apply(r, z);
  std::vector<double> p = z;
  std::vector<double> q(r.size()), r_old(r.size());
  double rz = dot(r, z);

  for (std::int64_t it = 1; it <= max_it; ++it) {
    a.apply(p, q);
    double pq = dot(p, q);
    if (pq <= 0.0)
      throw NumericalError(
          "system is not positive definite (p^T A p <= 0 at iteration " +
          std::to_string(it) + ")");
    double alpha = rz / pq;
    r_old = r;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    double rel = norm2(r) / nb;
    rep.history.push_back(rel);
    rep.iterations = it;
    rep.relative_residual = rel;
    if (rel <= opt.tolerance) {
      rep.converged = true;
      break;
    }
    prec.apply(r, z);
    double rz_new = 0.0;  // Polak-Ribiere: z . (r - r_old)
    for (std::size_t i = 0; i < r.size(); ++i)
      rz_new += z[i] * (r[i] - r_old[i]);
    double beta = std::max(0.0, rz_new / rz);
    rz = dot(r, z);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = z[i] + beta * p[i];
  }
  return rep;
}

SolveReport mgpcg_solve(const CsrMatrix& a, const std::vector<double>& b,
                        std::vector<double>& x, const SolveOptions& opt) {
  JacobiPreconditioner prec(a, opt);
  return pcg_solve(a, b, x, prec, opt);
}

SolveReport mgpcg_solve(const BlockSystem& sys, const std::vector<double>& b,
                        std::vector<double>& x, const SolveOptions& opt) {
  SolveOptions o = opt;
  if (!o.row_name)
    o.row_name = [&sys](std::int64_t r) { return sys.row_name(r); };
  MultigridPreconditioner prec(sys, o);
  return pcg_solve(sys.a, b, x, prec, o);
}

SolveReport solve_pressure(const BlockSystem& sys, std::vector<double>& x,
                           SolverKind kind, const SolveOptions& opt) {
  SolveOptions o = opt;
  if (!o.row_name)
    o.row_name = [&sys](std::int64_t r) { return sys.row_name(r); };
  if (kind == SolverKind::GaussSeidel)
    return gauss_seidel_solve(sys.a, sys.rhs, x, o);
  return mgpcg_solve(sys, sys.rhs, x, o);
}

}  // namespace mpmflow
