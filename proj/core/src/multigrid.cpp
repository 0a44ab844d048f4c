#include "mpmflow/multigrid.hpp"

#include <cmath>

#include "mpmflow/error.hpp"

namespace mpmflow {

namespace {

struct Lattice {
  std::int32_t d = 0, h = 0, w = 0;
  std::vector<std::int64_t> idx;  // cell -> unknown id, -1 off mask
  std::vector<Coord3> cells;      // unknown id -> cell

  std::size_t cell_count() const {
    return static_cast<std::size_t>(d) * h * w;
  }
  std::int64_t at(std::int32_t i, std::int32_t j, std::int32_t k) const {
    if (i < 0 || i >= d || j < 0 || j >= h || k < 0 || k >= w) return -1;
    return idx[(static_cast<std::size_t>(i) * h + j) * w + k];
  }
};

Lattice make_fine_lattice(const BlockSystem& sys) {
  Lattice lat;
  lat.d = sys.cd;
  lat.h = sys.ch;
  lat.w = sys.cw;
  lat.idx.assign(lat.cell_count(), -1);
  lat.cells = sys.cells_fluid;
  for (std::size_t n = 0; n < sys.cells_fluid.size(); ++n) {
    const Coord3& c = sys.cells_fluid[n];
    lat.idx[(static_cast<std::size_t>(c.i) * lat.h + c.j) * lat.w + c.k] =
        static_cast<std::int64_t>(n);
  }
  return lat;
}

Lattice coarsen(const Lattice& fine) {
  Lattice c;
  c.d = (fine.d + 1) / 2;
  c.h = (fine.h + 1) / 2;
  c.w = (fine.w + 1) / 2;
  c.idx.assign(c.cell_count(), -1);
  for (std::int32_t i = 0; i < c.d; ++i)
    for (std::int32_t j = 0; j < c.h; ++j)
      for (std::int32_t k = 0; k < c.w; ++k) {
        bool occupied = false;
        for (int di = 0; di < 2 && !occupied; ++di)
          for (int dj = 0; dj < 2 && !occupied; ++dj)
            for (int dk = 0; dk < 2 && !occupied; ++dk)
              occupied =
                  fine.at(2 * i + di, 2 * j + dj, 2 * k + dk) >= 0;
        if (occupied) {
          c.idx[(static_cast<std::size_t>(i) * c.h + j) * c.w + k] =
              static_cast<std::int64_t>(c.cells.size());
          c.cells.push_back({i, j, k});
        }
      }
  return c;
}

// coarse <- fine, fixed 1/8 per in-mask child
CsrMatrix restriction(const Lattice& coarse, const Lattice& fine) {
  std::vector<Triplet> t;
  for (std::size_t n = 0; n < coarse.cells.size(); ++n) {
    const Coord3& c = coarse.cells[n];
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < 2; ++dk) {
          std::int64_t f =
              fine.at(2 * c.i + di, 2 * c.j + dj, 2 * c.k + dk);
          if (f >= 0)
            t.push_back({static_cast<std::int64_t>(n), f, 0.125});
        }
  }
  return CsrMatrix::from_triplets(
      static_cast<std::int64_t>(coarse.cells.size()),
      static_cast<std::int64_t>(fine.cells.size()), std::move(t));
}

// fine <- coarse, trilinear between cell centers; weights falling on
// off-mask or out-of-range coarse cells are dropped
CsrMatrix prolongation(const Lattice& fine, const Lattice& coarse) {
  std::vector<Triplet> t;
  for (std::size_t n = 0; n < fine.cells.size(); ++n) {
    const Coord3& c = fine.cells[n];
    std::int32_t base[3];
    double frac[3];
    const std::int32_t fc[3] = {c.i, c.j, c.k};
    for (int a = 0; a < 3; ++a) {
      double x = 0.5 * fc[a] - 0.25;
      base[a] = static_cast<std::int32_t>(std::floor(x));
      frac[a] = x - base[a];
    }
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < 2; ++dk) {
          double wgt = (di ? frac[0] : 1.0 - frac[0]) *
                       (dj ? frac[1] : 1.0 - frac[1]) *
                       (dk ? frac[2] : 1.0 - frac[2]);
          if (wgt == 0.0) continue;
          std::int64_t cidx =
              coarse.at(base[0] + di, base[1] + dj, base[2] + dk);
          if (cidx >= 0)
            t.push_back({static_cast<std::int64_t>(n), cidx, wgt});
        }
  }
  return CsrMatrix::from_triplets(
      static_cast<std::int64_t>(fine.cells.size()),
      static_cast<std::int64_t>(coarse.cells.size()), std::move(t));
}

CsrMatrix extract_block(const CsrMatrix& a, std::int64_t off,
                        std::int64_t n) {
  std::vector<Triplet> t;
  for (std::int64_t r = 0; r < n; ++r) {
    auto cols = a.row_cols(off + r);
    auto vals = a.row_vals(off + r);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] >= off && cols[k] < off + n)
        t.push_back({r, cols[k] - off, vals[k]});
  }
  return CsrMatrix::from_triplets(n, n, std::move(t));
}

//! Ensures every row has a positive diagonal; decoupled rows become
//! identity so smoothing stays defined.
CsrMatrix fix_empty_rows(const CsrMatrix& a) {
  std::vector<double> diag = a.diagonal();
  bool ok = true;
  for (double d : diag)
    if (d <= 0.0) ok = false;
  if (ok) return a;
  std::vector<Triplet> t;
  for (std::int64_t r = 0; r < a.rows(); ++r) {
    if (diag[r] <= 0.0) {
      t.push_back({r, r, 1.0});
      continue;
    }
    auto cols = a.row_cols(r);
    auto vals = a.row_vals(r);
    for (std::size_t k = 0; k < cols.size(); ++k)
      t.push_back({r, cols[k], vals[k]});
  }
  return CsrMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

void lu_factor(std::vector<double>& a, std::vector<std::int32_t>& piv,
               std::int64_t n) {
  piv.resize(n);
  for (std::int64_t i = 0; i < n; ++i) piv[i] = static_cast<std::int32_t>(i);
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t best = k;
    for (std::int64_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[best * n + k])) best = i;
    if (std::abs(a[best * n + k]) < 1e-300)
      throw NumericalError("coarse grid matrix is singular");
    if (best != k) {
      for (std::int64_t c = 0; c < n; ++c)
        std::swap(a[k * n + c], a[best * n + c]);
      std::swap(piv[k], piv[best]);
    }
    for (std::int64_t i = k + 1; i < n; ++i) {
      a[i * n + k] /= a[k * n + k];
      for (std::int64_t c = k + 1; c < n; ++c)
        a[i * n + c] -= a[i * n + k] * a[k * n + c];
    }
  }
}

void lu_solve(const std::vector<double>& a,
              const std::vector<std::int32_t>& piv, std::int64_t n,
              const std::vector<double>& b, std::vector<double>& x) {
  x.resize(n);
  for (std::int64_t i = 0; i < n; ++i) x[i] = b[piv[i]];
  for (std::int64_t i = 1; i < n; ++i)
    for (std::int64_t k = 0; k < i; ++k) x[i] -= a[i * n + k] * x[k];
  for (std::int64_t i = n - 1; i >= 0; --i) {
    for (std::int64_t k = i + 1; k < n; ++k) x[i] -= a[i * n + k] * x[k];
    x[i] /= a[i * n + i];
  }
}

}  // namespace

MultigridPreconditioner::MultigridPreconditioner(const BlockSystem& sys,
                                                 const SolveOptions& opt)
    : sys_(&sys) {
  jacobi_inv_diag_ = sys.a.diagonal();
  for (std::size_t r = 0; r < jacobi_inv_diag_.size(); ++r) {
    if (jacobi_inv_diag_[r] <= 0.0)
      throw NumericalError(
          "singular system: nonpositive diagonal at " +
          (opt.row_name ? opt.row_name(static_cast<std::int64_t>(r))
                        : sys.row_name(static_cast<std::int64_t>(r))));
    jacobi_inv_diag_[r] = 1.0 / jacobi_inv_diag_[r];
  }

  Lattice lat = make_fine_lattice(sys);
  Level lv;
  lv.d = lat.d;
  lv.h = lat.h;
  lv.w = lat.w;
  lv.a = extract_block(sys.a, sys.off_fluid(), sys.n_fluid());

  while (lv.a.rows() > 64 && (lat.d > 4 || lat.h > 4 || lat.w > 4) &&
         levels_.size() < 12) {
    Lattice coarse = coarsen(lat);
    if (coarse.cells.empty()) break;
    lv.restrict_op = restriction(coarse, lat);
    lv.prolong_op = prolongation(lat, coarse);
    CsrMatrix ca = fix_empty_rows(CsrMatrix::multiply(
        CsrMatrix::multiply(lv.restrict_op, lv.a), lv.prolong_op));
    lv.inv_diag = lv.a.diagonal();
    for (double& d : lv.inv_diag) d = 1.0 / d;
    levels_.push_back(std::move(lv));
    lv = Level{};
    lv.d = coarse.d;
    lv.h = coarse.h;
    lv.w = coarse.w;
    lv.a = std::move(ca);
    lat = std::move(coarse);
  }

  lv.inv_diag = lv.a.diagonal();
  for (double& d : lv.inv_diag)
    d = d > 0.0 ? 1.0 / d : 1.0;
  levels_.push_back(std::move(lv));

  // dense factorization of the coarsest level
  const Level& last = levels_.back();
  std::int64_t n = last.a.rows();
  coarse_dense_.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (std::int64_t r = 0; r < n; ++r) {
    auto cols = last.a.row_cols(r);
    auto vals = last.a.row_vals(r);
    for (std::size_t k = 0; k < cols.size(); ++k)
      coarse_dense_[r * n + cols[k]] = vals[k];
  }
  if (n > 0) lu_factor(coarse_dense_, coarse_piv_, n);
}

void MultigridPreconditioner::smooth(const Level& lv,
                                     const std::vector<double>& b,
                                     std::vector<double>& x, bool backward) {
  const CsrMatrix& a = lv.a;
  auto relax = [&](std::int64_t r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_vals(r);
    double s = b[r];
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] != r) s -= vals[k] * x[cols[k]];
    x[r] = s * lv.inv_diag[r];
  };
  if (backward)
    for (std::int64_t r = a.rows() - 1; r >= 0; --r) relax(r);
  else
    for (std::int64_t r = 0; r < a.rows(); ++r) relax(r);
}

void MultigridPreconditioner::vcycle(std::size_t level,
                                     const std::vector<double>& b,
                                     std::vector<double>& x) {
  const Level& lv = levels_[level];
  if (level + 1 == levels_.size()) {
    if (!b.empty()) lu_solve(coarse_dense_, coarse_piv_, lv.a.rows(), b, x);
    return;
  }
  for (int s = 0; s < sweeps_; ++s) smooth(lv, b, x, false);

  std::vector<double> r = lv.a.apply(x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  std::vector<double> rc = lv.restrict_op.apply(r);
  std::vector<double> xc(rc.size(), 0.0);
  vcycle(level + 1, rc, xc);
  std::vector<double> corr = lv.prolong_op.apply(xc);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += corr[i];

  for (int s = 0; s < sweeps_; ++s) smooth(lv, b, x, true);
}

void MultigridPreconditioner::apply(const std::vector<double>& r,
                                    std::vector<double>& z) {
  z.assign(r.size(), 0.0);
  const std::int64_t off = sys_->off_fluid();
  const std::int64_t nf = sys_->n_fluid();
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r.size()); ++i)
    if (i < off || i >= off + nf) z[i] = jacobi_inv_diag_[i] * r[i];

  if (nf == 0) return;
  std::vector<double> bf(r.begin() + off, r.begin() + off + nf);
  std::vector<double> xf(nf, 0.0);
  vcycle(0, bf, xf);
  for (std::int64_t i = 0; i < nf; ++i) z[off + i] = xf[i];
}

}  // namespace mpmflow
