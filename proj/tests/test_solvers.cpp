#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "mpmflow/rng.hpp"
#include "mpmflow/solvers.hpp"

using namespace mpmflow;

namespace {

// Random SPD test system, A = B^T B + n I, solved independently with a
// dense LU as the oracle.
struct SpdCase {
  CsrMatrix a;
  std::vector<double> b;
  std::vector<double> reference;
  Eigen::MatrixXd dense;
};

SpdCase make_spd(int n, std::uint64_t seed) {
  Pcg32 rng(seed, 19);
  Eigen::MatrixXd b(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) b(r, c) = rng.uniform(-1, 1);
  Eigen::MatrixXd a = b.transpose() * b +
                      static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);

  SpdCase out;
  out.dense = a;
  std::vector<Triplet> t;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) t.push_back({r, c, a(r, c)});
  out.a = CsrMatrix::from_triplets(n, n, t);

  Eigen::VectorXd rhs(n);
  for (int r = 0; r < n; ++r) rhs(r) = rng.uniform(-1, 1);
  Eigen::VectorXd x = Eigen::FullPivLU<Eigen::MatrixXd>(a).solve(rhs);
  out.b.assign(rhs.data(), rhs.data() + n);
  out.reference.assign(x.data(), x.data() + n);
  return out;
}

double max_err(const std::vector<double>& x, const std::vector<double>& ref) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    m = std::max(m, std::abs(x[i] - ref[i]));
  return m;
}

}  // namespace

TEST_CASE("iteration budgets scale with the cube root of the size") {
  CHECK(default_gs_iterations(1000) == 1000);
  CHECK(default_mgpcg_iterations(1000) == 100);
  CHECK(default_gs_iterations(1) == 100);
  CHECK(default_mgpcg_iterations(29791) == 310);
}

TEST_CASE("gauss-seidel reaches the dense solution") {
  SpdCase c = make_spd(40, 11);
  std::vector<double> x(40, 0.0);
  SolveOptions opt;
  opt.tolerance = 1e-12;
  SolveReport rep = gauss_seidel_solve(c.a, c.b, x, opt);
  CHECK(rep.converged);
  CHECK(max_err(x, c.reference) < 1e-9);
  CHECK(rep.history.size() == static_cast<std::size_t>(rep.iterations) + 1);
  CHECK(rep.relative_residual <= 1e-12);
}

TEST_CASE("jacobi pcg reaches the dense solution") {
  SpdCase c = make_spd(60, 12);
  std::vector<double> x(60, 0.0);
  SolveOptions opt;
  opt.tolerance = 1e-12;
  SolveReport rep = mgpcg_solve(c.a, c.b, x, opt);
  CHECK(rep.converged);
  CHECK(max_err(x, c.reference) < 1e-9);
  CHECK(rep.history.size() == static_cast<std::size_t>(rep.iterations) + 1);
}

TEST_CASE("residual history decreases monotonically in the A-norm") {
  // Restarting from the same guess with growing iteration caps exposes the
  // intermediate iterates; the energy-norm error of CG must not grow.
  SpdCase c = make_spd(30, 13);
  Eigen::Map<const Eigen::VectorXd> ref(c.reference.data(), 30);
  double prev = std::numeric_limits<double>::infinity();
  for (int cap = 1; cap <= 12; ++cap) {
    std::vector<double> x(30, 0.0);
    SolveOptions opt;
    opt.tolerance = 1e-15;
    opt.max_iterations = cap;
    mgpcg_solve(c.a, c.b, x, opt);
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), 30);
    Eigen::VectorXd e = xv - ref;
    double err = e.dot(c.dense * e);
    CHECK(err <= prev * (1.0 + 1e-12) + 1e-30);
    prev = err;
  }
}

TEST_CASE("two-cell system solves by hand") {
  // [2 -1; -1 2] x = [1, 0] -> x = [2/3, 1/3]
  CsrMatrix a = CsrMatrix::from_triplets(
      2, 2, {{0, 0, 2.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 2.0}});
  std::vector<double> b = {1.0, 0.0};

  std::vector<double> x(2, 0.0);
  SolveOptions opt;
  opt.tolerance = 1e-14;
  gauss_seidel_solve(a, b, x, opt);
  CHECK(x[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  std::vector<double> y(2, 0.0);
  mgpcg_solve(a, b, y, opt);
  CHECK(y[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("exact initial guess returns immediately") {
  SpdCase c = make_spd(20, 14);
  std::vector<double> x = c.reference;
  SolveReport rep = mgpcg_solve(c.a, c.b, x, {});
  CHECK(rep.iterations == 0);
  CHECK(rep.converged);
  CHECK(rep.history.size() == 1);
  SolveReport gs = gauss_seidel_solve(c.a, c.b, x, {});
  CHECK(gs.iterations == 0);
}

TEST_CASE("zero rhs yields the zero solution") {
  SpdCase c = make_spd(10, 15);
  std::vector<double> b(10, 0.0);
  std::vector<double> x(10, 0.5);
  SolveReport rep = mgpcg_solve(c.a, b, x, {});
  CHECK(rep.converged);
  CHECK(rep.iterations == 0);
  for (double v : x) CHECK(v == 0.0);

  // x0 already solving A x = 0 is kept as is
  std::vector<double> x2(10, 0.0);
  SolveReport rep2 = gauss_seidel_solve(c.a, b, x2, {});
  CHECK(rep2.converged);
  for (double v : x2) CHECK(v == 0.0);
}

TEST_CASE("nonpositive diagonal raises a singularity error") {
  CsrMatrix a =
      CsrMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, 1.0}});  // A(1,1)=0
  std::vector<double> b = {1.0, 1.0};
  std::vector<double> x(2, 0.0);
  CHECK_THROWS_WITH_AS(gauss_seidel_solve(a, b, x, {}),
                       doctest::Contains("row 1"), NumericalError);
  CHECK_THROWS_AS(mgpcg_solve(a, b, x, {}), NumericalError);

  SolveOptions named;
  named.row_name = [](std::int64_t r) {
    return "fluid pressure at cell (0, 0, " + std::to_string(r) + ")";
  };
  CHECK_THROWS_WITH_AS(gauss_seidel_solve(a, b, x, named),
                       doctest::Contains("fluid pressure at cell (0, 0, 1)"),
                       NumericalError);
}

TEST_CASE("indefinite systems raise during pcg") {
  // positive diagonal but indefinite overall
  CsrMatrix a = CsrMatrix::from_triplets(
      2, 2, {{0, 0, 1.0}, {0, 1, 3.0}, {1, 0, 3.0}, {1, 1, 1.0}});
  std::vector<double> b = {1.0, -1.0};
  std::vector<double> x(2, 0.0);
  CHECK_THROWS_WITH_AS(mgpcg_solve(a, b, x, {}),
                       doctest::Contains("positive definite"),
                       NumericalError);
}

TEST_CASE("iteration cap reports non-convergence") {
  SpdCase c = make_spd(50, 16);
  std::vector<double> x(50, 0.0);
  SolveOptions opt;
  opt.tolerance = 1e-14;
  opt.max_iterations = 2;
  SolveReport rep = gauss_seidel_solve(c.a, c.b, x, opt);
  CHECK(!rep.converged);
  CHECK(rep.iterations == 2);
  CHECK(rep.history.size() == 3);
}
