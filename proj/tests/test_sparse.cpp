#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>

#include "doctest.h"
#include "mpmflow/error.hpp"
#include "mpmflow/rng.hpp"
#include "mpmflow/sparse.hpp"

using namespace mpmflow;

namespace {

// Independent dense reference for the sparse ops.
struct Dense {
  std::int64_t rows, cols;
  std::vector<double> v;

  Dense(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::int64_t r, std::int64_t c) { return v[r * cols + c]; }
  double at(std::int64_t r, std::int64_t c) const { return v[r * cols + c]; }
};

Dense to_dense(const CsrMatrix& a) {
  Dense d(a.rows(), a.cols());
  for (std::int64_t r = 0; r < a.rows(); ++r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_vals(r);
    for (std::size_t k = 0; k < cols.size(); ++k) d.at(r, cols[k]) = vals[k];
  }
  return d;
}

std::vector<Triplet> random_triplets(Pcg32& rng, std::int64_t rows,
                                     std::int64_t cols, int count) {
  std::vector<Triplet> t;
  for (int n = 0; n < count; ++n)
    t.push_back({static_cast<std::int64_t>(rng.bounded(rows)),
                 static_cast<std::int64_t>(rng.bounded(cols)),
                 rng.uniform(-2, 2)});
  return t;
}

}  // namespace

TEST_CASE("from_triplets sums duplicates and sorts columns") {
  std::vector<Triplet> t = {{1, 3, 2.0}, {0, 1, 1.0}, {1, 3, 0.5},
                            {1, 0, -1.0}};
  CsrMatrix a = CsrMatrix::from_triplets(2, 4, t);
  CHECK(a.nonzeros() == 3);
  CHECK(a.coeff(0, 1) == 1.0);
  CHECK(a.coeff(1, 3) == 2.5);
  CHECK(a.coeff(1, 0) == -1.0);
  CHECK(a.coeff(0, 0) == 0.0);
  auto cols = a.row_cols(1);
  CHECK(cols[0] == 0);
  CHECK(cols[1] == 3);
}

TEST_CASE("out of range triplets are rejected") {
  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}),
                  InvalidInput);
  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, 2, {{0, -1, 1.0}}),
                  InvalidInput);
}

TEST_CASE("matvec matches dense reference") {
  Pcg32 rng(1, 1);
  CsrMatrix a = CsrMatrix::from_triplets(13, 9, random_triplets(rng, 13, 9, 60));
  Dense d = to_dense(a);
  std::vector<double> x(9);
  for (double& v : x) v = rng.uniform(-1, 1);
  std::vector<double> y = a.apply(x);
  for (std::int64_t r = 0; r < 13; ++r) {
    double ref = 0.0;
    for (std::int64_t c = 0; c < 9; ++c) ref += d.at(r, c) * x[c];
    CHECK(y[r] == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("transpose and product match dense reference") {
  Pcg32 rng(2, 7);
  CsrMatrix a = CsrMatrix::from_triplets(8, 6, random_triplets(rng, 8, 6, 30));
  CsrMatrix b = CsrMatrix::from_triplets(6, 10, random_triplets(rng, 6, 10, 40));

  CsrMatrix at = a.transpose();
  Dense da = to_dense(a);
  for (std::int64_t r = 0; r < 8; ++r)
    for (std::int64_t c = 0; c < 6; ++c)
      CHECK(at.coeff(c, r) == da.at(r, c));

  CsrMatrix ab = CsrMatrix::multiply(a, b);
  Dense db = to_dense(b);
  for (std::int64_t r = 0; r < 8; ++r)
    for (std::int64_t c = 0; c < 10; ++c) {
      double ref = 0.0;
      for (std::int64_t m = 0; m < 6; ++m) ref += da.at(r, m) * db.at(m, c);
      CHECK(ab.coeff(r, c) == doctest::Approx(ref).epsilon(1e-13));
    }
}

TEST_CASE("K K^T products come out bit-symmetric") {
  Pcg32 rng(3, 11);
  CsrMatrix k =
      CsrMatrix::from_triplets(40, 25, random_triplets(rng, 40, 25, 300));
  CsrMatrix a = CsrMatrix::multiply(k, k.transpose());
  for (std::int64_t r = 0; r < a.rows(); ++r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_vals(r);
    for (std::size_t n = 0; n < cols.size(); ++n) {
      double mirror = a.coeff(cols[n], r);
      CHECK(vals[n] == mirror);  // bitwise, not approximate
    }
  }
}

TEST_CASE("matrix market round-trips") {
  Pcg32 rng(4, 5);
  CsrMatrix a = CsrMatrix::from_triplets(7, 7, random_triplets(rng, 7, 7, 20));
  const char* path = "roundtrip.mtx";
  save_matrix_market(path, a);
  CsrMatrix b = load_matrix_market(path);
  std::remove(path);
  REQUIRE(b.rows() == a.rows());
  REQUIRE(b.cols() == a.cols());
  REQUIRE(b.nonzeros() == a.nonzeros());
  for (std::int64_t r = 0; r < a.rows(); ++r)
    for (std::int64_t c = 0; c < a.cols(); ++c)
      CHECK(b.coeff(r, c) == a.coeff(r, c));  // %.17g is exact for doubles
}

TEST_CASE("vector market round-trips") {
  std::vector<double> v = {1.5, -2.25, 1e-17, 3e201, 0.0};
  const char* path = "roundtrip_vec.mtx";
  save_vector_market(path, v);
  std::vector<double> w = load_vector_market(path);
  std::remove(path);
  REQUIRE(w.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w[i] == v[i]);
}
