#include "mpmflow/sparse.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <memory>

#include "mpmflow/error.hpp"

namespace mpmflow {

CsrMatrix CsrMatrix::from_triplets(std::int64_t rows, std::int64_t cols,
                                   std::vector<Triplet> triplets) {
  MPMFLOW_CHECK(rows >= 0 && cols >= 0, "negative matrix dims");
  for (const Triplet& t : triplets)
    MPMFLOW_CHECK(t.r >= 0 && t.r < rows && t.c >= 0 && t.c < cols,
                  "triplet index out of range");
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) {
                     return a.r != b.r ? a.r < b.r : a.c < b.c;
                   });

  CsrMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(rows + 1, 0);
  m.col_.reserve(triplets.size());
  m.val_.reserve(triplets.size());
  std::size_t i = 0;
  for (std::int64_t r = 0; r < rows; ++r) {
    while (i < triplets.size() && triplets[i].r == r) {
      std::int64_t c = triplets[i].c;
      double v = 0.0;
      while (i < triplets.size() && triplets[i].r == r && triplets[i].c == c)
        v += triplets[i++].v;
      m.col_.push_back(c);
      m.val_.push_back(v);
    }
    m.row_ptr_[r + 1] = static_cast<std::int64_t>(m.col_.size());
  }
  return m;
}

void CsrMatrix::apply(std::span<const double> x, std::span<double> y) const {
  MPMFLOW_CHECK(static_cast<std::int64_t>(x.size()) == cols_ &&
                    static_cast<std::int64_t>(y.size()) == rows_,
                "matvec size mismatch");
  for (std::int64_t r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (std::int64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      s += val_[k] * x[col_[k]];
    y[r] = s;
  }
}

std::vector<double> CsrMatrix::apply(const std::vector<double>& x) const {
  std::vector<double> y(rows_);
  apply(std::span<const double>(x), std::span<double>(y));
  return y;
}

double CsrMatrix::coeff(std::int64_t r, std::int64_t c) const {
  auto cols = row_cols(r);
  auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return val_[row_ptr_[r] + (it - cols.begin())];
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(std::min(rows_, cols_));
  for (std::size_t r = 0; r < d.size(); ++r)
    d[r] = coeff(static_cast<std::int64_t>(r), static_cast<std::int64_t>(r));
  return d;
}

CsrMatrix CsrMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(val_.size());
  for (std::int64_t r = 0; r < rows_; ++r)
    for (std::int64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      t.push_back({col_[k], r, val_[k]});
  return from_triplets(cols_, rows_, std::move(t));
}

CsrMatrix CsrMatrix::multiply(const CsrMatrix& a, const CsrMatrix& b) {
  MPMFLOW_CHECK(a.cols_ == b.rows_, "sparse product size mismatch");
  // Row-by-row accumulation with a dense scratch row; column order of the
  // result comes from from_triplets, so the product is deterministic.
  std::vector<Triplet> t;
  std::vector<double> acc(b.cols_, 0.0);
  std::vector<std::int64_t> touched;
  for (std::int64_t r = 0; r < a.rows_; ++r) {
    touched.clear();
    for (std::int64_t ka = a.row_ptr_[r]; ka < a.row_ptr_[r + 1]; ++ka) {
      std::int64_t mid = a.col_[ka];
      double va = a.val_[ka];
      for (std::int64_t kb = b.row_ptr_[mid]; kb < b.row_ptr_[mid + 1];
           ++kb) {
        std::int64_t c = b.col_[kb];
        if (acc[c] == 0.0) touched.push_back(c);
        acc[c] += va * b.val_[kb];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::int64_t c : touched) {
      if (acc[c] != 0.0) t.push_back({r, c, acc[c]});
      acc[c] = 0.0;
    }
  }
  return from_triplets(a.rows_, b.cols_, std::move(t));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_matrix_market(const std::string& path, const CsrMatrix& a) {
  FilePtr f(std::fopen(path.c_str(), "w"));
  if (!f) throw FormatError("matrix market: cannot open " + path);
  std::fprintf(f.get(), "%%%%MatrixMarket matrix coordinate real general\n");
  std::fprintf(f.get(), "%" PRId64 " %" PRId64 " %" PRId64 "\n", a.rows(),
               a.cols(), a.nonzeros());
  for (std::int64_t r = 0; r < a.rows(); ++r) {
    auto cols = a.row_cols(r);
    auto vals = a.row_vals(r);
    for (std::size_t k = 0; k < cols.size(); ++k)
      std::fprintf(f.get(), "%" PRId64 " %" PRId64 " %.17g\n", r + 1,
                   cols[k] + 1, vals[k]);
  }
}

CsrMatrix load_matrix_market(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "r"));
  if (!f) throw FormatError("matrix market: cannot open " + path);
  char header[256];
  if (!std::fgets(header, sizeof header, f.get()) ||
      std::string(header).find("coordinate real") == std::string::npos)
    throw FormatError("matrix market: unsupported header in " + path);
  std::int64_t rows, cols, nnz;
  if (std::fscanf(f.get(), "%" SCNd64 " %" SCNd64 " %" SCNd64, &rows, &cols,
                  &nnz) != 3)
    throw FormatError("matrix market: bad size line in " + path);
  std::vector<Triplet> t(nnz);
  for (std::int64_t k = 0; k < nnz; ++k) {
    if (std::fscanf(f.get(), "%" SCNd64 " %" SCNd64 " %lf", &t[k].r, &t[k].c,
                    &t[k].v) != 3)
      throw FormatError("matrix market: truncated entries in " + path);
    --t[k].r;
    --t[k].c;
  }
  return CsrMatrix::from_triplets(rows, cols, std::move(t));
}

void save_vector_market(const std::string& path,
                        const std::vector<double>& v) {
  FilePtr f(std::fopen(path.c_str(), "w"));
  if (!f) throw FormatError("matrix market: cannot open " + path);
  std::fprintf(f.get(), "%%%%MatrixMarket matrix array real general\n");
  std::fprintf(f.get(), "%zu 1\n", v.size());
  for (double x : v) std::fprintf(f.get(), "%.17g\n", x);
}

std::vector<double> load_vector_market(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "r"));
  if (!f) throw FormatError("matrix market: cannot open " + path);
  char header[256];
  if (!std::fgets(header, sizeof header, f.get()) ||
      std::string(header).find("array real") == std::string::npos)
    throw FormatError("matrix market: unsupported header in " + path);
  std::size_t n, one;
  if (std::fscanf(f.get(), "%zu %zu", &n, &one) != 2 || one != 1)
    throw FormatError("matrix market: bad size line in " + path);
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k)
    if (std::fscanf(f.get(), "%lf", &v[k]) != 1)
      throw FormatError("matrix market: truncated entries in " + path);
  return v;
}

}  // namespace mpmflow
