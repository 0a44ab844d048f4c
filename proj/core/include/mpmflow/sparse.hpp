#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mpmflow {

struct Triplet {
  std::int64_t r = 0, c = 0;
  double v = 0.0;
};

//! Compressed sparse row matrix. Columns within each row are sorted;
//! duplicate triplets are summed during construction in sorted order, so
//! assembly is deterministic for a deterministic triplet stream.
class CsrMatrix {
 public:
  CsrMatrix() = default;

  static CsrMatrix from_triplets(std::int64_t rows, std::int64_t cols,
                                 std::vector<Triplet> triplets);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t nonzeros() const { return static_cast<std::int64_t>(val_.size()); }

  std::span<const std::int64_t> row_cols(std::int64_t r) const {
    return {col_.data() + row_ptr_[r], col_.data() + row_ptr_[r + 1]};
  }
  std::span<const double> row_vals(std::int64_t r) const {
    return {val_.data() + row_ptr_[r], val_.data() + row_ptr_[r + 1]};
  }

  //! y = A x
  void apply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> apply(const std::vector<double>& x) const;

  double coeff(std::int64_t r, std::int64_t c) const;
  std::vector<double> diagonal() const;
  CsrMatrix transpose() const;

  //! C = A * B
  static CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b);

  const std::vector<std::int64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::int64_t>& col() const { return col_; }
  const std::vector<double>& val() const { return val_; }

 private:
  std::int64_t rows_ = 0, cols_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<std::int64_t> col_;
  std::vector<double> val_;
};

//! Coordinate-format MatrixMarket ("%%MatrixMarket matrix coordinate real
//! general"), 1-indexed, one entry per stored nonzero.
void save_matrix_market(const std::string& path, const CsrMatrix& a);
CsrMatrix load_matrix_market(const std::string& path);

//! Dense vector as "%%MatrixMarket matrix array real general" with one
//! column.
void save_vector_market(const std::string& path,
                        const std::vector<double>& v);
std::vector<double> load_vector_market(const std::string& path);

}  // namespace mpmflow
