#pragma once

#include <vector>

#include "unbflow/hermlin.hpp"

namespace unbflow {

enum class KernelCheck { Enforce, Skip };

/// N complex n x m matrices A = (A_1, ..., A_N).
class MatrixTuple {
 public:
  MatrixTuple() = default;

  /// Validates shapes, finiteness and ||A|| > 0. With KernelCheck::Enforce
  /// also requires trivial common kernels of the A_l and of the A_l^H.
  explicit MatrixTuple(std::vector<ComplexMatrix> matrices,
                       KernelCheck check = KernelCheck::Enforce);

  /// One rank-one matrix sqrt(w_ij) e_i e_j^T per positive entry.
  static MatrixTuple monomial(const RealMatrix& weights,
                              KernelCheck check = KernelCheck::Enforce);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return static_cast<Index>(matrices_.size()); }
  const ComplexMatrix& operator[](Index l) const {
    return matrices_[static_cast<std::size_t>(l)];
  }
  const std::vector<ComplexMatrix>& matrices() const { return matrices_; }

  /// sqrt(sum_l ||A_l||_F^2).
  double norm() const;

  /// (g A_l h^H)_l.
  MatrixTuple transformed(const ComplexMatrix& g, const ComplexMatrix& h) const;
  MatrixTuple scaled(double s) const;

  /// Numerical ranks of [A_1 ... A_N] and [A_1; ...; A_N].
  Index left_rank(double rel_tol = 1e-10) const;
  Index right_rank(double rel_tol = 1e-10) const;
  bool has_trivial_kernels(double rel_tol = 1e-10) const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<ComplexMatrix> matrices_;
};

}  // namespace unbflow
