#include "unbflow/matrix_tuple.hpp"

#include <cmath>
#include <sstream>

#include "unbflow/error.hpp"

namespace unbflow {

namespace {

Index numerical_rank(const ComplexMatrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  const RealVector& s = svd.singularValues();
  const double cutoff = rel_tol * s(0);
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > cutoff) ++r;
  return r;
}

}  // namespace

MatrixTuple::MatrixTuple(std::vector<ComplexMatrix> matrices, KernelCheck check)
    : matrices_(std::move(matrices)) {
  if (matrices_.empty()) throw InvalidInstance("MatrixTuple: empty tuple");
  rows_ = matrices_.front().rows();
  cols_ = matrices_.front().cols();
  if (rows_ == 0 || cols_ == 0)
    throw InvalidInstance("MatrixTuple: zero-sized matrices");
  for (std::size_t l = 0; l < matrices_.size(); ++l) {
    const ComplexMatrix& m = matrices_[l];
    if (m.rows() != rows_ || m.cols() != cols_) {
      std::ostringstream msg;
      msg << "MatrixTuple: matrix " << l << " has shape " << m.rows() << "x"
          << m.cols() << ", expected " << rows_ << "x" << cols_;
      throw InvalidInstance(msg.str());
    }
    if (!m.allFinite())
      throw InvalidInstance("MatrixTuple: non-finite entry");
  }
  if (!(norm() > 0.0)) throw InvalidInstance("MatrixTuple: zero tuple");
  if (check == KernelCheck::Enforce && !has_trivial_kernels()) {
    std::ostringstream msg;
    msg << "MatrixTuple: common kernels are not trivial (left rank "
        << left_rank() << "/" << rows_ << ", right rank " << right_rank()
        << "/" << cols_ << ")";
    throw InvalidInstance(msg.str());
  }
}

MatrixTuple MatrixTuple::monomial(const RealMatrix& weights, KernelCheck check) {
  std::vector<ComplexMatrix> out;
  for (Index i = 0; i < weights.rows(); ++i) {
    for (Index j = 0; j < weights.cols(); ++j) {
      const double w = weights(i, j);
      if (w < 0.0 || !std::isfinite(w))
        throw InvalidInstance("MatrixTuple::monomial: negative weight");
      if (w == 0.0) continue;
      ComplexMatrix e = ComplexMatrix::Zero(weights.rows(), weights.cols());
      e(i, j) = std::sqrt(w);
      out.push_back(std::move(e));
    }
  }
  return MatrixTuple(std::move(out), check);
}

double MatrixTuple::norm() const {
  double acc = 0.0;
  for (const auto& m : matrices_) acc += m.squaredNorm();
  return std::sqrt(acc);
}

MatrixTuple MatrixTuple::transformed(const ComplexMatrix& g,
                                     const ComplexMatrix& h) const {
  std::vector<ComplexMatrix> out;
  out.reserve(matrices_.size());
  for (const auto& m : matrices_) out.push_back(g * m * h.adjoint());
  return MatrixTuple(std::move(out), KernelCheck::Skip);
}

MatrixTuple MatrixTuple::scaled(double s) const {
  std::vector<ComplexMatrix> out;
  out.reserve(matrices_.size());
  for (const auto& m : matrices_) out.push_back(m * s);
  return MatrixTuple(std::move(out), KernelCheck::Skip);
}

Index MatrixTuple::left_rank(double rel_tol) const {
  ComplexMatrix stacked(rows_, cols_ * size());
  for (Index l = 0; l < size(); ++l)
    stacked.middleCols(l * cols_, cols_) = (*this)[l];
  return numerical_rank(stacked, rel_tol);
}

Index MatrixTuple::right_rank(double rel_tol) const {
  ComplexMatrix stacked(rows_ * size(), cols_);
  for (Index l = 0; l < size(); ++l)
    stacked.middleRows(l * rows_, rows_) = (*this)[l];
  return numerical_rank(stacked, rel_tol);
}

bool MatrixTuple::has_trivial_kernels(double rel_tol) const {
  return left_rank(rel_tol) == rows_ && right_rank(rel_tol) == cols_;
}

}  // namespace unbflow
