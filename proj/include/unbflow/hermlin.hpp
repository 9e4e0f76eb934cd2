#pragma once

// Dense complex linear algebra on Hermitian and positive-definite matrices.
//
// Positive-definite unit-determinant matrices are stored in log-spectral form
// x = frame^H * diag(exp(log_eig)) * frame, which keeps iterates representable
// long after exp(log_eig) would overflow a double.

#include <complex>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace unbflow {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class EigenOrder { Ascending, Descending };

/// Square complex matrix with exact Hermitian symmetry.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;

  /// Projects onto the Hermitian part (M + M^H)/2. Throws InvalidInstance
  /// for non-square or non-finite input.
  explicit HermitianMatrix(const ComplexMatrix& m);

  static HermitianMatrix zero(Index n);
  static HermitianMatrix identity(Index n);
  static HermitianMatrix diagonal(const RealVector& d);
  /// frame^H diag(d) frame; rows of `frame` are the eigenvectors.
  static HermitianMatrix from_frame(const ComplexMatrix& frame,
                                    const RealVector& d);

  Index dim() const { return m_.rows(); }
  const ComplexMatrix& matrix() const { return m_; }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

  double trace() const;
  double norm() const { return m_.norm(); }
  HermitianMatrix traceless() const;

  HermitianMatrix operator+(const HermitianMatrix& o) const;
  HermitianMatrix operator-(const HermitianMatrix& o) const;
  HermitianMatrix operator*(double s) const;

 private:
  ComplexMatrix m_;
};

struct HermitianEigen {
  RealVector values;
  /// Columns are eigenvectors: H = vectors * diag(values) * vectors^H.
  ComplexMatrix vectors;
};

/// Cyclic complex Jacobi eigensolver. Deterministic sweep order, so identical
/// inputs give bit-identical output.
HermitianEigen herm_eig(const HermitianMatrix& h,
                        EigenOrder order = EigenOrder::Ascending);

HermitianMatrix herm_exp(const HermitianMatrix& h);

/// SVD of K * diag(exp(log_scale)) with K well conditioned and log_scale of
/// arbitrary spread. One-sided Jacobi on columns carried as (unit direction,
/// log magnitude), so nothing over- or underflows and small singular values
/// keep their relative accuracy.
struct GradedSvd {
  ComplexMatrix left;      // unitary, columns = left singular vectors
  RealVector log_singular; // ascending
  ComplexMatrix right;     // unitary, columns = right singular vectors
};
GradedSvd graded_svd(const ComplexMatrix& k, const RealVector& log_scale);

/// Positive-definite Hermitian matrix with det = 1, in log-spectral form.
class PdUnitDetMatrix {
 public:
  PdUnitDetMatrix() = default;

  /// Requires positive definiteness and |det - 1| <= 1e-6.
  explicit PdUnitDetMatrix(const HermitianMatrix& x);
  /// Positive definite input, rescaled by det^{-1/n}.
  static PdUnitDetMatrix normalized(const HermitianMatrix& x);
  static PdUnitDetMatrix identity(Index n);
  /// Rows of `frame` are eigenvectors; log eigenvalues are re-centred to sum
  /// zero and sorted ascending.
  static PdUnitDetMatrix from_spectral(const ComplexMatrix& frame,
                                       const RealVector& log_eig);

  Index dim() const { return frame_.rows(); }
  const ComplexMatrix& frame() const { return frame_; }
  const RealVector& log_eigenvalues() const { return log_eig_; }

  /// frame^H diag(exp(t * log_eig)) frame.
  ComplexMatrix power(double t) const;
  ComplexMatrix matrix() const { return power(1.0); }
  HermitianMatrix log() const;

  /// Hermitian defect and |det - 1| of the materialized matrix.
  double hermitian_defect() const;
  double determinant_defect() const;

 private:
  ComplexMatrix frame_;
  RealVector log_eig_;
};

/// x^{1/2}. Throws NumericalError on a non-positive eigenvalue.
ComplexMatrix pd_sqrt(const PdUnitDetMatrix& x);
ComplexMatrix pd_sqrt(const HermitianMatrix& x);

/// exp_x(H) = x^{1/2} exp(x^{-1/2} H x^{-1/2}) x^{1/2} for traceless
/// Hermitian H tangent at x.
PdUnitDetMatrix geodesic_step(const PdUnitDetMatrix& x,
                              const HermitianMatrix& h);

/// x^{1/2} exp(t) x^{1/2} where t is the tangent already transported to the
/// identity. Stable for any spread of x.
PdUnitDetMatrix transported_step(const PdUnitDetMatrix& x,
                                 const HermitianMatrix& t);

/// ||log(x^{-1/2} y x^{-1/2})||_F.
double pd_distance(const PdUnitDetMatrix& x, const PdUnitDetMatrix& y);

/// d(I, x) = ||log x||_F, read directly off the log-spectrum.
double distance_from_identity(const PdUnitDetMatrix& x);

struct WeylSpectrum {
  RealVector p;  // nonincreasing
  RealVector q;  // nondecreasing
};
WeylSpectrum weyl_spec(const HermitianMatrix& h, const HermitianMatrix& g);

/// Haar-distributed unitary from a seeded engine.
ComplexMatrix random_unitary(Index n, std::mt19937_64& rng);
/// Random Hermitian with standard complex Gaussian entries.
HermitianMatrix random_hermitian(Index n, std::mt19937_64& rng);

/// max |U^H U - I|.
double unitarity_defect(const ComplexMatrix& u);

}  // namespace unbflow
