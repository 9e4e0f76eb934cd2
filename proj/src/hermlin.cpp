#include "unbflow/hermlin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "unbflow/error.hpp"

namespace unbflow {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxSweeps = 80;

bool all_finite(const ComplexMatrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag()))
        return false;
  return true;
}

std::vector<Index> sorted_order(const RealVector& v, EigenOrder order) {
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return order == EigenOrder::Ascending ? v(a) < v(b) : v(a) > v(b);
  });
  return idx;
}

// Unitary that diagonalizes the Hermitian 2x2 block [[app, apq],[conj, aqq]]
// when applied as columns: [p q] <- [p q] * G with
// G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]].
struct Rotation {
  double c;
  double s;
  Complex phase;  // e^{-i phi}
};

Rotation jacobi_rotation(double app, double aqq, Complex apq) {
  const double mag = std::abs(apq);
  const double zeta = (aqq - app) / (2.0 * mag);
  const double t = (zeta >= 0 ? 1.0 : -1.0) /
                   (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  return {c, t * c, std::conj(apq) / mag};
}

}  // namespace

// ---------------------------------------------------------------------------
// HermitianMatrix

HermitianMatrix::HermitianMatrix(const ComplexMatrix& m) {
  if (m.rows() != m.cols())
    throw InvalidInstance("HermitianMatrix: matrix is not square");
  if (!all_finite(m))
    throw InvalidInstance("HermitianMatrix: non-finite entry");
  m_ = 0.5 * (m + m.adjoint());
  for (Index i = 0; i < m_.rows(); ++i) m_(i, i) = m_(i, i).real();
}

HermitianMatrix HermitianMatrix::zero(Index n) {
  return HermitianMatrix(ComplexMatrix::Zero(n, n));
}

HermitianMatrix HermitianMatrix::identity(Index n) {
  return HermitianMatrix(ComplexMatrix::Identity(n, n));
}

HermitianMatrix HermitianMatrix::diagonal(const RealVector& d) {
  return HermitianMatrix(d.cast<Complex>().asDiagonal().toDenseMatrix());
}

HermitianMatrix HermitianMatrix::from_frame(const ComplexMatrix& frame,
                                            const RealVector& d) {
  return HermitianMatrix(frame.adjoint() * d.cast<Complex>().asDiagonal() *
                         frame);
}

double HermitianMatrix::trace() const { return m_.trace().real(); }

HermitianMatrix HermitianMatrix::traceless() const {
  if (dim() == 0) return *this;
  ComplexMatrix out = m_;
  const double shift = trace() / static_cast<double>(dim());
  out.diagonal().array() -= shift;
  return HermitianMatrix(out);
}

HermitianMatrix HermitianMatrix::operator+(const HermitianMatrix& o) const {
  return HermitianMatrix(m_ + o.m_);
}

HermitianMatrix HermitianMatrix::operator-(const HermitianMatrix& o) const {
  return HermitianMatrix(m_ - o.m_);
}

HermitianMatrix HermitianMatrix::operator*(double s) const {
  return HermitianMatrix(m_ * s);
}

// ---------------------------------------------------------------------------
// Eigensolver

HermitianEigen herm_eig(const HermitianMatrix& h, EigenOrder order) {
  const Index n = h.dim();
  ComplexMatrix a = h.matrix();
  ComplexMatrix v = ComplexMatrix::Identity(n, n);
  const double scale = a.norm();

  bool converged = n <= 1 || scale == 0.0;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Complex apq = a(p, q);
        const double mag = std::abs(apq);
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        if (mag <= 1e-3 * kEps * scale ||
            mag <= kEps * std::sqrt(std::abs(app) * std::abs(aqq)))
          continue;
        rotated = true;
        const Rotation r = jacobi_rotation(app, aqq, apq);
        // A <- G^H A G, V <- V G.
        for (Index k = 0; k < n; ++k) {
          const Complex akp = a(k, p);
          const Complex akq = a(k, q);
          a(k, p) = r.c * akp - r.s * r.phase * akq;
          a(k, q) = r.s * akp + r.c * r.phase * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Complex apk = a(p, k);
          const Complex aqk = a(q, k);
          a(p, k) = r.c * apk - r.s * std::conj(r.phase) * aqk;
          a(q, k) = r.s * apk + r.c * std::conj(r.phase) * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
        for (Index k = 0; k < n; ++k) {
          const Complex vkp = v(k, p);
          const Complex vkq = v(k, q);
          v(k, p) = r.c * vkp - r.s * r.phase * vkq;
          v(k, q) = r.s * vkp + r.c * r.phase * vkq;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = 0; q < n; ++q)
        if (p != q) off += std::norm(a(p, q));
    std::ostringstream msg;
    msg << "herm_eig: Jacobi did not converge after " << kMaxSweeps
        << " sweeps (dim " << n << ", norm " << scale
        << ", residual off-diagonal norm " << std::sqrt(off) << ")";
    throw NumericalError(msg.str());
  }

  RealVector diag = a.diagonal().real();
  const auto idx = sorted_order(diag, order);
  HermitianEigen out{RealVector(n), ComplexMatrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values(k) = diag(idx[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(idx[static_cast<std::size_t>(k)]);
  }
  return out;
}

HermitianMatrix herm_exp(const HermitianMatrix& h) {
  const HermitianEigen e = herm_eig(h);
  return HermitianMatrix(e.vectors *
                         e.values.array().exp().matrix().cast<Complex>()
                             .asDiagonal() *
                         e.vectors.adjoint());
}

// ---------------------------------------------------------------------------
// Graded SVD

GradedSvd graded_svd(const ComplexMatrix& k, const RealVector& log_scale) {
  const Index rows = k.rows();
  const Index cols = k.cols();
  if (log_scale.size() != cols)
    throw InvalidInstance("graded_svd: scale length does not match columns");

  ComplexMatrix y = k;
  RealVector a = log_scale;
  ComplexMatrix v = ComplexMatrix::Identity(cols, cols);

  auto renormalize = [&] {
    for (Index j = 0; j < cols; ++j) {
      const double nrm = y.col(j).norm();
      if (!(nrm > 0.0) || !std::isfinite(nrm))
        throw NumericalError("graded_svd: degenerate column");
      y.col(j) /= nrm;
      a(j) += std::log(nrm);
    }
  };
  renormalize();

  const double tol = 2.0 * kEps * static_cast<double>(std::max<Index>(rows, 1));
  bool converged = cols <= 1;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (Index i = 0; i + 1 < cols; ++i) {
      for (Index j = i + 1; j < cols; ++j) {
        const Index hi = a(i) >= a(j) ? i : j;
        const Index lo = hi == i ? j : i;
        const double alpha = y.col(hi).squaredNorm();
        const double beta = y.col(lo).squaredNorm();
        const Complex gamma = y.col(hi).dot(y.col(lo));
        const double mag = std::abs(gamma);
        if (mag <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        // Gram of (g_hi, g_lo) scaled by e^{-2 a_hi}:
        //   [[alpha, rho*gamma], [rho*conj(gamma), rho^2*beta]].
        const double rho = std::exp(a(lo) - a(hi));
        const double diff = rho * rho * beta - alpha;
        const double den =
            std::abs(diff) + std::sqrt(4.0 * rho * rho * mag * mag + diff * diff);
        // tau = t / rho, finite even when rho underflows.
        const double tau = (diff >= 0 ? 1.0 : -1.0) * 2.0 * mag / den;
        const double c = 1.0 / std::sqrt(1.0 + rho * rho * tau * tau);
        const double s = c * rho * tau;
        const Complex phase = std::conj(gamma) / mag;

        const ComplexVector yhi = y.col(hi);
        const ComplexVector ylo = y.col(lo);
        y.col(hi) = c * yhi - (c * rho * rho * tau) * phase * ylo;
        y.col(lo) = (c * tau) * yhi + c * phase * ylo;

        const ComplexVector vhi = v.col(hi);
        const ComplexVector vlo = v.col(lo);
        v.col(hi) = c * vhi - s * phase * vlo;
        v.col(lo) = s * vhi + c * phase * vlo;
      }
    }
    renormalize();
    converged = !rotated;
  }
  if (!converged)
    throw NumericalError("graded_svd: one-sided Jacobi did not converge");

  GradedSvd out{ComplexMatrix(rows, cols), RealVector(cols),
                ComplexMatrix(cols, cols)};
  const auto idx = sorted_order(a, EigenOrder::Ascending);
  for (Index t = 0; t < cols; ++t) {
    const Index src = idx[static_cast<std::size_t>(t)];
    out.log_singular(t) = a(src);
    out.left.col(t) = y.col(src);
    out.right.col(t) = v.col(src);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PdUnitDetMatrix

namespace {

PdUnitDetMatrix spectral_from_hermitian(const HermitianMatrix& x,
                                        bool require_unit_det) {
  const HermitianEigen e = herm_eig(x);
  const Index n = x.dim();
  for (Index i = 0; i < n; ++i) {
    if (!(e.values(i) > 0.0)) {
      std::ostringstream msg;
      msg << "positivity violation: eigenvalue " << e.values(i)
          << " <= 0 (dim " << n << ")";
      throw NumericalError(msg.str());
    }
  }
  RealVector logs = e.values.array().log().matrix();
  if (require_unit_det && n > 0 && std::abs(logs.sum()) > 1e-6)
    throw InvalidInstance("PdUnitDetMatrix: determinant differs from 1");
  return PdUnitDetMatrix::from_spectral(e.vectors.adjoint(), logs);
}

}  // namespace

PdUnitDetMatrix::PdUnitDetMatrix(const HermitianMatrix& x)
    : PdUnitDetMatrix(spectral_from_hermitian(x, true)) {}

PdUnitDetMatrix PdUnitDetMatrix::normalized(const HermitianMatrix& x) {
  return spectral_from_hermitian(x, false);
}

PdUnitDetMatrix PdUnitDetMatrix::identity(Index n) {
  return from_spectral(ComplexMatrix::Identity(n, n), RealVector::Zero(n));
}

PdUnitDetMatrix PdUnitDetMatrix::from_spectral(const ComplexMatrix& frame,
                                               const RealVector& log_eig) {
  if (frame.rows() != frame.cols() || frame.rows() != log_eig.size())
    throw InvalidInstance("PdUnitDetMatrix: frame/spectrum size mismatch");
  const Index n = log_eig.size();
  PdUnitDetMatrix out;
  out.frame_.resize(n, n);
  out.log_eig_.resize(n);
  const double mean = n > 0 ? log_eig.mean() : 0.0;
  const auto idx = sorted_order(log_eig, EigenOrder::Ascending);
  for (Index t = 0; t < n; ++t) {
    const Index src = idx[static_cast<std::size_t>(t)];
    out.log_eig_(t) = log_eig(src) - mean;
    out.frame_.row(t) = frame.row(src);
  }
  return out;
}

ComplexMatrix PdUnitDetMatrix::power(double t) const {
  const RealVector d = (t * log_eig_).array().exp().matrix();
  return frame_.adjoint() * d.cast<Complex>().asDiagonal() * frame_;
}

HermitianMatrix PdUnitDetMatrix::log() const {
  return HermitianMatrix::from_frame(frame_, log_eig_);
}

double PdUnitDetMatrix::hermitian_defect() const {
  const ComplexMatrix m = matrix();
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double PdUnitDetMatrix::determinant_defect() const {
  return std::abs(matrix().determinant() - Complex(1.0));
}

// ---------------------------------------------------------------------------
// Manifold operations

ComplexMatrix pd_sqrt(const PdUnitDetMatrix& x) { return x.power(0.5); }

ComplexMatrix pd_sqrt(const HermitianMatrix& x) {
  const PdUnitDetMatrix s = PdUnitDetMatrix::normalized(x);
  const double scale =
      x.dim() > 0 ? std::exp(0.5 * herm_eig(x).values.array().log().mean())
                  : 1.0;
  return s.power(0.5) * scale;
}

PdUnitDetMatrix transported_step(const PdUnitDetMatrix& x,
                                 const HermitianMatrix& t) {
  if (t.dim() != x.dim())
    throw InvalidInstance("transported_step: dimension mismatch");
  const ComplexMatrix& frame = x.frame();
  // g = e^{t/2} x^{1/2} = frame^H (frame e^{t/2} frame^H) e^{P/2} frame.
  const ComplexMatrix k =
      frame * herm_exp(t * 0.5).matrix() * frame.adjoint();
  const GradedSvd svd = graded_svd(k, 0.5 * x.log_eigenvalues());
  return PdUnitDetMatrix::from_spectral(svd.right.adjoint() * frame,
                                        2.0 * svd.log_singular);
}

PdUnitDetMatrix geodesic_step(const PdUnitDetMatrix& x,
                              const HermitianMatrix& h) {
  if (h.dim() != x.dim())
    throw InvalidInstance("geodesic_step: dimension mismatch");
  const ComplexMatrix inv_sqrt = x.power(-0.5);
  return transported_step(x, HermitianMatrix(inv_sqrt * h.matrix() * inv_sqrt));
}

double pd_distance(const PdUnitDetMatrix& x, const PdUnitDetMatrix& y) {
  if (x.dim() != y.dim())
    throw InvalidInstance("pd_distance: dimension mismatch");
  const ComplexMatrix inv_sqrt = x.power(-0.5);
  const HermitianMatrix z(inv_sqrt * y.matrix() * inv_sqrt);
  const HermitianEigen e = herm_eig(z);
  double acc = 0.0;
  for (Index i = 0; i < e.values.size(); ++i) {
    if (!(e.values(i) > 0.0))
      throw NumericalError("pd_distance: lost positivity");
    const double l = std::log(e.values(i));
    acc += l * l;
  }
  return std::sqrt(acc);
}

double distance_from_identity(const PdUnitDetMatrix& x) {
  return x.log_eigenvalues().norm();
}

WeylSpectrum weyl_spec(const HermitianMatrix& h, const HermitianMatrix& g) {
  return {herm_eig(h, EigenOrder::Descending).values,
          herm_eig(g, EigenOrder::Ascending).values};
}

// ---------------------------------------------------------------------------
// Random generation

ComplexMatrix random_unitary(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix z(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) z(i, j) = Complex(normal(rng), normal(rng));
  Eigen::HouseholderQR<ComplexMatrix> qr(z);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

HermitianMatrix random_hermitian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix z(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) z(i, j) = Complex(normal(rng), normal(rng));
  return HermitianMatrix(z);
}

double unitarity_defect(const ComplexMatrix& u) {
  if (u.size() == 0) return 0.0;
  return (u.adjoint() * u - ComplexMatrix::Identity(u.cols(), u.cols()))
      .cwiseAbs()
      .maxCoeff();
}

}  // namespace unbflow
