#include "unbflow/opscale.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "unbflow/error.hpp"

namespace unbflow {

namespace {

struct OrderedFrames {
  RealVector p;  // nondecreasing
  ComplexMatrix sigma;
  RealVector q;  // nonincreasing
  ComplexMatrix tau;
};

OrderedFrames ordered_frames(const ComplexMatrix& frame_x, const RealVector& log_x,
                             const ComplexMatrix& frame_y,
                             const RealVector& log_y) {
  return {log_x, frame_x, log_y.reverse(), frame_y.colwise().reverse()};
}

// Stable in ties, so that (I, I) has the identity frames.
OrderedFrames ordered_frames(const ScalingState& s) {
  const RealVector& log_y = s.y.log_eigenvalues();
  std::vector<Index> order(static_cast<std::size_t>(log_y.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return log_y(a) > log_y(b); });
  RealVector q(log_y.size());
  ComplexMatrix tau(s.y.frame().rows(), s.y.frame().cols());
  for (Index i = 0; i < q.size(); ++i) {
    q(i) = log_y(order[static_cast<std::size_t>(i)]);
    tau.row(i) = s.y.frame().row(order[static_cast<std::size_t>(i)]);
  }
  return {s.x.log_eigenvalues(), s.x.frame(), q, tau};
}

struct Gram {
  ComplexMatrix left;   // sum B B^H
  ComplexMatrix right;  // sum B^H B
};

Gram gram(const std::vector<ComplexMatrix>& b, Index n, Index m) {
  Gram g{ComplexMatrix::Zero(n, n), ComplexMatrix::Zero(m, m)};
  for (const auto& bl : b) {
    g.left.noalias() += bl * bl.adjoint();
    g.right.noalias() += bl.adjoint() * bl;
  }
  return g;
}

void check_state_dims(const MatrixTuple& a, const ScalingState& s) {
  if (s.x.dim() != a.rows() || s.y.dim() != a.cols())
    throw InvalidInstance("scaling state dimensions do not match the tuple");
}

}  // namespace

double MomentValue::norm() const {
  return std::sqrt(first.matrix().squaredNorm() +
                   second.matrix().squaredNorm());
}

double kempf_ness_value(const MatrixTuple& a, const ScalingState& s) {
  check_state_dims(a, s);
  const ComplexMatrix& sigma = s.x.frame();
  const ComplexMatrix& tau = s.y.frame();
  const RealVector& p = s.x.log_eigenvalues();
  const RealVector& q = s.y.log_eigenvalues();

  // log sum_{l,i,j} |(sigma A_l tau^H)_ij|^2 e^{p_i + q_j}
  std::vector<double> terms;
  for (Index l = 0; l < a.size(); ++l) {
    const ComplexMatrix m = sigma * a[l] * tau.adjoint();
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) {
        const double mag2 = std::norm(m(i, j));
        if (mag2 > 0.0) terms.push_back(std::log(mag2) + p(i) + q(j));
      }
  }
  if (terms.empty())
    throw NumericalError("kempf_ness_value: trace is not positive");
  const double top = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  const double value = top + std::log(acc);

  const double spread = std::max(p.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff());
  if (spread <= 30.0) {
    const double direct =
        2.0 * std::log(a.transformed(pd_sqrt(s.x), pd_sqrt(s.y)).norm());
    if (std::abs(direct - value) > 1e-9 * std::max(1.0, std::abs(value))) {
      std::ostringstream msg;
      msg << "kempf_ness_value: log-trace " << value
          << " disagrees with log ||x^{1/2} A y^{1/2}||^2 = " << direct;
      throw NumericalError(msg.str());
    }
  }
  return value;
}

MomentValue moment_map(const MatrixTuple& b) {
  const double norm2 = b.norm() * b.norm();
  if (!(norm2 > 0.0)) throw InvalidInstance("moment_map: zero tuple");
  const Gram g = gram(b.matrices(), b.rows(), b.cols());
  ComplexMatrix first = g.left / norm2;
  ComplexMatrix second = g.right / norm2;
  first.diagonal().array() -= 1.0 / static_cast<double>(b.rows());
  second.diagonal().array() -= 1.0 / static_cast<double>(b.cols());
  return {HermitianMatrix(first), HermitianMatrix(second)};
}

MomentValue transported_gradient(const MatrixTuple& a, const ScalingState& s) {
  check_state_dims(a, s);
  return moment_map(a.transformed(pd_sqrt(s.x), pd_sqrt(s.y)));
}

ScalingState descent_step(const MatrixTuple& a, const ScalingState& s,
                          double lipschitz) {
  if (!(lipschitz > 0.0))
    throw InvalidInstance("descent_step: L must be positive");
  const MomentValue mu = transported_gradient(a, s);
  return {transported_step(s.x, mu.first * (-1.0 / lipschitz)),
          transported_step(s.y, mu.second * (-1.0 / lipschitz))};
}

SpectralSnapshot spectral_monitor(const ScalingState& s, Index k,
                                  double lipschitz) {
  if (k < 1) throw InvalidInstance("spectral_monitor: k must be >= 1");
  const OrderedFrames f = ordered_frames(s);
  const double scale = -lipschitz / static_cast<double>(k);
  return {f.p, f.q, f.sigma, f.tau, scale * f.p, scale * f.q};
}

double default_gap_threshold(Index k, double lipschitz) {
  return std::max(1e-2, 5.0 * lipschitz / static_cast<double>(std::max<Index>(k, 1)));
}

BlockList extract_coarse_blocks(const RealVector& pstar_p,
                                const RealVector& pstar_q,
                                double gap_threshold) {
  const Index n = pstar_p.size();
  const Index m = pstar_q.size();
  if (n == 0 || m == 0)
    throw InvalidInstance("extract_coarse_blocks: empty estimate");
  for (Index i = 0; i + 1 < n; ++i)
    if (pstar_p(i + 1) > pstar_p(i) + 1e-12)
      throw InvalidInstance("extract_coarse_blocks: p estimate not nonincreasing");
  for (Index j = 0; j + 1 < m; ++j)
    if (pstar_q(j + 1) < pstar_q(j) - 1e-12)
      throw InvalidInstance("extract_coarse_blocks: q estimate not nondecreasing");

  std::vector<Index> row_sizes{1};
  for (Index i = 0; i + 1 < n; ++i) {
    if (pstar_p(i) - pstar_p(i + 1) > gap_threshold) row_sizes.push_back(0);
    ++row_sizes.back();
  }
  std::vector<Index> col_sizes{1};
  for (Index j = 0; j + 1 < m; ++j) {
    if (pstar_q(j + 1) - pstar_q(j) > gap_threshold) col_sizes.push_back(0);
    ++col_sizes.back();
  }
  if (row_sizes.size() != col_sizes.size()) {
    std::ostringstream msg;
    msg << "unresolved block structure: " << row_sizes.size()
        << " row clusters vs " << col_sizes.size()
        << " column clusters; run more iterations or raise the gap threshold";
    throw UnresolvedStructure(msg.str());
  }

  BlockList blocks;
  for (std::size_t a = 0; a < row_sizes.size(); ++a)
    blocks.push_back({row_sizes[a], col_sizes[a]});
  for (std::size_t a = 0; a + 1 < blocks.size(); ++a) {
    if (blocks[a].rows * blocks[a + 1].cols >= blocks[a + 1].rows * blocks[a].cols)
      throw UnresolvedStructure(
          "unresolved block structure: block ratios n/m are not strictly "
          "increasing; run more iterations or lower the gap threshold");
  }

  // On diagonal blocks p*_i + q*_j = 1/C - 1/n - 1/m.
  double c = 0.0;
  for (const auto& b : blocks)
    c += static_cast<double>(b.rows * b.cols) / static_cast<double>(b.rows + b.cols);
  const double target = 1.0 / c - 1.0 / static_cast<double>(n) -
                        1.0 / static_cast<double>(m);
  Index r0 = 0;
  Index c0 = 0;
  for (const auto& b : blocks) {
    const double pm = pstar_p.segment(r0, b.rows).mean();
    const double qm = pstar_q.segment(c0, b.cols).mean();
    if (std::abs(pm + qm - target) > gap_threshold) {
      std::ostringstream msg;
      msg << "unresolved block structure: block (" << b.rows << "," << b.cols
          << ") has p*+q* = " << pm + qm << ", expected " << target
          << "; run more iterations";
      throw UnresolvedStructure(msg.str());
    }
    r0 += b.rows;
    c0 += b.cols;
  }
  return blocks;
}

double offdiag_residual(const MatrixTuple& a, const ComplexMatrix& sigma,
                        const ComplexMatrix& tau, const BlockList& blocks) {
  std::vector<Index> row_start{0};
  std::vector<Index> col_start{0};
  for (const auto& b : blocks) {
    row_start.push_back(row_start.back() + b.rows);
    col_start.push_back(col_start.back() + b.cols);
  }
  if (row_start.back() != a.rows() || col_start.back() != a.cols())
    throw InvalidInstance("offdiag_residual: blocks do not partition the tuple");
  double worst = 0.0;
  for (Index l = 0; l < a.size(); ++l) {
    const ComplexMatrix m = sigma * a[l] * tau.adjoint();
    for (std::size_t al = 1; al < blocks.size(); ++al)
      for (Index i = row_start[al]; i < row_start[al + 1]; ++i)
        for (Index j = 0; j < col_start[al]; ++j)
          worst = std::max(worst, std::abs(m(i, j)));
  }
  return worst;
}

double recession_in_frame(const MatrixTuple& a, const ComplexMatrix& sigma,
                          const RealVector& p, const ComplexMatrix& tau,
                          const RealVector& q, double zero_tol) {
  const double cutoff = zero_tol * a.norm();
  double best = -std::numeric_limits<double>::infinity();
  for (Index l = 0; l < a.size(); ++l) {
    const ComplexMatrix m = sigma * a[l] * tau.adjoint();
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i)
        if (std::abs(m(i, j)) > cutoff) best = std::max(best, p(i) + q(j));
  }
  if (!std::isfinite(best))
    throw NumericalError("recession_value: no entry above the zero tolerance");
  return best;
}

double recession_value(const MatrixTuple& a, const HermitianMatrix& h,
                       const HermitianMatrix& g, double zero_tol) {
  if (h.dim() != a.rows() || g.dim() != a.cols())
    throw InvalidInstance("recession_value: dimension mismatch");
  const HermitianEigen eh = herm_eig(h);
  const HermitianEigen eg = herm_eig(g);
  return recession_in_frame(a, eh.vectors.adjoint(), eh.values,
                            eg.vectors.adjoint(), eg.values, zero_tol);
}

double check_pq_scaling(const MatrixTuple& b, const RealVector& p,
                        const RealVector& q) {
  if (p.size() != b.rows() || q.size() != b.cols())
    throw InvalidInstance("check_pq_scaling: marginal length mismatch");
  if (std::abs(p.sum() - q.sum()) > 1e-9)
    throw InvalidInstance("check_pq_scaling: marginal sums differ");
  const Gram g = gram(b.matrices(), b.rows(), b.cols());
  const ComplexMatrix dl = g.left - ComplexMatrix(p.cast<Complex>().asDiagonal());
  const ComplexMatrix dr = g.right - ComplexMatrix(q.cast<Complex>().asDiagonal());
  return std::sqrt(dl.squaredNorm() + dr.squaredNorm());
}

MatrixTuple normalized_tuple(const MatrixTuple& a, const ScalingState& s) {
  check_state_dims(a, s);
  const OrderedFrames f = ordered_frames(s);
  const double shift = 0.5 * (f.p.maxCoeff() + f.q.maxCoeff());
  std::vector<ComplexMatrix> out;
  for (Index l = 0; l < a.size(); ++l) {
    ComplexMatrix m = f.sigma * a[l] * f.tau.adjoint();
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i)
        m(i, j) *= std::exp(0.5 * (f.p(i) + f.q(j)) - shift);
    out.push_back(std::move(m));
  }
  MatrixTuple t(std::move(out), KernelCheck::Skip);
  return t.scaled(1.0 / t.norm());
}

double escape_lower_bound(const MatrixTuple& a, const ComplexMatrix& sigma,
                          const RealVector& p, const ComplexMatrix& tau,
                          const RealVector& q, const MomentEstimate* estimate,
                          double zero_tol) {
  // Directions must be traceless; rounding can leave a common shift that
  // would otherwise dominate a near-zero direction.
  auto try_direction = [&](RealVector dp, RealVector dq, double& best) {
    dp.array() -= dp.mean();
    dq.array() -= dq.mean();
    const double len = std::sqrt(dp.squaredNorm() + dq.squaredNorm());
    if (len > 0.0)
      best = std::max(best, -recession_in_frame(a, sigma, dp / len, tau,
                                                dq / len, zero_tol));
  };
  double best = -std::numeric_limits<double>::infinity();
  try_direction(p, q, best);
  if (estimate != nullptr && estimate->p.size() == p.size() &&
      estimate->q.size() == q.size())
    try_direction(-estimate->p, -estimate->q, best);
  return std::isfinite(best) ? best : 0.0;
}

// ---------------------------------------------------------------------------
// OperatorDescent

namespace {

bool single_entry(const ComplexMatrix& m, Index& row, Index& col) {
  Index count = 0;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != Complex(0.0, 0.0)) {
        ++count;
        row = i;
        col = j;
      }
  return count <= 1;
}

// One Newton-Schulz step towards the nearest unitary; keeps accumulated
// products from drifting off the unitary group.
void reunitarize(ComplexMatrix& u) {
  const Index n = u.cols();
  const ComplexMatrix gram = u.adjoint() * u;
  u = u * (1.5 * ComplexMatrix::Identity(n, n) - 0.5 * gram);
}

ComplexMatrix reversal(Index n) {
  return ComplexMatrix::Identity(n, n).colwise().reverse();
}

std::vector<Index> block_starts(const BlockList& blocks, bool rows) {
  std::vector<Index> out{0};
  for (const auto& b : blocks) out.push_back(out.back() + (rows ? b.rows : b.cols));
  return out;
}

// Largest |m(i, j)| over strictly lower block positions.
double lower_block_max(const ComplexMatrix& m, const BlockList& blocks) {
  const auto rs = block_starts(blocks, true);
  const auto cs = block_starts(blocks, false);
  double worst = 0.0;
  for (std::size_t al = 1; al < blocks.size(); ++al)
    for (Index i = rs[al]; i < rs[al + 1]; ++i)
      for (Index j = 0; j < cs[al]; ++j) worst = std::max(worst, std::abs(m(i, j)));
  return worst;
}

void zero_lower_blocks(ComplexMatrix& m, const BlockList& blocks) {
  const auto rs = block_starts(blocks, true);
  const auto cs = block_starts(blocks, false);
  for (std::size_t al = 1; al < blocks.size(); ++al)
    m.block(rs[al], 0, rs[al + 1] - rs[al], cs[al]).setZero();
}

// True if every boundary of `coarse` is also a boundary of `fine` and `fine`
// has more blocks.
bool refines(const BlockList& fine, const BlockList& coarse) {
  if (coarse.empty()) return fine.size() >= 2;
  if (fine.size() <= coarse.size()) return false;
  const auto fr = block_starts(fine, true);
  const auto fc = block_starts(fine, false);
  const auto cr = block_starts(coarse, true);
  const auto cc = block_starts(coarse, false);
  for (std::size_t a = 0; a < cr.size(); ++a) {
    bool found = false;
    for (std::size_t b = 0; b < fr.size(); ++b)
      if (fr[b] == cr[a] && fc[b] == cc[a]) found = true;
    if (!found) return false;
  }
  return true;
}

std::vector<Index> ascending_order(const RealVector& v) {
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Index a, Index b) { return v(a) < v(b); });
  return idx;
}

ComplexMatrix permutation_frame(const std::vector<Index>& order) {
  const Index n = static_cast<Index>(order.size());
  ComplexMatrix f = ComplexMatrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) f(i, order[static_cast<std::size_t>(i)]) = 1.0;
  return f;
}

}  // namespace

double estimate_gap_threshold(const MomentEstimate& e) {
  return std::max(1e-6, 10.0 * e.error);
}

OperatorDescent::OperatorDescent(MatrixTuple a, double lipschitz,
                                 LockPolicy policy)
    : a_(std::move(a)), lipschitz_(lipschitz), policy_(policy) {
  if (!(lipschitz_ > 0.0))
    throw InvalidInstance("OperatorDescent: L must be positive");
  if (policy_.check_every < 1)
    throw InvalidInstance("OperatorDescent: lock check interval must be >= 1");
  const Index n = a_.rows();
  const Index m = a_.cols();
  const double norm = a_.norm();
  value_ = 2.0 * std::log(norm);

  diagonal_ = true;
  for (const auto& al : a_.matrices()) {
    Index r = -1;
    Index c = -1;
    if (!single_entry(al, r, c)) {
      diagonal_ = false;
      break;
    }
    if (r >= 0) {
      diag_row_.push_back(r);
      diag_col_.push_back(c);
    }
  }
  if (diagonal_) {
    diag_coef_.resize(static_cast<Index>(diag_row_.size()));
    for (std::size_t l = 0, t = 0; l < a_.matrices().size(); ++l) {
      Index r = -1;
      Index c = -1;
      single_entry(a_.matrices()[l], r, c);
      if (r >= 0) diag_coef_(static_cast<Index>(t++)) = a_.matrices()[l](r, c) / norm;
    }
    diag_log_x_ = RealVector::Zero(n);
    diag_log_y_ = RealVector::Zero(m);
  } else {
    current_ = a_;
    lock_left_ = ComplexMatrix::Identity(n, n);
    lock_right_ = ComplexMatrix::Identity(m, m);
    balanced_.reserve(static_cast<std::size_t>(a_.size()));
    for (const auto& al : a_.matrices()) balanced_.push_back(al / norm);
    link_x_ = ComplexMatrix::Identity(n, n);
    link_y_ = ComplexMatrix::Identity(m, m);
    frame_x_ = ComplexMatrix::Identity(n, n);
    frame_y_ = ComplexMatrix::Identity(m, m);
    log_x_ = RealVector::Zero(n);
    log_y_ = RealVector::Zero(m);
  }
  refresh_moment();
}

void OperatorDescent::refresh_moment() {
  const Index n = a_.rows();
  const Index m = a_.cols();
  if (diagonal_) {
    diag_mu_x_ = RealVector::Zero(n);
    diag_mu_y_ = RealVector::Zero(m);
    double tr = 0.0;
    for (Index l = 0; l < diag_coef_.size(); ++l) {
      const double w = std::norm(diag_coef_(l));
      diag_mu_x_(diag_row_[static_cast<std::size_t>(l)]) += w;
      diag_mu_y_(diag_col_[static_cast<std::size_t>(l)]) += w;
      tr += w;
    }
    diag_mu_x_ = (diag_mu_x_ / tr).array() - 1.0 / static_cast<double>(n);
    diag_mu_y_ = (diag_mu_y_ / tr).array() - 1.0 / static_cast<double>(m);
    mu_norm_ = std::sqrt(diag_mu_x_.squaredNorm() + diag_mu_y_.squaredNorm());
    return;
  }
  const Gram g = gram(balanced_, n, m);
  const double tr = g.left.trace().real();
  mu_first_ = g.left / tr;
  mu_second_ = g.right / tr;
  mu_first_.diagonal().array() -= 1.0 / static_cast<double>(n);
  mu_second_.diagonal().array() -= 1.0 / static_cast<double>(m);
  mu_first_ = HermitianMatrix(mu_first_).matrix();
  mu_second_ = HermitianMatrix(mu_second_).matrix();
  mu_norm_ = std::sqrt(mu_first_.squaredNorm() + mu_second_.squaredNorm());
}

void OperatorDescent::diagonal_step() {
  const double half_step = -0.5 / lipschitz_;
  double norm2 = 0.0;
  for (Index l = 0; l < diag_coef_.size(); ++l) {
    const auto idx = static_cast<std::size_t>(l);
    diag_coef_(l) *= std::exp(half_step * (diag_mu_x_(diag_row_[idx]) +
                                           diag_mu_y_(diag_col_[idx])));
    norm2 += std::norm(diag_coef_(l));
  }
  diag_coef_ /= std::sqrt(norm2);
  value_ += std::log(norm2);
  diag_log_x_ -= diag_mu_x_ / lipschitz_;
  diag_log_y_ -= diag_mu_y_ / lipschitz_;
  diag_log_x_.array() -= diag_log_x_.mean();
  diag_log_y_.array() -= diag_log_y_.mean();
}

void OperatorDescent::general_step() {
  const double half_step = -0.5 / lipschitz_;
  const ComplexMatrix left =
      herm_exp(HermitianMatrix(mu_first_) * half_step).matrix();
  const ComplexMatrix right =
      herm_exp(HermitianMatrix(mu_second_) * half_step).matrix();

  // left = Q R and right = P Lt with R upper and Lt lower triangular. The
  // balanced tuple becomes R D Lt^H, which keeps exact zero blocks.
  ComplexMatrix q_left;
  ComplexMatrix r_left;
  ComplexMatrix p_right;
  ComplexMatrix l_right;
  const bool locked = !locked_.empty();
  if (locked) {
    Eigen::HouseholderQR<ComplexMatrix> qr(left);
    q_left = qr.householderQ();
    r_left = qr.matrixQR().triangularView<Eigen::Upper>();
    Eigen::HouseholderQR<ComplexMatrix> ql(right.reverse());
    p_right = ComplexMatrix(ql.householderQ()).reverse();
    l_right = ComplexMatrix(ql.matrixQR().triangularView<Eigen::Upper>()).reverse();
  }

  double norm2 = 0.0;
  for (auto& d : balanced_) {
    d = locked ? ComplexMatrix(r_left * d * l_right.adjoint())
               : ComplexMatrix(left * d * right);
    norm2 += d.squaredNorm();
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& d : balanced_) d *= inv;
  value_ += std::log(norm2);

  {
    const GradedSvd svd =
        graded_svd(link_x_ * left * link_x_.adjoint(), 0.5 * log_x_);
    link_x_ = svd.left.adjoint() * link_x_;
    if (locked) link_x_ = link_x_ * q_left;
    frame_x_ = svd.right.adjoint() * frame_x_;
    log_x_ = 2.0 * svd.log_singular;
    log_x_.array() -= log_x_.mean();
  }
  {
    const GradedSvd svd =
        graded_svd(link_y_ * right * link_y_.adjoint(), 0.5 * log_y_);
    link_y_ = svd.left.adjoint() * link_y_;
    if (locked) link_y_ = link_y_ * p_right;
    frame_y_ = svd.right.adjoint() * frame_y_;
    log_y_ = 2.0 * svd.log_singular;
    log_y_.array() -= log_y_.mean();
  }
  if ((k_ + 1) % 64 == 0) {
    reunitarize(link_x_);
    reunitarize(link_y_);
    reunitarize(frame_x_);
    reunitarize(frame_y_);
  }
}

void OperatorDescent::step() {
  const double prev_value = value_;
  const double prev_mu = mu_norm_;
  if (diagonal_)
    diagonal_step();
  else
    general_step();
  ++k_;
  refresh_moment();

  if (value_ > prev_value - mu_norm_ * mu_norm_ / lipschitz_ + 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "descent inequality F(k+1) <= F(k) - |grad(k+1)|^2/L violated at "
           "iteration "
        << k_ << ": " << value_ << " > " << prev_value << " - "
        << mu_norm_ * mu_norm_ / lipschitz_;
    throw NumericalError(msg.str());
  }
  if (mu_norm_ > prev_mu + std::max(1e-10 * prev_mu, 1e-13)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "gradient norm increased at iteration " << k_ << ": " << prev_mu
        << " -> " << mu_norm_;
    throw NumericalError(msg.str());
  }

  if ((k_ & (k_ - 1)) == 0) checkpoints_.emplace_back(k_, estimate());
  if (policy_.enabled && !diagonal_ && k_ >= policy_.first_check &&
      k_ % policy_.check_every == 0)
    try_auto_lock();
}

void OperatorDescent::run(Index steps) {
  for (Index s = 0; s < steps; ++s) step();
}

OperatorDescent::Frames OperatorDescent::frames() const {
  if (diagonal_) {
    const auto ox = ascending_order(diag_log_x_);
    const auto oy = ascending_order(diag_log_y_);
    Frames f{permutation_frame(ox), RealVector(diag_log_x_.size()),
             permutation_frame(oy), RealVector(diag_log_y_.size())};
    for (std::size_t i = 0; i < ox.size(); ++i)
      f.log_x(static_cast<Index>(i)) = diag_log_x_(ox[i]);
    for (std::size_t j = 0; j < oy.size(); ++j)
      f.log_y(static_cast<Index>(j)) = diag_log_y_(oy[j]);
    return f;
  }
  return {frame_x_ * lock_left_, log_x_, frame_y_ * lock_right_, log_y_};
}

MomentValue OperatorDescent::moment() const {
  if (diagonal_)
    return {HermitianMatrix::diagonal(diag_mu_x_),
            HermitianMatrix::diagonal(diag_mu_y_)};
  const ComplexMatrix bx = link_x_.adjoint() * frame_x_ * lock_left_;
  const ComplexMatrix by = link_y_.adjoint() * frame_y_ * lock_right_;
  return {HermitianMatrix(bx.adjoint() * mu_first_ * bx),
          HermitianMatrix(by.adjoint() * mu_second_ * by)};
}

MomentEstimate OperatorDescent::estimate() const {
  MomentEstimate e;
  if (diagonal_) {
    e.p = diag_mu_x_;
    e.q = diag_mu_y_;
    std::sort(e.p.data(), e.p.data() + e.p.size(), std::greater<>());
    std::sort(e.q.data(), e.q.data() + e.q.size());
  } else {
    const WeylSpectrum w =
        weyl_spec(HermitianMatrix(mu_first_), HermitianMatrix(mu_second_));
    e.p = w.p;
    e.q = w.q;
  }
  // Drift since the latest checkpoint at or before k/2, scaled to an error
  // estimate that is conservative for both O(1/k) and linear convergence.
  for (auto it = checkpoints_.rbegin(); it != checkpoints_.rend(); ++it) {
    const Index kr = it->first;
    if (kr >= 1 && 2 * kr <= k_) {
      const double drift =
          std::max((e.p - it->second.p).cwiseAbs().maxCoeff(),
                   (e.q - it->second.q).cwiseAbs().maxCoeff());
      e.error = drift * static_cast<double>(kr) / static_cast<double>(k_ - kr);
      break;
    }
  }
  return e;
}

ScalingState OperatorDescent::state() const {
  const Frames f = frames();
  return {PdUnitDetMatrix::from_spectral(f.sigma, f.log_x),
          PdUnitDetMatrix::from_spectral(f.tau, f.log_y)};
}

SpectralSnapshot OperatorDescent::monitor() const {
  if (k_ < 1) throw InvalidInstance("monitor: no iteration performed yet");
  const Frames fr = frames();
  const OrderedFrames f = ordered_frames(fr.sigma, fr.log_x, fr.tau, fr.log_y);
  const double scale = -lipschitz_ / static_cast<double>(k_);
  return {f.p, f.q, f.sigma, f.tau, scale * f.p, scale * f.q};
}

MatrixTuple OperatorDescent::normalized_tuple() const {
  std::vector<ComplexMatrix> out;
  if (diagonal_) {
    const auto ox = ascending_order(diag_log_x_);
    const auto oy = ascending_order(diag_log_y_);
    const Index n = a_.rows();
    const Index m = a_.cols();
    std::vector<Index> rank_x(static_cast<std::size_t>(n));
    std::vector<Index> rank_y(static_cast<std::size_t>(m));
    for (Index i = 0; i < n; ++i) rank_x[static_cast<std::size_t>(ox[static_cast<std::size_t>(i)])] = i;
    for (Index j = 0; j < m; ++j) rank_y[static_cast<std::size_t>(oy[static_cast<std::size_t>(j)])] = m - 1 - j;
    for (Index l = 0; l < diag_coef_.size(); ++l) {
      ComplexMatrix e = ComplexMatrix::Zero(n, m);
      const auto idx = static_cast<std::size_t>(l);
      e(rank_x[static_cast<std::size_t>(diag_row_[idx])],
        rank_y[static_cast<std::size_t>(diag_col_[idx])]) = diag_coef_(l);
      out.push_back(std::move(e));
    }
    return MatrixTuple(std::move(out), KernelCheck::Skip);
  }
  out.reserve(balanced_.size());
  for (const auto& d : balanced_)
    out.push_back((link_x_ * d * link_y_.adjoint()).rowwise().reverse());
  return MatrixTuple(std::move(out), KernelCheck::Skip);
}

double OperatorDescent::duality_lower_bound(double zero_tol) const {
  const Frames fr = frames();
  const OrderedFrames f = ordered_frames(fr.sigma, fr.log_x, fr.tau, fr.log_y);
  const MomentEstimate e = estimate();
  return escape_lower_bound(a_, f.sigma, f.p, f.tau, f.q, &e,
                            certified_support_tol(events_, zero_tol));
}

void OperatorDescent::try_auto_lock() {
  const MomentEstimate e = estimate();
  if (!std::isfinite(e.error)) return;
  BlockList blocks;
  try {
    blocks = extract_coarse_blocks(e.p, e.q, estimate_gap_threshold(e));
  } catch (const UnresolvedStructure&) {
    pending_.clear();
    return;
  }
  if (blocks.size() < 2 || blocks == locked_ || !refines(blocks, locked_)) {
    pending_.clear();
    return;
  }
  if (deflate(blocks, policy_.residual_tol, policy_.balanced_tol)) {
    pending_.clear();
    return;
  }
  // The discarded entries shrink until rounding errors, which the dynamics
  // amplifies below the diagonal, take over. The first stall of their decay
  // marks the best deflation this run will see.
  const double lower = balanced_lower_max(blocks);
  const bool same = blocks == pending_;
  const double ratio = same ? lower / pending_lower_ : 1.0;
  const bool stalled =
      same && (ratio > 1.0 || (pending_ratio_ < 1.0 && ratio > std::sqrt(pending_ratio_)));
  pending_ = blocks;
  pending_lower_ = lower;
  pending_ratio_ = ratio;
  if (stalled &&
      deflate(blocks, policy_.fallback_residual_tol, policy_.fallback_balanced_tol))
    pending_.clear();
}

double OperatorDescent::balanced_lower_max(const BlockList& blocks) const {
  double out = 0.0;
  for (const auto& d : balanced_) {
    const ComplexMatrix nt = (link_x_ * d * link_y_.adjoint()).rowwise().reverse();
    out = std::max(out, lower_block_max(nt, blocks));
  }
  return out;
}

bool OperatorDescent::lock_structure(const BlockList& blocks) {
  return deflate(blocks, policy_.residual_tol, policy_.balanced_tol);
}

bool OperatorDescent::deflate(const BlockList& blocks, double residual_tol,
                              double balanced_tol) {
  if (diagonal_) return false;
  const Index n = a_.rows();
  const Index m = a_.cols();
  {
    Index rs = 0;
    Index cs = 0;
    for (const auto& b : blocks) {
      if (b.rows < 1 || b.cols < 1)
        throw InvalidInstance("lock_structure: empty block");
      rs += b.rows;
      cs += b.cols;
    }
    if (rs != n || cs != m)
      throw InvalidInstance("lock_structure: blocks do not partition the tuple");
  }
  if (blocks.size() < 2) return false;

  // Normalized tuple in the monitor frame: its lower blocks are what the
  // deflation discards from the balanced iterate.
  if (balanced_lower_max(blocks) > balanced_tol) return false;

  const ComplexMatrix sigma = frame_x_;
  const ComplexMatrix tau = frame_y_.colwise().reverse();  // q descending
  const RealVector p = log_x_;
  const RealVector q = log_y_.reverse();
  const double scale = a_.norm();
  double residual = 0.0;
  double zeroed2 = 0.0;
  std::vector<ComplexMatrix> rotated;
  for (const auto& c : current_.matrices()) {
    ComplexMatrix r = sigma * c * tau.adjoint();
    residual = std::max(residual, lower_block_max(r, blocks) / scale);
    const double before = r.squaredNorm();
    zero_lower_blocks(r, blocks);
    zeroed2 += std::max(before - r.squaredNorm(), 0.0);
    rotated.push_back(std::move(r));
  }
  if (residual > residual_tol) return false;

  const double shift = 0.5 * (p.maxCoeff() + q.maxCoeff());
  std::vector<ComplexMatrix> balanced;
  double norm2 = 0.0;
  for (const auto& r : rotated) {
    ComplexMatrix d = r;
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) d(i, j) *= std::exp(0.5 * (p(i) + q(j)) - shift);
    norm2 += d.squaredNorm();
    balanced.push_back(std::move(d));
  }
  for (auto& d : balanced) d /= std::sqrt(norm2);
  const double value = 2.0 * shift + std::log(norm2);

  // Swap in, and roll back if the deflation moved the trajectory.
  const double old_value = value_;
  const double old_mu = mu_norm_;
  std::swap(balanced_, balanced);
  const ComplexMatrix old_mu_first = mu_first_;
  const ComplexMatrix old_mu_second = mu_second_;
  refresh_moment();
  const double jump = mu_norm_ - old_mu;
  if (value > old_value + 1e-10 || jump > policy_.mu_jump_tol) {
    std::swap(balanced_, balanced);
    mu_first_ = old_mu_first;
    mu_second_ = old_mu_second;
    mu_norm_ = old_mu;
    return false;
  }
  value_ = value;
  current_ = MatrixTuple(std::move(rotated), KernelCheck::Skip);
  lock_left_ = sigma * lock_left_;
  lock_right_ = tau * lock_right_;
  link_x_ = ComplexMatrix::Identity(n, n);
  link_y_ = reversal(m);
  frame_x_ = ComplexMatrix::Identity(n, n);
  frame_y_ = reversal(m);
  locked_ = blocks;
  events_.push_back({k_, blocks, residual, std::sqrt(zeroed2) / scale, std::max(jump, 0.0)});
  return true;
}

// ---------------------------------------------------------------------------

OpDescentTrace run_descent(const MatrixTuple& a, Index iters, Index log_every,
                           const DescentOptions& options) {
  if (iters < 1) throw InvalidInstance("run_descent: iters must be >= 1");
  if (log_every < 1) throw InvalidInstance("run_descent: log_every must be >= 1");
  OperatorDescent descent(a, options.lipschitz, options.lock);
  OpDescentTrace trace;
  trace.lipschitz = options.lipschitz;

  auto log_entry = [&] {
    const ScalingState s = descent.state();
    const OrderedFrames f = ordered_frames(s);
    TraceEntry e;
    e.k = descent.iteration();
    e.value = descent.value();
    e.mu_norm = descent.moment_norm();
    e.p = f.p;
    e.q = f.q;
    e.sigma = f.sigma;
    e.tau = f.tau;
    e.lower_bound = descent.duality_lower_bound();
    e.upper_bound = e.mu_norm;
    if (e.lower_bound > e.upper_bound + 1e-9) {
      std::ostringstream msg;
      msg << "weak duality violated at iteration " << e.k << ": lower "
          << e.lower_bound << " > upper " << e.upper_bound
          << " (rounding errors below the support tolerance have taken over "
             "the iterate; typically because the structure lock is disabled or never fired)";
      throw NumericalError(msg.str());
    }
    trace.entries.push_back(std::move(e));
  };

  log_entry();
  for (Index k = 1; k <= iters; ++k) {
    descent.step();
    if (k % log_every == 0 || k == iters) log_entry();
  }
  trace.iterations = iters;
  trace.final_state = descent.state();
  trace.final_moment = descent.moment();
  trace.final_normalized = descent.normalized_tuple();
  trace.final_estimate = descent.estimate();
  trace.locks = descent.lock_events();
  return trace;
}

void fill_offdiag_residuals(OpDescentTrace& trace, const MatrixTuple& a,
                            const BlockList& blocks) {
  for (auto& e : trace.entries)
    e.offdiag_residual = offdiag_residual(a, e.sigma, e.tau, blocks);
}

double certified_support_tol(const std::vector<LockEvent>& locks, double zero_tol) {
  double err = 0.0;
  for (const auto& l : locks) err += l.backward_error;
  return std::max(zero_tol, 10.0 * err);
}

DualityCertificate duality_certificate(const MatrixTuple& a,
                                       const OpDescentTrace& trace) {
  if (trace.entries.empty())
    throw InvalidInstance("duality_certificate: empty trace");
  const TraceEntry& e = trace.entries.back();
  DualityCertificate cert;
  cert.upper = e.mu_norm;
  const bool final_entry = e.k == trace.iterations && trace.iterations > 0;
  cert.lower = escape_lower_bound(a, e.sigma, e.p, e.tau, e.q,
                                  final_entry ? &trace.final_estimate : nullptr,
                                  certified_support_tol(trace.locks));
  if (cert.lower > cert.upper + 1e-9)
    throw NumericalError("duality_certificate: lower bound exceeds upper bound");
  return cert;
}

Scalability classify(const OpDescentTrace& trace) {
  if (trace.entries.size() < 2) return Scalability::ScalableOrUndecided;
  const double last = trace.entries.back().mu_norm;
  const double prev = trace.entries[trace.entries.size() - 2].mu_norm;
  if (last > 1e-2 && last > 10.0 * (prev - last)) return Scalability::Unscalable;
  return Scalability::ScalableOrUndecided;
}

}  // namespace unbflow
