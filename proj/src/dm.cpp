#include "unbflow/dm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unbflow/error.hpp"

namespace unbflow {

namespace {

double orthonormality_defect(const ComplexMatrix& rows) {
  if (rows.rows() == 0) return 0.0;
  const ComplexMatrix g = rows * rows.adjoint();
  return (g - ComplexMatrix::Identity(rows.rows(), rows.rows())).cwiseAbs().maxCoeff();
}

// Orthonormal basis rows of the row space of `m`, of the requested rank.
ComplexMatrix row_basis(const ComplexMatrix& m, Index rank) {
  if (rank == 0) return ComplexMatrix(0, m.cols());
  Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullV);
  return svd.matrixV().leftCols(rank).adjoint();
}

ComplexMatrix coordinate_rows(const std::vector<Index>& idx, Index dim) {
  ComplexMatrix r = ComplexMatrix::Zero(static_cast<Index>(idx.size()), dim);
  for (std::size_t i = 0; i < idx.size(); ++i) r(static_cast<Index>(i), idx[i]) = 1.0;
  return r;
}

}  // namespace

PairCheck verify_pair(const MatrixTuple& a, const SubspacePair& pair,
                      double tol) {
  if (pair.x.cols() != a.rows() || pair.y.cols() != a.cols())
    throw InvalidInstance("verify_pair: subspace dimensions do not match the tuple");
  PairCheck out;
  if (pair.x.rows() > 0 && pair.y.rows() > 0) {
    for (Index l = 0; l < a.size(); ++l)
      out.violation = std::max(
          out.violation, (pair.x * a[l] * pair.y.adjoint()).cwiseAbs().maxCoeff());
  }
  out.member = out.violation <= tol;
  return out;
}

void validate_blocks(const BlockList& blocks) {
  if (blocks.empty()) throw InvalidInstance("block list is empty");
  for (const auto& b : blocks)
    if (b.rows < 1 || b.cols < 1)
      throw InvalidInstance("block sizes must be positive");
  for (std::size_t a = 0; a + 1 < blocks.size(); ++a) {
    if (blocks[a].rows * blocks[a + 1].cols >= blocks[a + 1].rows * blocks[a].cols) {
      std::ostringstream msg;
      msg << "block ratios must strictly increase: (" << blocks[a].rows << ","
          << blocks[a].cols << ") then (" << blocks[a + 1].rows << ","
          << blocks[a + 1].cols << ")";
      throw InvalidInstance(msg.str());
    }
  }
}

void validate_flag(const CoarseDmFlag& flag) {
  validate_blocks(flag.blocks);
  if (flag.chain.size() != flag.blocks.size() + 1)
    throw InvalidInstance("flag chain length does not match block count");
  Index n = 0;
  Index m = 0;
  for (const auto& b : flag.blocks) {
    n += b.rows;
    m += b.cols;
  }
  Index xdim = n;
  Index ydim = 0;
  for (std::size_t a = 0; a < flag.chain.size(); ++a) {
    const SubspacePair& p = flag.chain[a];
    if (a > 0) {
      xdim -= flag.blocks[a - 1].rows;
      ydim += flag.blocks[a - 1].cols;
    }
    if (p.x.rows() != xdim || p.y.rows() != ydim || p.x.cols() != n || p.y.cols() != m)
      throw InvalidInstance("flag subspace dimensions are inconsistent with its blocks");
    if (orthonormality_defect(p.x) > 1e-10 || orthonormality_defect(p.y) > 1e-10)
      throw InvalidInstance("flag basis rows are not orthonormal");
  }
}

DmReport dm_report(const BlockList& blocks) {
  validate_blocks(blocks);
  Index n = 0;
  Index m = 0;
  double c = 0.0;
  for (const auto& b : blocks) {
    n += b.rows;
    m += b.cols;
    c += static_cast<double>(b.rows * b.cols) / static_cast<double>(b.rows + b.cols);
  }
  DmReport r;
  r.blocks = blocks;
  r.c_a = c;
  r.p_star.resize(n);
  r.q_star.resize(m);
  Index i0 = 0;
  Index j0 = 0;
  for (const auto& b : blocks) {
    const double s = static_cast<double>(b.rows + b.cols);
    r.p_star.segment(i0, b.rows).setConstant(-1.0 / static_cast<double>(n) +
                                             static_cast<double>(b.cols) / (c * s));
    r.q_star.segment(j0, b.cols).setConstant(-1.0 / static_cast<double>(m) +
                                             static_cast<double>(b.rows) / (c * s));
    i0 += b.rows;
    j0 += b.cols;
  }
  const double norm2 = r.p_star.squaredNorm() + r.q_star.squaredNorm();
  const double closed = 1.0 / c - 1.0 / static_cast<double>(n) - 1.0 / static_cast<double>(m);
  if (std::abs(norm2 - closed) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "dm_report: ||(p*,q*)||^2 = " << norm2 << " but 1/C - 1/n - 1/m = " << closed;
    throw NumericalError(msg.str());
  }
  r.min_norm = std::sqrt(norm2);
  return r;
}

CoarseDmFlag flag_from_unitaries(const ComplexMatrix& sigma,
                                 const ComplexMatrix& tau,
                                 const BlockList& blocks) {
  validate_blocks(blocks);
  Index n = 0;
  Index m = 0;
  for (const auto& b : blocks) {
    n += b.rows;
    m += b.cols;
  }
  if (sigma.rows() != n || sigma.cols() != n || tau.rows() != m || tau.cols() != m)
    throw InvalidInstance("flag_from_unitaries: unitaries do not match the blocks");
  CoarseDmFlag flag;
  flag.blocks = blocks;
  Index taken_rows = 0;
  Index taken_cols = 0;
  flag.chain.push_back({sigma, ComplexMatrix(0, m)});
  for (const auto& b : blocks) {
    taken_rows += b.rows;
    taken_cols += b.cols;
    flag.chain.push_back({sigma.bottomRows(n - taken_rows), tau.topRows(taken_cols)});
  }
  return flag;
}

CoarseDmFlag coordinate_dm_bruteforce(const RealMatrix& mabs2) {
  const Index n = mabs2.rows();
  const Index m = mabs2.cols();
  if (n < 1 || m < 1) throw InvalidInstance("coordinate_dm_bruteforce: empty matrix");
  if (n > 8 || m > 8)
    throw InvalidInstance("coordinate_dm_bruteforce: refusing sizes above 8x8");
  if ((mabs2.array() < 0.0).any() || !mabs2.allFinite())
    throw InvalidInstance("coordinate_dm_bruteforce: entries must be nonnegative");
  for (Index i = 0; i < n; ++i)
    if (!(mabs2.row(i).maxCoeff() > 0.0))
      throw InvalidInstance("coordinate_dm_bruteforce: zero row " + std::to_string(i));
  for (Index j = 0; j < m; ++j)
    if (!(mabs2.col(j).maxCoeff() > 0.0))
      throw InvalidInstance("coordinate_dm_bruteforce: zero column " + std::to_string(j));

  // Column support of each row as a bit mask.
  std::vector<unsigned> support(static_cast<std::size_t>(n), 0u);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      if (mabs2(i, j) > 0.0) support[static_cast<std::size_t>(i)] |= 1u << j;

  const unsigned all_cols = (1u << m) - 1u;
  std::vector<long> best(static_cast<std::size_t>(n + 1), -1);
  std::vector<unsigned> best_rows(static_cast<std::size_t>(n + 1), 0u);
  for (unsigned rows = 0; rows < (1u << n); ++rows) {
    unsigned used = 0;
    for (Index i = 0; i < n; ++i)
      if (rows & (1u << i)) used |= support[static_cast<std::size_t>(i)];
    const long r = __builtin_popcount(rows);
    const long c = __builtin_popcount(all_cols & ~used);
    if (c > best[static_cast<std::size_t>(r)]) {
      best[static_cast<std::size_t>(r)] = c;
      best_rows[static_cast<std::size_t>(r)] = rows;
    }
  }

  // Upper hull of (r, best[r]), r = 0..n, dropping collinear points.
  std::vector<long> hull;
  for (long r = 0; r <= n; ++r) {
    while (hull.size() >= 2) {
      const long o = hull[hull.size() - 2];
      const long a = hull.back();
      const long cross = (a - o) * (best[static_cast<std::size_t>(r)] - best[static_cast<std::size_t>(o)]) -
                         (best[static_cast<std::size_t>(a)] - best[static_cast<std::size_t>(o)]) * (r - o);
      if (cross >= 0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(r);
  }

  CoarseDmFlag flag;
  for (auto it = hull.rbegin(); it != hull.rend(); ++it) {
    const unsigned rows = best_rows[static_cast<std::size_t>(*it)];
    unsigned used = 0;
    std::vector<Index> ri;
    for (Index i = 0; i < n; ++i)
      if (rows & (1u << i)) {
        ri.push_back(i);
        used |= support[static_cast<std::size_t>(i)];
      }
    std::vector<Index> ci;
    for (Index j = 0; j < m; ++j)
      if (!(used & (1u << j))) ci.push_back(j);
    flag.chain.push_back({coordinate_rows(ri, n), coordinate_rows(ci, m)});
  }
  for (std::size_t a = 1; a < flag.chain.size(); ++a)
    flag.blocks.push_back({flag.chain[a - 1].x.rows() - flag.chain[a].x.rows(),
                           flag.chain[a].y.rows() - flag.chain[a - 1].y.rows()});
  validate_flag(flag);
  return flag;
}

std::pair<ComplexMatrix, ComplexMatrix> flag_frame(const CoarseDmFlag& flag) {
  validate_flag(flag);
  const Index n = flag.chain.front().x.cols();
  const Index m = flag.chain.front().y.cols();
  ComplexMatrix sigma(n, n);
  ComplexMatrix tau(m, m);
  Index r0 = 0;
  Index c0 = 0;
  for (std::size_t a = 1; a < flag.chain.size(); ++a) {
    const BlockShape& b = flag.blocks[a - 1];
    const ComplexMatrix& xn = flag.chain[a].x;
    const ComplexMatrix px = ComplexMatrix::Identity(n, n) - xn.adjoint() * xn;
    sigma.middleRows(r0, b.rows) = row_basis(flag.chain[a - 1].x * px, b.rows);
    const ComplexMatrix& yp = flag.chain[a - 1].y;
    const ComplexMatrix py = ComplexMatrix::Identity(m, m) - yp.adjoint() * yp;
    tau.middleRows(c0, b.cols) = row_basis(flag.chain[a].y * py, b.cols);
    r0 += b.rows;
    c0 += b.cols;
  }
  return {sigma, tau};
}

MatrixTuple diagonalize_dm(const MatrixTuple& a, const CoarseDmFlag& flag) {
  validate_flag(flag);
  if (flag.chain.front().x.cols() != a.rows() || flag.chain.front().y.cols() != a.cols())
    throw InvalidInstance("diagonalize_dm: flag dimensions do not match the tuple");
  const double tol = 1e-6 * a.norm();
  for (std::size_t al = 0; al < flag.chain.size(); ++al) {
    const PairCheck c = verify_pair(a, flag.chain[al], tol);
    if (!c.member) {
      std::ostringstream msg;
      msg << "diagonalize_dm: flag pair " << al << " does not annihilate the tuple (violation "
          << c.violation << ")";
      throw InvalidInstance(msg.str());
    }
  }
  const auto [sigma, tau] = flag_frame(flag);
  std::vector<ComplexMatrix> out;
  for (Index l = 0; l < a.size(); ++l) {
    const ComplexMatrix b = sigma * a[l] * tau.adjoint();
    ComplexMatrix d = ComplexMatrix::Zero(b.rows(), b.cols());
    Index r0 = 0;
    Index c0 = 0;
    for (const auto& blk : flag.blocks) {
      d.block(r0, c0, blk.rows, blk.cols) = b.block(r0, c0, blk.rows, blk.cols);
      r0 += blk.rows;
      c0 += blk.cols;
    }
    out.push_back(std::move(d));
  }
  Index r0 = 0;
  Index c0 = 0;
  for (std::size_t al = 0; al < flag.blocks.size(); ++al) {
    const BlockShape& blk = flag.blocks[al];
    std::vector<ComplexMatrix> part;
    for (const auto& d : out) part.push_back(d.block(r0, c0, blk.rows, blk.cols));
    try {
      MatrixTuple check(std::move(part), KernelCheck::Enforce);
    } catch (const InvalidInstance& e) {
      std::ostringstream msg;
      msg << "diagonalize_dm: diagonal block " << al + 1 << " (" << blk.rows << "x"
          << blk.cols << ") lost trivial kernels, so the flag is not the coarse one: "
          << e.what();
      throw InvalidInstance(msg.str());
    }
    r0 += blk.rows;
    c0 += blk.cols;
  }
  return MatrixTuple(std::move(out), KernelCheck::Skip);
}

MatrixTuple scale_diagonal_blocks(const MatrixTuple& bhat, const BlockList& blocks,
                                  Index iters) {
  const DmReport report = dm_report(blocks);
  std::vector<ComplexMatrix> out(static_cast<std::size_t>(bhat.size()),
                                 ComplexMatrix::Zero(bhat.rows(), bhat.cols()));
  Index r0 = 0;
  Index c0 = 0;
  for (const auto& blk : blocks) {
    std::vector<ComplexMatrix> part;
    for (const auto& d : bhat.matrices()) part.push_back(d.block(r0, c0, blk.rows, blk.cols));
    OperatorDescent descent(MatrixTuple(std::move(part), KernelCheck::Enforce));
    descent.run(iters);
    const MatrixTuple balanced = descent.normalized_tuple();
    const double weight = std::sqrt(static_cast<double>(blk.rows * blk.cols) /
                                    (report.c_a * static_cast<double>(blk.rows + blk.cols)));
    for (Index l = 0; l < bhat.size(); ++l)
      out[static_cast<std::size_t>(l)].block(r0, c0, blk.rows, blk.cols) = weight * balanced[l];
    r0 += blk.rows;
    c0 += blk.cols;
  }
  return MatrixTuple(std::move(out), KernelCheck::Skip);
}

}  // namespace unbflow
