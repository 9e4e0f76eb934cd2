#pragma once

// Coarse Dulmage-Mendelsohn structure of a matrix tuple: annihilating
// subspace pairs, the limit point (p*, q*) of a block list, coarse flags and
// the block-diagonal tuple they induce.

#include <vector>

#include "unbflow/matrix_tuple.hpp"
#include "unbflow/opscale.hpp"

namespace unbflow {

/// Subspaces X of C^n and Y of C^m given by orthonormal basis rows.
struct SubspacePair {
  ComplexMatrix x;  // r x n
  ComplexMatrix y;  // s x m
};

struct PairCheck {
  bool member = false;
  double violation = 0.0;
};

/// (X, Y) annihilates A when u^T A_l conj(v) = 0 for all u in X, v in Y, i.e.
/// X A_l Y^H = 0 with basis rows. violation = max_l max |X A_l Y^H|.
PairCheck verify_pair(const MatrixTuple& a, const SubspacePair& pair,
                      double tol);

/// X_0 = C^n > X_1 > ... > X_theta = 0 and 0 = Y_0 < ... < Y_theta = C^m,
/// with block sizes n_a = dim X_{a-1} - dim X_a, m_a = dim Y_a - dim Y_{a-1}.
struct CoarseDmFlag {
  std::vector<SubspacePair> chain;
  BlockList blocks;
};

/// Throws InvalidInstance unless dims are strictly monotone, sizes add up,
/// bases are orthonormal to 1e-10 and n_a/m_a strictly increases.
void validate_flag(const CoarseDmFlag& flag);

struct DmReport {
  BlockList blocks;
  RealVector p_star;  // nonincreasing
  RealVector q_star;  // nondecreasing
  double c_a = 0.0;
  double min_norm = 0.0;
};

/// Closed-form limit point for a block list with strictly increasing ratios:
///   C = sum n_a m_a / (n_a + m_a),
///   p* = -1/n + m_a / (C (n_a + m_a)) on I_a,
///   q* = -1/m + n_a / (C (n_a + m_a)) on J_a,
/// and ||(p*, q*)|| = sqrt(1/C - 1/n - 1/m).
DmReport dm_report(const BlockList& blocks);

/// Throws InvalidInstance unless every block is nonempty and the ratios
/// n_a/m_a strictly increase.
void validate_blocks(const BlockList& blocks);

/// X_a spans the last n_{a+1} + ... + n_theta rows of sigma and Y_a the first
/// m_1 + ... + m_a rows of tau. The first rows of sigma belong to I_1, the
/// block with the largest p*.
CoarseDmFlag flag_from_unitaries(const ComplexMatrix& sigma,
                                 const ComplexMatrix& tau,
                                 const BlockList& blocks);

/// Exhaustive coordinate-subspace oracle for n, m <= 8: for every row set R
/// the largest column set C(R) with mabs2[R, C] = 0, then the vertices of the
/// upper hull of {(|R|, |C(R)|)} in exact integer arithmetic.
CoarseDmFlag coordinate_dm_bruteforce(const RealMatrix& mabs2);

/// Unitaries (sigma, tau) whose row blocks are X_{a-1} minus X_a and
/// Y_a minus Y_{a-1}.
std::pair<ComplexMatrix, ComplexMatrix> flag_frame(const CoarseDmFlag& flag);

/// Rotates A into the flag frame and keeps only the diagonal blocks. Every
/// flag pair must annihilate A to 1e-6 ||A|| and every diagonal block must
/// keep trivial kernels.
MatrixTuple diagonalize_dm(const MatrixTuple& a, const CoarseDmFlag& flag);

/// Scales each diagonal block of a block-diagonal tuple to a balanced tuple
/// of squared norm C_a = n_a m_a / (C (n_a + m_a)), using `iters` descent
/// steps per block. The result is a (p* + 1/n, q* + 1/m)-scaling.
MatrixTuple scale_diagonal_blocks(const MatrixTuple& bhat,
                                  const BlockList& blocks, Index iters);

}  // namespace unbflow
