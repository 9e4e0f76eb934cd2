#pragma once

// Matrix pencils s A_1 + A_2 in Kronecker form: block builders, seeded
// synthesis of instances with known minimal indices, and the translation
// between minimal indices and coarse block shapes.

#include <cstdint>
#include <vector>

#include "unbflow/matrix_tuple.hpp"
#include "unbflow/opscale.hpp"

namespace unbflow {

struct PencilStructure {
  std::vector<Index> epsilons;  // nondecreasing
  std::vector<Index> etas;      // nondecreasing
  Index regular_size = 0;
  std::vector<Complex> regular_eigs;  // length regular_size

  Index rows() const;
  Index cols() const;
  /// Throws InvalidInstance on nonpositive indices, unsorted lists, an eigenvalue
  /// count that does not match regular_size, or an empty structure.
  void validate() const;
  bool operator==(const PencilStructure&) const = default;
};

enum class BlockKind { Leps, LepsDagger, Regular };

struct PencilPair {
  ComplexMatrix a1;  // coefficient of s
  ComplexMatrix a2;
};

/// L_eps (eps x (eps+1)): a1 has ones on the superdiagonal, a2 on the diagonal.
/// LepsDagger is the transposed shape. Regular gives (I, diag(eigs)); `index`
/// is ignored for it and the size is eigs.size().
PencilPair build_block(BlockKind kind, Index index,
                       const std::vector<Complex>& eigs = {});

/// Direct sum in canonical order: L_eps ascending, regular part, L^dagger_eta
/// descending.
PencilPair canonical_pencil(const PencilStructure& s);

/// u diag(e^d) v with d uniform in [-log(cond)/2, log(cond)/2] and centred,
/// times a phase making det = 1. Condition number at most `cond`.
ComplexMatrix random_conditioned(Index n, double cond, std::mt19937_64& rng);

struct SynthesizedPencil {
  MatrixTuple tuple;
  BlockList ground_truth;
  ComplexMatrix g;
  ComplexMatrix h;
};

/// g (s A_1 + A_2) h^H for the canonical pencil and seeded g, h with
/// condition number at most `cond`.
SynthesizedPencil synthesize(const PencilStructure& s, std::uint64_t seed,
                             double cond = 20.0);

/// Random tuple in coarse block-triangular form with the given blocks:
/// generic (hence scalable) diagonal blocks, generic upper blocks, zero lower
/// blocks, then seeded g, h as in synthesize.
SynthesizedPencil synthesize_coarse(const BlockList& blocks, Index n_matrices,
                                    std::uint64_t seed, double cond = 20.0);

/// Block shapes in canonical order with consecutive equal shapes merged.
BlockList expected_coarse_structure(const PencilStructure& s);

/// Minimal indices and regular size from coarse blocks. Regular eigenvalues
/// are not recoverable and stay empty. Throws InvalidInstance when a
/// rectangular block is not k nu x k (nu + 1) or its transpose.
PencilStructure recover_structure(const BlockList& blocks);

}  // namespace unbflow
