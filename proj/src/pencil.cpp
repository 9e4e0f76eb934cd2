#include "unbflow/pencil.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unbflow/dm.hpp"
#include "unbflow/error.hpp"

namespace unbflow {

Index PencilStructure::rows() const {
  Index n = regular_size;
  for (Index e : epsilons) n += e;
  for (Index e : etas) n += e + 1;
  return n;
}

Index PencilStructure::cols() const {
  Index m = regular_size;
  for (Index e : epsilons) m += e + 1;
  for (Index e : etas) m += e;
  return m;
}

void PencilStructure::validate() const {
  for (Index e : epsilons)
    if (e < 1) throw InvalidInstance("pencil: epsilon indices must be positive");
  for (Index e : etas)
    if (e < 1) throw InvalidInstance("pencil: eta indices must be positive");
  if (!std::is_sorted(epsilons.begin(), epsilons.end()) ||
      !std::is_sorted(etas.begin(), etas.end()))
    throw InvalidInstance("pencil: minimal indices must be nondecreasing");
  if (regular_size < 0) throw InvalidInstance("pencil: negative regular size");
  if (static_cast<Index>(regular_eigs.size()) != regular_size) {
    std::ostringstream msg;
    msg << "pencil: " << regular_eigs.size() << " regular eigenvalues for regular size "
        << regular_size;
    throw InvalidInstance(msg.str());
  }
  if (epsilons.empty() && etas.empty() && regular_size == 0)
    throw InvalidInstance("pencil: empty structure");
}

PencilPair build_block(BlockKind kind, Index index, const std::vector<Complex>& eigs) {
  switch (kind) {
    case BlockKind::Leps: {
      if (index < 1) throw InvalidInstance("build_block: index must be positive");
      PencilPair p{ComplexMatrix::Zero(index, index + 1), ComplexMatrix::Zero(index, index + 1)};
      for (Index i = 0; i < index; ++i) {
        p.a1(i, i + 1) = 1.0;
        p.a2(i, i) = 1.0;
      }
      return p;
    }
    case BlockKind::LepsDagger: {
      const PencilPair l = build_block(BlockKind::Leps, index);
      return {l.a1.transpose(), l.a2.transpose()};
    }
    case BlockKind::Regular: {
      const Index n = static_cast<Index>(eigs.size());
      if (n < 1) throw InvalidInstance("build_block: regular block needs eigenvalues");
      PencilPair p{ComplexMatrix::Identity(n, n), ComplexMatrix::Zero(n, n)};
      for (Index i = 0; i < n; ++i) p.a2(i, i) = eigs[static_cast<std::size_t>(i)];
      return p;
    }
  }
  throw InvalidInstance("build_block: unknown block kind");
}

PencilPair canonical_pencil(const PencilStructure& s) {
  s.validate();
  const Index n = s.rows();
  const Index m = s.cols();
  PencilPair out{ComplexMatrix::Zero(n, m), ComplexMatrix::Zero(n, m)};
  Index r0 = 0;
  Index c0 = 0;
  auto place = [&](const PencilPair& b) {
    out.a1.block(r0, c0, b.a1.rows(), b.a1.cols()) = b.a1;
    out.a2.block(r0, c0, b.a2.rows(), b.a2.cols()) = b.a2;
    r0 += b.a1.rows();
    c0 += b.a1.cols();
  };
  for (Index e : s.epsilons) place(build_block(BlockKind::Leps, e));
  if (s.regular_size > 0) place(build_block(BlockKind::Regular, 0, s.regular_eigs));
  for (auto it = s.etas.rbegin(); it != s.etas.rend(); ++it)
    place(build_block(BlockKind::LepsDagger, *it));
  return out;
}

ComplexMatrix random_conditioned(Index n, double cond, std::mt19937_64& rng) {
  if (!(cond >= 1.0)) throw InvalidInstance("random_conditioned: condition cap must be >= 1");
  const double half = 0.5 * std::log(cond);
  std::uniform_real_distribution<double> dist(-half, half);
  RealVector d(n);
  for (Index i = 0; i < n; ++i) d(i) = dist(rng);
  d.array() -= d.mean();
  ComplexMatrix g = random_unitary(n, rng) * d.array().exp().matrix().cast<Complex>().asDiagonal() *
                    random_unitary(n, rng);
  const Complex det = g.determinant();
  return g * std::pow(det / std::abs(det), -1.0 / static_cast<double>(n));
}

SynthesizedPencil synthesize(const PencilStructure& s, std::uint64_t seed, double cond) {
  const PencilPair p = canonical_pencil(s);
  std::mt19937_64 rng(seed);
  SynthesizedPencil out;
  out.g = random_conditioned(p.a1.rows(), cond, rng);
  out.h = random_conditioned(p.a1.cols(), cond, rng);
  out.tuple = MatrixTuple({out.g * p.a1 * out.h.adjoint(), out.g * p.a2 * out.h.adjoint()});
  out.ground_truth = expected_coarse_structure(s);
  return out;
}

SynthesizedPencil synthesize_coarse(const BlockList& blocks, Index n_matrices,
                                    std::uint64_t seed, double cond) {
  (void)dm_report(blocks);  // validates the ratio law
  if (n_matrices < 1) throw InvalidInstance("synthesize_coarse: need at least one matrix");
  Index n = 0;
  Index m = 0;
  for (const auto& b : blocks) {
    n += b.rows;
    m += b.cols;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<ComplexMatrix> mats;
  for (Index l = 0; l < n_matrices; ++l) {
    ComplexMatrix a = ComplexMatrix::Zero(n, m);
    Index r0 = 0;
    for (const auto& b : blocks) {
      // Row block alpha meets column blocks alpha' >= alpha.
      Index c0 = 0;
      for (const auto& b2 : blocks) {
        if (&b2 >= &b)
          for (Index i = 0; i < b.rows; ++i)
            for (Index j = 0; j < b2.cols; ++j) a(r0 + i, c0 + j) = Complex(gauss(rng), gauss(rng));
        c0 += b2.cols;
      }
      r0 += b.rows;
    }
    mats.push_back(std::move(a));
  }
  SynthesizedPencil out;
  out.g = random_conditioned(n, cond, rng);
  out.h = random_conditioned(m, cond, rng);
  for (auto& a : mats) a = out.g * a * out.h.adjoint();
  out.tuple = MatrixTuple(std::move(mats));
  out.ground_truth = blocks;
  return out;
}

BlockList expected_coarse_structure(const PencilStructure& s) {
  s.validate();
  BlockList shapes;
  for (Index e : s.epsilons) shapes.push_back({e, e + 1});
  if (s.regular_size > 0) shapes.push_back({s.regular_size, s.regular_size});
  for (auto it = s.etas.rbegin(); it != s.etas.rend(); ++it) shapes.push_back({*it + 1, *it});
  // Equal shapes are adjacent in canonical order.
  BlockList out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i > 0 && shapes[i] == shapes[i - 1]) {
      out.back().rows += shapes[i].rows;
      out.back().cols += shapes[i].cols;
    } else {
      out.push_back(shapes[i]);
    }
  }
  validate_blocks(out);
  return out;
}

PencilStructure recover_structure(const BlockList& blocks) {
  validate_blocks(blocks);
  PencilStructure s;
  for (const auto& b : blocks) {
    if (b.rows == b.cols) {
      s.regular_size += b.rows;
      continue;
    }
    const bool wide = b.rows < b.cols;
    const Index k = wide ? b.cols - b.rows : b.rows - b.cols;
    const Index small = wide ? b.rows : b.cols;
    if (small % k != 0) {
      std::ostringstream msg;
      msg << "recover_structure: block (" << b.rows << "," << b.cols
          << ") is not a multiple of a Kronecker block shape";
      throw InvalidInstance(msg.str());
    }
    auto& dest = wide ? s.epsilons : s.etas;
    dest.insert(dest.end(), static_cast<std::size_t>(k), small / k);
  }
  std::sort(s.epsilons.begin(), s.epsilons.end());
  std::sort(s.etas.begin(), s.etas.end());
  return s;
}

}  // namespace unbflow
