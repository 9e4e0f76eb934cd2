#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "unbflow/matrix_tuple.hpp"
#include "unbflow/pencil.hpp"

namespace unbflow::testing {

inline ComplexMatrix random_complex(Index n, Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ComplexMatrix a(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) a(i, j) = Complex(g(rng), g(rng));
  return a;
}

inline MatrixTuple random_tuple(Index n, Index m, Index count,
                                std::mt19937_64& rng) {
  std::vector<ComplexMatrix> mats;
  for (Index l = 0; l < count; ++l) mats.push_back(random_complex(n, m, rng));
  return MatrixTuple(std::move(mats));
}

inline PdUnitDetMatrix random_pd(Index n, std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  RealVector d(n);
  for (Index i = 0; i < n; ++i) d(i) = u(rng);
  return PdUnitDetMatrix::from_spectral(random_unitary(n, rng), d);
}

inline HermitianMatrix random_traceless(Index n, std::mt19937_64& rng) {
  return random_hermitian(n, rng).traceless();
}

/// L_1 + L_1^dagger as a 3 x 3 pencil tuple in canonical coordinates.
inline MatrixTuple l1_l1dag() {
  PencilStructure s;
  s.epsilons = {1};
  s.etas = {1};
  PencilPair p = canonical_pencil(s);
  return MatrixTuple({p.a1, p.a2});
}

inline MatrixTuple l1_tuple() {
  ComplexMatrix a1(1, 2), a2(1, 2);
  a1 << 0, 1;
  a2 << 1, 0;
  return MatrixTuple({a1, a2});
}

inline RealVector vec(std::initializer_list<double> v) {
  RealVector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace unbflow::testing
