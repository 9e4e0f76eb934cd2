#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "unbflow/error.hpp"
#include "unbflow/pencil.hpp"
#include "unbflow/pipeline.hpp"

using namespace unbflow;
using namespace unbflow::testing;

namespace {

ComplexMatrix real_rows(std::initializer_list<std::initializer_list<double>> r) {
  ComplexMatrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

PencilStructure make(std::vector<Index> eps, std::vector<Index> eta, Index reg = 0) {
  PencilStructure s{std::move(eps), std::move(eta), reg, {}};
  for (Index i = 0; i < reg; ++i) s.regular_eigs.push_back(Complex(double(i + 1), 0.0));
  return s;
}

}  // namespace

TEST(BuildBlock, L1) {
  PencilPair p = build_block(BlockKind::Leps, 1);
  EXPECT_EQ(p.a1, real_rows({{0, 1}}));
  EXPECT_EQ(p.a2, real_rows({{1, 0}}));
}

TEST(BuildBlock, L2) {
  PencilPair p = build_block(BlockKind::Leps, 2);
  EXPECT_EQ(p.a1, real_rows({{0, 1, 0}, {0, 0, 1}}));
  EXPECT_EQ(p.a2, real_rows({{1, 0, 0}, {0, 1, 0}}));
}

TEST(BuildBlock, DaggerIsTranspose) {
  PencilPair p = build_block(BlockKind::Leps, 3), q = build_block(BlockKind::LepsDagger, 3);
  EXPECT_EQ(q.a1, p.a1.transpose());
  EXPECT_EQ(q.a2, p.a2.transpose());
}

TEST(BuildBlock, Regular) {
  PencilPair p = build_block(BlockKind::Regular, 0, {Complex(5, 0)});
  EXPECT_EQ(p.a1, real_rows({{1}}));
  EXPECT_EQ(p.a2, real_rows({{5}}));
}

TEST(PencilStructure, Validation) {
  EXPECT_THROW(make({}, {}).validate(), InvalidInstance);
  EXPECT_THROW(make({2, 1}, {}).validate(), InvalidInstance);
  EXPECT_THROW(make({0}, {}).validate(), InvalidInstance);
  PencilStructure s = make({}, {}, 2);
  s.regular_eigs.pop_back();
  EXPECT_THROW(s.validate(), InvalidInstance);
  EXPECT_THROW(synthesize(make({}, {}), 1), InvalidInstance);
}

TEST(Synthesize, L1PlusDagger) {
  SynthesizedPencil p = synthesize(make({1}, {1}), 7);
  EXPECT_EQ(p.tuple.rows(), 3);
  EXPECT_EQ(p.tuple.cols(), 3);
  EXPECT_EQ(p.tuple.size(), 2);
  EXPECT_EQ(p.ground_truth, (BlockList{{1, 2}, {2, 1}}));
}

TEST(Synthesize, Deterministic) {
  SynthesizedPencil a = synthesize(make({1, 2}, {1}, 1), 3), b = synthesize(make({1, 2}, {1}, 1), 3);
  for (Index l = 0; l < 2; ++l) EXPECT_EQ(a.tuple[l], b.tuple[l]);
}

TEST(Synthesize, IsEquivalentToCanonicalForm) {
  PencilStructure s = make({1}, {2}, 2);
  SynthesizedPencil p = synthesize(s, 12);
  PencilPair c = canonical_pencil(s);
  EXPECT_LT((p.g * c.a1 * p.h.adjoint() - p.tuple[0]).norm(), 1e-12);
  EXPECT_LT((p.g * c.a2 * p.h.adjoint() - p.tuple[1]).norm(), 1e-12);
}

TEST(RandomConditioned, ConditionCap) {
  std::mt19937_64 rng(60);
  for (int t = 0; t < 20; ++t) {
    ComplexMatrix g = random_conditioned(5, 20.0, rng);
    Eigen::JacobiSVD<ComplexMatrix> svd(g);
    const RealVector sv = svd.singularValues();
    EXPECT_LE(sv(0) / sv(4), 20.0 * (1 + 1e-12));
    EXPECT_NEAR(std::abs(g.determinant()), 1.0, 1e-10);
  }
}

TEST(Synthesize, RegularPencilIsScalable) {
  SynthesizedPencil p = synthesize(make({}, {}, 2), 5);
  EXPECT_EQ(p.ground_truth, (BlockList{{2, 2}}));
  OpDescentTrace tr = run_descent(p.tuple, 2000, 500);
  EXPECT_LT(tr.entries.back().mu_norm, 1e-3);
}

TEST(ExpectedCoarseStructure, Examples) {
  EXPECT_EQ(expected_coarse_structure(make({1, 1}, {})), (BlockList{{2, 4}}));
  EXPECT_EQ(expected_coarse_structure(make({1}, {1})), (BlockList{{1, 2}, {2, 1}}));
  EXPECT_EQ(expected_coarse_structure(make({1}, {}, 2)), (BlockList{{1, 2}, {2, 2}}));
  EXPECT_EQ(expected_coarse_structure(make({1, 2}, {3}, 1)),
            (BlockList{{1, 2}, {2, 3}, {1, 1}, {4, 3}}));
}

TEST(RecoverStructure, Examples) {
  PencilStructure a = recover_structure({{2, 4}});
  EXPECT_EQ(a.epsilons, (std::vector<Index>{1, 1}));
  EXPECT_TRUE(a.etas.empty());
  PencilStructure b = recover_structure({{3, 4}});
  EXPECT_EQ(b.epsilons, (std::vector<Index>{3}));
  PencilStructure c = recover_structure({{2, 2}});
  EXPECT_EQ(c.regular_size, 2);
  EXPECT_TRUE(c.epsilons.empty() && c.etas.empty());
  EXPECT_THROW(recover_structure({{2, 5}}), InvalidInstance);
}

TEST(RecoverStructure, InvertsExpectedStructure) {
  std::mt19937_64 rng(61);
  std::uniform_int_distribution<int> count(0, 3), idx(1, 4), reg(0, 3);
  for (int t = 0; t < 200; ++t) {
    std::vector<Index> eps, eta;
    for (int i = count(rng); i > 0; --i) eps.push_back(idx(rng));
    for (int i = count(rng); i > 0; --i) eta.push_back(idx(rng));
    std::sort(eps.begin(), eps.end());
    std::sort(eta.begin(), eta.end());
    PencilStructure s = make(eps, eta, reg(rng));
    if (eps.empty() && eta.empty() && s.regular_size == 0) continue;
    PencilStructure r = recover_structure(expected_coarse_structure(s));
    EXPECT_EQ(r.epsilons, s.epsilons);
    EXPECT_EQ(r.etas, s.etas);
    EXPECT_EQ(r.regular_size, s.regular_size);
  }
}

TEST(AnalyzeCoarse, EpsilonWithRegularPart) {
  SynthesizedPencil p = synthesize(make({1}, {}, 2), 21);
  CoarseAnalysis r = analyze_coarse(p.tuple);
  EXPECT_EQ(r.blocks, (BlockList{{1, 2}, {2, 2}}));
  EXPECT_LE(r.offdiag_residual, 1e-3);
  for (const auto& c : r.pair_checks) EXPECT_TRUE(c.member);
  PencilStructure rec = recover_structure(r.blocks);
  EXPECT_EQ(rec.epsilons, (std::vector<Index>{1}));
  EXPECT_EQ(rec.regular_size, 2);
}

TEST(AnalyzeCoarse, SynthesizedCoarseTuple) {
  SynthesizedPencil p = synthesize_coarse({{1, 3}, {1, 1}, {3, 1}}, 3, 1);
  EXPECT_EQ(p.tuple.size(), 3);
  AnalysisOptions o;
  o.iters = 10000;
  CoarseAnalysis r = analyze_coarse(p.tuple, o);
  EXPECT_EQ(r.blocks, p.ground_truth);
  EXPECT_NEAR(r.certificate.upper, std::sqrt(0.1), 2e-3);
  EXPECT_LT(r.certificate.gap(), 5e-3);
  EXPECT_EQ(r.scalability, Scalability::Unscalable);
}
