#pragma once

// End-to-end coarse structure analysis: descent, clustering of the limit
// estimate, closed-form report, flag and certificates.

#include <optional>
#include <vector>

#include "unbflow/dm.hpp"
#include "unbflow/opscale.hpp"

namespace unbflow {

struct AnalysisOptions {
  Index iters = 20000;
  Index log_every = 1000;
  /// Overrides the estimate-based clustering threshold.
  std::optional<double> gap_threshold;
  DescentOptions descent;
};

struct CoarseAnalysis {
  OpDescentTrace trace;
  double gap_threshold = 0.0;
  BlockList blocks;
  DmReport report;
  CoarseDmFlag flag;
  std::vector<PairCheck> pair_checks;  // one per flag pair, tolerance 1e-3 ||A||
  double offdiag_residual = 0.0;
  DualityCertificate certificate;
  Scalability scalability = Scalability::ScalableOrUndecided;
};

/// Throws UnresolvedStructure when the final estimate does not cluster into
/// a consistent block list.
CoarseAnalysis analyze_coarse(const MatrixTuple& a,
                              const AnalysisOptions& options = {});

}  // namespace unbflow
