#include "unbflow/pipeline.hpp"

#include <spdlog/spdlog.h>

namespace unbflow {

CoarseAnalysis analyze_coarse(const MatrixTuple& a, const AnalysisOptions& options) {
  CoarseAnalysis out;
  out.trace = run_descent(a, options.iters, options.log_every, options.descent);
  const MomentEstimate& est = out.trace.final_estimate;
  out.gap_threshold = options.gap_threshold.value_or(estimate_gap_threshold(est));
  spdlog::debug("analyze_coarse: k = {}, estimate error {:.3e}, threshold {:.3e}",
                out.trace.iterations, est.error, out.gap_threshold);
  out.blocks = extract_coarse_blocks(est.p, est.q, out.gap_threshold);
  out.report = dm_report(out.blocks);

  const TraceEntry& last = out.trace.entries.back();
  // Monitor frames list p ascending; block I_1 (largest p*) pairs with the
  // most negative log-eigenvalues of x, i.e. the first rows of sigma.
  out.flag = flag_from_unitaries(last.sigma, last.tau, out.blocks);
  const double tol = 1e-3 * a.norm();
  for (const auto& pair : out.flag.chain) out.pair_checks.push_back(verify_pair(a, pair, tol));
  out.offdiag_residual = offdiag_residual(a, last.sigma, last.tau, out.blocks);
  fill_offdiag_residuals(out.trace, a, out.blocks);
  out.certificate = duality_certificate(a, out.trace);
  out.scalability = classify(out.trace);
  return out;
}

}  // namespace unbflow
