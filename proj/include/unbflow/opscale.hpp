#pragma once

// Operator scaling on P_n^1 x P_m^1: the Kempf-Ness function
//   F_A(x, y) = log tr sum_l x A_l y A_l^H,
// its moment map, fixed-step geodesic descent, and the quantities read off
// the descent trajectory (spectra, coarse blocks, recession values).

#include <limits>
#include <vector>

#include "unbflow/hermlin.hpp"
#include "unbflow/matrix_tuple.hpp"

namespace unbflow {

/// Default smoothness constant of F_A.
inline constexpr double kKempfNessSmoothness = 2.0;

struct ScalingState {
  PdUnitDetMatrix x;  // n x n
  PdUnitDetMatrix y;  // m x m

  static ScalingState identity(Index n, Index m) {
    return {PdUnitDetMatrix::identity(n), PdUnitDetMatrix::identity(m)};
  }
};

/// Pair of traceless Hermitian matrices (n x n, m x m).
struct MomentValue {
  HermitianMatrix first;
  HermitianMatrix second;

  double norm() const;
};

/// Block (n_alpha, m_alpha) of a coarse block-triangular form.
struct BlockShape {
  Index rows = 0;
  Index cols = 0;
  bool operator==(const BlockShape&) const = default;
};
using BlockList = std::vector<BlockShape>;

/// F_A(x, y), evaluated as a log-sum-exp over the spectral frames of x and y.
/// For moderate spectra it is cross-checked against log ||x^{1/2} A y^{1/2}||^2.
double kempf_ness_value(const MatrixTuple& a, const ScalingState& s);

/// (sum B B^H, sum B^H B) / ||B||^2 - (I/n, I/m).
MomentValue moment_map(const MatrixTuple& b);

/// moment_map(x^{1/2} A y^{1/2}), the gradient of F_A transported to (I, I).
MomentValue transported_gradient(const MatrixTuple& a, const ScalingState& s);

/// One step exp_{(x,y)}(-(1/L) grad F_A). Materializes x^{1/2} A y^{1/2}, so
/// it is meant for single steps from moderate states; long runs go through
/// OperatorDescent.
ScalingState descent_step(const MatrixTuple& a, const ScalingState& s,
                          double lipschitz = kKempfNessSmoothness);

/// Spectral decomposition of an iterate: x = sigma^H e^{diag p} sigma with p
/// nondecreasing, y = tau^H e^{diag q} tau with q nonincreasing, plus the
/// Weyl-chamber estimate (-L p / k, -L q / k) of the limit point.
struct SpectralSnapshot {
  RealVector p;
  RealVector q;
  ComplexMatrix sigma;
  ComplexMatrix tau;
  RealVector pstar_p;  // nonincreasing
  RealVector pstar_q;  // nondecreasing
};
SpectralSnapshot spectral_monitor(const ScalingState& s, Index k,
                                  double lipschitz = kKempfNessSmoothness);

/// max(1e-2, 5 L / k).
double default_gap_threshold(Index k, double lipschitz = kKempfNessSmoothness);

/// Clusters the Weyl-ordered estimate into row groups (p) and column groups
/// (q), pairs them in order and validates the pairing. Throws
/// UnresolvedStructure when the clusters cannot be paired consistently.
BlockList extract_coarse_blocks(const RealVector& pstar_p,
                                const RealVector& pstar_q,
                                double gap_threshold);

/// max |(sigma A_l tau^H)_ij| over strictly lower block-triangular positions.
double offdiag_residual(const MatrixTuple& a, const ComplexMatrix& sigma,
                        const ComplexMatrix& tau, const BlockList& blocks);

/// Recession function F_A^infty(H, G) = max{p_i + q_j : (sigma A tau^H)_ij != 0}
/// where "!= 0" means above zero_tol * ||A||.
double recession_value(const MatrixTuple& a, const HermitianMatrix& h,
                       const HermitianMatrix& g, double zero_tol = 1e-8);

/// Same, for H = sigma^H diag(p) sigma and G = tau^H diag(q) tau given in
/// spectral form.
double recession_in_frame(const MatrixTuple& a, const ComplexMatrix& sigma,
                          const RealVector& p, const ComplexMatrix& tau,
                          const RealVector& q, double zero_tol = 1e-8);

/// sqrt(||sum B B^H - diag p||^2 + ||sum B^H B - diag q||^2).
double check_pq_scaling(const MatrixTuple& b, const RealVector& p,
                        const RealVector& q);

/// (e^{diag p/2} sigma A tau^H e^{diag q/2}) / ||x^{1/2} A y^{1/2}|| in the
/// frame of spectral_monitor. Materializing; see OperatorDescent for the
/// stable version.
MatrixTuple normalized_tuple(const MatrixTuple& a, const ScalingState& s);

/// Weyl-ordered spectrum of the current moment map together with an a
/// posteriori error estimate from its drift since an earlier checkpoint.
struct MomentEstimate {
  RealVector p;  // nonincreasing
  RealVector q;  // nondecreasing
  double error = std::numeric_limits<double>::infinity();
};

/// Clustering threshold used with MomentEstimate: max(1e-6, 10 * error).
double estimate_gap_threshold(const MomentEstimate& e);

/// When the iterate has resolved a coarse block structure to working
/// precision, the descent can continue on the deflated tuple whose lower
/// blocks are set to exact zeros. Without this, rounding errors in those
/// blocks are amplified like e^{ck} and eventually make an unscalable tuple
/// look scalable.
struct LockPolicy {
  bool enabled = true;
  Index check_every = 10;
  Index first_check = 20;
  /// Largest zeroed entry of sigma A tau^H, relative to ||A||.
  double residual_tol = 1e-10;
  /// Largest zeroed entry of the normalized tuple.
  double balanced_tol = 1e-6;
  /// Below the diagonal the dynamics amplifies rounding errors, so on harder
  /// instances the zeroed entries bottom out before reaching the tolerances
  /// above. Once their decay stalls, these looser tolerances apply.
  double fallback_residual_tol = 1e-4;
  double fallback_balanced_tol = 1e-2;
  /// Largest increase of ||mu|| accepted when the moment map is re-evaluated
  /// on the deflated tuple (it is second order in the zeroed entries).
  double mu_jump_tol = 1e-4;
};

struct LockEvent {
  Index k = 0;
  BlockList blocks;
  double residual = 0.0;        // largest zeroed entry, relative to ||A||
  double backward_error = 0.0;  // Frobenius norm of the zeroed entries, relative to ||A||
  double mu_jump = 0.0;         // increase of ||mu|| caused by the deflation
};

/// Support tolerance for escape_lower_bound after the given locks.
/// The descent scales A - E with ||E|| bounded by the summed backward errors,
/// and every entry of E in any unitary frame is below ||E||. Counting entries
/// up to ten times that bound as zero makes the lower bound refer to the same
/// deflated tuple as ||mu||.
double certified_support_tol(const std::vector<LockEvent>& locks,
                             double zero_tol = 1e-8);

/// Fixed-step geodesic descent on F_A.
///
/// The iterate is never materialized. With x_k = g_k^H g_k and
/// g_k = G_k e^{P_k/2} sigma_k, the engine carries sigma_k, P_k and the
/// balanced tuple D_k = b_k A c_k^H / ||.||, where g_k = U_k b_k; the unitary
/// T_k = G_k^H U_k links the two factorizations. Every step multiplies by the
/// bounded factors e^{-mu/(2L)}, so the run stays accurate while the spectra
/// grow linearly in k. After a lock, b_k is kept upper triangular (and c_k
/// lower triangular) so the zero blocks of D_k stay exactly zero. Tuples
/// whose matrices each have a single nonzero entry keep diagonal iterates and
/// take an O(N) path. Both descent inequalities are asserted at every step.
class OperatorDescent {
 public:
  explicit OperatorDescent(MatrixTuple a,
                           double lipschitz = kKempfNessSmoothness,
                           LockPolicy policy = {});

  void step();
  void run(Index steps);

  Index iteration() const { return k_; }
  double lipschitz() const { return lipschitz_; }
  const MatrixTuple& tuple() const { return a_; }
  bool diagonal() const { return diagonal_; }

  double value() const { return value_; }
  double moment_norm() const { return mu_norm_; }
  /// Moment map at x_k^{1/2} A y_k^{1/2}, in the ambient frame.
  MomentValue moment() const;
  MomentEstimate estimate() const;
  ScalingState state() const;
  SpectralSnapshot monitor() const;
  /// A^{(k)} in the frame of monitor().
  MatrixTuple normalized_tuple() const;
  /// escape_lower_bound at the current iterate and moment estimate, with the
  /// support tolerance widened by certified_support_tol.
  double duality_lower_bound(double zero_tol = 1e-8) const;

  /// Deflates onto `blocks` in the current frame if the strict policy
  /// tolerances allow it. Returns false (and leaves the state untouched)
  /// otherwise.
  bool lock_structure(const BlockList& blocks);
  const BlockList& locked_blocks() const { return locked_; }
  const std::vector<LockEvent>& lock_events() const { return events_; }

 private:
  struct Frames {
    ComplexMatrix sigma;  // ambient frame, rows ascending in log_x
    RealVector log_x;     // ascending
    ComplexMatrix tau;    // ambient frame, rows ascending in log_y
    RealVector log_y;     // ascending
  };
  Frames frames() const;
  void refresh_moment();
  void general_step();
  void diagonal_step();
  void try_auto_lock();
  bool deflate(const BlockList& blocks, double residual_tol, double balanced_tol);
  double balanced_lower_max(const BlockList& blocks) const;

  MatrixTuple a_;
  double lipschitz_;
  LockPolicy policy_;
  Index k_ = 0;
  bool diagonal_ = false;

  // Diagonal path: entry positions and balanced coefficients.
  std::vector<Index> diag_row_;
  std::vector<Index> diag_col_;
  ComplexVector diag_coef_;
  RealVector diag_log_x_;  // unsorted, indexed by row
  RealVector diag_log_y_;
  RealVector diag_mu_x_;
  RealVector diag_mu_y_;

  // General path, in the coordinates of the current deflated tuple.
  MatrixTuple current_;
  ComplexMatrix lock_left_;   // current = lock_left A lock_right^H (+ zeroing)
  ComplexMatrix lock_right_;
  BlockList locked_;
  std::vector<LockEvent> events_;
  BlockList pending_;  // candidate seen at the previous check
  double pending_lower_ = 0.0;
  double pending_ratio_ = 1.0;
  std::vector<ComplexMatrix> balanced_;
  ComplexMatrix link_x_;   // T for x
  ComplexMatrix link_y_;
  ComplexMatrix frame_x_;  // rows = eigenvectors, log_x_ ascending
  ComplexMatrix frame_y_;
  RealVector log_x_;
  RealVector log_y_;

  ComplexMatrix mu_first_;  // moment of the balanced tuple, in its own frame
  ComplexMatrix mu_second_;
  double mu_norm_ = 0.0;
  double value_ = 0.0;

  std::vector<std::pair<Index, MomentEstimate>> checkpoints_;
};

/// Largest -F^infty over two candidate escape directions in the monitor
/// frame (sigma rows with p nondecreasing, tau rows with q nonincreasing):
/// (p, q) itself and, when given, -(estimate.p, estimate.q). Every unit
/// direction gives a valid lower bound on inf ||mu||; 0 when both vanish.
double escape_lower_bound(const MatrixTuple& a, const ComplexMatrix& sigma,
                          const RealVector& p, const ComplexMatrix& tau,
                          const RealVector& q, const MomentEstimate* estimate,
                          double zero_tol = 1e-8);

struct DescentOptions {
  double lipschitz = kKempfNessSmoothness;
  LockPolicy lock;
};

struct TraceEntry {
  Index k = 0;
  double value = 0.0;     // F_A(x_k, y_k)
  double mu_norm = 0.0;   // ||mu(x_k^{1/2} A y_k^{1/2})||
  RealVector p;           // nondecreasing log-spectrum of x_k
  RealVector q;           // nonincreasing log-spectrum of y_k
  ComplexMatrix sigma;
  ComplexMatrix tau;
  double offdiag_residual = std::numeric_limits<double>::quiet_NaN();
  double lower_bound = 0.0;  // escape_lower_bound
  double upper_bound = 0.0;  // mu_norm
};

struct OpDescentTrace {
  double lipschitz = kKempfNessSmoothness;
  Index iterations = 0;
  std::vector<TraceEntry> entries;
  ScalingState final_state;
  MomentValue final_moment;
  MatrixTuple final_normalized;
  MomentEstimate final_estimate;
  std::vector<LockEvent> locks;
};

/// Runs `iters` steps from (I, I) and logs every `log_every` steps plus the
/// final iterate.
OpDescentTrace run_descent(const MatrixTuple& a, Index iters, Index log_every,
                           const DescentOptions& options = {});

/// Fills TraceEntry::offdiag_residual for every logged entry.
void fill_offdiag_residuals(OpDescentTrace& trace, const MatrixTuple& a,
                            const BlockList& blocks);

struct DualityCertificate {
  double upper = 0.0;
  double lower = 0.0;
  double gap() const { return upper - lower; }
};
DualityCertificate duality_certificate(const MatrixTuple& a,
                                       const OpDescentTrace& trace);

enum class Scalability { Unscalable, ScalableOrUndecided };

/// Unscalable when the final ||mu|| exceeds 1e-2 and ten times the last
/// logged decrease.
Scalability classify(const OpDescentTrace& trace);

}  // namespace unbflow
