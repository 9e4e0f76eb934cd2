#pragma once

// Euclidean log-sum-exp objectives f(x) = log sum_l a_l exp(<omega_l, x>)
// and fixed-step gradient descent on them.

#include <optional>
#include <vector>

#include "unbflow/hermlin.hpp"

namespace unbflow {

struct GpTerm {
  RealVector omega;
  double a = 1.0;
};

class GpInstance {
 public:
  GpInstance() = default;
  /// Requires at least one term, equal omega lengths and a_l > 0.
  GpInstance(Index dim, std::vector<GpTerm> terms);

  Index dim() const { return dim_; }
  const std::vector<GpTerm>& terms() const { return terms_; }
  std::vector<RealVector> exponents() const;

 private:
  Index dim_ = 0;
  std::vector<GpTerm> terms_;
};

struct GpValueGrad {
  double value = 0.0;
  RealVector gradient;
};

/// Max-shifted log-sum-exp and softmax-weighted gradient.
GpValueGrad gp_value_grad(const GpInstance& inst, const RealVector& x);

/// max_l ||omega_l||^2.
double gp_smoothness(const GpInstance& inst);

struct GpTraceEntry {
  Index iter = 0;
  double value = 0.0;
  RealVector x;
  RealVector gradient;
};

struct GpTrace {
  double lipschitz = 0.0;
  std::vector<GpTraceEntry> entries;
};

struct GpDescentOptions {
  /// Step 1/L; defaults to gp_smoothness. Any L at least the smoothness
  /// constant keeps the descent inequalities valid.
  std::optional<double> lipschitz;
  /// Keep every record_every-th iterate (plus the first and the last).
  Index record_every = 1;
};

/// x_{i+1} = x_i - grad f(x_i) / L, asserting both descent inequalities at
/// every step.
GpTrace gp_descent(const GpInstance& inst, const RealVector& x0, Index iters,
                   const GpDescentOptions& options = {});

/// Support function max_l <omega_l, u>.
double gp_recession(const GpInstance& inst, const RealVector& u);

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
RealVector min_norm_oracle(const std::vector<RealVector>& points);

/// Matrix-scaling objective on R^{n+m}: one term per positive entry with
/// omega = (e_i - 1/n) + (e_j - 1/m), so that the gradient is the vector of
/// marginal residuals.
GpInstance matscale_instance(const RealMatrix& mabs2);

}  // namespace unbflow
