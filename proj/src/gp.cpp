#include "unbflow/gp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unbflow/error.hpp"

namespace unbflow {

GpInstance::GpInstance(Index dim, std::vector<GpTerm> terms)
    : dim_(dim), terms_(std::move(terms)) {
  if (dim_ < 1) throw InvalidInstance("GpInstance: dimension must be positive");
  if (terms_.empty()) throw InvalidInstance("GpInstance: no terms");
  for (std::size_t l = 0; l < terms_.size(); ++l) {
    const GpTerm& t = terms_[l];
    if (t.omega.size() != dim_) {
      std::ostringstream msg;
      msg << "GpInstance: term " << l << " has exponent of length "
          << t.omega.size() << ", expected " << dim_;
      throw InvalidInstance(msg.str());
    }
    if (!t.omega.allFinite())
      throw InvalidInstance("GpInstance: non-finite exponent");
    if (!(t.a > 0.0) || !std::isfinite(t.a)) {
      std::ostringstream msg;
      msg << "GpInstance: coefficient of term " << l << " is " << t.a
          << ", must be positive";
      throw InvalidInstance(msg.str());
    }
  }
}

std::vector<RealVector> GpInstance::exponents() const {
  std::vector<RealVector> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.omega);
  return out;
}

GpValueGrad gp_value_grad(const GpInstance& inst, const RealVector& x) {
  if (x.size() != inst.dim())
    throw InvalidInstance("gp_value_grad: point has wrong dimension");
  if (!x.allFinite()) throw InvalidInstance("gp_value_grad: non-finite point");
  const auto& terms = inst.terms();
  std::vector<double> e(terms.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < terms.size(); ++l) {
    e[l] = std::log(terms[l].a) + terms[l].omega.dot(x);
    top = std::max(top, e[l]);
  }
  double total = 0.0;
  for (auto& v : e) {
    v = std::exp(v - top);
    total += v;
  }
  GpValueGrad out{top + std::log(total), RealVector::Zero(inst.dim())};
  for (std::size_t l = 0; l < terms.size(); ++l)
    out.gradient += (e[l] / total) * terms[l].omega;
  return out;
}

double gp_smoothness(const GpInstance& inst) {
  double best = 0.0;
  for (const auto& t : inst.terms()) best = std::max(best, t.omega.squaredNorm());
  return best;
}

GpTrace gp_descent(const GpInstance& inst, const RealVector& x0, Index iters,
                   const GpDescentOptions& options) {
  if (iters < 0) throw InvalidInstance("gp_descent: negative iteration count");
  if (options.record_every < 1)
    throw InvalidInstance("gp_descent: record_every must be >= 1");
  const double smooth = gp_smoothness(inst);
  const double lip = options.lipschitz.value_or(smooth);
  if (!(lip > 0.0))
    throw InvalidInstance("gp_descent: smoothness constant is zero");
  if (lip < smooth * (1.0 - 1e-12)) {
    std::ostringstream msg;
    msg << "gp_descent: L = " << lip << " is below the smoothness bound "
        << smooth;
    throw InvalidInstance(msg.str());
  }

  GpTrace trace;
  trace.lipschitz = lip;
  RealVector x = x0;
  GpValueGrad cur = gp_value_grad(inst, x);
  trace.entries.push_back({0, cur.value, x, cur.gradient});
  double grad_norm = cur.gradient.norm();
  for (Index i = 1; i <= iters; ++i) {
    x -= cur.gradient / lip;
    GpValueGrad next = gp_value_grad(inst, x);
    const double next_norm = next.gradient.norm();
    if (next.value > cur.value - next_norm * next_norm / lip + 1e-9) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "descent inequality f(x+1) <= f(x) - |grad(x+1)|^2/L violated at "
             "iteration "
          << i << ": " << next.value << " > " << cur.value << " - "
          << next_norm * next_norm / lip;
      throw NumericalError(msg.str());
    }
    if (next_norm > grad_norm + 1e-10) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "gradient norm increased at iteration " << i << ": " << grad_norm
          << " -> " << next_norm;
      throw NumericalError(msg.str());
    }
    cur = std::move(next);
    grad_norm = next_norm;
    if (i % options.record_every == 0 || i == iters)
      trace.entries.push_back({i, cur.value, x, cur.gradient});
  }
  return trace;
}

double gp_recession(const GpInstance& inst, const RealVector& u) {
  if (u.size() != inst.dim())
    throw InvalidInstance("gp_recession: direction has wrong dimension");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : inst.terms()) best = std::max(best, t.omega.dot(u));
  return best;
}

namespace {

// Affine minimizer of ||P lambda|| subject to sum lambda = 1, via
// (P^T P + 1 1^T) lambda ~ 1. Returns false if a Cholesky pivot falls below
// the floor (affinely dependent corral).
bool affine_minimizer(const RealMatrix& p, RealVector& lambda) {
  const Index k = p.cols();
  RealMatrix g = p.transpose() * p;
  g.array() += 1.0;
  RealMatrix l = RealMatrix::Zero(k, k);
  for (Index j = 0; j < k; ++j) {
    double d = g(j, j) - l.row(j).head(j).squaredNorm();
    if (d < 1e-12) return false;
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < k; ++i)
      l(i, j) = (g(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  RealVector y = RealVector::Ones(k);
  for (Index i = 0; i < k; ++i) y(i) = (y(i) - l.row(i).head(i).dot(y.head(i))) / l(i, i);
  for (Index i = k - 1; i >= 0; --i)
    y(i) = (y(i) - l.col(i).tail(k - 1 - i).dot(y.tail(k - 1 - i))) / l(i, i);
  lambda = y / y.sum();
  return true;
}

}  // namespace

RealVector min_norm_oracle(const std::vector<RealVector>& points) {
  if (points.empty()) throw InvalidInstance("min_norm_oracle: no points");
  const Index dim = points.front().size();
  double scale = 0.0;
  for (const auto& p : points) {
    if (p.size() != dim)
      throw InvalidInstance("min_norm_oracle: points of different dimension");
    scale = std::max(scale, p.squaredNorm());
  }
  const double tol = 1e-12 * std::max(1.0, scale);

  std::vector<std::size_t> corral;
  RealVector weights;  // convex weights on the corral
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i)
      if (points[i].squaredNorm() < points[best].squaredNorm()) best = i;
    corral.push_back(best);
    weights = RealVector::Ones(1);
  }
  auto combine = [&](const RealVector& w) {
    RealVector x = RealVector::Zero(dim);
    for (std::size_t i = 0; i < corral.size(); ++i)
      x += w(static_cast<Index>(i)) * points[corral[i]];
    return x;
  };
  RealVector x = points[corral.front()];

  const std::size_t guard = 1000 + 50 * points.size();
  std::size_t major = 0;
  for (;; ++major) {
    if (major > guard)
      throw NumericalError("min_norm_oracle: iteration guard exceeded");
    std::size_t enter = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double v = x.dot(points[i]);
      if (v < best) {
        best = v;
        enter = i;
      }
    }
    if (best >= x.squaredNorm() - tol) break;
    if (std::find(corral.begin(), corral.end(), enter) != corral.end()) break;
    corral.push_back(enter);
    weights.conservativeResize(weights.size() + 1);
    weights(weights.size() - 1) = 0.0;

    bool degenerate = false;
    for (;;) {
      RealMatrix p(dim, static_cast<Index>(corral.size()));
      for (std::size_t i = 0; i < corral.size(); ++i)
        p.col(static_cast<Index>(i)) = points[corral[i]];
      RealVector alpha;
      if (!affine_minimizer(p, alpha)) {
        degenerate = true;
        break;
      }
      if ((alpha.array() > 1e-12).all()) {
        weights = alpha;
        x = p * alpha;
        break;
      }
      double theta = 1.0;
      for (Index i = 0; i < alpha.size(); ++i)
        if (alpha(i) <= 1e-12) {
          const double denom = weights(i) - alpha(i);
          theta = std::min(theta, denom > 0.0 ? weights(i) / denom : 0.0);
        }
      weights = (1.0 - theta) * weights + theta * alpha;
      std::vector<std::size_t> kept;
      std::vector<double> kept_w;
      for (Index i = 0; i < weights.size(); ++i) {
        if (weights(i) > 1e-15) {
          kept.push_back(corral[static_cast<std::size_t>(i)]);
          kept_w.push_back(weights(i));
        }
      }
      corral = std::move(kept);
      weights = Eigen::Map<RealVector>(kept_w.data(), static_cast<Index>(kept_w.size()));
      weights /= weights.sum();
      x = combine(weights);
    }
    if (degenerate) break;
  }

  const double norm2 = x.squaredNorm();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].dot(x) < norm2 - 1e-9) {
      std::ostringstream msg;
      msg << "min_norm_oracle: optimality certificate fails for point " << i
          << " (" << points[i].dot(x) << " < " << norm2 << ")";
      throw NumericalError(msg.str());
    }
  }
  return x;
}

GpInstance matscale_instance(const RealMatrix& mabs2) {
  const Index n = mabs2.rows();
  const Index m = mabs2.cols();
  if (n == 0 || m == 0) throw InvalidInstance("matscale_instance: empty matrix");
  if (!mabs2.allFinite() || (mabs2.array() < 0.0).any())
    throw InvalidInstance("matscale_instance: entries must be finite and nonnegative");
  for (Index i = 0; i < n; ++i)
    if (!(mabs2.row(i).maxCoeff() > 0.0))
      throw InvalidInstance("matscale_instance: zero row " + std::to_string(i));
  for (Index j = 0; j < m; ++j)
    if (!(mabs2.col(j).maxCoeff() > 0.0))
      throw InvalidInstance("matscale_instance: zero column " + std::to_string(j));

  std::vector<GpTerm> terms;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (mabs2(i, j) <= 0.0) continue;
      RealVector omega(n + m);
      omega.head(n).setConstant(-1.0 / static_cast<double>(n));
      omega.tail(m).setConstant(-1.0 / static_cast<double>(m));
      omega(i) += 1.0;
      omega(n + j) += 1.0;
      terms.push_back({std::move(omega), mabs2(i, j)});
    }
  }
  return GpInstance(n + m, std::move(terms));
}

}  // namespace unbflow
