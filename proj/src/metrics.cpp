#include "stlsgd/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stlsgd {

double objective_gap(const Objective& obj, const Vec& x) {
  if (!obj.optimum()) {
    throw std::runtime_error("objective gap needs a known optimum; run solve_optimum first");
  }
  return obj.value(x) - obj.optimum()->value;
}

double zeta_at(const Objective& obj, const Vec& x) {
  const std::size_t n = obj.num_clients();
  std::vector<Vec> grads(n);
  for (std::size_t c = 0; c < n; ++c) obj.client_gradient(c, x, grads[c]);
  Vec mean = average_models(grads);  // exact zero spread for identical shards
  double acc = 0.0;
  for (const auto& g : grads) acc += dist_sq(g, mean);
  return acc / static_cast<double>(n);
}

double divergence(const std::vector<Vec>& models) {
  Vec mean = average_models(models);
  double acc = 0.0;
  for (const auto& m : models) acc += dist_sq(mean, m);
  return acc / static_cast<double>(models.size());
}

double divergence(const ClientFleet& fleet) { return divergence(fleet.states); }

double bregman_divergence(const Objective& obj, const Vec& x, const Vec& y) {
  if (obj.constants().rho) {
    throw std::invalid_argument("Bregman divergence is defined here for convex objectives only");
  }
  Vec gy = obj.full_gradient(y);
  double inner = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) inner += gy[i] * (x[i] - y[i]);
  return obj.value(x) - obj.value(y) - inner;
}

double theorem1_bound(const BoundInputs& b) {
  return theorem1_bound(b.dist0_sq, b.eta, b.T, b.sigma2, b.N);
}

double theorem1_bound(double dist0_sq, double eta, std::int64_t T, double sigma2,
                      std::size_t N) {
  if (eta <= 0.0 || T <= 0 || N == 0) {
    throw std::invalid_argument("bound needs positive eta, T, N");
  }
  return 3.0 * dist0_sq / (4.0 * eta * static_cast<double>(T)) +
         eta * sigma2 / static_cast<double>(N);
}

double theorem2_bound(const BoundInputs& b) {
  return theorem2_bound(b.eta1, b.sigma2, b.N, b.S);
}

double theorem2_bound(double eta1, double sigma2, std::size_t N, std::size_t S) {
  if (eta1 <= 0.0 || N == 0 || S == 0) {
    throw std::invalid_argument("bound needs positive eta1, N, S");
  }
  return 9.0 * eta1 * sigma2 * std::exp2(-static_cast<double>(S)) / static_cast<double>(N);
}

std::int64_t comm_rounds(const StagePlan& plan) {
  std::int64_t total = 0;
  for (const auto& st : plan.stages) total += st.T / st.k;
  return total;
}

// Full-gradient solve at step 1/L: Nesterov momentum for convex objectives
// (constant beta when mu is known), plain descent when weak convexity is
// declared (safe under the PL condition the non-convex instances satisfy).
Optimum solve_optimum(const Objective& obj, const Vec& x0, std::int64_t max_iters,
                      double grad_tol) {
  if (x0.size() != obj.dim()) throw std::invalid_argument("x0 dimension mismatch");
  const auto& con = obj.constants();
  if (con.L <= 0.0) throw std::invalid_argument("objective has no smoothness constant");
  const double step = 1.0 / con.L;
  const bool momentum = !con.rho.has_value();
  double beta_const = 0.0;
  if (momentum && con.mu && *con.mu > 0.0) {
    double rq = std::sqrt(*con.mu / con.L);
    beta_const = (1.0 - rq) / (1.0 + rq);
  }

  Vec x = x0;
  Vec y = x0;
  Vec g, x_next(x0.size());
  const double tol_sq = grad_tol * grad_tol;
  for (std::int64_t it = 1; it <= max_iters; ++it) {
    obj.full_gradient(y, g);
    for (std::size_t i = 0; i < x.size(); ++i) x_next[i] = y[i] - step * g[i];
    if (momentum) {
      double beta = beta_const;
      if (!con.mu || *con.mu <= 0.0) {
        beta = static_cast<double>(it) / static_cast<double>(it + 3);
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x_next[i] + beta * (x_next[i] - x[i]);
      }
    } else {
      y = x_next;
    }
    x.swap(x_next);
    if (!all_finite(x)) throw std::runtime_error("optimum solve diverged");
    obj.full_gradient(x, g);
    if (norm_sq(g) <= tol_sq) return {x, obj.value(x)};
  }
  throw std::runtime_error("optimum solve did not reach gradient tolerance " +
                           std::to_string(grad_tol));
}

}  // namespace stlsgd
