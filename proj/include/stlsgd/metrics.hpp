#pragma once

#include <cstdint>
#include <optional>

#include "stlsgd/engine.hpp"
#include "stlsgd/objective.hpp"
#include "stlsgd/schedules.hpp"

namespace stlsgd {

struct BoundInputs {
  double eta = 0.0;
  std::int64_t T = 0;
  std::size_t N = 1;
  double sigma2 = 0.0;
  double dist0_sq = 0.0;  // ||x0 - x*||^2
  double eta1 = 0.0;
  std::size_t S = 1;
  std::optional<double> mu;
};

double objective_gap(const Objective& obj, const Vec& x);  // f(x) - f*

// (1/N) sum_i ||grad f_i(x) - grad f(x)||^2 with grad f the client mean;
// equals zeta_star at x = x*.
double zeta_at(const Objective& obj, const Vec& x);

// (1/N) sum_i ||x_hat - x_i||^2 with x_hat the current mean.
double divergence(const ClientFleet& fleet);
double divergence(const std::vector<Vec>& models);

double bregman_divergence(const Objective& obj, const Vec& x, const Vec& y);

// 3 dist0_sq / (4 eta T) + eta sigma2 / N
double theorem1_bound(const BoundInputs& b);
double theorem1_bound(double dist0_sq, double eta, std::int64_t T, double sigma2,
                      std::size_t N);

// 9 eta1 sigma2 / (2^S N)
double theorem2_bound(const BoundInputs& b);
double theorem2_bound(double eta1, double sigma2, std::size_t N, std::size_t S);

std::int64_t comm_rounds(const StagePlan& plan);  // sum of floor(T_s / k_s)

// Deterministic accelerated full-gradient solve down to grad_tol; throws when
// the tolerance is not reached within max_iters.
Optimum solve_optimum(const Objective& obj, const Vec& x0, std::int64_t max_iters = 100000,
                      double grad_tol = 1e-10);

}  // namespace stlsgd
