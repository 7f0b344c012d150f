#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stlsgd {

enum class Regime { sc, nc_opt1, nc_opt2, baseline };

struct Stage {
  double eta = 0.0;
  std::int64_t T = 0;
  double k_real = 1.0;  // recurrence value, tracked in full precision
  std::int64_t k = 1;   // materialized max{floor(k_real), 1}
};

struct StagePlan {
  Regime regime = Regime::baseline;
  bool iid = true;
  std::vector<Stage> stages;
  std::string provenance;             // one-line derivation note, echoed in trace headers
  std::vector<std::string> warnings;  // soft checks that eta1*T1 covers the guarantee
};

// Largest admissible communication period for the given constants; real-valued,
// not yet floored.  Callers in the weakly convex regimes pass the smoothness of
// the proximal stage objective (L + 1/gamma) in place of L.
double initial_k(bool iid, double eta1, double L, std::size_t N, double sigma2,
                 double zeta_star);

// Strongly convex stagewise plan: eta halves, T doubles, k doubles (IID) or
// grows by sqrt(2) (Non-IID) per stage.  eta1*T1 = 6/mu is checked softly.
StagePlan plan_stl_sc(double eta1, std::int64_t T1, double k1, std::size_t S, bool iid,
                      std::optional<double> mu = {});

// Weakly convex stagewise plan.  Option 1 reuses the sc recurrences (coverage
// expects eta1*T1 = 6/rho); Option 2 uses eta_s = eta1/s, T_s = s*T1,
// k_s = s*k1 (IID) or sqrt(s)*k1 (Non-IID) with coverage eta1*T1 = 3/rho.
StagePlan plan_stl_nc(double eta1, std::int64_t T1, double k1, std::size_t S, bool iid,
                      int option, std::optional<double> rho = {});

// Stage-count prescription ceil(log2(N gap0 / (eta1 sigma2)) + 2), at least 1.
std::int64_t min_stage_count(std::size_t N, double gap0, double eta1, double sigma2);

enum class BaselineKind { sync, local_fixed_k, lb_sgd, cr_psgd };

struct BaselineParams {
  double eta1 = 0.0;
  std::int64_t T = 0;
  std::int64_t k = 1;         // local_fixed_k
  double alpha = 0.0;         // per-iteration lr eta1/(1 + alpha t)
  std::size_t batch = 1;      // lb_sgd B, cr_psgd B0
  double batch_growth = 0.0;  // cr_psgd rho_B
  std::int64_t batch_cap = 512;
};

struct BaselinePlan {
  StagePlan plan;  // single stage
  double lr_alpha = 0.0;
  std::size_t batch = 1;
  double batch_growth = 0.0;  // 0 = fixed batch
  std::int64_t batch_cap = 512;
};

BaselinePlan plan_baseline(BaselineKind kind, const BaselineParams& params);

double decayed_lr(double eta1, double alpha, std::int64_t t);  // eta1 / (1 + alpha t)
std::int64_t grow_batch(std::int64_t b, double factor);        // floor(factor * b)
std::int64_t total_iterations(const StagePlan& plan);

const char* regime_name(Regime r);

}  // namespace stlsgd
