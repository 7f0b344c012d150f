#include "stlsgd/schedules.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stlsgd/errors.hpp"

namespace stlsgd {

namespace {

constexpr std::size_t kMaxStages = 62;  // keeps T1 << (S-1) inside int64

void check_common(double eta1, std::int64_t T1, double k1, std::size_t S) {
  if (eta1 <= 0.0) throw ConfigError("eta1 must be positive");
  if (T1 <= 0) throw ConfigError("T1 must be positive");
  if (k1 <= 0.0) throw ConfigError("k1 must be positive");
  if (S == 0) throw ConfigError("stage count must be at least 1");
  if (S > kMaxStages) {
    throw ConfigError("stage count " + std::to_string(S) + " exceeds the supported maximum " +
                      std::to_string(kMaxStages));
  }
}

std::int64_t materialize_k(double k_real) {
  double f = std::floor(k_real);
  return f < 1.0 ? 1 : static_cast<std::int64_t>(f);
}

void coverage_warning(StagePlan& plan, double eta1, std::int64_t T1, double target,
                      const char* relation) {
  double product = eta1 * static_cast<double>(T1);
  if (std::abs(product - target) > 1e-9 * std::max(1.0, std::abs(target))) {
    std::ostringstream os;
    os << "eta1*T1 = " << product << " differs from the coverage value " << relation << " = "
       << target;
    plan.warnings.push_back(os.str());
  }
}

std::string doubling_provenance(const char* regime, double eta1, std::int64_t T1, double k1,
                                std::size_t S, bool iid) {
  std::ostringstream os;
  os << regime << " schedule: eta halves, T doubles, k grows by "
     << (iid ? "2" : "sqrt(2)") << " per stage; eta1=" << eta1 << " T1=" << T1 << " k1=" << k1
     << " S=" << S << (iid ? " iid" : " non-iid");
  return os.str();
}

StagePlan doubling_plan(Regime regime, const char* label, double eta1, std::int64_t T1,
                        double k1, std::size_t S, bool iid) {
  StagePlan plan;
  plan.regime = regime;
  plan.iid = iid;
  plan.provenance = doubling_provenance(label, eta1, T1, k1, S, iid);
  plan.stages.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    Stage st;
    st.eta = eta1 * std::exp2(-static_cast<double>(s));
    st.T = T1 << s;
    st.k_real = iid ? k1 * std::exp2(static_cast<double>(s))
                    : k1 * std::exp2(0.5 * static_cast<double>(s));
    st.k = materialize_k(st.k_real);
    plan.stages.push_back(st);
  }
  return plan;
}

}  // namespace

double initial_k(bool iid, double eta1, double L, std::size_t N, double sigma2,
                 double zeta_star) {
  if (eta1 <= 0.0 || L <= 0.0) throw ConfigError("eta1 and L must be positive");
  if (N == 0) throw ConfigError("N must be at least 1");
  if (sigma2 < 0.0 || zeta_star < 0.0) throw ConfigError("variances must be nonnegative");
  const double n = static_cast<double>(N);
  const double cap = 1.0 / (9.0 * eta1 * L);
  if (iid) {
    return std::min(1.0 / (6.0 * eta1 * L * n), cap);
  }
  if (sigma2 == 0.0) {
    throw ConfigError(
        "non-iid k1 formula needs sigma2 > 0; set sigma2 or pass an explicit k override");
  }
  return std::min(std::sqrt(sigma2) / std::sqrt(6.0 * eta1 * L * n * (sigma2 + 4.0 * zeta_star)),
                  cap);
}

StagePlan plan_stl_sc(double eta1, std::int64_t T1, double k1, std::size_t S, bool iid,
                      std::optional<double> mu) {
  check_common(eta1, T1, k1, S);
  StagePlan plan = doubling_plan(Regime::sc, "sc", eta1, T1, k1, S, iid);
  if (mu) {
    if (*mu <= 0.0) throw ConfigError("mu must be positive");
    coverage_warning(plan, eta1, T1, 6.0 / *mu, "6/mu");
  }
  return plan;
}

StagePlan plan_stl_nc(double eta1, std::int64_t T1, double k1, std::size_t S, bool iid,
                      int option, std::optional<double> rho) {
  check_common(eta1, T1, k1, S);
  if (rho && *rho <= 0.0) throw ConfigError("rho must be positive");
  if (option == 1) {
    StagePlan plan = doubling_plan(Regime::nc_opt1, "nc-opt1", eta1, T1, k1, S, iid);
    if (rho) coverage_warning(plan, eta1, T1, 6.0 / *rho, "6/rho");
    return plan;
  }
  if (option != 2) throw ConfigError("option must be 1 or 2");
  StagePlan plan;
  plan.regime = Regime::nc_opt2;
  plan.iid = iid;
  {
    std::ostringstream os;
    os << "nc-opt2 schedule: eta_s=eta1/s, T_s=s*T1, k grows by " << (iid ? "s" : "sqrt(s)")
       << "; eta1=" << eta1 << " T1=" << T1 << " k1=" << k1 << " S=" << S
       << (iid ? " iid" : " non-iid");
    plan.provenance = os.str();
  }
  plan.stages.reserve(S);
  for (std::size_t s = 1; s <= S; ++s) {
    Stage st;
    const double sd = static_cast<double>(s);
    st.eta = eta1 / sd;
    st.T = T1 * static_cast<std::int64_t>(s);
    st.k_real = iid ? sd * k1 : std::sqrt(sd) * k1;
    st.k = materialize_k(st.k_real);
    plan.stages.push_back(st);
  }
  if (rho) coverage_warning(plan, eta1, T1, 3.0 / *rho, "3/rho");
  return plan;
}

std::int64_t min_stage_count(std::size_t N, double gap0, double eta1, double sigma2) {
  if (N == 0 || gap0 <= 0.0 || eta1 <= 0.0 || sigma2 <= 0.0) {
    throw ConfigError("min_stage_count needs positive N, gap0, eta1, sigma2");
  }
  double s = std::ceil(std::log2(static_cast<double>(N) * gap0 / (eta1 * sigma2)) + 2.0);
  return s < 1.0 ? 1 : static_cast<std::int64_t>(s);
}

BaselinePlan plan_baseline(BaselineKind kind, const BaselineParams& params) {
  if (params.eta1 <= 0.0) throw ConfigError("eta1 must be positive");
  if (params.T <= 0) throw ConfigError("T must be positive");
  if (params.alpha < 0.0) throw ConfigError("alpha must be nonnegative");

  BaselinePlan out;
  Stage st;
  st.eta = params.eta1;
  st.T = params.T;
  st.k_real = 1.0;
  st.k = 1;

  std::ostringstream os;
  switch (kind) {
    case BaselineKind::sync:
      if (params.batch < 1) throw ConfigError("sync baseline needs batch >= 1");
      os << "sync baseline: k=1, lr eta1/(1+alpha*t), eta1=" << params.eta1
         << " alpha=" << params.alpha << " T=" << params.T;
      out.lr_alpha = params.alpha;
      out.batch = params.batch;
      break;
    case BaselineKind::local_fixed_k:
      if (params.k < 1) throw ConfigError("local baseline needs k >= 1");
      if (params.batch < 1) throw ConfigError("local baseline needs batch >= 1");
      st.k_real = static_cast<double>(params.k);
      st.k = params.k;
      os << "local baseline: fixed k=" << params.k << ", lr eta1/(1+alpha*t), eta1="
         << params.eta1 << " alpha=" << params.alpha << " T=" << params.T;
      out.lr_alpha = params.alpha;
      out.batch = params.batch;
      break;
    case BaselineKind::lb_sgd:
      if (params.batch < 1) throw ConfigError("lb-sgd needs batch >= 1");
      os << "lb-sgd baseline: k=1, batch=" << params.batch << ", lr eta1/(1+alpha*t), eta1="
         << params.eta1 << " alpha=" << params.alpha << " T=" << params.T;
      out.lr_alpha = params.alpha;
      out.batch = params.batch;
      break;
    case BaselineKind::cr_psgd:
      if (params.batch < 1) throw ConfigError("cr-psgd needs batch >= 1");
      if (params.batch_growth <= 1.0) throw ConfigError("cr-psgd needs batch_growth > 1");
      if (params.batch_cap < 1) throw ConfigError("cr-psgd needs batch_cap >= 1");
      os << "cr-psgd baseline: k=1, batch grows from " << params.batch << " by "
         << params.batch_growth << " per epoch, cap " << params.batch_cap << ", fixed lr eta1="
         << params.eta1 << " T=" << params.T;
      out.batch = params.batch;
      out.batch_growth = params.batch_growth;
      out.batch_cap = params.batch_cap;
      break;
  }

  out.plan.regime = Regime::baseline;
  out.plan.iid = true;
  out.plan.provenance = os.str();
  out.plan.stages.push_back(st);
  return out;
}

double decayed_lr(double eta1, double alpha, std::int64_t t) {
  return eta1 / (1.0 + alpha * static_cast<double>(t));
}

std::int64_t grow_batch(std::int64_t b, double factor) {
  return static_cast<std::int64_t>(std::floor(factor * static_cast<double>(b)));
}

std::int64_t total_iterations(const StagePlan& plan) {
  std::int64_t total = 0;
  for (const auto& st : plan.stages) total += st.T;
  return total;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::sc: return "sc";
    case Regime::nc_opt1: return "nc-opt1";
    case Regime::nc_opt2: return "nc-opt2";
    case Regime::baseline: return "baseline";
  }
  return "unknown";
}

}  // namespace stlsgd
