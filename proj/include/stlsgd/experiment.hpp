#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stlsgd/engine.hpp"
#include "stlsgd/metrics.hpp"
#include "stlsgd/schedules.hpp"

namespace stlsgd {

enum class Algorithm { stl_sc, stl_nc_1, stl_nc_2, local, sync, lb_sgd, cr_psgd };

const char* algorithm_name(Algorithm a);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::sync;
  std::string objective;  // "logistic", "quadratic", "pl"
  std::string data_path;  // logistic: libsvm file, or "synthetic" for the bundled set
  std::size_t clients = 1;
  double iid_fraction = 100.0;
  std::uint64_t seed = 0;
  double eta1 = 0.0;
  std::int64_t T1 = 0;       // stagewise algorithms
  std::int64_t T = 0;        // baselines: total iterations
  std::optional<double> k1;  // stagewise; unset = derive via initial_k
  std::int64_t k = 1;        // local
  std::size_t S = 0;
  std::size_t batch_size = 1;
  std::optional<double> lambda;  // logistic; unset = 1/n
  double alpha = 0.0;
  std::optional<double> gamma;  // weakly convex regimes; unset = 1/(2 rho)
  std::int64_t eval_every = 1;
  double target_gap = 1e-4;
  ReturnMode return_mode = ReturnMode::last_iterate;
  std::optional<double> sigma2;     // planning override
  std::optional<double> zeta_star;  // planning override
  double batch_growth = 0.0;        // cr-psgd
  std::int64_t batch_cap = 512;
  std::optional<double> positive_class;
  std::optional<double> negative_class;
  std::optional<std::size_t> num_features;
  double x0 = 0.0;  // uniform initial coordinate value
  std::size_t quad_dim = 10;
  double quad_spread = 1.0;
  double quad_sigma2 = 1.0;
  double pl_sigma2 = 0.0;
  int threads = 1;
  std::string name = "config";  // stem used for output file naming
};

// Flat key=value text (dotted section prefixes, '#' comments); unknown keys
// and keys that do not apply to the configured algorithm/objective are errors.
ExperimentConfig parse_config(std::string_view text, const std::string& name = "config");
ExperimentConfig load_config(const std::string& path);

struct SummaryRecord {
  std::string algorithm;
  std::int64_t comm_rounds_total = 0;
  std::optional<std::int64_t> comm_rounds_to_target;
  std::int64_t iterations_total = 0;
  std::optional<double> final_gap;
  double final_grad_norm_sq = 0.0;
  double wall_time_s = 0.0;
};

struct ExperimentResult {
  SummaryRecord summary;
  RunTrace trace;
  StagePlan plan;
  Vec x_final;
  Vec x_report;                   // final iterate, or the sampled stage for stl-nc-2
  std::size_t sampled_stage = 0;  // stl-nc-2 only
  std::string trace_csv;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string summary_header_csv();
std::string summary_row_csv(const SummaryRecord& r);
std::string format_double(double v);  // shortest round-trip, locale-free

struct SweepItem {
  ExperimentConfig config;
  std::optional<ExperimentResult> result;
  std::string error;   // failure message when result is empty
  int error_code = 0;  // 2 config, 3 divergence
};

// Runs every config, isolating failures per item.  Throws on an empty list.
std::vector<SweepItem> sweep(const std::vector<ExperimentConfig>& configs);
std::string sweep_summary_csv(const std::vector<SweepItem>& items);

}  // namespace stlsgd
