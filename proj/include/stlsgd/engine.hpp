#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "stlsgd/objective.hpp"
#include "stlsgd/partition.hpp"
#include "stlsgd/rng.hpp"
#include "stlsgd/schedules.hpp"
#include "stlsgd/vec.hpp"

namespace stlsgd {

struct ClientFleet {
  std::size_t num_clients = 0;
  std::vector<Vec> states;
  Shards shards;  // bookkeeping copy; objectives hold their own sampling view
  std::uint64_t seed = 0;

  // Counter-based stream for (client, iteration); see RngStream.
  RngStream stream(std::size_t client, std::int64_t t) const {
    return RngStream(seed, client, static_cast<std::uint64_t>(t));
  }
};

ClientFleet make_fleet(std::size_t num_clients, std::uint64_t seed, Shards shards = {});

enum class ReturnMode { random_iterate, last_iterate };

struct TraceRow {
  std::int64_t t = 0;
  std::int64_t comm_rounds = 0;
  std::optional<double> gap;
  std::optional<double> grad_norm_sq;
  std::optional<double> divergence;
  double eta = 0.0;
  std::int64_t k = 1;
  int stage = 1;
};

struct RunTrace {
  std::vector<TraceRow> rows;
};

struct LocalSgdConfig {
  double eta = 0.1;
  std::int64_t T = 1;
  std::int64_t k = 1;
  std::size_t batch_size = 1;
  ReturnMode return_mode = ReturnMode::random_iterate;
  std::optional<std::int64_t> return_index;  // drawn up front when absent in random mode
  std::int64_t eval_every = 1;

  // Baseline overrides and stagewise bookkeeping.
  double lr_alpha = 0.0;            // eta_t = eta/(1 + alpha t), t counted globally
  double batch_growth = 0.0;        // floor(factor * B) once per epoch; 0 = fixed
  std::int64_t batch_cap = 512;     // growth stops once B exceeds this
  std::int64_t epoch_examples = 0;  // per-client examples per epoch (0 = never grows)
  std::int64_t t0 = 0;              // global iteration offset of this call
  std::int64_t comm0 = 0;           // cumulative comm rounds before this call
  int stage = 1;
  int threads = 1;
};

struct LocalSgdResult {
  Vec x;  // averaged iterate at the designated index (or at T)
  std::int64_t comm_rounds = 0;  // this call only
  std::int64_t return_index = 0;
  RunTrace trace;
};

// Mean with a fixed left-to-right order; a consensus list comes back bitwise
// unchanged (the mean is accumulated as deviations from the first entry).
Vec average_models(const std::vector<Vec>& models);
void average_models(ClientFleet& fleet);  // averages and overwrites every state

// T local steps per client, averaging whenever t mod k = 0.  Metrics rows are
// evaluated on eval_obj (defaults to obj) so proximal stages can report on the
// original problem.
LocalSgdResult local_sgd(const Objective& obj, const Vec& x0, const LocalSgdConfig& cfg,
                         ClientFleet& fleet, const Objective* eval_obj = nullptr);

// Index in [1, S] drawn with probability p_s = s / (1 + 2 + ... + S).
std::size_t sample_stage_index(std::size_t S, RngStream& rng);

struct StagewiseOptions {
  std::size_t batch_size = 1;
  ReturnMode return_mode = ReturnMode::random_iterate;
  std::int64_t eval_every = 1;
  int threads = 1;
};

struct StagewiseResult {
  Vec x_final;
  std::vector<Vec> stage_iterates;  // x_1 .. x_{S+1}
  std::int64_t comm_rounds = 0;
  std::int64_t iterations = 0;
  RunTrace trace;
};

// Runs the plan stage by stage; with prox_gamma set, each stage minimizes
// obj + ||x - x_s||^2/(2 gamma) while the trace keeps reporting on obj.
StagewiseResult run_stagewise(const ObjectivePtr& obj, const Vec& x1, const StagePlan& plan,
                              ClientFleet& fleet, std::optional<double> prox_gamma = {},
                              const StagewiseOptions& opts = {});

}  // namespace stlsgd
