#include "stlsgd/engine.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "stlsgd/errors.hpp"

namespace stlsgd {

ClientFleet make_fleet(std::size_t num_clients, std::uint64_t seed, Shards shards) {
  if (num_clients == 0) throw std::invalid_argument("fleet needs at least one client");
  if (!shards.empty() && shards.size() != num_clients) {
    throw std::invalid_argument("shard count does not match client count");
  }
  ClientFleet fleet;
  fleet.num_clients = num_clients;
  fleet.seed = seed;
  fleet.shards = std::move(shards);
  return fleet;
}

Vec average_models(const std::vector<Vec>& models) {
  if (models.empty()) throw std::invalid_argument("no models to average");
  Vec out = models[0];
  if (models.size() == 1) return out;
  // Accumulate deviations from the first model, clients in index order; a
  // consensus list therefore averages to models[0] bitwise.
  Vec dev(out.size(), 0.0);
  for (std::size_t j = 1; j < models.size(); ++j) {
    check_same_dim(models[0], models[j]);
    const Vec& m = models[j];
    for (std::size_t i = 0; i < dev.size(); ++i) dev[i] += m[i] - models[0][i];
  }
  const double w = 1.0 / static_cast<double>(models.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * dev[i];
  return out;
}

void average_models(ClientFleet& fleet) {
  Vec avg = average_models(fleet.states);
  for (auto& s : fleet.states) s = avg;
}

std::size_t sample_stage_index(std::size_t S, RngStream& rng) {
  if (S == 0) throw std::invalid_argument("stage count must be at least 1");
  const std::uint64_t total = static_cast<std::uint64_t>(S) * (S + 1) / 2;
  const std::uint64_t r = rng.next_below(total);
  std::uint64_t cum = 0;
  for (std::size_t s = 1; s <= S; ++s) {
    cum += s;
    if (r < cum) return s;
  }
  return S;  // unreachable
}

namespace {

// Engine state for one local_sgd call; shared by the sequential and threaded
// drivers so both produce identical arithmetic.
class Run {
 public:
  Run(const Objective& obj, const Vec& x0, const LocalSgdConfig& cfg, ClientFleet& fleet,
      const Objective* eval_obj)
      : obj_(obj), cfg_(cfg), fleet_(fleet), eval_(eval_obj ? *eval_obj : obj) {
    if (cfg_.T <= 0) throw std::invalid_argument("T must be positive");
    if (cfg_.k <= 0) throw std::invalid_argument("k must be positive");
    if (cfg_.eta <= 0.0) throw std::invalid_argument("eta must be positive");
    if (cfg_.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (cfg_.eval_every <= 0) throw std::invalid_argument("eval_every must be positive");
    if (x0.size() != obj_.dim()) throw std::invalid_argument("x0 dimension mismatch");
    if (fleet_.num_clients == 0) throw std::invalid_argument("fleet is empty");
    if (fleet_.num_clients != obj_.num_clients()) {
      throw std::invalid_argument("fleet size does not match objective client count");
    }
    stride_ = std::max(cfg_.k, cfg_.eval_every);

    ret_idx_ = cfg_.T;
    if (cfg_.return_mode == ReturnMode::random_iterate) {
      if (cfg_.return_index) {
        if (*cfg_.return_index < 0 || *cfg_.return_index >= cfg_.T) {
          throw std::invalid_argument("return_index outside [0, T-1]");
        }
        ret_idx_ = *cfg_.return_index;
      } else {
        RngStream r(fleet_.seed, kMetaStream, static_cast<std::uint64_t>(cfg_.t0));
        ret_idx_ = static_cast<std::int64_t>(r.next_below(static_cast<std::uint64_t>(cfg_.T)));
      }
    }

    fleet_.states.assign(fleet_.num_clients, x0);
    grad_bufs_.resize(fleet_.num_clients);
    if (ret_idx_ == 0) snapshot_ = x0;
    build_batch_schedule();
    if (cfg_.t0 == 0) emit_row(0, x0, 0.0);
  }

  double lr_at(std::int64_t t) const {
    if (cfg_.lr_alpha == 0.0) return cfg_.eta;
    return decayed_lr(cfg_.eta, cfg_.lr_alpha, cfg_.t0 + t - 1);
  }

  std::size_t batch_at(std::int64_t t) const {
    return batch_per_t_.empty() ? cfg_.batch_size
                                : static_cast<std::size_t>(batch_per_t_[t - 1]);
  }

  void step_client(std::size_t c, std::int64_t t) {
    RngStream rng = fleet_.stream(c, cfg_.t0 + t);
    Vec& x = fleet_.states[c];
    obj_.stochastic_gradient(x, c, rng, batch_at(t), grad_bufs_[c]);
    axpy(-lr_at(t), grad_bufs_[c], x);
    if (!all_finite(x)) throw DivergenceError(lr_at(t), cfg_.k, cfg_.stage);
  }

  bool is_sync(std::int64_t t) const {
    return t == cfg_.T || t % cfg_.k == 0 || t % stride_ == 0 || t == ret_idx_;
  }

  std::int64_t next_sync(std::int64_t after) const {
    auto next_mult = [](std::int64_t a, std::int64_t m) { return (a / m + 1) * m; };
    std::int64_t cand = cfg_.T;
    cand = std::min(cand, next_mult(after, cfg_.k));
    cand = std::min(cand, next_mult(after, stride_));
    if (ret_idx_ > after) cand = std::min(cand, ret_idx_);
    return cand;
  }

  // Averaging event, trace sampling, and snapshot capture for iteration t.
  // Divergence is measured against the pre-averaging states.
  void on_sync(std::int64_t t) {
    Vec avg = average_models(fleet_.states);
    if (t == ret_idx_) snapshot_ = avg;
    if (t == cfg_.T) final_avg_ = avg;
    if (t % stride_ == 0 || t == cfg_.T) {
      double div = 0.0;
      for (const auto& s : fleet_.states) div += dist_sq(avg, s);
      div /= static_cast<double>(fleet_.num_clients);
      emit_row(t, avg, div);
    }
    if (t % cfg_.k == 0) {
      for (auto& s : fleet_.states) s = avg;
    }
  }

  LocalSgdResult finish() && {
    LocalSgdResult out;
    out.comm_rounds = cfg_.T / cfg_.k;
    out.return_index = ret_idx_;
    out.x = cfg_.return_mode == ReturnMode::random_iterate ? std::move(snapshot_)
                                                           : std::move(final_avg_);
    out.trace = std::move(trace_);
    return out;
  }

 private:
  void build_batch_schedule() {
    if (cfg_.batch_growth <= 0.0 || cfg_.epoch_examples <= 0) return;
    batch_per_t_.resize(static_cast<std::size_t>(cfg_.T));
    std::int64_t b = static_cast<std::int64_t>(cfg_.batch_size);
    std::int64_t consumed = 0;
    for (std::int64_t t = 1; t <= cfg_.T; ++t) {
      batch_per_t_[static_cast<std::size_t>(t - 1)] = b;
      consumed += b;
      while (consumed >= cfg_.epoch_examples) {
        consumed -= cfg_.epoch_examples;
        if (b <= cfg_.batch_cap) b = grow_batch(b, cfg_.batch_growth);
      }
    }
  }

  void emit_row(std::int64_t t, const Vec& x, double div) {
    TraceRow row;
    row.t = cfg_.t0 + t;
    row.comm_rounds = cfg_.comm0 + t / cfg_.k;
    row.eta = t == 0 ? lr_at(1) : lr_at(t);
    row.k = cfg_.k;
    row.stage = cfg_.stage;
    row.divergence = div;
    Vec g;
    eval_.full_gradient(x, g);
    row.grad_norm_sq = norm_sq(g);
    if (eval_.optimum()) {
      row.gap = eval_.value(x) - eval_.optimum()->value;
    }
    if (!std::isfinite(*row.grad_norm_sq) || (row.gap && !std::isfinite(*row.gap))) {
      throw DivergenceError(row.eta, cfg_.k, cfg_.stage);
    }
    trace_.rows.push_back(std::move(row));
  }

  const Objective& obj_;
  const LocalSgdConfig& cfg_;
  ClientFleet& fleet_;
  const Objective& eval_;
  std::int64_t stride_ = 1;
  std::int64_t ret_idx_ = 0;
  std::vector<std::int64_t> batch_per_t_;
  std::vector<Vec> grad_bufs_;
  Vec snapshot_;
  Vec final_avg_;
  RunTrace trace_;
};

void drive_sequential(Run& run, std::int64_t T, std::size_t num_clients) {
  for (std::int64_t t = 1; t <= T; ++t) {
    for (std::size_t c = 0; c < num_clients; ++c) run.step_client(c, t);
    if (run.is_sync(t)) run.on_sync(t);
  }
}

// One thread per worker, each owning a contiguous client block; sync points
// form a barrier whose completion step runs the averaging on a single thread,
// so the arithmetic is identical to the sequential driver.
void drive_parallel(Run& run, std::int64_t T, std::size_t num_clients, int threads) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), num_clients);
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto fail = [&](std::exception_ptr e) {
    std::lock_guard<std::mutex> lock(error_mu);
    if (!error) error = e;
    stop.store(true);
  };

  std::int64_t sync_t = run.next_sync(0);
  auto completion = [&]() noexcept {
    if (stop.load()) return;
    try {
      run.on_sync(sync_t);
      sync_t = run.next_sync(sync_t);
    } catch (...) {
      fail(std::current_exception());
    }
  };
  std::barrier bar(static_cast<std::ptrdiff_t>(workers), completion);

  auto work = [&](std::size_t w) {
    const std::size_t lo = w * num_clients / workers;
    const std::size_t hi = (w + 1) * num_clients / workers;
    std::int64_t target = run.next_sync(0);
    for (std::int64_t t = 1; t <= T; ++t) {
      try {
        for (std::size_t c = lo; c < hi; ++c) run.step_client(c, t);
      } catch (...) {
        fail(std::current_exception());
      }
      if (t == target) {
        bar.arrive_and_wait();
        if (stop.load()) return;
        target = run.next_sync(t);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

LocalSgdResult local_sgd(const Objective& obj, const Vec& x0, const LocalSgdConfig& cfg,
                         ClientFleet& fleet, const Objective* eval_obj) {
  Run run(obj, x0, cfg, fleet, eval_obj);
  if (cfg.threads > 1 && fleet.num_clients > 1) {
    drive_parallel(run, cfg.T, fleet.num_clients, cfg.threads);
  } else {
    drive_sequential(run, cfg.T, fleet.num_clients);
  }
  return std::move(run).finish();
}

StagewiseResult run_stagewise(const ObjectivePtr& obj, const Vec& x1, const StagePlan& plan,
                              ClientFleet& fleet, std::optional<double> prox_gamma,
                              const StagewiseOptions& opts) {
  if (!obj) throw std::invalid_argument("objective is null");
  if (plan.stages.empty()) throw std::invalid_argument("plan has no stages");
  if (x1.size() != obj->dim()) throw std::invalid_argument("x1 dimension mismatch");
  if (prox_gamma) {
    if (*prox_gamma <= 0.0) throw ConfigError("prox gamma must be positive");
    const auto& rho = obj->constants().rho;
    if (!rho) throw ConfigError("prox stages need a declared weak-convexity constant rho");
    if (1.0 / *prox_gamma <= *rho) {
      throw ConfigError("prox misconfiguration: 1/gamma must exceed rho");
    }
  }

  StagewiseResult out;
  out.stage_iterates.push_back(x1);
  Vec x = x1;
  std::int64_t t0 = 0;
  std::int64_t comm0 = 0;

  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const Stage& st = plan.stages[s];
    LocalSgdConfig cfg;
    cfg.eta = st.eta;
    cfg.T = st.T;
    cfg.k = st.k;
    cfg.batch_size = opts.batch_size;
    cfg.return_mode = opts.return_mode;
    cfg.eval_every = opts.eval_every;
    cfg.t0 = t0;
    cfg.comm0 = comm0;
    cfg.stage = static_cast<int>(s + 1);
    cfg.threads = opts.threads;

    LocalSgdResult res;
    if (prox_gamma) {
      auto stage_obj = prox_wrap(obj, x, *prox_gamma);
      res = local_sgd(*stage_obj, x, cfg, fleet, obj.get());
    } else {
      res = local_sgd(*obj, x, cfg, fleet);
    }
    x = std::move(res.x);
    out.stage_iterates.push_back(x);
    t0 += st.T;
    comm0 += res.comm_rounds;
    out.trace.rows.insert(out.trace.rows.end(),
                          std::make_move_iterator(res.trace.rows.begin()),
                          std::make_move_iterator(res.trace.rows.end()));
  }

  out.x_final = std::move(x);
  out.comm_rounds = comm0;
  out.iterations = t0;
  return out;
}

}  // namespace stlsgd
