#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "stlsgd/dataset.hpp"
#include "stlsgd/engine.hpp"
#include "stlsgd/errors.hpp"
#include "stlsgd/metrics.hpp"
#include "stlsgd/objective.hpp"
#include "stlsgd/rng.hpp"
#include "stlsgd/schedules.hpp"
#include "stlsgd/vec.hpp"

using namespace stlsgd;

namespace {

bool same_row(const TraceRow& a, const TraceRow& b) {
  return a.t == b.t && a.comm_rounds == b.comm_rounds && a.gap == b.gap &&
         a.grad_norm_sq == b.grad_norm_sq && a.divergence == b.divergence &&
         a.eta == b.eta && a.k == b.k && a.stage == b.stage;
}

bool same_trace(const RunTrace& a, const RunTrace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (!same_row(a.rows[i], b.rows[i])) return false;
  }
  return true;
}

StagePlan manual_plan(std::vector<Stage> stages) {
  StagePlan plan;
  plan.regime = Regime::sc;
  plan.stages = std::move(stages);
  plan.provenance = "manual";
  return plan;
}

}  // namespace

TEST_CASE("two noiseless clients on (1/2)x^2 walk through the textbook iterates") {
  auto obj = quadratic_objective({{0.0}, {0.0}}, 0.0);
  auto fleet = make_fleet(2, 1);
  LocalSgdConfig cfg;
  cfg.eta = 0.5;
  cfg.T = 2;
  cfg.k = 1;
  cfg.return_mode = ReturnMode::random_iterate;
  cfg.return_index = 1;
  auto res = local_sgd(*obj, {1.0}, cfg, fleet);
  CHECK(res.x == Vec{0.5});  // iterates are 0.5 then 0.25
  CHECK(res.comm_rounds == 2);
  CHECK(res.return_index == 1);

  REQUIRE(res.trace.rows.size() == 3);
  const auto& rows = res.trace.rows;
  CHECK(rows[0].t == 0);
  CHECK(rows[1].t == 1);
  CHECK(rows[2].t == 2);
  CHECK(rows[0].comm_rounds == 0);
  CHECK(rows[1].comm_rounds == 1);
  CHECK(rows[2].comm_rounds == 2);
  CHECK(rows[1].gap.value() == doctest::Approx(0.125));
  CHECK(rows[2].gap.value() == doctest::Approx(0.03125));
  CHECK(rows[1].divergence.value() == 0.0);  // identical clients never drift
  CHECK(rows[1].eta == 0.5);
  CHECK(rows[1].k == 1);
  CHECK(rows[1].stage == 1);

  cfg.return_index = 0;
  auto fleet0 = make_fleet(2, 1);
  CHECK(local_sgd(*obj, {1.0}, cfg, fleet0).x == Vec{1.0});

  cfg.return_mode = ReturnMode::last_iterate;
  cfg.return_index.reset();
  auto fleet1 = make_fleet(2, 1);
  CHECK(local_sgd(*obj, {1.0}, cfg, fleet1).x == Vec{0.25});
}

TEST_CASE("a single period spanning the whole run costs one communication round") {
  auto obj = quadratic_objective({{0.0}, {0.0}}, 0.0);
  auto fleet = make_fleet(2, 3);
  LocalSgdConfig cfg;
  cfg.eta = 0.1;
  cfg.T = 4;
  cfg.k = 4;
  cfg.return_mode = ReturnMode::last_iterate;
  auto res = local_sgd(*obj, {1.0}, cfg, fleet);
  CHECK(res.comm_rounds == 1);
  REQUIRE(res.trace.rows.size() == 2);  // reporting stride follows k
  CHECK(res.trace.rows[1].t == 4);

  auto fleet2 = make_fleet(2, 3);
  cfg.T = 10;
  auto res2 = local_sgd(*obj, {1.0}, cfg, fleet2);
  CHECK(res2.comm_rounds == 2);  // floor(10/4)
}

TEST_CASE("averaging is the exact mean and leaves a consensus untouched") {
  CHECK(average_models({{1.0}, {3.0}}) == Vec{2.0});
  CHECK(average_models({{7.5, -2.0}}) == Vec{7.5, -2.0});

  RngStream rng(5, 0, 0);
  Vec v(16);
  for (auto& e : v) e = std::exp(3.0 * rng.next_gaussian());
  Vec out = average_models({v, v, v, v, v});
  CHECK(out == v);  // bitwise, not approximately
}

TEST_CASE("states agree exactly after the final on-schedule averaging") {
  Dataset raw = synthetic_two_class(96, 6, 8);
  auto data = std::make_shared<Dataset>(std::move(raw));
  Shards shards = partition(*data, {4, 50.0, 2});
  auto obj = logistic_objective(data, 0.01, shards);
  auto fleet = make_fleet(4, 9, shards);
  LocalSgdConfig cfg;
  cfg.eta = 0.1;
  cfg.T = 24;
  cfg.k = 6;
  cfg.return_mode = ReturnMode::last_iterate;
  (void)local_sgd(*obj, Vec(6, 0.0), cfg, fleet);
  CHECK(divergence(fleet) == 0.0);
  for (std::size_t c = 1; c < 4; ++c) CHECK(fleet.states[c] == fleet.states[0]);
}

TEST_CASE("k = 1 matches a hand-rolled synchronous loop step for step") {
  const std::size_t N = 4, d = 5;
  std::vector<Vec> centers;
  RngStream crng(40, 0, 0);
  for (std::size_t c = 0; c < N; ++c) {
    Vec v(d);
    for (auto& e : v) e = crng.next_gaussian();
    centers.push_back(v);
  }
  auto obj = quadratic_objective(centers, 1.0);
  const double eta = 0.05;
  const std::uint64_t seed = 123;

  Vec x_ref(d, 0.0);
  Vec x_eng(d, 0.0);
  Vec g(d), sum(d);
  for (std::int64_t t = 1; t <= 100; ++t) {
    // Reference: plain mean of per-client draws keyed (seed, c, t).
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t c = 0; c < N; ++c) {
      RngStream rng(seed, c, static_cast<std::uint64_t>(t));
      obj->stochastic_gradient(x_ref, c, rng, 2, g);
      axpy(1.0, g, sum);
    }
    for (std::size_t j = 0; j < d; ++j) x_ref[j] -= eta * sum[j] / static_cast<double>(N);

    auto fleet = make_fleet(N, seed);
    LocalSgdConfig cfg;
    cfg.eta = eta;
    cfg.T = 1;
    cfg.k = 1;
    cfg.batch_size = 2;
    cfg.return_mode = ReturnMode::last_iterate;
    cfg.t0 = t - 1;
    x_eng = local_sgd(*obj, x_eng, cfg, fleet).x;

    CHECK(std::sqrt(dist_sq(x_ref, x_eng)) < 1e-12);
  }

  // One uninterrupted k = 1 run lands on the same chain bitwise.
  auto fleet = make_fleet(N, seed);
  LocalSgdConfig cfg;
  cfg.eta = eta;
  cfg.T = 100;
  cfg.k = 1;
  cfg.batch_size = 2;
  cfg.return_mode = ReturnMode::last_iterate;
  CHECK(local_sgd(*obj, Vec(d, 0.0), cfg, fleet).x == x_eng);
}

TEST_CASE("threaded execution reproduces the sequential run bitwise") {
  const std::size_t N = 8, d = 6;
  std::vector<Vec> centers;
  RngStream crng(41, 0, 0);
  for (std::size_t c = 0; c < N; ++c) {
    Vec v(d);
    for (auto& e : v) e = crng.next_gaussian();
    centers.push_back(v);
  }
  auto obj = quadratic_objective(centers, 1.0);
  LocalSgdConfig cfg;
  cfg.eta = 0.05;
  cfg.T = 60;
  cfg.k = 5;
  cfg.eval_every = 3;
  cfg.return_mode = ReturnMode::random_iterate;

  auto fleet_seq = make_fleet(N, 77);
  auto res_seq = local_sgd(*obj, Vec(d, 1.0), cfg, fleet_seq);
  cfg.threads = 4;
  auto fleet_par = make_fleet(N, 77);
  auto res_par = local_sgd(*obj, Vec(d, 1.0), cfg, fleet_par);

  CHECK(res_seq.x == res_par.x);
  CHECK(res_seq.return_index == res_par.return_index);
  CHECK(same_trace(res_seq.trace, res_par.trace));
  for (std::size_t c = 0; c < N; ++c) CHECK(fleet_seq.states[c] == fleet_par.states[c]);

  cfg.threads = 13;  // more threads than clients is legal
  auto fleet_over = make_fleet(N, 77);
  CHECK(local_sgd(*obj, Vec(d, 1.0), cfg, fleet_over).x == res_seq.x);
}

TEST_CASE("learning-rate decay follows eta/(1 + alpha t) with a global clock") {
  auto obj = quadratic_objective({{0.0}}, 0.0);
  auto fleet = make_fleet(1, 0);
  LocalSgdConfig cfg;
  cfg.eta = 0.5;
  cfg.T = 2;
  cfg.k = 1;
  cfg.lr_alpha = 1.0;
  cfg.return_mode = ReturnMode::last_iterate;
  auto res = local_sgd(*obj, {1.0}, cfg, fleet);
  // Steps use 0.5 then 0.25: 1 -> 0.5 -> 0.375.
  CHECK(res.x == Vec{0.375});
  CHECK(res.trace.rows[1].eta == 0.5);
  CHECK(res.trace.rows[2].eta == 0.25);
}

TEST_CASE("halving the step size shrinks pre-averaging drift on every seed") {
  const std::size_t N = 4, d = 4;
  auto obj = quadratic_objective(std::vector<Vec>(N, Vec(d, 0.0)), 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    double means[2];
    int slot = 0;
    for (double eta : {0.2, 0.1}) {
      auto fleet = make_fleet(N, seed);
      LocalSgdConfig cfg;
      cfg.eta = eta;
      cfg.T = 160;
      cfg.k = 8;
      cfg.eval_every = 8;
      cfg.return_mode = ReturnMode::last_iterate;
      auto res = local_sgd(*obj, Vec(d, 1.0), cfg, fleet);
      double acc = 0.0;
      int n = 0;
      for (const auto& row : res.trace.rows) {
        if (row.divergence && row.t > 0) {
          acc += *row.divergence;
          ++n;
        }
      }
      REQUIRE(n > 0);
      means[slot++] = acc / n;
    }
    CHECK(means[1] < means[0]);
  }
}

TEST_CASE("a one-stage plan reduces to a plain run") {
  auto obj = quadratic_objective({{1.0, 0.0}, {-1.0, 0.5}}, 0.5);
  StagePlan plan = manual_plan({Stage{0.1, 20, 4.0, 4}});

  auto fleet_a = make_fleet(2, 31);
  auto staged = run_stagewise(obj, {2.0, 2.0}, plan, fleet_a);

  auto fleet_b = make_fleet(2, 31);
  LocalSgdConfig cfg;
  cfg.eta = 0.1;
  cfg.T = 20;
  cfg.k = 4;
  auto flat = local_sgd(*obj, {2.0, 2.0}, cfg, fleet_b);

  CHECK(staged.x_final == flat.x);
  CHECK(staged.comm_rounds == flat.comm_rounds);
  CHECK(same_trace(staged.trace, flat.trace));
  REQUIRE(staged.stage_iterates.size() == 2);  // x_1 and x_2
  CHECK(staged.stage_iterates[0] == Vec{2.0, 2.0});
  CHECK(staged.stage_iterates[1] == staged.x_final);
}

TEST_CASE("stage totals add up and the trace clock never rewinds") {
  auto obj = quadratic_objective({{0.0}, {1.0}}, 0.25);
  StagePlan plan = manual_plan({
      Stage{0.1, 60, 4.0, 4},
      Stage{0.05, 120, 8.0, 8},
      Stage{0.025, 240, 16.0, 16},
  });
  auto fleet = make_fleet(2, 51);
  auto res = run_stagewise(obj, {3.0}, plan, fleet);
  CHECK(res.comm_rounds == 45);
  CHECK(res.comm_rounds == comm_rounds(plan));
  CHECK(res.iterations == 420);
  REQUIRE(res.stage_iterates.size() == 4);

  REQUIRE(!res.trace.rows.empty());
  CHECK(res.trace.rows.front().t == 0);
  CHECK(res.trace.rows.back().t == 420);
  CHECK(res.trace.rows.back().comm_rounds == 45);
  int max_stage = 0;
  for (std::size_t i = 1; i < res.trace.rows.size(); ++i) {
    CHECK(res.trace.rows[i].t > res.trace.rows[i - 1].t);
    CHECK(res.trace.rows[i].comm_rounds >= res.trace.rows[i - 1].comm_rounds);
    CHECK(res.trace.rows[i].stage >= res.trace.rows[i - 1].stage);
    max_stage = std::max(max_stage, res.trace.rows[i].stage);
  }
  CHECK(max_stage == 3);
}

TEST_CASE("proximal stages report progress on the original objective") {
  auto pl = pl_objective(0.0, 2);
  StagePlan plan = plan_stl_nc(0.02, 40, 1.0, 2, true, 2, 4.0);
  auto fleet = make_fleet(2, 7);
  StagewiseOptions opts;
  opts.return_mode = ReturnMode::last_iterate;
  auto res = run_stagewise(pl, {0.4}, plan, fleet, 0.125, opts);
  REQUIRE(!res.trace.rows.empty());
  const auto& last = res.trace.rows.back();
  // The reported gap is f(x) - f* for the unwrapped objective.
  CHECK(last.gap.value() == objective_gap(*pl, res.x_final));
  double g2 = norm_sq(pl->full_gradient(res.x_final));
  CHECK(last.grad_norm_sq.value() == doctest::Approx(g2).epsilon(1e-12));
}

TEST_CASE("a prox pull weaker than the curvature is rejected") {
  auto pl = pl_objective(0.0, 2);
  StagePlan plan = plan_stl_nc(0.02, 40, 1.0, 2, true, 2, 4.0);
  auto fleet = make_fleet(2, 7);
  CHECK_THROWS_AS(run_stagewise(pl, {0.4}, plan, fleet, 0.5), ConfigError);
}

TEST_CASE("stage sampling weights later stages linearly") {
  RngStream rng(99, 0, 0);
  CHECK(sample_stage_index(1, rng) == 1);

  RngStream rng2(100, 0, 0);
  int c1 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) c1 += (sample_stage_index(2, rng2) == 1);
  CHECK(std::abs(static_cast<double>(c1) / n - 1.0 / 3.0) < 0.01);

  RngStream rng3(101, 0, 0);
  int c4 = 0;
  for (int i = 0; i < n; ++i) c4 += (sample_stage_index(4, rng3) == 4);
  CHECK(std::abs(static_cast<double>(c4) / n - 0.4) < 0.01);
}

TEST_CASE("config validation rejects out-of-range requests") {
  auto obj = quadratic_objective({{0.0}, {0.0}}, 0.0);
  auto fleet = make_fleet(2, 0);
  LocalSgdConfig cfg;
  cfg.T = 5;

  cfg.return_index = 5;  // legal indices are 0..T-1
  CHECK_THROWS_AS(local_sgd(*obj, {1.0}, cfg, fleet), std::invalid_argument);
  cfg.return_index.reset();

  LocalSgdConfig bad = cfg;
  bad.T = 0;
  CHECK_THROWS_AS(local_sgd(*obj, {1.0}, bad, fleet), std::invalid_argument);
  bad = cfg;
  bad.k = 0;
  CHECK_THROWS_AS(local_sgd(*obj, {1.0}, bad, fleet), std::invalid_argument);
  bad = cfg;
  bad.eta = 0.0;
  CHECK_THROWS_AS(local_sgd(*obj, {1.0}, bad, fleet), std::invalid_argument);

  CHECK_THROWS_AS(local_sgd(*obj, {1.0, 2.0}, cfg, fleet), std::invalid_argument);
  auto fleet3 = make_fleet(3, 0);  // objective owns 2 clients
  CHECK_THROWS_AS(local_sgd(*obj, {1.0}, cfg, fleet3), std::invalid_argument);
}

TEST_CASE("an exploding run raises a divergence error with its context") {
  auto obj = quadratic_objective({{0.0}, {0.0}}, 0.0);
  auto fleet = make_fleet(2, 0);
  LocalSgdConfig cfg;
  cfg.eta = 10.0;  // far beyond 2/L
  cfg.T = 400;
  cfg.k = 2;
  cfg.return_mode = ReturnMode::last_iterate;
  try {
    local_sgd(*obj, {1.0}, cfg, fleet);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.eta() == 10.0);
    CHECK(e.k() == 2);
    CHECK(e.stage() == 1);
  }
}
