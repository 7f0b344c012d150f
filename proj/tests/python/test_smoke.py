import math

import pytest

stlsgd = pytest.importorskip("stlsgd")


def test_pl_objective_surface():
    obj = stlsgd.pl_objective(sigma2=0.0, num_clients=2)
    assert obj.dim == 1
    assert obj.num_clients == 2
    assert obj.value([0.0]) == 0.0
    g = obj.full_gradient([1.0])
    assert g[0] == pytest.approx(2.0 + 3.0 * math.sin(2.0))
    cons = obj.constants()
    assert cons["L"] == 8.0
    assert cons["rho"] == 4.0
    assert cons["mu"] == pytest.approx(stlsgd.PL_MU)
    opt = obj.optimum()
    assert opt["value"] == 0.0


def test_plan_shapes():
    plan = stlsgd.plan_stl_sc(0.1, 60, 4.0, 3, iid=True)
    stages = plan.stages
    assert [s.T for s in stages] == [60, 120, 240]
    assert [s.k for s in stages] == [4, 8, 16]
    assert stages[1].eta == pytest.approx(0.05)
    assert stlsgd.comm_rounds(plan) == 45
    assert plan.regime == "sc"

    k = stlsgd.initial_k(True, 1.0 / 6.0, 1.0, 8, 1.0, 0.0)
    assert k == pytest.approx(0.125)


def test_local_sgd_run():
    obj = stlsgd.quadratic_objective([[0.0], [0.0]], 0.0)
    res = stlsgd.local_sgd(obj, [1.0], eta=0.5, T=2, k=1, seed=1,
                           return_mode="random", return_index=1)
    assert res["x"] == [0.5]
    assert res["comm_rounds"] == 2
    assert len(res["trace"]) == 3


def test_run_experiment_round_trip():
    cfg = """
algorithm = sync
objective = quadratic
clients = 2
quad.dim = 3
quad.sigma2 = 0
init.x0 = 1
run.eta1 = 0.2
run.T = 30
"""
    out = stlsgd.run_experiment(cfg, name="smoke")
    summary = out["summary"]
    assert summary["algorithm"] == "sync"
    assert summary["comm_rounds_total"] == 30
    assert out["trace_csv"].count("\n") >= 31
    gaps = [row["gap"] for row in out["trace"]]
    assert gaps[-1] < gaps[0]


def test_parse_and_partition():
    data = stlsgd.parse_libsvm("+1 1:0.5 3:-1.2\n-1 2:4\n")
    assert len(data) == 2
    assert data.num_features == 3
    shards = stlsgd.partition(data, num_clients=2, iid_fraction=100.0, seed=0)
    assert sorted(i for shard in shards for i in shard) == [0, 1]


def test_errors_translate():
    with pytest.raises(ValueError):
        stlsgd.run_experiment("algorithm = nope\n", name="bad")
