import csv
import json

import numpy as np
import pytest

from blocksolve.config import ConfigError, Regime
from blocksolve.harness import (ALGOS, SlopeFitError, ergodic_gap, infer_regime, kkt_residual,
                                make_config, reference_solve, run_experiment, slope_fit, solve)
from blocksolve.linalg import BlockLinearMap, BlockPartition, BlockVector
from blocksolve.problem import (ConstrainedProblem, ProxOracle, SmoothOracle, gen_ncqp,
                                random_classo)
from blocksolve.trace import Trace, TraceRow

from conftest import scalar_problem


def synthetic(ks, vals):
    rows = [TraceRow(int(k), float(k), float(v), float(v), 0.0, 0.0, 0.0) for k, v in zip(ks, vals)]
    return Trace(rows=rows)


# -- slope fits ---------------------------------------------------------------

def test_slope_of_inverse_k():
    ks = np.arange(1, 1001)
    assert slope_fit(synthetic(ks, 1.0 / ks), "obj_erg", 10, 1000) == pytest.approx(-1, abs=1e-12)


def test_slope_of_constant():
    ks = np.arange(1, 101)
    assert slope_fit(synthetic(ks, np.full(100, 3.0)), "obj_last", 1, 100) == pytest.approx(
        0, abs=1e-12)


def test_slope_of_noisy_inverse_sqrt():
    rng = np.random.default_rng(0)
    ks = np.arange(1, 10001)
    vals = ks ** -0.5 * (1 + 0.01 * rng.standard_normal(ks.size))
    assert slope_fit(synthetic(ks, vals), "obj_erg", 10, 10000) == pytest.approx(-0.5, abs=0.05)


def test_slope_with_array_and_epoch_axis():
    ks = np.arange(1, 51)
    tr = synthetic(ks, ks)
    assert slope_fit(tr, np.asarray(ks, float) ** -2, 1, 50, axis="epoch") == pytest.approx(-2)


def test_slope_errors():
    ks = np.arange(1, 30)
    tr = synthetic(ks, 1.0 / ks)
    with pytest.raises(SlopeFitError, match="need >= 10"):
        slope_fit(tr, "obj_erg", 1, 5)
    with pytest.raises(SlopeFitError, match="positive"):
        slope_fit(synthetic(ks, ks - 10.0), "obj_erg", 1, 29)
    with pytest.raises(SlopeFitError):
        slope_fit(tr, np.ones(3), 1, 29)


def test_ergodic_gap():
    tr = Trace(rows=[TraceRow(1, 1.0, 0, 2.5, 0, 0.1, 0), TraceRow(2, 2.0, 0, 2.0, 0, 0.7, 0)])
    np.testing.assert_allclose(ergodic_gap(tr, 2.0), [0.5, 0.7])


# -- reference solutions ------------------------------------------------------

def test_reference_trivial():
    # min x^2/2 s.t. x = 0
    ref = reference_solve(scalar_problem(a=1.0, b=0.0, Q=1.0))
    assert ref.converged and ref.f_star == pytest.approx(0, abs=1e-12)
    assert abs(ref.x_star.data[0]) <= 1e-10


def test_reference_two_variables():
    # min |x|^2/2 s.t. x1 + x2 = 1: x = (1/2, 1/2), f = 1/4
    p = ConstrainedProblem(BlockLinearMap.from_dense(np.ones((1, 2)), BlockPartition((1, 1))),
                           [1.0], SmoothOracle.quadratic(np.eye(2), np.zeros(2)),
                           [ProxOracle("zero")] * 2)
    ref = reference_solve(p)
    np.testing.assert_allclose(ref.x_star.data, [0.5, 0.5], atol=1e-9)
    assert ref.f_star == pytest.approx(0.25, abs=1e-9)
    assert ref.lam_star[0] == pytest.approx(0.5, abs=1e-9)


def test_reference_matches_external_qp_solver():
    cp = pytest.importorskip("cvxpy")
    p = gen_ncqp(10, 30, 5, 2, 3)
    ref = reference_solve(p)
    assert ref.converged and ref.kkt_residual <= 1e-10
    Q, c = p.f.Q, p.f.c
    x = cp.Variable(30)
    prob = cp.Problem(cp.Minimize(0.5 * cp.quad_form(x, cp.psd_wrap(Q)) + c @ x),
                      [p.x_map.dense @ x == p.b, x >= 0])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    assert ref.f_star == pytest.approx(prob.value, rel=1e-7, abs=1e-7)


def test_reference_is_deterministic(small_ncqp):
    a, b = reference_solve(small_ncqp), reference_solve(small_ncqp)
    assert a.f_star == b.f_star and np.array_equal(a.x_star.data, b.x_star.data)


def test_reference_with_y_blocks():
    p = random_classo(6, 6, 4, 3, 0.2, 1)
    ref = reference_solve(p, budget=20000, tol=1e-6)
    assert ref.y_star is not None
    assert kkt_residual(p, ref.x_star, ref.y_star, ref.lam_star) == pytest.approx(ref.kkt_residual)


def test_reference_budget_exhausted(small_ncqp, caplog):
    p = random_classo(6, 6, 4, 3, 0.2, 1)
    ref = reference_solve(p, budget=5, tol=1e-14)
    assert not ref.converged and "reference solve stopped" in caplog.text


def test_kkt_residual_zero_at_solution():
    p = scalar_problem(a=1.0, b=1.0, Q=1.0)
    x = BlockVector(p.x_partition, np.array([1.0]))
    assert kkt_residual(p, x, None, np.array([1.0])) == 0.0
    assert kkt_residual(p, x, None, np.array([0.0])) == pytest.approx(1.0)


# -- solve / configs ----------------------------------------------------------

def test_infer_regime():
    assert infer_regime(gen_ncqp(2, 4, 2)) is Regime.NO_Y
    assert infer_regime(random_classo(4, 4, 2, 1)) is Regime.SINGLE_Y
    two_y = ConstrainedProblem(
        BlockLinearMap.from_dense(np.eye(2), BlockPartition((1, 1))), np.zeros(2), None,
        [ProxOracle("zero")] * 2, y_map=BlockLinearMap.from_dense(np.eye(2), BlockPartition((1, 1))),
        y_prox=[ProxOracle("zero")] * 2)
    assert infer_regime(two_y) is Regime.MULTI_XY


def test_make_config(small_ncqp):
    assert make_config(small_ncqp, "lalm").n == 4
    assert make_config(small_ncqp, "rpdbu", n=2).n == 2
    s = make_config(small_ncqp, "rpdbus", n=1, rho_x=0.5)
    assert s.rho == s.rho_x == 0.5
    with pytest.raises(ConfigError, match="unknown algorithm"):
        make_config(small_ncqp, "sgd")


@pytest.mark.parametrize("algo", ALGOS)
def test_solve_every_algo(small_ncqp, algo):
    kw = {"gamma": 0.9} if algo == "pjadmm" else {}
    if algo == "pjadmm":
        small_ncqp = ConstrainedProblem(small_ncqp.x_map, small_ncqp.b, None,
                                        small_ncqp.x_prox, x_feasible=small_ncqp.x_feasible)
    tr = solve(small_ncqp, algo, iters=40, cadence=10, sigma=0.1, **kw)
    assert [r.k for r in tr.rows] == [10, 20, 30, 40]
    assert np.all(np.isfinite(tr.column("obj_erg")))


# -- experiments --------------------------------------------------------------

def _write(tmp_path, spec):
    f = tmp_path / "exp.json"
    f.write_text(json.dumps(spec))
    return f


def _read_summary(out):
    with open(out / "summary.csv") as fh:
        return list(csv.DictReader(fh))


def test_experiment_empty(tmp_path):
    out = tmp_path / "out"
    assert run_experiment(_write(tmp_path, {"problems": [], "algos": []}), out) == []
    assert (out / "summary.csv").read_text().startswith("problem,algo,name")


def test_experiment_single_cell(tmp_path):
    spec = {"problems": [{"gen": "ncqp", "m": 3, "n": 6, "blocks": 3, "seed": 1}],
            "algos": [{"name": "rpdbu", "params": {"n": 1, "rhoX": 0.5}}],
            "seeds": [0], "iters": 7, "cadence": 1}
    out = tmp_path / "out"
    rows = run_experiment(_write(tmp_path, spec), out, wall_time=False)
    assert len(rows) == 1 and rows[0]["status"] == "ok" and rows[0]["rows"] == 7
    lines = (out / "p0-a0-rpdbu-s0.csv").read_text().splitlines()
    assert len(lines) == 8


def test_experiment_isolates_failures(tmp_path):
    spec = {"problems": [{"gen": "ncqp", "m": 3, "n": 6, "blocks": 3, "seed": 1},
                         {"gen": "nope"}],
            "algos": [{"name": "rpdbu"}, {"name": "lalm", "params": {"bogus": 1}}],
            "seeds": [0, 1], "iters": 20}
    rows = run_experiment(_write(tmp_path, spec), tmp_path / "out")
    status = [(r["problem"], r["algo"], r["seed"], r["status"]) for r in rows]
    assert status[:2] == [(0, 0, 0, "ok"), (0, 0, 1, "ok")]
    assert all(s == "error" for *_, s in status[2:])
    summary = _read_summary(tmp_path / "out")
    assert len(summary) == 8 and "unknown algorithm parameters" in summary[2]["error"]


def test_experiment_seeds_differ_and_repeat(tmp_path):
    spec = {"problems": [{"gen": "ncqp", "m": 3, "n": 6, "blocks": 3, "seed": 1}],
            "algos": [{"name": "rpdbu"}], "seeds": [0, 1], "iters": 30, "cadence": 10}
    f = _write(tmp_path, spec)
    run_experiment(f, tmp_path / "a", wall_time=False)
    run_experiment(f, tmp_path / "b", wall_time=False)
    a0 = (tmp_path / "a" / "p0-a0-rpdbu-s0.csv").read_text()
    assert a0 == (tmp_path / "b" / "p0-a0-rpdbu-s0.csv").read_text()
    assert a0 != (tmp_path / "a" / "p0-a0-rpdbu-s1.csv").read_text()


def test_experiment_bad_json(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{ nope")
    with pytest.raises(ConfigError, match="line 1"):
        run_experiment(f, tmp_path / "out")
