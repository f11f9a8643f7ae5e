import numpy as np
import pytest

from adpmpc.simulation import (
    SimTrace,
    benchmark,
    compute_ise,
    empty_trace,
    read_trace_csv,
    run_closed_loop,
    total_variation,
    write_report,
    write_trace_csv,
)


def _trace(x, u=None):
    x = np.asarray(x, dtype=float)
    k = x.shape[0]
    u = np.zeros((k, 1)) if u is None else np.asarray(u, dtype=float).reshape(k, 1)
    z = np.zeros(k)
    return SimTrace("t", np.arange(k) * 0.01, x, x.copy(), u, z, z, z, np.zeros(k, bool), np.zeros(k, bool))


def test_ise_hand_values():
    xr = np.zeros(3)
    assert compute_ise(_trace(np.zeros((4, 3))), xr) == 0.0
    assert compute_ise(_trace([[1.0, 0, 0]]), xr) == 1.0
    assert compute_ise(_trace([[1.0, 0, 0], [0.5, 0, 0], [0, 0, 0]]), xr) == 1.25


def test_ise_of_empty_trace():
    with pytest.raises(ValueError):
        compute_ise(empty_trace("x", 3, 1), np.zeros(3))


def test_total_variation():
    assert total_variation([[0.0], [1.0], [0.5], [0.5]]) == 1.5


def test_empty_trace_csv_is_header_only(tmp_path):
    p = write_trace_csv(empty_trace("adp1", 3, 1), tmp_path / "e.csv")
    lines = p.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("t,x1,x2,x3,")
    assert len(read_trace_csv(p)) == 0


def test_csv_roundtrip_bit_exact(problem, tmp_path):
    tr = run_closed_loop(problem, problem.spec("adp2"), steps=50, sigma=1e-3, seed=3)
    back = read_trace_csv(write_trace_csv(tr, tmp_path / "t.csv"))
    for name in ("t", "x_true", "x_meas", "u", "stage_cost", "value", "latency", "clamped", "infeasible"):
        assert getattr(back, name).tobytes() == getattr(tr, name).tobytes(), name


def test_run_length_and_times(problem):
    tr = run_closed_loop(problem, problem.spec("adp3"))
    assert len(tr) == 25001
    assert tr.t[-1] == pytest.approx(250.0)
    assert tr.failure is None


def test_seeded_runs_identical(problem):
    spec = problem.spec("adp2")
    a = run_closed_loop(problem, spec, steps=200, sigma=5e-4, seed=11)
    b = run_closed_loop(problem, spec, steps=200, sigma=5e-4, seed=11)
    c = run_closed_loop(problem, spec, steps=200, sigma=5e-4, seed=12)
    for name in ("x_true", "x_meas", "u", "stage_cost", "value"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.x_meas.tobytes() != c.x_meas.tobytes()


def test_start_at_setpoint_stays_near(problem):
    tr = run_closed_loop(problem, problem.spec("adp1"), steps=500, x0=problem.setpoint.x_r, sigma=0.0)
    spacing = np.min(np.diff(problem.model.control_set.levels[:, 0]))
    assert np.all(np.abs(tr.u[:, 0] - problem.setpoint.u_r[0]) <= spacing + 1e-12)
    assert compute_ise(tr, problem.setpoint.x_r) < 1e-6


def test_inputs_inside_box(problem):
    p = problem.params
    for s in ("adp1", "adp2", "adp3"):
        tr = run_closed_loop(problem, problem.spec(s), steps=300)
        assert np.all(tr.u >= p.u_min - 1e-12) and np.all(tr.u <= p.u_max + 1e-12)


def test_terminate_policy_stops_at_infeasible(problem):
    x0 = np.array([0.3002, 0.15, 0.15])
    tr = run_closed_loop(problem, problem.spec("adp3"), steps=10, x0=x0, policy="terminate")
    assert tr.failure_kind == "infeasible" and len(tr) == 0


def test_least_violation_policy_continues(problem):
    x0 = np.array([0.3002, 0.15, 0.15])
    tr = run_closed_loop(problem, problem.spec("adp3"), steps=10, x0=x0, policy="apply-least-violation")
    assert len(tr) == 11 and tr.infeasible[0]
    assert tr.u[0, 0] == pytest.approx(problem.params.u_min)
    assert np.isnan(tr.value[0])


def test_short_benchmark_and_report(problem, tmp_path):
    rep = benchmark(problem, ["adp1", "adp3"], steps=30)
    assert set(rep.by_strategy()) == {"adp1", "adp3"}
    assert all(r.steps == 31 for r in rep.results)
    paths = write_report(rep, tmp_path)
    names = {p.name for p in paths}
    assert {"bench.csv", "bench.txt", "trace_adp1.csv", "trace_adp3.csv"} <= names
    assert "adp3" in (tmp_path / "bench.txt").read_text()


def test_ise_independent_of_strategy_order(problem):
    a = benchmark(problem, ["adp1", "adp3", "adp2"], steps=200).by_strategy()
    b = benchmark(problem, ["adp2", "adp3", "adp1"], steps=200).by_strategy()
    for s in ("adp1", "adp2", "adp3"):
        assert a[s].ise == b[s].ise
