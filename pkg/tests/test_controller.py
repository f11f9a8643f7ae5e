import numpy as np
import pytest

from adpmpc.controller import (
    ControllerSpec,
    Strategy,
    adp1_step,
    adp2_step,
    adp3_step,
    decide,
    nmpc_exhaustive_step,
    refinement_candidates,
)
from adpmpc.errors import BudgetExceededError, ConfigError, InfeasibleError, ModelMismatchError
from adpmpc.polytope import Polytope
from adpmpc.synthesis import augment, build_p1_set, pruning_error_bound

from conftest import random_model
from oracles import nstep_bruteforce


def test_scalar_adp1_at_one(scalar_model, scalar_plant):
    spec = ControllerSpec("adp1", scalar_model, build_p1_set(scalar_model, 2))
    dec = adp1_step([1.0], spec, scalar_plant)
    assert dec.u[0] == -1.0 and dec.stage1_value == 2.0 and dec.level_index == 0


def test_scalar_adp1_matches_two_step_enumeration(scalar_model, scalar_plant):
    spec = ControllerSpec("adp1", scalar_model, build_p1_set(scalar_model, 2))
    for x in np.linspace(-2, 2, 17):
        j, best = nstep_bruteforce(scalar_model, 2, np.array([x]))
        dec = adp1_step([x], spec, scalar_plant)
        assert dec.level_index == j
        assert dec.stage1_value == pytest.approx(best, abs=1e-12)


def test_origin_selects_zero_level(scalar_model, scalar_plant):
    spec = ControllerSpec("adp1", scalar_model, build_p1_set(scalar_model, 3))
    assert adp1_step([0.0], spec, scalar_plant).u[0] == 0.0


def _adp2_oracle(model, rset, x, W, du):
    # stage 1 by enumeration over levels and matrices
    best = None
    for j, v in enumerate(model.control_set.levels[:, 0]):
        nxt = np.array([x + v, 1.0])
        vals = [nxt @ P @ nxt for P in rset.matrices]
        J = x * x + v * v + min(vals)
        if best is None or J < best[0]:
            best = (J, v, int(np.argmin(vals)))
    J1, v1, i1 = best
    P = rset.matrices[i1]
    J2 = J1
    for q in range(-W, W + 1):
        w = min(max(v1 + q * du, -1.0), 1.0)
        nxt = np.array([x + w, 1.0])
        J2 = min(J2, x * x + w * w + nxt @ P @ nxt)
    return J1, J2, v1


def test_scalar_adp2_refinement_by_enumeration(scalar_model, scalar_plant):
    rset = build_p1_set(scalar_model, 2)
    spec = ControllerSpec("adp2", scalar_model, rset, W=2, delta_u=0.25)
    dec = adp2_step([0.6], spec, scalar_plant)
    J1, J2, v1 = _adp2_oracle(scalar_model, rset, 0.6, 2, 0.25)
    assert dec.stage1_value == pytest.approx(J1, abs=1e-12)
    assert dec.stage2_value == pytest.approx(J2, abs=1e-12)
    assert dec.stage2_value <= dec.stage1_value
    # the level scan settles on v = 0 here, and refinement moves to -0.5
    assert v1 == 0.0 and dec.u[0] == -0.5


def test_refinement_grid_clipped_at_box(scalar_model):
    spec = ControllerSpec("adp2", scalar_model, build_p1_set(scalar_model, 2), W=2, delta_u=0.25)
    cand, center = refinement_candidates(np.array([-1.0]), spec)
    np.testing.assert_array_equal(cand[:, 0], [-1.0, -1.0, -1.0, -0.75, -0.5])
    assert center == 2


def test_tiny_refinement_step_reproduces_adp1(scalar_model, scalar_plant):
    rset = build_p1_set(scalar_model, 3)
    s1 = ControllerSpec("adp1", scalar_model, rset)
    s2 = ControllerSpec("adp2", scalar_model, rset, W=3, delta_u=1e-13)
    for x in np.linspace(-2, 2, 9):
        a, b = adp1_step([x], s1, scalar_plant), adp2_step([x], s2, scalar_plant)
        assert b.u[0] == pytest.approx(a.u[0], abs=1e-12)
        assert b.stage2_value == pytest.approx(a.stage1_value, rel=1e-9)


def test_adp3_whole_space_equals_adp1(scalar_model, scalar_plant):
    rset = build_p1_set(scalar_model, 3)
    s1 = ControllerSpec("adp1", scalar_model, rset)
    s3 = ControllerSpec("adp3", scalar_model, rset, constraint=Polytope.whole_space(1))
    for x in np.linspace(-2, 2, 9):
        a, b = adp1_step([x], s1, scalar_plant), adp3_step([x], s3, scalar_plant)
        assert a.level_index == b.level_index and a.stage1_value == b.stage1_value


def test_adp3_respects_constraint(scalar_model, scalar_plant):
    rset = build_p1_set(scalar_model, 3)
    X = Polytope.box([-0.5], [2.0])
    spec = ControllerSpec("adp3", scalar_model, rset, constraint=X)
    dec = adp3_step([0.2], spec, scalar_plant)
    # adp1 would pick -1 and leave X
    assert dec.u[0] == 0.0 and dec.feasible_count == 2


def test_adp3_infeasible_reports_least_violation(scalar_model, scalar_plant):
    spec = ControllerSpec("adp3", scalar_model, build_p1_set(scalar_model, 2), constraint=Polytope.box([-0.5], [0.5]))
    with pytest.raises(InfeasibleError) as info:
        adp3_step([2.0], spec, scalar_plant)
    assert info.value.candidate_index == 0
    assert info.value.violation == pytest.approx(0.5)


def test_nmpc_horizon_one(scalar_model, scalar_plant):
    spec = ControllerSpec("nmpc", scalar_model, horizon=1)
    for x in (-1.3, 0.2, 0.9):
        costs = [x * x + v * v + (x + v) ** 2 for v in (-1.0, 0.0, 1.0)]
        dec = nmpc_exhaustive_step([x], spec, scalar_plant)
        assert dec.level_index == int(np.argmin(costs))
        assert dec.stage1_value == pytest.approx(min(costs), abs=1e-12)


def test_nmpc_generic_path_equals_linear(scalar_model, scalar_plant):
    a = ControllerSpec("nmpc", scalar_model, horizon=4)
    b = ControllerSpec("nmpc", scalar_model, horizon=4, predictor="linear")
    for x in np.linspace(-3, 3, 13):
        da, db = nmpc_exhaustive_step([x], a, scalar_plant), nmpc_exhaustive_step([x], b, scalar_plant)
        assert da.level_index == db.level_index
        assert da.stage1_value == pytest.approx(db.stage1_value, abs=1e-12)


def test_nmpc_budget(scalar_model, scalar_plant):
    spec = ControllerSpec("nmpc", scalar_model, horizon=5, budget=100)
    with pytest.raises(BudgetExceededError):
        nmpc_exhaustive_step([0.5], spec, scalar_plant)


@pytest.mark.parametrize("seed", range(3))
def test_adp1_equals_nmpc_on_linear_predictor(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 2, 1, 3)
    N = 3
    s1 = ControllerSpec("adp1", model, build_p1_set(model, N), predictor="linear")
    sn = ControllerSpec("nmpc", model, horizon=N, predictor="linear")
    for x in rng.standard_normal((20, 2)):
        a = adp1_step(x, s1, None)
        b = nmpc_exhaustive_step(x, sn, None)
        j, best = nstep_bruteforce(model, N, x)
        assert a.level_index == b.level_index == j
        assert a.stage1_value == pytest.approx(best, rel=1e-10, abs=1e-12)
        assert b.stage1_value == pytest.approx(best, rel=1e-10, abs=1e-12)


def test_spec_validation(scalar_model):
    rset = build_p1_set(scalar_model, 2)
    with pytest.raises(ConfigError):
        ControllerSpec("adp1", scalar_model)
    with pytest.raises(ConfigError):
        ControllerSpec("adp2", scalar_model, rset)
    with pytest.raises(ConfigError):
        ControllerSpec("adp3", scalar_model, rset)
    with pytest.raises(ConfigError):
        ControllerSpec("nmpc", scalar_model)
    with pytest.raises(ConfigError):
        ControllerSpec("adp1", scalar_model, rset, predictor="magic")
    with pytest.raises(ValueError):
        ControllerSpec("adp9", scalar_model, rset)


def test_spec_rejects_foreign_set(scalar_model):
    other = random_model(np.random.default_rng(0), 1, 1, 3)
    with pytest.raises(ModelMismatchError):
        ControllerSpec("adp1", scalar_model, build_p1_set(other, 2))


# -- multi-tank --------------------------------------------------------------


def test_tank_adp2_never_worse_than_stage1(problem):
    spec = problem.spec("adp2")
    lo, hi = problem.X_error.bounding_box
    for x in np.random.default_rng(0).uniform(lo, hi, (200, 3)):
        dec = adp2_step(x, spec, problem.error_plant)
        assert dec.stage2_value <= dec.stage1_value


def test_tank_adp3_successors_stay_in_X(problem):
    spec = problem.spec("adp3")
    plant = problem.error_plant
    lo, hi = problem.X_error.bounding_box
    for x in np.random.default_rng(1).uniform(lo, hi, (200, 3)):
        try:
            dec = adp3_step(x, spec, plant)
        except InfeasibleError:
            continue
        assert problem.X_error.violation(plant.step(x, dec.u)) <= 1e-9


def test_tank_adp3_infeasible_above_top_bound(problem):
    spec = problem.spec("adp3")
    x = np.array([0.3002, 0.15, 0.15]) - problem.setpoint.x_r
    with pytest.raises(InfeasibleError) as info:
        adp3_step(x, spec, problem.error_plant)
    assert info.value.candidate_index == 0
    assert info.value.u[0] + problem.setpoint.u_r[0] == pytest.approx(problem.params.u_min)


def test_tank_regional_lookup_consistent_with_parent(problem):
    region = problem.spec("adp3")
    whole = ControllerSpec("adp3", problem.model, problem.constrained_set, constraint=problem.X_error)
    plant = problem.error_plant
    lo, hi = problem.X_error.bounding_box
    checked = 0
    for x in np.random.default_rng(2).uniform(lo, hi, (300, 3)):
        try:
            a = adp3_step(x, region, plant)
            b = adp3_step(x, whole, plant)
        except InfeasibleError:
            continue
        src = problem.constrained_set.source_indices[b.argmin_matrix_index]
        if src in set(problem.region_map.set_for(x).source_indices.tolist()):
            checked += 1
            assert a.level_index == b.level_index
            assert a.stage1_value == pytest.approx(b.stage1_value, rel=1e-12)
        else:
            assert a.stage1_value >= b.stage1_value - 1e-12
    assert checked > 200


def test_tank_decisions_are_deterministic(problem):
    x = np.array([0.01, -0.02, 0.03])
    for s in Strategy:
        spec = problem.spec(s)
        a, b = decide(x, spec, problem.error_plant), decide(x, spec, problem.error_plant)
        np.testing.assert_array_equal(a.u, b.u)
        assert a.objective == b.objective


def test_tank_decisions_inside_actuator_box(problem):
    lo, hi = problem.X_error.bounding_box
    plant = problem.error_plant
    for x in np.random.default_rng(3).uniform(lo, hi, (50, 3)):
        for s in ("adp1", "adp2", "nmpc"):
            u = decide(x, problem.spec(s), plant).u
            assert plant.u_lower[0] - 1e-12 <= u[0] <= plant.u_upper[0] + 1e-12


def test_tank_adp1_within_pruning_bound_of_nmpc(problem):
    # pruned set: ADP-1 may lose at most the propagated pruning error at NMPC's successor
    s1 = problem.spec("adp1", predictor="linear")
    sn = problem.spec("nmpc", predictor="linear")
    m = problem.model
    for x in np.random.default_rng(4).uniform(-0.05, 0.05, (20, 3)):
        a = adp1_step(x, s1, None)
        b = nmpc_exhaustive_step(x, sn, None)
        nxt = m.A @ x + m.B @ b.u
        bound = pruning_error_bound(m, problem.full_set, augment(nxt))[0]
        assert b.stage1_value - 1e-12 <= a.stage1_value <= b.stage1_value + bound + 1e-12
