import numpy as np
import pytest

from adpmpc.plant import linear_plant
from adpmpc.scenario import Scenario, build_problem
from adpmpc.switched_model import CostWeights, QuantizedControlSet, build_switched_model


@pytest.fixture(scope="session")
def problem():
    """Default tank scenario with value sets synthesized once per session."""
    pb = build_problem(Scenario.from_dict({}))
    pb.synthesize()
    return pb


@pytest.fixture
def scalar_model():
    """x+ = x + u with levels {-1, 0, 1} and unit weights."""
    cs = QuantizedControlSet(np.array([-1.0, 0.0, 1.0]), [-1.0], [1.0])
    w = CostWeights([[1.0]], [[1.0]], [[1.0]])
    return build_switched_model([[1.0]], [[1.0]], cs, w)


@pytest.fixture
def scalar_plant():
    """Continuous x' = u sampled at dt = 1, so one step is exactly x + u."""
    return linear_plant([[0.0]], [[1.0]], 1.0, [-1.0], [1.0])


def random_model(rng, n, m, M, spectral=0.9, weight_scale=1.0):
    """Random stable-ish instance for oracle comparisons."""
    A = rng.standard_normal((n, n))
    A *= spectral / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    B = rng.standard_normal((n, m))
    levels = rng.uniform(-1, 1, (M, m))
    cs = QuantizedControlSet(levels, -np.ones(m), np.ones(m))
    G = rng.standard_normal((n, n))
    Q = weight_scale * (G @ G.T / n + 0.1 * np.eye(n))
    R = np.eye(m) * rng.uniform(0.1, 1.0)
    H = rng.standard_normal((n, n))
    QN = H @ H.T / n
    return build_switched_model(A, B, cs, CostWeights(Q, R, QN))


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
