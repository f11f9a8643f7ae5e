import os
import subprocess
import sys

import numpy as np

from adpmpc import kernels


def _backend_with(env_value):
    env = dict(os.environ, ADPMPC_PURE_PYTHON=env_value)
    out = subprocess.run(
        [sys.executable, "-c", "import adpmpc.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_fallback_forced_by_environment():
    assert _backend_with("1") == "python"


def test_default_backend_prefers_compiled():
    expected = "cython" if kernels.compiled_available() else "python"
    assert _backend_with("0") == expected


def test_fallback_solves_the_same_scalar_problem():
    # the python kernels on their own reproduce a hand-checked minimum
    py = kernels.backend_module("python")
    P = np.array([[[2.0, -1.0], [-1.0, 2.0]], [[2.0, 0.0], [0.0, 0.0]], [[2.0, 1.0], [1.0, 2.0]]])
    vals, idx = py.quadform_min(P, np.array([[1.0, 1.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(vals, [2.0, 0.0])
    np.testing.assert_array_equal(idx, [0, 1])
