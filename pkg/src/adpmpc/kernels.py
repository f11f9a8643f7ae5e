"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used.  Setting ``ADPMPC_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ADPMPC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
TANK_PARAM_LAYOUT = _kernels_py.TANK_PARAM_LAYOUT
METHOD_RK4 = _kernels_py.METHOD_RK4
METHOD_EULER = _kernels_py.METHOD_EULER

tank_step_batch = _impl.tank_step_batch
quadform_min = _impl.quadform_min
adp_scan = _impl.adp_scan
nmpc_tank = _impl.nmpc_tank
nmpc_linear = _impl.nmpc_linear
halfspace_mask = _impl.halfspace_mask


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401  # type: ignore[attr-defined]
    except ImportError:
        return False
    return True


def backend_module(name: str):
    """The kernel module for ``"python"`` or ``"cython"`` (for comparisons)."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
