"""Scenario configuration and assembly of the full control problem.

A scenario is one YAML file.  Every key is optional; missing keys take the
values in ``data/default_scenario.yaml``.  ``Scenario.to_dict`` returns the
fully resolved configuration so runs can echo it next to their outputs.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.linalg import solve_discrete_lyapunov

from .controller import ControllerSpec, Strategy
from .errors import ConfigError, ModelMismatchError
from .multitank import TankParams, solve_steady_input, steady_state_for_input, tank_plant
from .plant import NonlinearPlant
from .polytope import Polytope
from .switched_model import (
    CostWeights,
    QuantizedControlSet,
    Setpoint,
    SwitchedAffineModel,
    build_switched_model,
    linearize,
    shift_to_error_coordinates,
)
from .synthesis import RegionRiccatiMap, RiccatiSet, build_p1_set, partition_regions, restrict_to_region

logger = logging.getLogger(__name__)


def default_config() -> dict:
    text = resources.files("adpmpc").joinpath("data/default_scenario.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ConfigError(f"unknown configuration key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _matrix(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(n)
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise ConfigError(f"{name}: expected {n} diagonal entries")
        return np.diag(arr)
    if arr.shape != (n, n):
        raise ConfigError(f"{name}: expected a {n}x{n} matrix")
    return arr


@dataclass
class Scenario:
    """Resolved scenario configuration (a nested dict with typed accessors)."""

    config: dict

    @classmethod
    def from_dict(cls, override: dict | None = None) -> "Scenario":
        sc = cls(_merge(default_config(), override or {}))
        sc.validate()
        return sc

    @classmethod
    def from_file(cls, path) -> "Scenario":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"scenario {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"scenario {path} must be a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.config)

    def dump(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.config, sort_keys=False))
        return path

    def __getitem__(self, key):
        return self.config[key]

    @property
    def dt(self) -> float:
        return float(self.config["sampling_time"])

    @property
    def steps(self) -> int:
        return int(round(float(self.config["duration"]) / self.dt))

    def validate(self) -> None:
        c = self.config
        try:
            if float(c["duration"]) <= 0 or float(c["sampling_time"]) <= 0:
                raise ConfigError("duration and sampling_time must be positive")
            if int(c["horizon"]) < 1:
                raise ConfigError("horizon must be >= 1")
            if float(c["epsilon"]) < 0:
                raise ConfigError("epsilon must be nonnegative")
            if int(c["control"]["levels"] if not isinstance(c["control"]["levels"], list) else 2) < 2:
                raise ConfigError("need at least two control levels")
            if float(c["noise"]["sigma"]) < 0:
                raise ConfigError("noise sigma must be nonnegative")
            for s in c["strategies"]:
                Strategy(s)
            if c["infeasibility"] not in ("apply-least-violation", "terminate"):
                raise ConfigError("infeasibility must be 'apply-least-violation' or 'terminate'")
            TankParams(**_tank_kwargs(c["plant"]["params"]))
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid scenario: {exc}") from exc


def _tank_kwargs(p: dict) -> dict:
    out = dict(p)
    for k in ("h_max", "C", "alpha"):
        if k in out:
            out[k] = tuple(out[k])
    return out


@dataclass
class Problem:
    """Everything derived from a scenario, in both coordinate systems.

    ``plant`` is in absolute units; ``error_plant``, ``model``, ``X_error``
    and all value sets are in deviations from the setpoint.
    """

    scenario: Scenario
    params: TankParams
    plant: NonlinearPlant
    setpoint: Setpoint
    error_plant: NonlinearPlant
    model: SwitchedAffineModel
    X: Polytope
    X_error: Polytope
    full_set: RiccatiSet | None = None
    constrained_set: RiccatiSet | None = None
    region_map: RegionRiccatiMap | None = None

    def spec(self, strategy, predictor: str = "plant") -> ControllerSpec:
        """Controller spec for one strategy using this problem's artifacts."""
        strategy = Strategy(strategy)
        c = self.scenario.config
        if strategy is Strategy.NMPC:
            return ControllerSpec(strategy, self.model, horizon=int(c["horizon"]), predictor=predictor,
                                  budget=int(c["nmpc_budget"]))
        if self.full_set is None:
            raise ConfigError("offline value set missing; run synthesis first")
        if strategy is Strategy.ADP3:
            rs = self.region_map if self.region_map is not None else self.constrained_set
            if rs is None:
                raise ConfigError("adp3 needs a constrained value set")
            return ControllerSpec(strategy, self.model, rs, constraint=self.X_error, predictor=predictor)
        ref = c["refinement"]
        return ControllerSpec(
            strategy, self.model, self.full_set, W=int(ref["W"]), delta_u=self.delta_u,
            predictor=predictor, stage2_full_set=bool(ref.get("full_set", False)),
        )

    @property
    def delta_u(self) -> float:
        ref = self.scenario.config["refinement"]
        if ref.get("delta_u") is not None:
            return float(ref["delta_u"])
        lv = self.model.control_set.levels[:, 0]
        return float(np.min(np.diff(lv))) / (2 * int(ref["W"]))

    def synthesize(self) -> None:
        """Build the full, constrained and regional value sets."""
        c = self.scenario.config
        self.full_set = build_p1_set(
            self.model, int(c["horizon"]), float(c["epsilon"]), budget=int(float(c["budget"])),
            prune_every_level=bool(c.get("prune_every_level", True)),
        )
        n_samples = int(c["region_grid"])
        self.constrained_set = restrict_to_region(self.full_set, self.X_error, n_samples)
        z = int(c["partitions"])
        self.region_map = partition_regions(self.X_error, z, self.constrained_set, n_samples) if z > 1 else None
        logger.info(
            "value sets: full %d, constrained %d, regional %s",
            self.full_set.mu, self.constrained_set.mu,
            None if self.region_map is None else [s.mu for s in self.region_map.sets],
        )

    def load_sets(self, sets: dict, rmap) -> None:
        self.full_set = sets.get("full")
        self.constrained_set = sets.get("constrained")
        self.region_map = rmap
        if self.full_set is not None and self.full_set.model_fingerprint != self.model.fingerprint():
            raise ModelMismatchError("value-set file was built for a different scenario model")


def resolve_setpoint(config: dict, params: TankParams) -> Setpoint:
    sp = config["setpoint"]
    if sp.get("input") is not None:
        ss = steady_state_for_input(float(sp["input"]), params)
    elif sp.get("levels") is not None:
        ss = solve_steady_input(sp["levels"], params)
    else:
        raise ConfigError("setpoint needs 'input' or 'levels'")
    return Setpoint(ss.H, [ss.u])


def terminal_weight(spec, A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``Q_N`` from config: a matrix, or ``lyapunov`` for the zero-input cost-to-go."""
    if isinstance(spec, str):
        if spec != "lyapunov":
            raise ConfigError(f"unknown terminal weight {spec!r}")
        if np.max(np.abs(np.linalg.eigvals(A))) >= 1:
            raise ConfigError("lyapunov terminal weight needs a stable linearization")
        P = solve_discrete_lyapunov(A.T, Q)
        return 0.5 * (P + P.T)
    return _matrix(spec, A.shape[0], "QN")


def build_problem(scenario: Scenario) -> Problem:
    """Plant, setpoint, linearization and switched model; no synthesis yet."""
    c = scenario.config
    params = TankParams(**_tank_kwargs(c["plant"]["params"]))
    integ = c["plant"]["integrator"]
    X = Polytope.box(c["constraints"]["lower"], c["constraints"]["upper"])
    plant = tank_plant(params, dt=scenario.dt, method=integ["method"], substeps=int(integ["substeps"]), X=X)
    sp = resolve_setpoint(c, params)
    if not X.contains(sp.x_r):
        raise ConfigError(f"setpoint {sp.x_r} lies outside the constraint box")
    err = shift_to_error_coordinates(plant, sp)
    A, B = linearize(plant, sp.x_r, sp.u_r, scenario.dt, method=c["discretization"])
    lv = c["control"]["levels"]
    if isinstance(lv, list):
        cs = QuantizedControlSet(np.asarray(lv, dtype=float), [params.u_min], [params.u_max])
    else:
        cs = QuantizedControlSet.uniform([params.u_min], [params.u_max], int(lv))
    w = c["weights"]
    Q = _matrix(w["Q"], 3, "Q")
    weights = CostWeights(Q, _matrix(w["R"], 1, "R"), terminal_weight(w["QN"], A, Q))
    model = build_switched_model(A, B, cs.shifted(sp.u_r), weights, operating_point=(sp.x_r, sp.u_r))
    return Problem(scenario, params, plant, sp, err, model, X, X.shift(sp.x_r))
