"""Experiment configuration: TOML (primary) or JSON, validated and materialized.

A config describes the model (dimension, kernel, initial law), the scaling
ladder (n values, horizon, observation grid), the observables (test
functions, optional box radius, optional linear combinations), and run
parameters (replicas, seed, tail tolerance, output paths).  Validation
errors name the offending field.  All defaults are materialized so the
echoed config, and the hash derived from it, pin the experiment exactly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigParseError, ConfigValidationError
from .functions import BoxIndicator, TestFunction, gaussian_bump, hermite_gaussian
from .kernels import JumpKernel, validate_kernel
from .laws import InitialLaw, custom_law, deterministic_law, geometric_law, poisson_law
from .limit import LimitSpec
from .simulate import SimulationPlan, make_plan

DEFAULT_GRID_POINTS = 8
DEFAULT_REPLICAS = 1000
DEFAULT_TAIL_TOL = 1e-6


def _fail(field: str, message: str):
    raise ConfigValidationError(f"{field}: {message}")


def _require(table: dict, field: str, path: str):
    if field not in table:
        _fail(f"{path}.{field}" if path else field, "missing required field")
    return table[field]


def _build_law(table: dict) -> InitialLaw:
    variant = _require(table, "variant", "model.initial_law")
    try:
        if variant == "poisson":
            return poisson_law(_require(table, "rate", "model.initial_law"))
        if variant == "deterministic":
            return deterministic_law(_require(table, "value", "model.initial_law"))
        if variant == "geometric":
            return geometric_law(_require(table, "success", "model.initial_law"))
        if variant == "custom":
            values = _require(table, "values", "model.initial_law")
            probs = _require(table, "probabilities", "model.initial_law")
            return custom_law(dict(zip(values, probs)))
    except ConfigValidationError:
        raise
    except Exception as exc:
        _fail("model.initial_law", str(exc))
    _fail("model.initial_law.variant", f"unknown variant {variant!r}")


def _build_function(table: dict, dimension: int, index: int) -> tuple[str, TestFunction]:
    path = f"observables.functions[{index}]"
    variant = _require(table, "variant", path)
    fid = table.get("id", f"phi{index}")
    if variant == "gaussian":
        center = table.get("center", [0.0] * dimension)
        if len(center) != dimension:
            _fail(f"{path}.center", f"expected {dimension} coordinates")
        fn = gaussian_bump(center, table.get("inverse_width", 1.0), table.get("amplitude", 1.0))
    elif variant == "hermite":
        orders = table.get("orders", [0] * dimension)
        if len(orders) != dimension:
            _fail(f"{path}.orders", f"expected {dimension} orders")
        fn = hermite_gaussian(orders, table.get("inverse_width", 1.0))
    elif variant == "box":
        fn = BoxIndicator(_require(table, "radius", path), dimension)
    else:
        _fail(f"{path}.variant", f"unknown variant {variant!r}")
    return str(fid), fn


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    kernel: JumpKernel
    law: InitialLaw
    n_values: tuple
    horizon: float
    grid: tuple                # strictly increasing positive times ending at horizon
    functions: tuple           # (id, TestFunction) pairs
    thetas: tuple              # dicts with "coords" [(t, phi_id), ...] and "weights"
    replicas: int
    seed: int | None
    tail_tol: float
    out_dir: str
    processes: int

    def plan(self, n: int, seed: int) -> SimulationPlan:
        ids = tuple(fid for fid, _ in self.functions)
        fns = tuple(fn for _, fn in self.functions)
        return make_plan(self.dimension, n, self.kernel, self.law, self.horizon,
                         list(self.grid), fns, ids, seed, tail_tol=self.tail_tol)

    def plans(self, seed: int) -> list[SimulationPlan]:
        return [self.plan(n, seed) for n in self.n_values]

    def limit_spec(self) -> LimitSpec:
        return LimitSpec(self.law.mean, self.law.variance, self.kernel.second_moment)

    def canonical_dict(self, seed: int) -> dict:
        return {
            "model": {
                "dimension": self.dimension,
                "kernel": {
                    "moves": self.kernel.moves.tolist(),
                    "weights": self.kernel.probabilities.tolist(),
                },
                "initial_law": {"variant": self.law.kind, **self.law.params},
            },
            "scaling": {
                "n": list(self.n_values),
                "horizon": self.horizon,
                "grid": list(self.grid),
            },
            "observables": {
                "functions": [{"id": fid, **fn.params()} for fid, fn in self.functions],
                "theta": [dict(t) for t in self.thetas],
            },
            "run": {
                "replicas": self.replicas,
                "seed": seed,
                "tail_tol": self.tail_tol,
                "out": self.out_dir,
                "processes": self.processes,
            },
        }

    def digest(self, seed: int) -> str:
        blob = json.dumps(self.canonical_dict(seed), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _load_raw(path: Path) -> dict:
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParseError(f"{path}: {exc}") from None
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text.decode())
    except Exception as exc:
        raise ConfigParseError(f"{path}: {exc}") from None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file (TOML, or JSON by extension)."""
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(f"config file not found: {path}")
    raw = _load_raw(path)

    model = raw.get("model") or _fail("model", "missing table")
    dimension = int(_require(model, "dimension", "model"))
    if dimension < 1:
        _fail("model.dimension", "must be >= 1")

    ktab = _require(model, "kernel", "model")
    moves = _require(ktab, "moves", "model.kernel")
    weights = _require(ktab, "weights", "model.kernel")
    if len(moves) != len(weights):
        _fail("model.kernel.weights", "length differs from moves")
    try:
        kernel = validate_kernel(list(zip(moves, weights)), dimension)
    except Exception as exc:
        _fail("model.kernel", str(exc))

    law = _build_law(_require(model, "initial_law", "model"))

    scaling = raw.get("scaling", {})
    n_values = tuple(int(n) for n in scaling.get("n", [64]))
    if not n_values or any(n < 1 for n in n_values):
        _fail("scaling.n", "need positive integers")
    horizon = float(scaling.get("horizon", 1.0))
    if horizon <= 0:
        _fail("scaling.horizon", "must be positive")
    if "grid" in scaling:
        grid = tuple(float(t) for t in scaling["grid"])
    else:
        grid = tuple(horizon * (k + 1) / DEFAULT_GRID_POINTS for k in range(DEFAULT_GRID_POINTS))
    if not grid or any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        _fail("scaling.grid", "must be strictly increasing positive times")
    if abs(grid[-1] - horizon) > 1e-12:
        _fail("scaling.grid", "must end at the horizon")

    observables = raw.get("observables", {})
    functions: list[tuple[str, TestFunction]] = []
    for i, ftab in enumerate(observables.get("functions", [])):
        functions.append(_build_function(ftab, dimension, i))
    if "box_radius" in observables:
        radius = float(observables["box_radius"])
        if radius <= 0:
            _fail("observables.box_radius", "must be positive")
        functions.append(("box", BoxIndicator(radius, dimension)))
    if not functions:
        _fail("observables", "need at least one test function or a box_radius")
    ids = [fid for fid, _ in functions]
    if len(set(ids)) != len(ids):
        _fail("observables.functions", "duplicate function ids")

    thetas = []
    for i, ttab in enumerate(observables.get("theta", [])):
        coords = ttab.get("coords") or _fail(f"observables.theta[{i}].coords", "missing")
        weights_t = ttab.get("weights") or _fail(f"observables.theta[{i}].weights", "missing")
        if len(coords) != len(weights_t):
            _fail(f"observables.theta[{i}]", "coords and weights lengths differ")
        parsed = []
        for t, fid in coords:
            if fid not in ids:
                _fail(f"observables.theta[{i}].coords", f"unknown function id {fid!r}")
            tf = float(t)
            if not any(abs(tf - g) <= 1e-12 for g in grid):
                _fail(f"observables.theta[{i}].coords", f"time {t} not on the grid")
            parsed.append((tf, str(fid)))
        thetas.append({"coords": parsed, "weights": [float(w) for w in weights_t]})

    run = raw.get("run", {})
    replicas = int(run.get("replicas", DEFAULT_REPLICAS))
    if replicas < 2:
        _fail("run.replicas", "need at least 2")
    seed = run.get("seed")
    if seed is not None:
        seed = int(seed)
    tail_tol = float(run.get("tail_tol", DEFAULT_TAIL_TOL))
    if not 0 < tail_tol < 1:
        _fail("run.tail_tol", "must lie in (0, 1)")
    processes = int(run.get("processes", 1))
    if processes < 1:
        _fail("run.processes", "must be >= 1")

    return ExperimentConfig(
        dimension=dimension, kernel=kernel, law=law, n_values=n_values,
        horizon=horizon, grid=grid, functions=tuple(functions),
        thetas=tuple(thetas), replicas=replicas, seed=seed, tail_tol=tail_tol,
        out_dir=str(run.get("out", "out")), processes=processes)
