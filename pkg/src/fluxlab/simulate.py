"""Microscopic particle system and the scaled current along an observation grid.

One replica: draw i.i.d. occupancies on a finite start region, expand them
into walkers, and move every walker across consecutive grid gaps by exact
compound-Poisson increments (positions are only ever needed at observation
epochs, so there is no time-discretization error).  The current at grid
time t_k accumulates, per walker started at site m,

    phi((X(n t_k) - [n v t_k]) / sqrt(n)) - phi(m / sqrt(n)),

scaled by n^{-d/4}; [.] is componentwise truncation toward zero.  The
infinite lattice sum is truncated to a max-norm ball whose radius carries a
certified tail bound: outside it, the expected absolute contribution to the
current is below the plan's tail tolerance.

Randomness is organized so results are reproducible and extensible: sites
are enumerated shell by shell, and each replica consumes draws from
fixed-purpose substreams (occupancy, then one Poisson and one multinomial
stream per grid gap) in that canonical order.  Enlarging the start region
therefore only appends walkers; it never changes the draws of existing ones.
"""
from __future__ import annotations

import json
import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PlanInvalidError
from .kernels import JumpKernel, displacement_counts
from .laws import InitialLaw
from .limit import LimitSpec
from .rng import RngStream

# substream tags within a replica
_TAG_OCCUPANCY = 0


def _tag_poisson(gap: int) -> int:
    return 2 * gap - 1


def _tag_multinomial(gap: int) -> int:
    return 2 * gap


def integer_part(x) -> np.ndarray:
    """Componentwise truncation toward zero: [1.7] = 1, [-1.7] = -1."""
    return np.trunc(np.asarray(x, dtype=float)).astype(np.int64)


@lru_cache(maxsize=8)
def _shell_sites_cached(dimension: int, radius: int) -> np.ndarray:
    coords = np.indices((2 * radius + 1,) * dimension).reshape(dimension, -1).T - radius
    shells = np.max(np.abs(coords), axis=1)
    order = np.lexsort(tuple(coords[:, i] for i in reversed(range(dimension))) + (shells,))
    out = coords[order].astype(np.int64)
    out.setflags(write=False)
    return out


def shell_sites(dimension: int, radius: int) -> np.ndarray:
    """All lattice sites with max-norm <= radius, shell by shell, lexicographic within a shell."""
    return _shell_sites_cached(int(dimension), int(radius))


def truncation_radius(n: int, horizon: float, kernel: JumpKernel, functions,
                      tail_tol: float) -> int:
    """Smallest certified start-region radius (lattice units).

    A walker started at m only contributes if m lies where some phi is
    non-negligible, or if its recentred endpoint wanders there; the endpoint
    spread over the whole horizon is bounded by the Gaussian envelope of the
    diffusion factor.  With r_phi the largest max-norm radius at which any
    test function still exceeds tail_tol, the certified radius is

        R = ceil( sqrt(n) r_phi + c sqrt(n T) sqrt(2 ln(1 / tail_tol)) ),

    c being the largest singular value of the factor kappa.  Halving
    tail_tol can only increase R.
    """
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    r_phi = max(f.support_radius(tail_tol) for f in functions)
    envelope = kernel.envelope_scale * math.sqrt(n * horizon) * math.sqrt(2.0 * math.log(1.0 / tail_tol))
    return int(math.ceil(math.sqrt(n) * r_phi + envelope))


@dataclass(frozen=True)
class SimulationPlan:
    """Complete description of one experiment at a fixed scaling parameter n."""

    dimension: int
    n: int
    kernel: JumpKernel
    law: InitialLaw
    horizon: float
    grid: np.ndarray            # observation times, t_0 = 0 < ... = horizon
    functions: tuple            # TestFunction instances
    function_ids: tuple         # parallel labels
    radius: int                 # start-region truncation radius (lattice units)
    seed: int
    tail_tol: float = 1e-6

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "function_ids", tuple(self.function_ids))
        if self.n < 1:
            raise PlanInvalidError("scaling parameter n must be a positive integer")
        if grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise PlanInvalidError("grid must be strictly increasing and start at 0")
        if not math.isclose(grid[-1], self.horizon, rel_tol=0, abs_tol=1e-12):
            raise PlanInvalidError("grid must end at the horizon")
        if len(self.functions) != len(self.function_ids) or not self.functions:
            raise PlanInvalidError("need at least one test function with matching ids")
        for f in self.functions:
            if f.dimension != self.dimension:
                raise PlanInvalidError(f"test function dimension {f.dimension} != {self.dimension}")
        if self.kernel.dimension != self.dimension:
            raise PlanInvalidError("kernel dimension mismatch")
        recommended = truncation_radius(self.n, self.horizon, self.kernel,
                                        self.functions, self.tail_tol)
        if self.radius < recommended:
            raise PlanInvalidError(
                f"truncation radius {self.radius} below certified minimum {recommended}")

    @property
    def scale(self) -> float:
        return math.sqrt(self.n)

    def limit_spec(self) -> LimitSpec:
        return LimitSpec(self.law.mean, self.law.variance, self.kernel.second_moment)

    def canonical_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "n": self.n,
            "kernel": {
                "moves": self.kernel.moves.tolist(),
                "probabilities": self.kernel.probabilities.tolist(),
            },
            "law": {"kind": self.law.kind, "params": self.law.params},
            "horizon": self.horizon,
            "grid": self.grid.tolist(),
            "functions": [f.params() for f in self.functions],
            "function_ids": list(self.function_ids),
            "radius": self.radius,
            "seed": self.seed,
            "tail_tol": self.tail_tol,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def make_plan(dimension, n, kernel, law, horizon, grid, functions, function_ids,
              seed, tail_tol: float = 1e-6, radius: int | None = None) -> SimulationPlan:
    """Assemble a plan, filling in the certified truncation radius by default."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] != 0.0:
        grid = np.concatenate(([0.0], grid))
    if radius is None:
        radius = truncation_radius(n, horizon, kernel, functions, tail_tol)
    return SimulationPlan(dimension=dimension, n=n, kernel=kernel, law=law,
                          horizon=horizon, grid=grid, functions=tuple(functions),
                          function_ids=tuple(function_ids), radius=int(radius),
                          seed=int(seed), tail_tol=tail_tol)


@dataclass(frozen=True)
class CurrentPath:
    """One replica's current trajectory plus audit diagnostics.

    values[k, f] is the scaled current at grid time k for function f; the
    first row is exactly zero.  density[k, f] holds the companion density
    functional n^{-d/2} sum_j phi((X_j - [n v t]) / sqrt(n)), and shell[k, f]
    the current restricted to walkers started in the outermost 10% of the
    start region (the truncation-quality monitor).
    """

    replica: int
    times: np.ndarray
    function_ids: tuple
    values: np.ndarray
    density: np.ndarray
    shell: np.ndarray
    walker_count: int


def sample_initial(law: InitialLaw, sites: np.ndarray, rng) -> np.ndarray:
    """I.i.d. occupancies for each site row; returns the per-site counts."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return law.sample(sites.shape[0], gen)


def run_replica(plan: SimulationPlan, replica: int) -> CurrentPath:
    """Simulate one replica exactly; deterministic given (plan.seed, replica)."""
    base_stream = RngStream(plan.seed).for_replica(replica)
    sites = shell_sites(plan.dimension, plan.radius)
    occupancy = sample_initial(plan.law, sites, base_stream.substream(_TAG_OCCUPANCY))
    starts = np.repeat(sites, occupancy, axis=0)
    walkers = starts.shape[0]

    k_grid = plan.grid.size
    n_fun = len(plan.functions)
    scale = plan.scale
    amp = float(plan.n) ** (-plan.dimension / 4.0)
    dens_scale = float(plan.n) ** (-plan.dimension / 2.0)

    shell_mask = np.max(np.abs(starts), axis=1) > 0.9 * plan.radius

    start_scaled = starts / scale
    base_vals = np.empty((n_fun, walkers))
    for f, fn in enumerate(plan.functions):
        base_vals[f] = fn._value(start_scaled) if walkers else np.empty(0)

    values = np.zeros((k_grid, n_fun))
    density = np.zeros((k_grid, n_fun))
    shell = np.zeros((k_grid, n_fun))
    for f in range(n_fun):
        density[0, f] = dens_scale * base_vals[f].sum()

    pos = starts.copy()
    for k in range(1, k_grid):
        gap = float(plan.n) * (plan.grid[k] - plan.grid[k - 1])
        jump_gen = base_stream.substream(_tag_poisson(k)).generator()
        split_gen = base_stream.substream(_tag_multinomial(k)).generator()
        if walkers:
            pos += displacement_counts(plan.kernel, gap, walkers, jump_gen, split_gen)
        drift_shift = integer_part(plan.n * plan.kernel.drift * plan.grid[k])
        observed = (pos - drift_shift) / scale
        for f, fn in enumerate(plan.functions):
            vals = fn._value(observed) if walkers else np.empty(0)
            values[k, f] = amp * (vals.sum() - base_vals[f].sum())
            density[k, f] = dens_scale * vals.sum()
            if walkers:
                shell[k, f] = amp * (vals[shell_mask].sum() - base_vals[f][shell_mask].sum())

    return CurrentPath(replica=replica, times=plan.grid, function_ids=plan.function_ids,
                       values=values, density=density, shell=shell, walker_count=walkers)
