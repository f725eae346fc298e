"""Jump kernels for continuous-time lattice random walks.

A kernel is a finite probability law p on Z^d.  Walkers jump at unit rate,
so the displacement over a duration t is compound Poisson: Poisson(t) many
i.i.d. jumps.  Validation derives the drift v = sum x p(x), the second
moment matrix a_ij = sum x_i x_j p(x), and a lower-triangular factor kappa
with kappa kappa^T = a; a must be positive definite, which holds exactly
when the support is not contained in a proper linear subspace.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSupportError,
    DuplicateSiteError,
    ProbabilitySumError,
)
from .rng import RngStream

PROB_SUM_TOL = 1e-12
FACTOR_TOL = 1e-10


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


@dataclass(frozen=True)
class JumpKernel:
    """Validated jump law with derived moment structure."""

    dimension: int
    moves: np.ndarray          # (k, d) int64 lattice vectors
    probabilities: np.ndarray  # (k,) strictly positive, sums to 1
    drift: np.ndarray          # (d,) v = sum x p(x)
    second_moment: np.ndarray  # (d, d) a = sum x x^T p(x), SPD
    factor: np.ndarray         # (d, d) lower triangular, factor factor^T = a

    @property
    def envelope_scale(self) -> float:
        """Largest singular value of the factor: per-axis diffusion envelope."""
        return float(np.linalg.norm(self.factor, 2))


def validate_kernel(pmf, d: int) -> JumpKernel:
    """Build a JumpKernel from (vector, probability) pairs.

    Raises ProbabilitySumError, DuplicateSiteError, or DegenerateSupportError
    when the law is not a valid non-degenerate jump kernel on Z^d.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    pairs = list(pmf)
    if not pairs:
        raise ValueError("kernel support must be nonempty")

    moves = np.array([np.atleast_1d(np.asarray(x, dtype=np.int64)) for x, _ in pairs], dtype=np.int64)
    probs = np.array([float(p) for _, p in pairs], dtype=np.float64)
    if moves.shape[1] != d:
        raise ValueError(f"support vectors have dimension {moves.shape[1]}, expected {d}")
    if np.any(probs <= 0.0):
        raise ProbabilitySumError("all jump probabilities must be strictly positive")
    total = probs.sum()
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ProbabilitySumError(f"jump probabilities sum to {total!r}, not 1 within {PROB_SUM_TOL}")
    if len({tuple(m) for m in moves}) != len(moves):
        raise DuplicateSiteError("duplicate lattice vector in kernel support")

    xf = moves.astype(np.float64)
    drift = probs @ xf
    second = (xf * probs[:, None]).T @ xf
    second = 0.5 * (second + second.T)  # enforce exact symmetry
    try:
        factor = np.linalg.cholesky(second)
    except np.linalg.LinAlgError:
        raise DegenerateSupportError(
            "kernel support lies in a proper linear subspace (second-moment matrix not positive definite)"
        ) from None
    if np.max(np.abs(factor @ factor.T - second)) > FACTOR_TOL:
        raise DegenerateSupportError("factorization of the second-moment matrix failed tolerance")

    return JumpKernel(
        dimension=d,
        moves=moves,
        probabilities=probs,
        drift=drift,
        second_moment=second,
        factor=factor,
    )


def sample_displacement(kernel: JumpKernel, duration: float, rng) -> np.ndarray:
    """Exact draw of X(duration) - X(0): Poisson(duration) many i.i.d. jumps.

    The jump counts per support atom are multinomial given the total, which
    is equivalent in law to summing individual jumps; there is no
    time-discretization error.  Duration 0 returns the zero vector.
    """
    return sample_displacements(kernel, duration, 1, rng)[0]


def sample_displacements(kernel: JumpKernel, duration: float, size: int, rng) -> np.ndarray:
    """Batch of `size` independent displacement draws over `duration`."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    gen = _as_generator(rng)
    if duration == 0.0:
        return np.zeros((size, kernel.dimension), dtype=np.int64)
    total = gen.poisson(duration, size=size)
    counts = gen.multinomial(total, kernel.probabilities)
    return counts @ kernel.moves


def displacement_counts(kernel: JumpKernel, duration: float, size: int, gen: np.random.Generator,
                        count_gen: np.random.Generator) -> np.ndarray:
    """Displacements with the Poisson totals and multinomial splits drawn from
    separate generators.

    Keeping the two stages on disjoint streams makes the draw sequence for
    walker i independent of how many walkers follow it, so appended walkers
    never perturb existing ones.
    """
    total = gen.poisson(duration, size=size)
    counts = count_gen.multinomial(total, kernel.probabilities)
    return counts @ kernel.moves


def transition_probability(kernel: JumpKernel, duration: float, target, tol: float = 1e-12) -> float:
    """P(X(duration) - X(0) = target) by the Poisson-convolution series.

    Evaluates sum_k e^{-t} t^k / k! * p^(k)(target) with p^(k) built by
    dynamic-programming convolution.  The series stops once the remaining
    Poisson tail mass drops below tol, which certifies the truncation error
    (every convolution value is at most 1).  Unreachable targets return 0.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    target = tuple(np.atleast_1d(np.asarray(target, dtype=np.int64)))
    if len(target) != kernel.dimension:
        raise ValueError(f"target has dimension {len(target)}, expected {kernel.dimension}")

    if duration == 0.0:
        return 1.0 if all(c == 0 for c in target) else 0.0

    moves = [tuple(m) for m in kernel.moves]
    probs = kernel.probabilities

    conv = {tuple(0 for _ in range(kernel.dimension)): 1.0}  # p^(0)
    weight = np.exp(-duration)  # Poisson pmf at k=0
    acc = weight * conv.get(target, 0.0)
    consumed = weight
    k = 0
    while 1.0 - consumed >= tol:
        nxt: dict = {}
        for site, mass in conv.items():
            for mv, p in zip(moves, probs):
                key = tuple(s + m for s, m in zip(site, mv))
                nxt[key] = nxt.get(key, 0.0) + mass * p
        conv = nxt
        k += 1
        weight *= duration / k
        acc += weight * conv.get(target, 0.0)
        consumed += weight
    return float(acc)
