"""Initial occupancy laws: i.i.d. particle counts per lattice site.

Each law exposes exact closed-form mean and variance (these feed the limit
covariance) and a vectorized sampler.  All supported variants have finite
exponential moments; the custom law has bounded support by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigValidationError


@dataclass(frozen=True)
class InitialLaw:
    kind: str                 # poisson | deterministic | geometric | custom
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("poisson", "deterministic", "geometric", "custom"):
            raise ConfigValidationError(f"unknown initial law {self.kind!r}")
        p = self.params
        if self.kind == "poisson":
            if p.get("rate", 0.0) <= 0:
                raise ConfigValidationError("poisson law needs rate > 0")
        elif self.kind == "deterministic":
            k = p.get("value", -1)
            if k < 0 or int(k) != k:
                raise ConfigValidationError("deterministic law needs an integer value >= 0")
        elif self.kind == "geometric":
            if not 0.0 < p.get("success", 0.0) < 1.0:
                raise ConfigValidationError("geometric law needs success probability in (0, 1)")
        else:
            values = np.asarray(p.get("values", ()), dtype=np.int64)
            probs = np.asarray(p.get("probabilities", ()), dtype=float)
            if values.size == 0 or values.size != probs.size:
                raise ConfigValidationError("custom law needs matching values/probabilities")
            if np.any(values < 0):
                raise ConfigValidationError("custom law values must be nonnegative integers")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ConfigValidationError("custom law probabilities must be >= 0 and sum to 1")

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind == "poisson":
            return float(p["rate"])
        if self.kind == "deterministic":
            return float(p["value"])
        if self.kind == "geometric":
            # counts failures before the first success: support {0, 1, 2, ...}
            q = p["success"]
            return (1.0 - q) / q
        values = np.asarray(p["values"], dtype=float)
        probs = np.asarray(p["probabilities"], dtype=float)
        return float(values @ probs)

    @property
    def variance(self) -> float:
        p = self.params
        if self.kind == "poisson":
            return float(p["rate"])
        if self.kind == "deterministic":
            return 0.0
        if self.kind == "geometric":
            q = p["success"]
            return (1.0 - q) / (q * q)
        values = np.asarray(p["values"], dtype=float)
        probs = np.asarray(p["probabilities"], dtype=float)
        m = values @ probs
        return float((values - m) ** 2 @ probs)

    def sample(self, count: int, gen: np.random.Generator) -> np.ndarray:
        """Vectorized draw of `count` i.i.d. occupancies."""
        p = self.params
        if self.kind == "poisson":
            return gen.poisson(p["rate"], size=count)
        if self.kind == "deterministic":
            return np.full(count, int(p["value"]), dtype=np.int64)
        if self.kind == "geometric":
            return gen.geometric(p["success"], size=count) - 1
        values = np.asarray(p["values"], dtype=np.int64)
        probs = np.asarray(p["probabilities"], dtype=float)
        return values[gen.choice(values.size, size=count, p=probs)]


def poisson_law(rate: float) -> InitialLaw:
    return InitialLaw("poisson", {"rate": float(rate)})


def deterministic_law(value: int) -> InitialLaw:
    return InitialLaw("deterministic", {"value": int(value)})


def geometric_law(success: float) -> InitialLaw:
    return InitialLaw("geometric", {"success": float(success)})


def custom_law(pmf: dict) -> InitialLaw:
    items = sorted((int(k), float(v)) for k, v in pmf.items())
    return InitialLaw("custom", {
        "values": [k for k, _ in items],
        "probabilities": [v for _, v in items],
    })


def moments_of_law(law: InitialLaw) -> tuple[float, float]:
    """(mean, variance) of the occupancy law, exact closed forms."""
    return law.mean, law.variance
