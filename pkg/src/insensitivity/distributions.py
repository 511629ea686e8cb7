"""Workload distributions with unit-mean normalisation and their equilibrium laws.

Every family samples by inverse CDF (or by composition driven by the same
single uniform), so a stream of uniforms maps to a reproducible stream of
workloads on any platform.

The equilibrium (stationary residual-life) law of a unit-mean distribution
with CDF ``F`` has CDF ``G(x) = int_0^x (1 - F(y)) dy`` and density ``1 - F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import optimize, special


class DistributionError(ValueError):
    """Invalid workload distribution parameters."""


def _gamma_cdf(shape: int, rate: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    return float(special.gammainc(shape, rate * x))


def _gamma_ppf(shape: int, rate: float, u: float) -> float:
    if u <= 0.0:
        return 0.0
    return float(special.gammaincinv(shape, u)) / rate


def _invert(cdf: Any, u: float) -> float:
    """Numerical quantile of a continuous CDF on [0, inf)."""
    if u <= 0.0:
        return 0.0
    hi = 1.0
    while cdf(hi) < u:
        hi *= 2.0
    return float(optimize.brentq(lambda x: cdf(x) - u, 0.0, hi, xtol=1e-14, rtol=1e-14))


def _split_uniform(u: float, weights: Sequence[float]) -> tuple[int, float]:
    """Pick a mixture component with ``u`` and rescale ``u`` inside it."""
    acc = 0.0
    last = len(weights) - 1
    for k, w in enumerate(weights):
        if u < acc + w or k == last:
            v = (u - acc) / w if w > 0 else 0.0
            return k, min(max(v, 0.0), 1.0 - 1e-16)
        acc += w
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class WorkloadDistribution:
    """Base class. Subclasses are frozen dataclasses holding their parameters."""

    family = "abstract"

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        """E[W^2]; ``math.inf`` when infinite."""
        raise NotImplementedError

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def infinite_variance(self) -> bool:
        return math.isinf(self.second_moment)

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def ppf(self, u: float) -> float:
        """Quantile function, inf{x : F(x) >= u}."""
        raise NotImplementedError

    def from_uniform(self, u: float) -> float:
        """Map a uniform on [0, 1) to a draw; the quantile unless a cheaper
        composition with the same law exists."""
        return self.ppf(u)

    def sample(self, rng: Any) -> float:
        return self.from_uniform(rng.random())

    def scaled(self, factor: float) -> "WorkloadDistribution":
        """Same family with every draw multiplied by ``factor``."""
        raise NotImplementedError

    def with_mean(self, target_mean: float) -> "WorkloadDistribution":
        if not (target_mean > 0 and math.isfinite(target_mean)):
            raise DistributionError(f"target mean must be positive and finite, got {target_mean}")
        return self.scaled(target_mean / self.mean)

    def params(self) -> dict[str, Any]:
        raise NotImplementedError

    def to_config(self) -> dict[str, Any]:
        return {"family": self.family, "params": self.params(), "mean": self.mean}

    def equilibrium(self) -> "EquilibriumDistribution":
        if abs(self.mean - 1.0) > 1e-12:
            raise DistributionError(
                f"equilibrium law requires a unit-mean workload, got mean {self.mean!r}"
            )
        return EquilibriumDistribution(self)

    # Hooks for the equilibrium law; only called on unit-mean instances.
    def _eq_cdf(self, x: float) -> float:
        raise NotImplementedError

    def _eq_ppf(self, u: float) -> float:
        raise NotImplementedError

    def _eq_from_uniform(self, u: float) -> float:
        return self._eq_ppf(u)


@dataclass(frozen=True)
class Exponential(WorkloadDistribution):
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self) -> None:
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise DistributionError(f"exponential rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def second_moment(self) -> float:
        return 2.0 / self.rate**2

    def cdf(self, x: float) -> float:
        return 0.0 if x <= 0 else -math.expm1(-self.rate * x)

    def ppf(self, u: float) -> float:
        return -math.log1p(-u) / self.rate

    def scaled(self, factor: float) -> "Exponential":
        return Exponential(self.rate / factor)

    def params(self) -> dict[str, Any]:
        return {"rate": self.rate}

    # memoryless: the equilibrium law is the law itself
    def _eq_cdf(self, x: float) -> float:
        return self.cdf(x)

    def _eq_ppf(self, u: float) -> float:
        return self.ppf(u)


@dataclass(frozen=True)
class Deterministic(WorkloadDistribution):
    value: float = 1.0
    family = "deterministic"

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise DistributionError(f"deterministic value must be finite and >= 0, got {self.value}")
        if self.value == 0:
            raise DistributionError("deterministic(0) puts an atom of probability at zero")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def second_moment(self) -> float:
        return self.value**2

    def cdf(self, x: float) -> float:
        return 1.0 if x >= self.value else 0.0

    def ppf(self, u: float) -> float:
        return self.value

    def scaled(self, factor: float) -> "Deterministic":
        return Deterministic(self.value * factor)

    def params(self) -> dict[str, Any]:
        return {"value": self.value}

    # equilibrium of a unit point mass is Uniform(0, 1)
    def _eq_cdf(self, x: float) -> float:
        return min(max(x, 0.0), 1.0)

    def _eq_ppf(self, u: float) -> float:
        return u


@dataclass(frozen=True)
class Erlang(WorkloadDistribution):
    shape: int
    rate: float
    family = "erlang"

    def __post_init__(self) -> None:
        if int(self.shape) != self.shape or self.shape < 1:
            raise DistributionError(f"erlang shape must be a positive integer, got {self.shape}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise DistributionError(f"erlang rate must be positive, got {self.rate}")
        object.__setattr__(self, "shape", int(self.shape))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def second_moment(self) -> float:
        return self.shape * (self.shape + 1) / self.rate**2

    def cdf(self, x: float) -> float:
        return _gamma_cdf(self.shape, self.rate, x)

    def ppf(self, u: float) -> float:
        return _gamma_ppf(self.shape, self.rate, u)

    def scaled(self, factor: float) -> "Erlang":
        return Erlang(self.shape, self.rate / factor)

    def params(self) -> dict[str, Any]:
        return {"shape": self.shape, "rate": self.rate}

    # 1 - F(x) = sum_{m<k} e^{-rx}(rx)^m/m!, so with k/r = 1 the equilibrium
    # law is the equal-weight mixture of Erlang(m+1, r), m = 0..k-1.
    def _eq_cdf(self, x: float) -> float:
        if x <= 0:
            return 0.0
        return sum(_gamma_cdf(m + 1, self.rate, x) for m in range(self.shape)) / self.shape

    def _eq_ppf(self, u: float) -> float:
        return _invert(self._eq_cdf, u)

    def _eq_from_uniform(self, u: float) -> float:
        k, v = _split_uniform(u, [1.0 / self.shape] * self.shape)
        return _gamma_ppf(k + 1, self.rate, v)


@dataclass(frozen=True)
class HyperExponential(WorkloadDistribution):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    family = "hyperexponential"

    def __post_init__(self) -> None:
        weights = tuple(float(w) for w in self.weights)
        rates = tuple(float(r) for r in self.rates)
        if len(weights) != len(rates) or not weights:
            raise DistributionError("hyperexponential needs matching, nonempty weights and rates")
        if any(w < 0 for w in weights):
            raise DistributionError("hyperexponential weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise DistributionError(f"hyperexponential weights must sum to 1, got {sum(weights)}")
        if any(not (r > 0 and math.isfinite(r)) for r in rates):
            raise DistributionError("hyperexponential rates must be positive (a zero rate is not a workload)")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rates", rates)

    @property
    def mean(self) -> float:
        return sum(w / r for w, r in zip(self.weights, self.rates))

    @property
    def second_moment(self) -> float:
        return sum(2.0 * w / r**2 for w, r in zip(self.weights, self.rates))

    def cdf(self, x: float) -> float:
        if x <= 0:
            return 0.0
        return 1.0 - sum(w * math.exp(-r * x) for w, r in zip(self.weights, self.rates))

    def ppf(self, u: float) -> float:
        return _invert(self.cdf, u)

    def from_uniform(self, u: float) -> float:
        k, v = _split_uniform(u, self.weights)
        return -math.log1p(-v) / self.rates[k]

    def scaled(self, factor: float) -> "HyperExponential":
        return HyperExponential(self.weights, tuple(r / factor for r in self.rates))

    def params(self) -> dict[str, Any]:
        return {"weights": list(self.weights), "rates": list(self.rates)}

    # density of the equilibrium law is sum_k w_k e^{-r_k x}: a mixture of the
    # same exponentials with weights w_k / r_k (these sum to the mean, 1)
    def _eq_weights(self) -> list[float]:
        return [w / r for w, r in zip(self.weights, self.rates)]

    def _eq_cdf(self, x: float) -> float:
        if x <= 0:
            return 0.0
        return 1.0 - sum(w * math.exp(-r * x) for w, r in zip(self._eq_weights(), self.rates))

    def _eq_ppf(self, u: float) -> float:
        return _invert(self._eq_cdf, u)

    def _eq_from_uniform(self, u: float) -> float:
        k, v = _split_uniform(u, self._eq_weights())
        return -math.log1p(-v) / self.rates[k]


@dataclass(frozen=True)
class Uniform(WorkloadDistribution):
    lo: float
    hi: float
    family = "uniform"

    def __post_init__(self) -> None:
        if self.lo < 0:
            raise DistributionError(f"uniform lower end must be >= 0, got {self.lo}")
        if not (self.hi > self.lo and math.isfinite(self.hi)):
            raise DistributionError(f"uniform needs lo < hi < inf, got ({self.lo}, {self.hi})")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self) -> float:
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    def cdf(self, x: float) -> float:
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        return (x - self.lo) / (self.hi - self.lo)

    def ppf(self, u: float) -> float:
        return self.lo + u * (self.hi - self.lo)

    def scaled(self, factor: float) -> "Uniform":
        return Uniform(self.lo * factor, self.hi * factor)

    def params(self) -> dict[str, Any]:
        return {"lo": self.lo, "hi": self.hi}

    def _eq_cdf(self, x: float) -> float:
        lo, hi = self.lo, self.hi
        if x <= 0:
            return 0.0
        if x <= lo:
            return x
        if x >= hi:
            return 1.0
        w = hi - lo
        return lo + (w * w - (hi - x) ** 2) / (2.0 * w)

    def _eq_ppf(self, u: float) -> float:
        lo, hi = self.lo, self.hi
        if u <= lo:
            return u
        w = hi - lo
        return hi - math.sqrt(max(w * w - 2.0 * w * (u - lo), 0.0))


@dataclass(frozen=True)
class Pareto(WorkloadDistribution):
    """Classical Pareto on [scale, inf): ``1 - F(x) = (scale / x) ** shape``."""

    shape: float
    scale: float
    family = "pareto"

    def __post_init__(self) -> None:
        if not self.shape > 1:
            raise DistributionError(f"pareto shape must exceed 1 for a finite mean, got {self.shape}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DistributionError(f"pareto scale must be positive, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale / (self.shape - 1.0)

    @property
    def second_moment(self) -> float:
        if self.shape <= 2:
            return math.inf
        return self.shape * self.scale**2 / (self.shape - 2.0)

    def cdf(self, x: float) -> float:
        if x <= self.scale:
            return 0.0
        return 1.0 - (self.scale / x) ** self.shape

    def ppf(self, u: float) -> float:
        return self.scale * (1.0 - u) ** (-1.0 / self.shape)

    def scaled(self, factor: float) -> "Pareto":
        return Pareto(self.shape, self.scale * factor)

    def params(self) -> dict[str, Any]:
        return {"shape": self.shape, "scale": self.scale}

    def _eq_cdf(self, x: float) -> float:
        a, s = self.shape, self.scale
        if x <= 0:
            return 0.0
        if x <= s:
            return x
        return s + s / (a - 1.0) * (1.0 - (s / x) ** (a - 1.0))

    def _eq_ppf(self, u: float) -> float:
        a, s = self.shape, self.scale
        if u <= s:
            return u
        tail = 1.0 - (u - s) * (a - 1.0) / s
        return s * max(tail, 1e-300) ** (-1.0 / (a - 1.0))


class EquilibriumDistribution:
    """Stationary residual-life law of a unit-mean workload distribution."""

    def __init__(self, base: WorkloadDistribution):
        if abs(base.mean - 1.0) > 1e-12:
            raise DistributionError(f"base distribution must have mean 1, got {base.mean}")
        self.base = base

    def __repr__(self) -> str:
        return f"EquilibriumDistribution({self.base!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EquilibriumDistribution) and other.base == self.base

    def __hash__(self) -> int:
        return hash(("eq", self.base))

    @property
    def mean(self) -> float:
        return self.base.second_moment / 2.0

    def cdf(self, x: float) -> float:
        return self.base._eq_cdf(x)

    def density(self, x: float) -> float:
        return 0.0 if x < 0 else 1.0 - self.base.cdf(x)

    def ppf(self, u: float) -> float:
        return self.base._eq_ppf(u)

    def from_uniform(self, u: float) -> float:
        return self.base._eq_from_uniform(u)

    def sample(self, rng: Any) -> float:
        return self.from_uniform(rng.random())


FAMILIES: dict[str, type[WorkloadDistribution]] = {
    "exponential": Exponential,
    "deterministic": Deterministic,
    "erlang": Erlang,
    "hyperexponential": HyperExponential,
    "uniform": Uniform,
    "pareto": Pareto,
}

_ALIASES = {"exp": "exponential", "det": "deterministic", "h2": "hyperexponential", "hyperexp": "hyperexponential"}


def make_distribution(
    family: str, params: Mapping[str, Any] | None = None, target_mean: float = 1.0
) -> WorkloadDistribution:
    """Build a workload distribution and rescale it to ``target_mean``.

    >>> make_distribution("exponential", {"rate": 3.0})
    Exponential(rate=1.0)
    """
    name = _ALIASES.get(family.lower(), family.lower())
    if name not in FAMILIES:
        raise DistributionError(f"unknown workload family {family!r}; known: {sorted(FAMILIES)}")
    params = dict(params or {})
    if name == "hyperexponential":
        params = {"weights": tuple(params.get("weights", ())), "rates": tuple(params.get("rates", ()))}
    try:
        dist = FAMILIES[name](**params)
    except TypeError as exc:
        raise DistributionError(f"bad parameters for {name}: {exc}") from None
    if target_mean is None:
        return dist
    if abs(dist.mean - target_mean) <= 1e-15 * target_mean:
        return dist
    return dist.with_mean(target_mean)


def equilibrium(d: WorkloadDistribution) -> EquilibriumDistribution:
    return d.equilibrium()


def cdf(d: WorkloadDistribution | EquilibriumDistribution, x: float) -> float:
    return d.cdf(x)


def sample(d: WorkloadDistribution | EquilibriumDistribution, rng: Any) -> float:
    return d.sample(rng)


def sample_equilibrium(e: EquilibriumDistribution, rng: Any) -> float:
    return e.sample(rng)


def sample_many(d: WorkloadDistribution | EquilibriumDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    u = rng.random(size)
    return np.fromiter((d.from_uniform(float(x)) for x in u), dtype=float, count=size)
