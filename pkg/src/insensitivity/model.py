"""Network specifications, state transitions and rate models.

States are tuples of per-class counts ``(n_1, ..., n_N)``. Class indices run
over ``0..N`` where 0 is the exterior: ``rate(n, 0, j)`` is the external
arrival rate into class ``j`` and ``rate(n, i, 0)`` the rate at which class
``i`` completions leave the network.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .distributions import WorkloadDistribution

State = tuple[int, ...]

REL_TOL = 1e-12


class ModelError(ValueError):
    """Malformed network specification or out-of-domain query."""


class Discipline(str, Enum):
    PS = "ps"
    LIFO_PR = "lifo_pr"
    FIFO = "fifo"

    @classmethod
    def parse(cls, value: "str | Discipline") -> "Discipline":
        if isinstance(value, Discipline):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"processor_sharing": "ps", "lifo": "lifo_pr", "lifo_preemptive_resume": "lifo_pr"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ModelError(f"unknown discipline {value!r}") from None


def transition(n: Sequence[int], i: int, j: int) -> State:
    """``T_ij n = n - e_i + e_j`` with ``e_0`` the zero vector."""
    out = list(n)
    size = len(out)
    if not (0 <= i <= size and 0 <= j <= size):
        raise ModelError(f"class index out of range for N={size}: i={i}, j={j}")
    if i:
        if out[i - 1] < 1:
            raise ModelError(f"cannot remove a class-{i} individual from {tuple(n)}")
        out[i - 1] -= 1
    if j:
        out[j - 1] += 1
    return tuple(out)


def box_states(bounds: Sequence[int]) -> list[State]:
    """All states with ``0 <= n_i <= bounds[i]``, in lexicographic order."""
    return [tuple(s) for s in itertools.product(*(range(b + 1) for b in bounds))]


class RateModel:
    """Base for the rate-model variants. ``matrix(n)`` is the (N+1)x(N+1) array of phi_ij(n)."""

    num_classes: int

    def matrix(self, n: State) -> np.ndarray:
        raise NotImplementedError

    def rate(self, n: State, i: int, j: int) -> float:
        self._check_index(i, j)
        return float(self.matrix(tuple(n))[i, j])

    def total(self, n: State, i: int) -> float:
        """phi_i(n), including any self-transition rate."""
        return float(self.matrix(tuple(n))[i].sum())

    def in_domain(self, n: State) -> bool:
        return all(k >= 0 for k in n)

    def _check_index(self, i: int, j: int) -> None:
        if not (0 <= i <= self.num_classes and 0 <= j <= self.num_classes):
            raise ModelError(f"class index out of range for N={self.num_classes}: i={i}, j={j}")

    def to_config(self) -> dict:
        raise NotImplementedError


class TabulatedRates(RateModel):
    """Explicit rate matrices on a finite box; unlisted box states have all rates zero."""

    def __init__(self, bounds: Sequence[int], table: Mapping[State, np.ndarray | Sequence[Sequence[float]]]):
        self.bounds = tuple(int(b) for b in bounds)
        self.num_classes = len(self.bounds)
        size = self.num_classes + 1
        self._table: dict[State, np.ndarray] = {}
        for state, mat in table.items():
            state = tuple(int(k) for k in state)
            arr = np.array(mat, dtype=float)
            if arr.shape != (size, size):
                raise ModelError(f"rate matrix for {state} has shape {arr.shape}, expected {(size, size)}")
            if not self.in_domain(state):
                raise ModelError(f"tabulated state {state} outside box {self.bounds}")
            arr.setflags(write=False)
            self._table[state] = arr
        self._zero = np.zeros((size, size))
        self._zero.setflags(write=False)

    def in_domain(self, n: State) -> bool:
        return len(n) == self.num_classes and all(0 <= k <= b for k, b in zip(n, self.bounds))

    def matrix(self, n: State) -> np.ndarray:
        if not self.in_domain(n):
            raise ModelError(f"state {n} outside tabulated box {self.bounds}")
        return self._table.get(tuple(n), self._zero)

    def to_config(self) -> dict:
        return {
            "model": "tabulated",
            "bounds": list(self.bounds),
            "entries": [{"state": list(s), "rates": m.tolist()} for s, m in sorted(self._table.items())],
        }


def _table_fn(values: Sequence[float], tail: float) -> Callable[[int], float]:
    vals = tuple(float(v) for v in values)

    def fn(n: int) -> float:
        return vals[n] if n < len(vals) else tail

    return fn


@dataclass(frozen=True)
class SingleClassRates(RateModel):
    """Single class with arrival rate alpha(n) and total service rate beta(n).

    Either pass callables directly or use the constructors. ``describe`` is
    the config dict that rebuilds this model.
    """

    alpha: Callable[[int], float]
    beta: Callable[[int], float]
    describe: dict = field(default_factory=dict, compare=False)
    num_classes: int = 1

    @classmethod
    def erlang_loss(cls, arrival_rate: float, capacity: int, service_rate: float = 1.0) -> "SingleClassRates":
        return cls.from_parameters(arrival_rate, capacity=capacity, service_rate=service_rate, servers=None)

    @classmethod
    def ps_queue(cls, arrival_rate: float, servers: int = 1, service_rate: float = 1.0) -> "SingleClassRates":
        """M/GI/m processor-sharing queue: beta(n) = service_rate * min(n, m)."""
        return cls.from_parameters(arrival_rate, capacity=None, service_rate=service_rate, servers=servers)

    @classmethod
    def from_parameters(
        cls,
        arrival_rate: float,
        capacity: int | None = None,
        service_rate: float = 1.0,
        servers: int | None = None,
    ) -> "SingleClassRates":
        a, s = float(arrival_rate), float(service_rate)
        cap = math.inf if capacity is None else int(capacity)
        m = math.inf if servers is None else int(servers)

        def alpha(n: int) -> float:
            return a if n < cap else 0.0

        def beta(n: int) -> float:
            return s * min(n, m)

        describe = {
            "model": "single_class",
            "arrival": {"rate": a, "capacity": capacity},
            "service": {"rate": s, "servers": servers},
        }
        return cls(alpha, beta, describe)

    @classmethod
    def from_tables(
        cls,
        alpha: Sequence[float],
        beta: Sequence[float],
        alpha_tail: float = 0.0,
        beta_tail: float | None = None,
    ) -> "SingleClassRates":
        """Tables indexed by n; beyond their end use the tail values (beta_tail defaults to the last entry)."""
        if beta_tail is None:
            beta_tail = float(beta[-1]) if len(beta) else 0.0
        describe = {
            "model": "single_class",
            "arrival_table": [float(v) for v in alpha],
            "service_table": [float(v) for v in beta],
            "arrival_tail": float(alpha_tail),
            "service_tail": float(beta_tail),
        }
        return cls(_table_fn(alpha, float(alpha_tail)), _table_fn(beta, float(beta_tail)), describe)

    def matrix(self, n: State) -> np.ndarray:
        (k,) = n
        if k < 0:
            raise ModelError(f"negative state {n}")
        out = np.zeros((2, 2))
        out[0, 1] = self.alpha(k)
        out[1, 0] = self.beta(k) if k > 0 else 0.0
        return out

    def to_config(self) -> dict:
        if not self.describe:
            raise ModelError("single-class model built from bare callables has no config form")
        return dict(self.describe)


class WhittleRates(RateModel):
    """phi_0j = nu p_0j and phi_ij(n) = Phi(T_i n) / Phi(n) p_ij.

    ``balance`` is the positive balance function Phi; ``routing`` the
    (N+1)x(N+1) stochastic matrix indexed with 0 as the exterior.
    """

    def __init__(
        self,
        balance: Callable[[State], float],
        routing: Sequence[Sequence[float]] | np.ndarray,
        nu: float,
        describe: dict | None = None,
    ):
        self.balance = balance
        self.routing = np.array(routing, dtype=float)
        self.routing.setflags(write=False)
        if self.routing.ndim != 2 or self.routing.shape[0] != self.routing.shape[1] or self.routing.shape[0] < 2:
            raise ModelError(f"routing matrix must be square with at least 2 rows, got {self.routing.shape}")
        self.num_classes = self.routing.shape[0] - 1
        self.nu = float(nu)
        self.describe = describe or {}

    @classmethod
    def jackson(cls, lambdas: Sequence[float], routing, nu: float) -> "WhittleRates":
        """Phi(n) = prod lambda_i^{n_i}: class i completes at rate 1/lambda_i when occupied."""
        lam = tuple(float(x) for x in lambdas)

        def phi(n: State) -> float:
            return math.prod(l**k for l, k in zip(lam, n))

        describe = {"balance": {"kind": "product", "lambdas": list(lam)}}
        return cls(phi, routing, nu, describe)

    @classmethod
    def constant(cls, routing, nu: float) -> "WhittleRates":
        return cls(lambda n: 1.0, routing, nu, {"balance": {"kind": "constant"}})

    def phi(self, n: State) -> float:
        """Phi with the convention Phi(n) = 0 off the nonnegative orthant."""
        if any(k < 0 for k in n):
            return 0.0
        return float(self.balance(n))

    def matrix(self, n: State) -> np.ndarray:
        n = tuple(n)
        if any(k < 0 for k in n):
            raise ModelError(f"negative state {n}")
        size = self.num_classes + 1
        out = np.zeros((size, size))
        out[0, :] = self.nu * self.routing[0, :]
        out[0, 0] = 0.0
        base = self.phi(n)
        for i in range(1, size):
            if n[i - 1] == 0:
                continue
            ratio = self.phi(transition(n, i, 0)) / base
            out[i, :] = ratio * self.routing[i, :]
        return out

    def to_config(self) -> dict:
        if "balance" not in self.describe:
            raise ModelError("Whittle model built from a bare callable has no config form")
        return {
            "model": "whittle",
            "nu": self.nu,
            "routing": self.routing.tolist(),
            "balance": dict(self.describe["balance"]),
        }


@dataclass(frozen=True)
class LinearConstraint:
    """sum_i coefficients[i] * n_i <= capacity."""

    coefficients: tuple[float, ...]
    capacity: float

    def holds(self, n: State) -> bool:
        return sum(c * k for c, k in zip(self.coefficients, n)) <= self.capacity + 1e-12


class LossRates(RateModel):
    """Loss network: blocked arrivals outside A, departures at sigma_i n_i, no internal routing.

    A is given by linear constraints, an explicit state list, or both
    (intersection).
    """

    def __init__(
        self,
        nu: Sequence[float],
        sigma: Sequence[float],
        constraints: Iterable[LinearConstraint] = (),
        states: Iterable[Sequence[int]] | None = None,
    ):
        self.nu = tuple(float(v) for v in nu)
        self.sigma = tuple(float(v) for v in sigma)
        if len(self.nu) != len(self.sigma) or not self.nu:
            raise ModelError("loss model needs matching, nonempty nu and sigma")
        self.num_classes = len(self.nu)
        self.constraints = tuple(constraints)
        for c in self.constraints:
            if len(c.coefficients) != self.num_classes:
                raise ModelError(f"constraint {c} has wrong dimension for N={self.num_classes}")
        self.explicit = None if states is None else frozenset(tuple(int(k) for k in s) for s in states)
        if self.explicit is None and not self.constraints:
            raise ModelError("loss model needs constraints or an explicit admissible set")

    @property
    def kappa(self) -> tuple[float, ...]:
        return tuple(v / s for v, s in zip(self.nu, self.sigma))

    def admissible(self, n: Sequence[int]) -> bool:
        n = tuple(n)
        if len(n) != self.num_classes or any(k < 0 for k in n):
            return False
        if self.explicit is not None and n not in self.explicit:
            return False
        return all(c.holds(n) for c in self.constraints)

    def in_domain(self, n: State) -> bool:
        return self.admissible(n)

    def states(self) -> list[State]:
        """Enumerate A (sorted). Requires A to be finite."""
        if self.explicit is not None:
            return sorted(s for s in self.explicit if self.admissible(s))
        bounds = []
        for k in range(self.num_classes):
            caps = [c.capacity / c.coefficients[k] for c in self.constraints if c.coefficients[k] > 0]
            if not caps or any(c.coefficients[m] < 0 for c in self.constraints for m in range(self.num_classes)):
                raise ModelError("admissible set is not bounded by the given linear constraints")
            bounds.append(int(math.floor(min(caps) + 1e-12)))
        return [s for s in box_states(bounds) if self.admissible(s)]

    def matrix(self, n: State) -> np.ndarray:
        n = tuple(n)
        if any(k < 0 for k in n):
            raise ModelError(f"negative state {n}")
        size = self.num_classes + 1
        out = np.zeros((size, size))
        for i in range(1, size):
            if self.admissible(transition(n, 0, i)):
                out[0, i] = self.nu[i - 1]
            out[i, 0] = self.sigma[i - 1] * n[i - 1]
        return out

    def to_config(self) -> dict:
        cfg: dict = {"model": "loss", "nu": list(self.nu), "sigma": list(self.sigma)}
        if self.constraints:
            cfg["constraints"] = [
                {"coefficients": list(c.coefficients), "capacity": c.capacity} for c in self.constraints
            ]
        if self.explicit is not None:
            cfg["states"] = [list(s) for s in sorted(self.explicit)]
        return cfg


@dataclass(frozen=True)
class NetworkSpec:
    num_classes: int
    rates: RateModel
    discipline: Discipline = Discipline.PS
    workloads: tuple[WorkloadDistribution, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "discipline", Discipline.parse(self.discipline))
        object.__setattr__(self, "workloads", tuple(self.workloads))
        if self.num_classes < 1:
            raise ModelError("num_classes must be positive")
        if self.rates.num_classes != self.num_classes:
            raise ModelError(f"rate model has {self.rates.num_classes} classes, spec says {self.num_classes}")
        if self.discipline is not Discipline.PS and self.num_classes != 1:
            raise ModelError(f"{self.discipline.value} discipline is defined for a single class only")
        if len(self.workloads) != self.num_classes:
            raise ModelError(f"need {self.num_classes} workload distributions, got {len(self.workloads)}")
        for k, w in enumerate(self.workloads, start=1):
            if abs(w.mean - 1.0) > 1e-12:
                raise ModelError(f"class {k} workload must have mean 1 after normalisation, got {w.mean}")

    def rate(self, n: Sequence[int], i: int, j: int) -> float:
        return rate(self, n, i, j)

    def with_workloads(self, workloads: Sequence[WorkloadDistribution]) -> "NetworkSpec":
        return NetworkSpec(self.num_classes, self.rates, self.discipline, tuple(workloads))

    def with_discipline(self, discipline: "Discipline | str") -> "NetworkSpec":
        return NetworkSpec(self.num_classes, self.rates, Discipline.parse(discipline), self.workloads)


def rate(spec: NetworkSpec | RateModel, n: Sequence[int], i: int, j: int) -> float:
    """phi_ij(n)."""
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    n = tuple(n)
    if len(n) != model.num_classes:
        raise ModelError(f"state {n} has wrong dimension for N={model.num_classes}")
    return model.rate(n, i, j)


@dataclass(frozen=True)
class Violation:
    state: State | None
    i: int | None
    j: int | None
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        where = f"n={self.state}" if self.state is not None else "spec"
        idx = f", i={self.i}" if self.i is not None else ""
        idx += f", j={self.j}" if self.j is not None else ""
        return f"{where}{idx}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


def validate_spec(spec: NetworkSpec | RateModel, probe_states: Iterable[Sequence[int]]) -> list[Violation]:
    """Check the structural rate constraints on every probe state; an empty list means valid."""
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    probes = [tuple(int(k) for k in s) for s in probe_states]
    if not probes:
        raise ModelError("probe_states must be nonempty")
    out: list[Violation] = []

    if isinstance(model, WhittleRates):
        P = model.routing
        if abs(P[0, 0]) > 0:
            out.append(Violation(None, 0, 0, "p_00 must be 0", f"p_00={P[0, 0]}"))
        if (P < 0).any():
            out.append(Violation(None, None, None, "P must be nonnegative"))
        rows = P.sum(axis=1)
        for r, total in enumerate(rows):
            if abs(total - 1.0) > 1e-12:
                out.append(Violation(None, r, None, "P must be stochastic", f"row sum {total}"))
        if model.nu < 0:
            out.append(Violation(None, None, None, "nu must be >= 0"))
        for s in probes:
            value = model.phi(s)
            if not value > 0:
                out.append(Violation(s, None, None, "Phi must be strictly positive", f"Phi={value}"))

    if isinstance(model, LossRates):
        if any(v <= 0 for v in model.nu) or any(v <= 0 for v in model.sigma):
            out.append(Violation(None, None, None, "nu_i and sigma_i must be strictly positive"))
        for s in probes:
            if not model.admissible(s):
                continue
            for i in range(1, model.num_classes + 1):
                if s[i - 1] >= 1 and not model.admissible(transition(s, i, 0)):
                    out.append(Violation(s, i, 0, "A must be closed under removals (T_i n in A)"))

    if isinstance(model, SingleClassRates):
        for s in probes:
            if len(s) != 1 or s[0] < 0:
                continue
            b = model.beta(s[0])
            if (b > 0) != (s[0] > 0):
                out.append(Violation(s, 1, 0, "beta(n)>0 iff n>0", f"beta={b}"))

    size = model.num_classes + 1
    for s in probes:
        if len(s) != model.num_classes or any(k < 0 for k in s):
            out.append(Violation(s, None, None, "state must have N nonnegative entries"))
            continue
        if isinstance(model, TabulatedRates) and not model.in_domain(s):
            out.append(Violation(s, None, None, "state outside tabulated box"))
            continue
        try:
            mat = model.matrix(s)
        except ModelError as exc:
            out.append(Violation(s, None, None, "rate evaluation failed", str(exc)))
            continue
        if not np.isfinite(mat).all():
            out.append(Violation(s, None, None, "rates must be finite"))
        for i in range(size):
            for j in range(size):
                if mat[i, j] < 0:
                    out.append(Violation(s, i, j, "rates must be nonnegative", f"{mat[i, j]}"))
        if mat[0, 0] != 0:
            out.append(Violation(s, 0, 0, "phi_00 must be 0", f"{mat[0, 0]}"))
        for i in range(1, size):
            occupied = s[i - 1] > 0
            if not occupied:
                for j in range(size):
                    if mat[i, j] != 0:
                        out.append(Violation(s, i, j, "phi_ij=0 when n_i=0", f"{mat[i, j]}"))
            total = mat[i].sum()
            if occupied and not total > 0:
                out.append(Violation(s, i, None, "phi_i(n)>0 iff n_i>0", "phi_i(n)=0 with n_i>0"))
    return out
