"""Exact stationary laws: balance recursions, product forms and a CTMC oracle.

All solvers return an :class:`OccupancyDistribution` over a finite set of
states. ``boundary_mass`` is the probability sitting on states from which a
positive-rate transition would leave the truncation region; it is zero when
the truncation is exact (e.g. an Erlang loss system truncated at its
capacity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .model import (
    LossRates,
    ModelError,
    NetworkSpec,
    RateModel,
    SingleClassRates,
    State,
    TabulatedRates,
    WhittleRates,
    box_states,
    transition,
)

MAX_STATES = 10_000
BOUNDARY_LIMIT = 1e-4


class SolverError(ArithmeticError):
    """Numerical failure: divergence, singular or reducible systems."""


@dataclass
class OccupancyDistribution:
    states: list[State]
    probs: np.ndarray
    boundary_mass: float = 0.0
    normalizer: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.states = [tuple(int(k) for k in s) for s in self.states]
        self.probs = np.asarray(self.probs, dtype=float)
        if len(self.states) != len(self.probs):
            raise ValueError("states and probs differ in length")
        self._index = {s: k for k, s in enumerate(self.states)}

    @classmethod
    def from_weights(cls, states: Sequence[State], weights: Sequence[float], **kw) -> "OccupancyDistribution":
        w = np.asarray(weights, dtype=float)
        total = float(w.sum())
        if not math.isfinite(total) or total <= 0:
            raise SolverError(f"cannot normalise weights with total {total}")
        return cls(list(states), w / total, normalizer=total, **kw)

    @classmethod
    def from_mapping(cls, mass: Mapping[State, float], **kw) -> "OccupancyDistribution":
        states = sorted(mass)
        return cls(states, [mass[s] for s in states], **kw)

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, n: object) -> bool:
        return n in self._index

    def mass(self, n: Sequence[int]) -> float:
        k = self._index.get(tuple(n))
        return 0.0 if k is None else float(self.probs[k])

    def as_dict(self) -> dict[State, float]:
        return {s: float(p) for s, p in zip(self.states, self.probs)}

    @property
    def num_classes(self) -> int:
        return len(self.states[0]) if self.states else 0

    def marginal_mean(self) -> np.ndarray:
        arr = np.array(self.states, dtype=float)
        return self.probs @ arr

    def to_table(self) -> str:
        """Tab-separated table with a ``# key: value`` metadata header."""
        lines = [
            f"# normalizer: {self.normalizer!r}",
            f"# boundary_mass: {self.boundary_mass!r}",
        ]
        for key in sorted(self.meta):
            lines.append(f"# {key}: {self.meta[key]}")
        lines.append("\t".join([f"n{k + 1}" for k in range(self.num_classes)] + ["probability"]))
        for s, p in zip(self.states, self.probs):
            lines.append("\t".join([str(k) for k in s] + [repr(float(p))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text: str) -> "OccupancyDistribution":
        meta: dict = {}
        states, probs = [], []
        header_seen = False
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                header_seen = True
                continue
            *coords, p = line.split("\t")
            states.append(tuple(int(c) for c in coords))
            probs.append(float(p))
        boundary = float(meta.pop("boundary_mass", 0.0))
        normalizer = float(meta.pop("normalizer", 1.0))
        return cls(states, probs, boundary_mass=boundary, normalizer=normalizer, meta=meta)


def _as_fn(table: Callable[[int], float] | Sequence[float]) -> Callable[[int], float]:
    if callable(table):
        return table
    values = tuple(float(v) for v in table)

    def fn(n: int) -> float:
        if n >= len(values):
            raise ModelError(f"rate table of length {len(values)} has no entry for n={n}")
        return values[n]

    return fn


def solve_single_class(
    alpha: Callable[[int], float] | Sequence[float],
    beta: Callable[[int], float] | Sequence[float],
    truncation: int,
) -> OccupancyDistribution:
    """Solve pi(n+1) beta(n+1) = pi(n) alpha(n) on {0..K}.

    >>> solve_single_class(lambda n: 2.0 * (n < 3), lambda n: float(n), 3).probs * 19
    array([3., 6., 6., 4.])
    """
    a, b = _as_fn(alpha), _as_fn(beta)
    K = int(truncation)
    if K < 0:
        raise ValueError("truncation must be >= 0")
    weights = [1.0]
    for n in range(K):
        an, bn = a(n), b(n + 1)
        if an < 0:
            raise ModelError(f"alpha({n}) = {an} < 0")
        if not bn > 0:
            raise ModelError(f"beta({n + 1}) = {bn} must be > 0")
        weights.append(weights[-1] * an / bn)
        if not math.isfinite(weights[-1]):
            raise SolverError(f"balance recursion diverges by n={n + 1}; total mass is not summable at this truncation")
    w = np.array(weights)
    if not math.isfinite(w.sum()):
        raise SolverError("total mass diverges within working precision")
    leak = a(K) > 0
    dist = OccupancyDistribution.from_weights([(n,) for n in range(K + 1)], w)
    dist.boundary_mass = float(dist.probs[-1]) if leak else 0.0
    dist.meta["method"] = "single_class"
    return dist


def solve_traffic_equations(routing: Sequence[Sequence[float]] | np.ndarray, nu: float) -> np.ndarray:
    """Loads rho solving rho_i = sum_j rho_j p_ji + nu p_0i, checked against nu = sum_j rho_j p_j0."""
    P = np.asarray(routing, dtype=float)
    N = P.shape[0] - 1
    if nu <= 0:
        raise ModelError("closed networks (nu = 0) are not supported")
    if abs(P[0, 0]) > 0:
        raise ModelError("routing must have p_00 = 0")
    inner = P[1:, 1:]
    lhs = np.eye(N) - inner.T
    rhs = nu * P[0, 1:]
    try:
        rho = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        raise SolverError("traffic equations are singular") from None
    if not np.all(rho > 0):
        raise SolverError(f"traffic equations have no positive solution: rho={rho}")
    outflow = float(rho @ P[1:, 0])
    if abs(outflow - nu) > 1e-10 * max(1.0, nu):
        raise SolverError(f"traffic equations inconsistent: sum_j rho_j p_j0 = {outflow} != nu = {nu}")
    return rho


def _leaking_mass(model: RateModel, dist: OccupancyDistribution, inside: Callable[[State], bool]) -> float:
    """Mass on states with a positive-rate move to a state outside the region."""
    N = model.num_classes
    total = 0.0
    for s, p in zip(dist.states, dist.probs):
        mat = model.matrix(s)
        leaks = False
        for i in range(N + 1):
            for j in range(N + 1):
                if i == j or mat[i, j] <= 0:
                    continue
                if not inside(transition(s, i, j)):
                    leaks = True
                    break
            if leaks:
                break
        if leaks:
            total += p
    return float(total)


def _in_box(bounds: Sequence[int]) -> Callable[[State], bool]:
    return lambda s: all(0 <= k <= b for k, b in zip(s, bounds))


def solve_whittle(
    balance: Callable[[State], float] | WhittleRates,
    routing: Sequence[Sequence[float]] | np.ndarray | None = None,
    nu: float | None = None,
    bounds: Sequence[int] = (),
) -> OccupancyDistribution:
    """pi(n) proportional to Phi(n) prod_i rho_i^{n_i} on the box 0 <= n_i <= bounds[i].

    ``balance`` may be a :class:`WhittleRates`, in which case its routing
    and exterior intensity are used.
    """
    if isinstance(balance, WhittleRates):
        model = balance
    else:
        if routing is None or nu is None:
            raise TypeError("routing and nu are required with a bare balance function")
        model = WhittleRates(balance, routing, nu)
    rho = solve_traffic_equations(model.routing, model.nu)
    bounds = tuple(int(b) for b in bounds)
    if len(bounds) != model.num_classes:
        raise ValueError(f"box {bounds} does not match N={model.num_classes}")
    states = box_states(bounds)
    if len(states) > MAX_STATES:
        raise SolverError(f"box has {len(states)} states; limit is {MAX_STATES}")
    log_rho = np.log(rho)
    weights = []
    for s in states:
        phi = model.phi(s)
        if not phi > 0:
            raise ModelError(f"Phi({s}) = {phi} must be positive")
        weights.append(phi * math.exp(float(np.dot(log_rho, s))))
    dist = OccupancyDistribution.from_weights(states, weights)
    dist.boundary_mass = _leaking_mass(model, dist, _in_box(bounds))
    dist.meta.update(method="whittle", loads=[float(r) for r in rho])
    return dist


def solve_loss(
    admissible: LossRates | Iterable[Sequence[int]],
    nu: Sequence[float] | None = None,
    sigma: Sequence[float] | None = None,
) -> OccupancyDistribution:
    """pi(n) proportional to prod_i kappa_i^{n_i} / n_i! over A, kappa_i = nu_i / sigma_i."""
    if isinstance(admissible, LossRates):
        states = admissible.states()
        nu = admissible.nu if nu is None else nu
        sigma = admissible.sigma if sigma is None else sigma
    else:
        states = sorted({tuple(int(k) for k in s) for s in admissible})
        if nu is None or sigma is None:
            raise TypeError("nu and sigma are required with an explicit state set")
    if not states:
        raise ModelError("admissible set A is empty")
    if any(s <= 0 for s in sigma):
        raise ModelError("sigma_i must be positive")
    kappa = [v / s for v, s in zip(nu, sigma)]
    # log-space keeps large capacities from overflowing
    logw = []
    for s in states:
        lw = 0.0
        for k, n in zip(kappa, s):
            if n:
                lw += (n * math.log(k) if k > 0 else -math.inf) - math.lgamma(n + 1)
        logw.append(lw)
    logw = np.array(logw)
    shift = logw.max()
    w = np.exp(logw - shift)
    dist = OccupancyDistribution.from_weights(states, w)
    dist.normalizer = float(w.sum() * math.exp(shift))
    dist.boundary_mass = 0.0
    dist.meta.update(method="loss", kappa=[float(k) for k in kappa])
    return dist


def default_states(model: RateModel, truncation: Sequence[int] | None) -> list[State]:
    """Truncation region used by the oracle and the spec-level solver."""
    if truncation is not None:
        states = box_states(truncation)
        if isinstance(model, LossRates):
            states = [s for s in states if model.admissible(s)]
        return states
    if isinstance(model, LossRates):
        return model.states()
    if isinstance(model, TabulatedRates):
        return box_states(model.bounds)
    raise ValueError("a truncation box is required for this rate model")


def ctmc_oracle(
    spec: NetworkSpec | RateModel,
    truncation: Sequence[int] | None = None,
    states: Sequence[State] | None = None,
) -> OccupancyDistribution:
    """Stationary law of the occupancy jump process with exponential unit-mean workloads.

    Transition ``n -> T_ij n`` fires at rate ``phi_ij(n)``; moves leaving the
    state set are disabled. Solved by a dense LU solve.
    """
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    if states is None:
        states = default_states(model, truncation)
    states = [tuple(s) for s in states]
    size = len(states)
    if size == 0:
        raise ModelError("empty state set")
    if size > MAX_STATES:
        raise SolverError(f"{size} states exceeds the dense-solver limit {MAX_STATES}")
    index = {s: k for k, s in enumerate(states)}
    N = model.num_classes
    Q = np.zeros((size, size))
    leaks = np.zeros(size, dtype=bool)
    for a, s in enumerate(states):
        mat = model.matrix(s)
        for i in range(N + 1):
            for j in range(N + 1):
                r = mat[i, j]
                if i == j or r <= 0:
                    continue
                b = index.get(transition(s, i, j))
                if b is None:
                    leaks[a] = True
                    continue
                Q[a, b] += r
    np.fill_diagonal(Q, -Q.sum(axis=1))

    n_comp, labels = csgraph.connected_components(csr_matrix(Q != 0), directed=True, connection="strong")
    if n_comp > 1:
        closed = set(range(n_comp))
        rows, cols = np.nonzero(Q)
        for r, c in zip(rows, cols):
            if r != c and labels[r] != labels[c]:
                closed.discard(labels[r])
        if len(closed) > 1:
            raise SolverError(f"chain is reducible on the truncation: {len(closed)} closed classes")

    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise SolverError("generator is singular after normalisation") from None
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    if pi.min() < -1e-10:
        raise SolverError(f"oracle produced negative mass {pi.min()}")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    dist = OccupancyDistribution(states, pi, boundary_mass=float(pi[leaks].sum()))
    dist.meta["method"] = "ctmc_oracle"
    return dist


@dataclass
class BalanceReport:
    residuals: dict[tuple[State, int], float]
    relative: dict[tuple[State, int], float]
    flagged: set[State]
    max_abs_residual: float
    max_rel_residual: float
    max_rel_residual_all: float
    finiteness: float

    def to_dict(self) -> dict:
        worst = sorted(self.relative.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
        return {
            "max_abs_residual": self.max_abs_residual,
            "max_rel_residual_interior": self.max_rel_residual,
            "max_rel_residual_all": self.max_rel_residual_all,
            "finiteness_sum": self.finiteness,
            "num_states": len({s for s, _ in self.residuals}),
            "num_flagged_states": len(self.flagged),
            "worst": [{"state": list(s), "class": i, "relative": r} for (s, i), r in worst],
        }


def _could_feed(model: RateModel, t: State, j: int, i: int) -> bool:
    """Whether an off-support state t has a positive j -> i rate."""
    # loss sets and tabulated boxes are complete state spaces, not truncations
    if not model.in_domain(t):
        return False
    return model.rate(t, j, i) > 0


def verify_partial_balance(spec: NetworkSpec | RateModel, pi: OccupancyDistribution) -> BalanceReport:
    """Residuals of the partial balance equations at every support state and class in 0..N.

    Residual(n, i) = pi(n) sum_j phi_ij(n) - sum_j pi(T_ij n) phi_ji(T_ij n).
    States outside the support carry zero mass; a state whose equation
    touches such a neighbour is flagged and excluded from the interior
    maximum.
    """
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    N = model.num_classes
    mats: dict[State, np.ndarray] = {}
    for s in pi.states:
        if not model.in_domain(s):
            raise ModelError(f"support state {s} is outside the rate model's domain")
        mats[s] = model.matrix(s)

    residuals: dict[tuple[State, int], float] = {}
    relative: dict[tuple[State, int], float] = {}
    flagged: set[State] = set()
    for s in pi.states:
        p = pi.mass(s)
        mat = mats[s]
        for i in range(N + 1):
            if i and s[i - 1] == 0:
                residuals[(s, i)] = 0.0
                relative[(s, i)] = 0.0
                continue
            out_flux = p * float(mat[i].sum())
            in_flux = 0.0
            for j in range(N + 1):
                t = transition(s, i, j)
                if t not in mats:
                    if _could_feed(model, t, j, i):
                        flagged.add(s)
                    continue
                in_flux += pi.mass(t) * float(mats[t][j, i])
            res = out_flux - in_flux
            scale = max(abs(out_flux), abs(in_flux))
            residuals[(s, i)] = res
            relative[(s, i)] = abs(res) / scale if scale > 0 else 0.0

    interior = [r for (s, _), r in relative.items() if s not in flagged]
    return BalanceReport(
        residuals=residuals,
        relative=relative,
        flagged=flagged,
        max_abs_residual=max((abs(r) for r in residuals.values()), default=0.0),
        max_rel_residual=max(interior, default=0.0),
        max_rel_residual_all=max(relative.values(), default=0.0),
        finiteness=check_finiteness(model, pi).total,
    )


@dataclass
class FinitenessResult:
    total: float
    tail_bound: float
    passed: bool


def check_finiteness(spec: NetworkSpec | RateModel, pi: OccupancyDistribution) -> FinitenessResult:
    """Truncated sum_n pi(n) sum_i phi_0i(n).

    The tail beyond the truncation is bounded by the leaking boundary mass
    times the largest arrival rate seen on the support; the check fails when
    that bound exceeds 1e-6 of the total.
    """
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    total = 0.0
    max_rate = 0.0
    for s, p in zip(pi.states, pi.probs):
        arr = float(model.matrix(s)[0, 1:].sum())
        total += p * arr
        max_rate = max(max_rate, arr)
    tail = pi.boundary_mass * max_rate
    passed = tail <= 1e-6 * total if total > 0 else tail == 0.0
    return FinitenessResult(float(total), float(tail), bool(passed))


def detailed_balance_residuals(model: LossRates, pi: OccupancyDistribution) -> dict[tuple[State, int], float]:
    """Relative residuals of pi(n) phi_i0(n) = pi(T_i n) phi_0i(T_i n) over support states with n_i >= 1."""
    out = {}
    for s in pi.states:
        for i in range(1, model.num_classes + 1):
            if s[i - 1] < 1:
                continue
            t = transition(s, i, 0)
            lhs = pi.mass(s) * model.rate(s, i, 0)
            rhs = pi.mass(t) * model.rate(t, 0, i)
            scale = max(abs(lhs), abs(rhs))
            out[(s, i)] = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return out


def solve_spec(spec: NetworkSpec | RateModel, truncation: Sequence[int] | None = None) -> OccupancyDistribution:
    """Closed-form stationary law for the spec's rate model, or the CTMC oracle for tabulated rates."""
    model = spec.rates if isinstance(spec, NetworkSpec) else spec
    if isinstance(model, SingleClassRates):
        if truncation is None:
            raise ValueError("single-class solve needs a truncation K")
        return solve_single_class(model.alpha, model.beta, int(truncation[0]))
    if isinstance(model, WhittleRates):
        if truncation is None:
            raise ValueError("Whittle solve needs a truncation box")
        return solve_whittle(model, bounds=truncation)
    if isinstance(model, LossRates):
        if truncation is not None:
            dist = solve_loss([s for s in box_states(truncation) if model.admissible(s)], model.nu, model.sigma)
            dist.boundary_mass = _leaking_mass(model, dist, _in_box(truncation))
            return dist
        return solve_loss(model)
    return ctmc_oracle(model, truncation)
