"""Event-driven simulation of the residual-workload process.

Between jumps the occupancy is constant, so every residual drains linearly
and the next completion time has a closed form. Exponential arrival clocks
are redrawn after every event (valid by memorylessness, since the rates are
frozen between events).

Residual snapshots are taken at the epochs of an independent Poisson clock,
so they sample the time-stationary law (sampling at event epochs would not).
Its mean spacing is ``snapshot_interval`` times the mean inter-event time
measured over a calibration window (the warmup, or the first
``snapshot_interval`` events when there is no warmup).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .balance import OccupancyDistribution
from .model import Discipline, NetworkSpec, State

NEG_TOL = 1e-12


class SimulationError(RuntimeError):
    pass


class UniformStream:
    """Buffered U[0,1) draws from a seeded numpy Generator."""

    __slots__ = ("_gen", "_buf", "_pos", "_block")

    def __init__(self, seed: int | np.random.SeedSequence | np.random.Generator, block: int = 8192):
        self._gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


@dataclass
class SimConfig:
    seed: int = 0
    max_events: int = 100_000
    warmup_events: int | None = None
    snapshot_interval: int = 50
    epoch_interval: int = 10
    initialization: str = "empty"
    stationary: OccupancyDistribution | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.initialization = self.initialization.lower()
        if self.initialization not in ("empty", "stationary"):
            raise ValueError(f"initialization must be 'empty' or 'stationary', got {self.initialization!r}")
        if self.snapshot_interval < 1 or self.epoch_interval < 1:
            raise ValueError("snapshot_interval and epoch_interval must be >= 1")
        if not self.max_events > self.effective_warmup >= 0:
            raise ValueError(f"need max_events > warmup_events >= 0, got {self.max_events}, {self.effective_warmup}")

    @property
    def effective_warmup(self) -> int:
        if self.warmup_events is not None:
            return int(self.warmup_events)
        return self.max_events // 10 if self.initialization == "empty" else 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "max_events": self.max_events,
            "warmup_events": self.effective_warmup,
            "snapshot_interval": self.snapshot_interval,
            "epoch_interval": self.epoch_interval,
            "initialization": self.initialization,
        }


@dataclass
class SystemState:
    """Occupancy, per-class residual workloads in arrival order, and the clock.

    Order is meaningful for LIFO-PR and FIFO only; processor-sharing
    statistics never depend on it.
    """

    counts: list[int]
    residuals: list[list[float]]
    clock: float = 0.0

    @classmethod
    def empty(cls, num_classes: int) -> "SystemState":
        return cls([0] * num_classes, [[] for _ in range(num_classes)], 0.0)

    @property
    def state(self) -> State:
        return tuple(self.counts)

    def copy(self) -> "SystemState":
        return SystemState(list(self.counts), [list(r) for r in self.residuals], self.clock)


class Event(NamedTuple):
    kind: str  # "arrival" | "completion"
    cls: int  # class that receives (arrival) or completes (completion), 1-based
    dt: float
    index: int = -1  # position of the completing individual
    route: int = 0  # destination of a completion, 0 = leave


class _Rates:
    """Per-state rate summary, cached by occupancy."""

    __slots__ = ("arrivals", "totals", "routes")

    def __init__(self, mat: np.ndarray):
        N = mat.shape[0] - 1
        self.arrivals = [(j, float(mat[0, j])) for j in range(1, N + 1) if mat[0, j] > 0]
        self.totals = [float(mat[i].sum()) for i in range(1, N + 1)]
        self.routes = []
        for i in range(1, N + 1):
            row = mat[i]
            total = row.sum()
            dests = [j for j in range(N + 1) if row[j] > 0]
            cum, acc = [], 0.0
            for j in dests:
                acc += row[j] / total if total > 0 else 0.0
                cum.append(acc)
            self.routes.append((dests, cum))


class Simulator:
    """Holds the rate cache and sampling helpers for one spec."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.N = spec.num_classes
        self.discipline = spec.discipline
        self.workloads = spec.workloads
        self.equilibria = tuple(w.equilibrium() for w in spec.workloads)
        self._cache: dict[State, _Rates] = {}

    def rates(self, n: State) -> _Rates:
        info = self._cache.get(n)
        if info is None:
            info = _Rates(self.spec.rates.matrix(n))
            self._cache[n] = info
        return info

    def next_event(self, state: SystemState, rng: Any) -> Event | None:
        info = self.rates(tuple(state.counts))
        best_dt = math.inf
        kind = None
        cls = idx = -1
        disc = self.discipline
        # completions first so that exact ties go to completions, then to lower classes
        for i in range(self.N):
            k = state.counts[i]
            if k == 0:
                continue
            total = info.totals[i]
            if total <= 0:
                continue
            res = state.residuals[i]
            if disc is Discipline.PS:
                r = min(res)
                pos = res.index(r)
                dt = r * k / total
            elif disc is Discipline.LIFO_PR:
                pos = k - 1
                dt = res[pos] / total
            else:
                pos = 0
                dt = res[0] / total
            if dt < best_dt:
                best_dt, kind, cls, idx = dt, "completion", i + 1, pos
        for j, a in info.arrivals:
            dt = -math.log1p(-rng.random()) / a
            if dt < best_dt:
                best_dt, kind, cls = dt, "arrival", j
        if kind is None:
            return None
        if kind == "arrival":
            return Event(kind, cls, best_dt)
        dests, cum = info.routes[cls - 1]
        route = dests[0]
        if len(dests) > 1:
            u = rng.random()
            route = dests[-1]
            for j, c in zip(dests, cum):
                if u < c:
                    route = j
                    break
        return Event(kind, cls, best_dt, idx, route)

    def drain(self, state: SystemState, dt: float, info: _Rates | None = None) -> None:
        """Advance the flow by dt without any jump."""
        if info is None:
            info = self.rates(tuple(state.counts))
        disc = self.discipline
        for i in range(self.N):
            k = state.counts[i]
            if k == 0:
                continue
            res = state.residuals[i]
            if disc is Discipline.PS:
                d = info.totals[i] / k * dt
                res[:] = [r - d for r in res]
                if min(res) <= 0.0:
                    _clamp(res)
            else:
                pos = k - 1 if disc is Discipline.LIFO_PR else 0
                r = res[pos] - info.totals[i] * dt
                if r <= 0.0:
                    if r < -NEG_TOL:
                        raise SimulationError(f"residual drained to {r}")
                    r = 0.0
                res[pos] = r
        state.clock += dt

    def jump(self, state: SystemState, event: Event, rng: Any) -> None:
        """Apply the discrete part of an event (after draining)."""
        if event.kind == "arrival":
            j = event.cls
            state.residuals[j - 1].append(self.workloads[j - 1].from_uniform(rng.random()))
            state.counts[j - 1] += 1
            return
        i = event.cls
        del state.residuals[i - 1][event.index]
        state.counts[i - 1] -= 1
        j = event.route
        if j:
            state.residuals[j - 1].append(self.workloads[j - 1].from_uniform(rng.random()))
            state.counts[j - 1] += 1

    def apply_event(self, state: SystemState, event: Event, rng: Any) -> SystemState:
        info = self.rates(tuple(state.counts))
        self.drain(state, event.dt, info)
        if event.kind == "completion":
            # the completing residual is exactly zero by construction
            state.residuals[event.cls - 1][event.index] = 0.0
        self.jump(state, event, rng)
        return state

    def residuals_after(self, state: SystemState, tau: float, info: _Rates) -> tuple[tuple[float, ...], ...]:
        """Residual profile a time tau into the current inter-event interval (no mutation)."""
        out = []
        disc = self.discipline
        for i in range(self.N):
            k = state.counts[i]
            res = state.residuals[i]
            if k == 0:
                out.append(())
            elif disc is Discipline.PS:
                d = info.totals[i] / k * tau
                out.append(tuple(r - d for r in res))
            else:
                pos = k - 1 if disc is Discipline.LIFO_PR else 0
                lst = list(res)
                lst[pos] -= info.totals[i] * tau
                out.append(tuple(lst))
        return tuple(out)


def _clamp(res: list[float]) -> None:
    for k, r in enumerate(res):
        if r <= 0.0:
            if r < -NEG_TOL:
                raise SimulationError(f"residual drained to {r}")
            res[k] = 0.0


@dataclass
class SimStats:
    num_classes: int
    occupancy_time: dict[State, float] = field(default_factory=dict)
    snapshots: list[tuple[State, tuple[tuple[float, ...], ...]]] = field(default_factory=list)
    arrival_profiles: list[tuple[State, int, tuple[tuple[float, ...], ...]]] = field(default_factory=list)
    departure_profiles: list[tuple[State, int, tuple[tuple[float, ...], ...]]] = field(default_factory=list)
    event_counts: dict[str, int] = field(default_factory=dict)
    horizon: float = 0.0
    events: int = 0
    snapshot_spacing: float = 0.0
    config: dict = field(default_factory=dict)

    def merge(self, other: "SimStats") -> "SimStats":
        """Sum of two runs' statistics (used to pool independent replications)."""
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge stats with different class counts")
        occ = dict(self.occupancy_time)
        for s, t in other.occupancy_time.items():
            occ[s] = occ.get(s, 0.0) + t
        counts = dict(self.event_counts)
        for k, v in other.event_counts.items():
            counts[k] = counts.get(k, 0) + v
        return SimStats(
            self.num_classes,
            occ,
            self.snapshots + other.snapshots,
            self.arrival_profiles + other.arrival_profiles,
            self.departure_profiles + other.departure_profiles,
            counts,
            self.horizon + other.horizon,
            self.events + other.events,
            0.0,
            {"merged": [self.config, other.config]},
        )

    def pooled_snapshot_residuals(self, cls: int) -> list[float]:
        return [r for _, prof in self.snapshots for r in prof[cls - 1]]

    def to_report(self, max_snapshots: int | None = 1000) -> dict:
        snaps = self.snapshots
        if max_snapshots is not None and len(snaps) > max_snapshots:
            step = -(-len(snaps) // max_snapshots)
            snaps = snaps[::step]
        total = self.horizon
        return {
            "config": self.config,
            "horizon": self.horizon,
            "events": self.events,
            "event_counts": dict(sorted(self.event_counts.items())),
            "occupancy": [
                {"state": list(s), "time": t, "fraction": (t / total if total > 0 else 0.0)}
                for s, t in sorted(self.occupancy_time.items())
            ],
            "snapshot_spacing": self.snapshot_spacing,
            "num_snapshots": len(self.snapshots),
            "snapshots": [{"state": list(s), "residuals": [list(r) for r in prof]} for s, prof in snaps],
            "num_arrival_profiles": len(self.arrival_profiles),
            "num_departure_profiles": len(self.departure_profiles),
        }


def init_state(spec: NetworkSpec, config: SimConfig, rng: Any) -> SystemState:
    """Empty system, or a draw from pi with i.i.d. equilibrium residuals given the occupancy."""
    state = SystemState.empty(spec.num_classes)
    if config.initialization == "empty":
        return state
    pi = config.stationary
    if pi is None:
        raise SimulationError("stationary initialization requires a distribution pi")
    u = rng.random()
    cum = np.cumsum(pi.probs)
    k = int(np.searchsorted(cum, u * cum[-1], side="right"))
    n = pi.states[min(k, len(pi.states) - 1)]
    for i, count in enumerate(n):
        eq = spec.workloads[i].equilibrium()
        state.residuals[i] = [eq.from_uniform(rng.random()) for _ in range(count)]
        state.counts[i] = count
    return state


def _streams(seed: int) -> tuple[UniformStream, UniformStream]:
    main, snap = np.random.SeedSequence(seed).spawn(2)
    return UniformStream(np.random.default_rng(main)), UniformStream(np.random.default_rng(snap))


def _count(counts: dict[str, int], key: str) -> None:
    counts[key] = counts.get(key, 0) + 1


def run(spec: NetworkSpec, config: SimConfig) -> SimStats:
    """Simulate ``max_events`` events; statistics cover the intervals after the warmup events."""
    sim = Simulator(spec)
    rng, snap_rng = _streams(config.seed)
    state = init_state(spec, config, rng)
    warmup = config.effective_warmup
    stats = SimStats(spec.num_classes, config={**config.to_dict(), "mode": "run"})
    occ = stats.occupancy_time
    counts = stats.event_counts
    N = spec.num_classes

    calib_events = warmup if warmup > 0 else config.snapshot_interval
    next_snap = math.inf
    spacing = 0.0
    epoch_every = config.epoch_interval
    arrivals_seen = departures_seen = 0

    for k in range(1, config.max_events + 1):
        n = tuple(state.counts)
        info = sim.rates(n)
        ev = sim.next_event(state, rng)
        if ev is None:
            if k <= warmup:
                raise SimulationError(f"absorbed in state {n} after {k - 1} events, before warmup ended")
            break
        counting = k > warmup
        dt = ev.dt
        if counting:
            occ[n] = occ.get(n, 0.0) + dt
            stats.horizon += dt
            stats.events += 1
            t_end = state.clock + dt
            while next_snap < t_end:
                stats.snapshots.append((n, sim.residuals_after(state, next_snap - state.clock, info)))
                next_snap += -math.log1p(-snap_rng.random()) * spacing

        sim.drain(state, dt, info)
        if ev.kind == "completion":
            state.residuals[ev.cls - 1][ev.index] = 0.0
        if counting and ev.kind == "arrival":
            arrivals_seen += 1
            if arrivals_seen % epoch_every == 0:
                stats.arrival_profiles.append((n, ev.cls, tuple(tuple(r) for r in state.residuals)))
        sim.jump(state, ev, rng)
        if counting:
            if ev.kind == "arrival":
                _count(counts, f"arrival:{ev.cls}")
            else:
                _count(counts, f"completion:{ev.cls}->{ev.route}")
                if ev.route == 0:
                    departures_seen += 1
                    if departures_seen % epoch_every == 0:
                        stats.departure_profiles.append(
                            (tuple(state.counts), ev.cls, tuple(tuple(r) for r in state.residuals))
                        )

        if k == calib_events:
            spacing = config.snapshot_interval * state.clock / calib_events
            if spacing > 0:
                next_snap = state.clock + -math.log1p(-snap_rng.random()) * spacing
            stats.snapshot_spacing = spacing
    _check_positive(state, N)
    return stats


def _check_positive(state: SystemState, N: int) -> None:
    for i in range(N):
        if len(state.residuals[i]) != state.counts[i]:
            raise SimulationError("residual list out of sync with counts")


def run_modified(spec: NetworkSpec, fixed_n: Sequence[int], config: SimConfig) -> SimStats:
    """Simulate the renewal-replacement process: no arrivals, each completion is replaced in place.

    Residuals start as fresh workload draws (``initialization='empty'``) or
    as equilibrium draws (``'stationary'``). The occupancy never changes.
    """
    fixed = tuple(int(k) for k in fixed_n)
    if len(fixed) != spec.num_classes or any(k < 0 for k in fixed):
        raise ValueError(f"fixed_n {fixed} does not match N={spec.num_classes}")
    sim = Simulator(spec)
    rng, snap_rng = _streams(config.seed)
    N = spec.num_classes
    state = SystemState(list(fixed), [[] for _ in range(N)])
    stationary = config.initialization == "stationary"
    for i in range(N):
        law = sim.equilibria[i] if stationary else spec.workloads[i]
        state.residuals[i] = [law.from_uniform(rng.random()) for _ in range(fixed[i])]
    info = sim.rates(fixed)
    for i in range(N):
        if fixed[i] > 0 and not info.totals[i] > 0:
            raise SimulationError(f"phi_{i + 1}({fixed}) must be positive")

    warmup = config.warmup_events if config.warmup_events is not None else 0
    stats = SimStats(N, config={**config.to_dict(), "warmup_events": warmup, "mode": "modified", "fixed_n": list(fixed)})
    if sum(fixed) == 0:
        return stats
    calib_events = warmup if warmup > 0 else config.snapshot_interval
    spacing = 0.0
    next_snap = math.inf
    disc = sim.discipline
    for k in range(1, config.max_events + 1):
        # next completion
        best_dt, best_i, best_idx = math.inf, -1, -1
        for i in range(N):
            kk = fixed[i]
            if kk == 0:
                continue
            res = state.residuals[i]
            total = info.totals[i]
            if disc is Discipline.PS:
                r = min(res)
                idx = res.index(r)
                dt = r * kk / total
            elif disc is Discipline.LIFO_PR:
                idx = kk - 1
                dt = res[idx] / total
            else:
                idx = 0
                dt = res[0] / total
            if dt < best_dt:
                best_dt, best_i, best_idx = dt, i, idx
        counting = k > warmup
        if counting:
            stats.occupancy_time[fixed] = stats.occupancy_time.get(fixed, 0.0) + best_dt
            stats.horizon += best_dt
            stats.events += 1
            t_end = state.clock + best_dt
            while next_snap < t_end:
                stats.snapshots.append((fixed, sim.residuals_after(state, next_snap - state.clock, info)))
                next_snap += -math.log1p(-snap_rng.random()) * spacing
            _count(stats.event_counts, f"renewal:{best_i + 1}")
        sim.drain(state, best_dt, info)
        state.residuals[best_i][best_idx] = spec.workloads[best_i].from_uniform(rng.random())
        if tuple(state.counts) != fixed:
            raise SimulationError("occupancy changed in the modified process")
        if k == calib_events:
            spacing = config.snapshot_interval * state.clock / calib_events
            next_snap = state.clock + -math.log1p(-snap_rng.random()) * spacing
            stats.snapshot_spacing = spacing
    return stats


def next_event(state: SystemState, spec: NetworkSpec, rng: Any) -> Event | None:
    return Simulator(spec).next_event(state, rng)


def apply_event(state: SystemState, event: Event, spec: NetworkSpec, rng: Any) -> SystemState:
    return Simulator(spec).apply_event(state, event, rng)
