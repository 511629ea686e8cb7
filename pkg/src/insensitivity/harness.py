"""Statistical checks of insensitivity against the exact stationary laws."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .balance import BOUNDARY_LIMIT, OccupancyDistribution, solve_single_class
from .distributions import Deterministic, Exponential, WorkloadDistribution
from .model import Discipline, NetworkSpec, SingleClassRates, State
from .sim import SimConfig, SimStats, run

MIN_CELL = 500
KS_ALPHA = 0.01


class HarnessError(RuntimeError):
    pass


def estimate_occupancy(stats: SimStats) -> OccupancyDistribution:
    """Time-weighted occupancy frequencies over the post-warmup horizon."""
    total = sum(stats.occupancy_time.values())
    if not total > 0:
        raise HarnessError("simulation has zero post-warmup horizon")
    states = sorted(stats.occupancy_time)
    probs = np.array([stats.occupancy_time[s] for s in states]) / total
    return OccupancyDistribution(states, probs, meta={"method": "empirical"})


def tv_distance(p: OccupancyDistribution, q: OccupancyDistribution) -> float:
    """Half the L1 distance; states missing from one side carry mass 0."""
    a, b = p.as_dict(), q.as_dict()
    keys = sorted(set(a) | set(b))
    return 0.5 * math.fsum(abs(a.get(s, 0.0) - b.get(s, 0.0)) for s in keys)


def ks_statistic(samples: Sequence[float], cdf: Callable[[float], float]) -> float:
    """Two-sided sup |F_n - F| evaluated at the sample points (both one-sided limits)."""
    xs = sorted(samples)
    n = len(xs)
    if n == 0:
        raise ValueError("ks_statistic needs at least one sample")
    d = 0.0
    for k, x in enumerate(xs):
        f = cdf(x)
        d = max(d, (k + 1) / n - f, f - k / n)
    return min(max(d, 0.0), 1.0)


def ks_critical(n: int, alpha: float = KS_ALPHA) -> float:
    """Asymptotic critical value sqrt(-ln(alpha/2)/2)/sqrt(n); 1.63/sqrt(n) at alpha = 0.01."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def ks_max(n: int) -> float:
    return 1.63 / math.sqrt(n)


def _ks_entry(samples: list[float], cdf, threshold: float) -> dict:
    stat = ks_statistic(samples, cdf)
    return {"n": len(samples), "ks": stat, "threshold": threshold, "pass": stat <= threshold}


def _conditional(
    records: Iterable[tuple[State, tuple[tuple[float, ...], ...]]],
    cdfs: Sequence[Callable[[float], float]],
    min_cell: int,
) -> list[dict]:
    by_state: dict[State, list] = {}
    for s, prof in records:
        by_state.setdefault(s, []).append(prof)
    cells = []
    for s in sorted(by_state):
        profs = by_state[s]
        for i in range(len(cdfs)):
            if s[i] == 0:
                continue
            cells.append((s, i, profs))
    tested = [c for c in cells if len(c[2]) >= min_cell]
    # Bonferroni over the tested cells
    alpha = KS_ALPHA / max(len(tested), 1)
    out = []
    for s, i, profs in cells:
        entry: dict = {"state": list(s), "class": i + 1, "samples": len(profs)}
        if len(profs) < min_cell:
            entry["status"] = "insufficient data"
        else:
            values = [r for prof in profs for r in prof[i]]
            stat = ks_statistic(values, cdfs[i])
            thr = ks_critical(len(values), alpha)
            entry.update(n=len(values), ks=stat, threshold=thr, status="pass" if stat <= thr else "fail")
        out.append(entry)
    return out


def residual_profile_check(
    stats: SimStats,
    spec: NetworkSpec,
    analytic: OccupancyDistribution | None = None,
    min_cell: int = MIN_CELL,
) -> dict:
    """KS tests of simulated residual workloads against each class's equilibrium law.

    ``pooled``: all snapshot residuals of a class. ``conditional``: snapshot
    residuals given the occupancy. ``arrival``: residuals already present at
    external-arrival epochs, pooled and given the pre-arrival occupancy.
    ``departure``: residuals left behind at departure epochs, pooled.
    """
    N = spec.num_classes
    cdfs = [w.equilibrium().cdf for w in spec.workloads]
    report: dict = {"pooled": {}, "arrival": {}, "departure": {}}
    for i in range(N):
        cls = str(i + 1)
        snap = stats.pooled_snapshot_residuals(i + 1)
        if snap:
            report["pooled"][cls] = _ks_entry(snap, cdfs[i], ks_max(len(snap)))
        else:
            report["pooled"][cls] = {"n": 0, "status": "insufficient data", "pass": True}
        arr = [r for _, _, prof in stats.arrival_profiles for r in prof[i]]
        if arr:
            report["arrival"][cls] = _ks_entry(arr, cdfs[i], ks_max(len(arr)))
        else:
            report["arrival"][cls] = {"n": 0, "status": "insufficient data", "pass": True}
        dep = [r for _, _, prof in stats.departure_profiles for r in prof[i]]
        if dep:
            report["departure"][cls] = _ks_entry(dep, cdfs[i], ks_max(len(dep)))
        else:
            report["departure"][cls] = {"n": 0, "status": "insufficient data", "pass": True}
    report["conditional"] = _conditional(stats.snapshots, cdfs, min_cell)
    report["arrival_conditional"] = _conditional(((s, prof) for s, _, prof in stats.arrival_profiles), cdfs, min_cell)
    if analytic is not None:
        report["occupancy_tv"] = tv_distance(estimate_occupancy(stats), analytic)
    return report


@dataclass
class Thresholds:
    tv_max: float = 0.01
    min_events: int = 0
    ks_alpha: float = KS_ALPHA

    def to_dict(self) -> dict:
        return {"tv_max": self.tv_max, "min_events": self.min_events, "ks_max": "1.63/sqrt(n)"}


@dataclass
class Arm:
    name: str
    workloads: tuple[WorkloadDistribution, ...]

    def __post_init__(self) -> None:
        self.workloads = tuple(self.workloads)
        for w in self.workloads:
            if abs(w.mean - 1.0) > 1e-12:
                raise HarnessError(f"arm {self.name!r}: workload {w} does not have mean 1")


@dataclass
class ExperimentPlan:
    spec: NetworkSpec
    arms: list[Arm]
    analytic: OccupancyDistribution
    sim: SimConfig
    thresholds: Thresholds = field(default_factory=Thresholds)
    name: str = "experiment"
    echo: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for arm in self.arms:
            if len(arm.workloads) != self.spec.num_classes:
                raise HarnessError(f"arm {arm.name!r} has {len(arm.workloads)} workloads, need {self.spec.num_classes}")


@dataclass
class ExperimentReport:
    name: str
    arms: list[dict]
    verdict: bool
    echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": "pass" if self.verdict else "fail", "arms": self.arms, "config": self.echo}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def summary(self) -> str:
        head = f"{'arm':<18} {'events':>9} {'TV':>8} {'tv_max':>7} {'KS(pool)':>9} {'KS(arr)':>9} {'result':>6}"
        lines = [f"experiment {self.name}", head, "-" * len(head)]
        for a in self.arms:
            pool = max((e.get("ks", 0.0) for e in a["residuals"]["pooled"].values()), default=0.0)
            arr = max((e.get("ks", 0.0) for e in a["residuals"]["arrival"].values()), default=0.0)
            lines.append(
                f"{a['name']:<18} {a['events']:>9d} {a['tv']:>8.5f} {a['tv_max']:>7.3f} "
                f"{pool:>9.5f} {arr:>9.5f} {'PASS' if a['pass'] else 'FAIL':>6}"
            )
        lines.append(f"verdict: {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines) + "\n"


def run_arm(plan: ExperimentPlan, index: int) -> tuple[SimStats, dict]:
    arm = plan.arms[index]
    spec = plan.spec.with_workloads(arm.workloads)
    cfg = replace(plan.sim, seed=plan.sim.seed + index)
    if cfg.initialization == "stationary" and cfg.stationary is None:
        cfg = replace(cfg, stationary=plan.analytic)
    stats = run(spec, cfg)
    empirical = estimate_occupancy(stats)
    tv = tv_distance(empirical, plan.analytic)
    residuals = residual_profile_check(stats, spec)
    ks_ok = all(e["pass"] for e in residuals["pooled"].values()) and all(
        e["pass"] for e in residuals["arrival"].values()
    )
    events_ok = stats.events >= plan.thresholds.min_events
    tv_ok = tv <= plan.thresholds.tv_max
    entry = {
        "name": arm.name,
        "seed": cfg.seed,
        "workloads": [w.to_config() for w in arm.workloads],
        "events": stats.events,
        "horizon": stats.horizon,
        "tv": tv,
        "tv_max": plan.thresholds.tv_max,
        "tv_pass": tv_ok,
        "ks_pass": ks_ok,
        "events_pass": events_ok,
        "mean_occupancy": [float(x) for x in empirical.marginal_mean()],
        "residuals": residuals,
        "pass": bool(tv_ok and ks_ok and events_ok),
    }
    return stats, entry


def insensitivity_experiment(plan: ExperimentPlan) -> ExperimentReport:
    """Simulate every arm (seed = base seed + arm index) and compare with the analytic law."""
    if plan.analytic.boundary_mass > BOUNDARY_LIMIT:
        raise HarnessError(
            f"analytic law has boundary mass {plan.analytic.boundary_mass:.3g} > {BOUNDARY_LIMIT}; enlarge the truncation"
        )
    arms = [run_arm(plan, k)[1] for k in range(len(plan.arms))]
    verdict = all(a["pass"] for a in arms)
    echo = plan.echo or {
        "sim": plan.sim.to_dict(),
        "thresholds": plan.thresholds.to_dict(),
        "arms": [{"name": a.name, "workloads": [w.to_config() for w in a.workloads]} for a in plan.arms],
    }
    return ExperimentReport(plan.name, arms, verdict, echo)


def pk_mean_occupancy(rho: float, scv: float) -> float:
    """Mean number in an M/G/1 FIFO queue (Pollaczek-Khinchine), service SCV ``scv``."""
    if not 0 <= rho < 1:
        raise ValueError("need 0 <= rho < 1")
    return rho + rho**2 * (1.0 + scv) / (2.0 * (1.0 - rho))


def mm1_spec(rho: float, discipline: Discipline | str, workload: WorkloadDistribution) -> NetworkSpec:
    rates = SingleClassRates.ps_queue(rho, servers=1, service_rate=1.0)
    return NetworkSpec(1, rates, Discipline.parse(discipline), (workload,))


def _geometric(rho: float, tol: float = 1e-13) -> OccupancyDistribution:
    K = max(10, int(math.ceil(math.log(tol) / math.log(rho)))) if rho > 0 else 1
    return solve_single_class(lambda n: rho, lambda n: 1.0 if n > 0 else 0.0, K)


def sensitivity_control(
    rho: float, events: int = 1_000_000, seed: int = 0, tolerance: float = 0.2, tv_gap: float = 0.05
) -> dict:
    """M/M/1 vs M/D/1 under FIFO (sensitive) and under PS (insensitive) at utilisation rho."""
    if not 0 < rho < 1:
        raise ValueError("utilisation must be in (0, 1)")
    laws = {"exponential": Exponential(1.0), "deterministic": Deterministic(1.0)}
    expected = {
        ("fifo", "exponential"): pk_mean_occupancy(rho, 1.0),
        ("fifo", "deterministic"): pk_mean_occupancy(rho, 0.0),
        ("ps", "exponential"): rho / (1.0 - rho),
        ("ps", "deterministic"): rho / (1.0 - rho),
    }
    runs = {}
    occupancy = {}
    for k, (disc, law) in enumerate(expected):
        cfg = SimConfig(seed=seed + k, max_events=events)
        stats = run(mm1_spec(rho, disc, laws[law]), cfg)
        occ = estimate_occupancy(stats)
        occupancy[(disc, law)] = occ
        mean = float(occ.marginal_mean()[0])
        runs[f"{disc}/{law}"] = {
            "seed": seed + k,
            "events": stats.events,
            "mean_occupancy": mean,
            "expected_mean": expected[(disc, law)],
            "within_tolerance": abs(mean - expected[(disc, law)]) <= tolerance,
        }
    geometric = _geometric(rho)
    tv_fifo = tv_distance(occupancy[("fifo", "exponential")], occupancy[("fifo", "deterministic")])
    tv_ps = tv_distance(occupancy[("ps", "exponential")], occupancy[("ps", "deterministic")])
    tv_det_fifo = tv_distance(occupancy[("fifo", "deterministic")], geometric)
    demonstrated = all(r["within_tolerance"] for r in runs.values()) and tv_det_fifo > tv_gap
    return {
        "rho": rho,
        "events": events,
        "seed": seed,
        "tolerance": tolerance,
        "runs": runs,
        "tv_fifo_exp_vs_det": tv_fifo,
        "tv_ps_exp_vs_det": tv_ps,
        "tv_fifo_det_vs_geometric": tv_det_fifo,
        "tv_gap": tv_gap,
        "sensitivity_demonstrated": demonstrated,
    }
