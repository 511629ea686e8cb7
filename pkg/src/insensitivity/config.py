"""YAML/JSON configuration for network specs and experiment plans.

A spec file::

    num_classes: 1
    discipline: ps            # ps | lifo_pr | fifo
    rates:
      model: single_class
      arrival: {rate: 2.0, capacity: 3}
      service: {rate: 1.0, servers: null}   # null servers: beta(n) = rate * n
    workloads:
      - {family: deterministic, params: {value: 1.0}}
    truncation: [3]

A plan file adds ``arms``, ``analytic``, ``sim`` and ``thresholds`` and
nests the spec under ``spec``. Reports carry the fully defaulted form of
their input; feeding that echo back in reproduces the run.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml

from .balance import OccupancyDistribution, solve_spec
from .distributions import DistributionError, WorkloadDistribution, make_distribution
from .harness import Arm, ExperimentPlan, Thresholds
from .model import (
    Discipline,
    LinearConstraint,
    LossRates,
    ModelError,
    NetworkSpec,
    RateModel,
    SingleClassRates,
    TabulatedRates,
    WhittleRates,
    box_states,
    validate_spec,
)
from .sim import SimConfig


class ConfigError(ValueError):
    """Schema or model violation in a configuration file."""


class _Doc:
    """Parsed document plus a field-path -> line map for diagnostics."""

    def __init__(self, data: Any, lines: dict[str, int] | None = None, source: str = "<config>"):
        self.data = data
        self.lines = lines or {}
        self.source = source

    def fail(self, path: str, message: str) -> "ConfigError":
        line = self.lines.get(path)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: field '{path or '<root>'}': {message}")


def _line_map(node: yaml.Node, path: str, out: dict[str, int]) -> None:
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            sub = f"{path}.{key.value}" if path else str(key.value)
            out[sub] = key.start_mark.line + 1
            _line_map(value, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, item in enumerate(node.value):
            _line_map(item, f"{path}[{k}]", out)


def load_document(path: str | Path) -> _Doc:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return parse_text(text, str(path))


def parse_text(text: str, source: str = "<config>") -> _Doc:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: malformed config: {getattr(exc, 'problem', exc)}") from None
    lines: dict[str, int] = {}
    if node is not None:
        _line_map(node, "", lines)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return _Doc(data, lines, source)


def _get(doc: _Doc, obj: dict, path: str, key: str, default: Any = ..., kind: type | tuple | None = None) -> Any:
    full = f"{path}.{key}" if path else key
    if key not in obj:
        if default is ...:
            raise doc.fail(full, "missing required field")
        return default
    value = obj[key]
    if kind is not None and value is not None and not isinstance(value, kind):
        raise doc.fail(full, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


_NUM = (int, float)


def _workload(doc: _Doc, obj: Any, path: str) -> WorkloadDistribution:
    if not isinstance(obj, dict):
        raise doc.fail(path, "workload must be a mapping with 'family'")
    family = _get(doc, obj, path, "family", kind=str)
    params = _get(doc, obj, path, "params", {}, dict) or {}
    mean = _get(doc, obj, path, "mean", 1.0, _NUM)
    try:
        return make_distribution(family, params, mean)
    except DistributionError as exc:
        raise doc.fail(path, str(exc)) from None


def _rates(doc: _Doc, obj: Any, path: str, num_classes: int) -> RateModel:
    if not isinstance(obj, dict):
        raise doc.fail(path, "rates must be a mapping")
    model = _get(doc, obj, path, "model", kind=str).lower()
    try:
        if model == "single_class":
            if num_classes != 1:
                raise doc.fail(f"{path}.model", "single_class model requires num_classes = 1")
            if "arrival_table" in obj:
                return SingleClassRates.from_tables(
                    _get(doc, obj, path, "arrival_table", kind=list),
                    _get(doc, obj, path, "service_table", kind=list),
                    _get(doc, obj, path, "arrival_tail", 0.0, _NUM),
                    _get(doc, obj, path, "service_tail", None, _NUM),
                )
            arrival = _get(doc, obj, path, "arrival", kind=dict)
            service = _get(doc, obj, path, "service", {}, dict) or {}
            return SingleClassRates.from_parameters(
                _get(doc, arrival, f"{path}.arrival", "rate", kind=_NUM),
                capacity=_get(doc, arrival, f"{path}.arrival", "capacity", None, int),
                service_rate=_get(doc, service, f"{path}.service", "rate", 1.0, _NUM),
                servers=_get(doc, service, f"{path}.service", "servers", None, int),
            )
        if model == "whittle":
            routing = _get(doc, obj, path, "routing", kind=list)
            nu = _get(doc, obj, path, "nu", kind=_NUM)
            balance = _get(doc, obj, path, "balance", {"kind": "constant"}, dict)
            kind = _get(doc, balance, f"{path}.balance", "kind", kind=str).lower()
            if kind == "constant":
                rates: RateModel = WhittleRates.constant(routing, nu)
            elif kind == "product":
                lambdas = _get(doc, balance, f"{path}.balance", "lambdas", kind=list)
                rates = WhittleRates.jackson(lambdas, routing, nu)
            else:
                raise doc.fail(f"{path}.balance.kind", f"unknown balance function {kind!r} (constant | product)")
            if rates.num_classes != num_classes:
                raise doc.fail(f"{path}.routing", f"routing must be {num_classes + 1}x{num_classes + 1}")
            return rates
        if model == "loss":
            constraints = []
            for k, c in enumerate(_get(doc, obj, path, "constraints", [], list) or []):
                cp = f"{path}.constraints[{k}]"
                if isinstance(c, str):
                    constraints.append(_parse_constraint(doc, c, cp, num_classes))
                    continue
                coeffs = _get(doc, c, cp, "coefficients", kind=list)
                if len(coeffs) != num_classes:
                    raise doc.fail(f"{cp}.coefficients", f"need {num_classes} coefficients")
                constraints.append(LinearConstraint(tuple(float(x) for x in coeffs), float(_get(doc, c, cp, "capacity", kind=_NUM))))
            states = _get(doc, obj, path, "states", None, list)
            return LossRates(
                _get(doc, obj, path, "nu", kind=list),
                _get(doc, obj, path, "sigma", kind=list),
                constraints,
                states,
            )
        if model == "tabulated":
            bounds = _get(doc, obj, path, "bounds", kind=list)
            table = {}
            for k, e in enumerate(_get(doc, obj, path, "entries", [], list) or []):
                ep = f"{path}.entries[{k}]"
                table[tuple(_get(doc, e, ep, "state", kind=list))] = _get(doc, e, ep, "rates", kind=list)
            return TabulatedRates(bounds, table)
    except ModelError as exc:
        raise doc.fail(path, str(exc)) from None
    raise doc.fail(f"{path}.model", f"unknown rate model {model!r} (single_class | whittle | loss | tabulated)")


def _parse_constraint(doc: _Doc, text: str, path: str, num_classes: int) -> LinearConstraint:
    """Parse ``"n1 + 2 n2 <= 4"``."""
    lhs, sep, rhs = text.partition("<=")
    if not sep:
        raise doc.fail(path, f"constraint {text!r} must have the form 'c1 n1 + c2 n2 <= C'")
    coeffs = [0.0] * num_classes
    for term in lhs.replace("-", "+-").split("+"):
        term = term.replace("*", " ").strip()
        if not term:
            continue
        *coef, var = term.split()
        if not var.startswith("n") or not var[1:].isdigit():
            raise doc.fail(path, f"bad term {term!r}")
        idx = int(var[1:]) - 1
        if not 0 <= idx < num_classes:
            raise doc.fail(path, f"variable {var} out of range")
        c = "".join(coef)
        coeffs[idx] += float(c) if c not in ("", "-") else (-1.0 if c == "-" else 1.0)
    try:
        cap = float(rhs)
    except ValueError:
        raise doc.fail(path, f"bad capacity {rhs.strip()!r}") from None
    return LinearConstraint(tuple(coeffs), cap)


def _probe_states(rates: RateModel, truncation: list[int] | None) -> list[tuple[int, ...]]:
    if isinstance(rates, TabulatedRates):
        return box_states(rates.bounds)
    if isinstance(rates, LossRates):
        try:
            return rates.states()
        except ModelError:
            pass
    bounds = truncation or [8] * rates.num_classes
    return box_states([min(b, 40) for b in bounds]) if rates.num_classes > 1 else box_states([min(bounds[0], 200)])


def _spec(doc: _Doc, obj: dict, path: str, workloads_required: bool = True) -> tuple[NetworkSpec | None, dict]:
    prefix = f"{path}." if path else ""
    num_classes = _get(doc, obj, path, "num_classes", kind=int)
    if num_classes < 1:
        raise doc.fail(f"{prefix}num_classes", "must be positive")
    try:
        discipline = Discipline.parse(_get(doc, obj, path, "discipline", "ps", str))
    except ModelError as exc:
        raise doc.fail(f"{prefix}discipline", str(exc)) from None
    rates = _rates(doc, _get(doc, obj, path, "rates"), f"{prefix}rates", num_classes)
    truncation = _get(doc, obj, path, "truncation", None, list)
    raw_wl = _get(doc, obj, path, "workloads", None if not workloads_required else ..., list)
    workloads = None
    if raw_wl is not None:
        workloads = tuple(_workload(doc, w, f"{prefix}workloads[{k}]") for k, w in enumerate(raw_wl))
        if len(workloads) != num_classes:
            raise doc.fail(f"{prefix}workloads", f"need {num_classes} workloads, got {len(workloads)}")
    violations = validate_spec(rates, _probe_states(rates, truncation))
    if violations:
        raise doc.fail(f"{prefix}rates", "model invariants violated: " + "; ".join(str(v) for v in violations[:5]))
    echo = {
        "num_classes": num_classes,
        "discipline": discipline.value,
        "rates": rates.to_config(),
        "truncation": truncation,
    }
    spec = None
    if workloads is not None:
        try:
            spec = NetworkSpec(num_classes, rates, discipline, workloads)
        except ModelError as exc:
            raise doc.fail(path or "<root>", str(exc)) from None
        echo["workloads"] = [w.to_config() for w in workloads]
    else:
        spec = _PartialSpec(num_classes, rates, discipline)  # type: ignore[assignment]
    return spec, echo


class _PartialSpec:
    """Spec without workloads (plans supply them per arm)."""

    def __init__(self, num_classes: int, rates: RateModel, discipline: Discipline):
        self.num_classes, self.rates, self.discipline = num_classes, rates, discipline

    def with_workloads(self, workloads) -> NetworkSpec:
        return NetworkSpec(self.num_classes, self.rates, self.discipline, tuple(workloads))


def spec_from_dict(data: dict, source: str = "<config>") -> NetworkSpec:
    spec, _ = _spec(_Doc(data, source=source), data, "")
    return spec  # type: ignore[return-value]


def _sim_config(doc: _Doc, obj: dict, path: str) -> SimConfig:
    obj = obj or {}
    try:
        return SimConfig(
            seed=_get(doc, obj, path, "seed", 0, int),
            max_events=_get(doc, obj, path, "max_events", 100_000, int),
            warmup_events=_get(doc, obj, path, "warmup_events", None, int),
            snapshot_interval=_get(doc, obj, path, "snapshot_interval", 50, int),
            epoch_interval=_get(doc, obj, path, "epoch_interval", 10, int),
            initialization=_get(doc, obj, path, "initialization", "empty", str),
        )
    except ValueError as exc:
        raise doc.fail(path, str(exc)) from None


def _plan(doc: _Doc) -> ExperimentPlan:
    data = doc.data
    spec_obj = _get(doc, data, "", "spec", kind=dict)
    base, spec_echo = _spec(doc, spec_obj, "spec", workloads_required=False)
    arms = []
    for k, a in enumerate(_get(doc, data, "", "arms", kind=list)):
        ap = f"arms[{k}]"
        name = _get(doc, a, ap, "name", f"arm{k}", str)
        wl = tuple(_workload(doc, w, f"{ap}.workloads[{m}]") for m, w in enumerate(_get(doc, a, ap, "workloads", kind=list)))
        if len(wl) != base.num_classes:
            raise doc.fail(f"{ap}.workloads", f"need {base.num_classes} workloads, got {len(wl)}")
        arms.append(Arm(name, wl))
    if not arms:
        raise doc.fail("arms", "at least one arm is required")
    analytic_obj = _get(doc, data, "", "analytic", {}, dict) or {}
    method = _get(doc, analytic_obj, "analytic", "method", "auto", str)
    truncation = _get(doc, analytic_obj, "analytic", "truncation", spec_echo.get("truncation"), list)
    analytic = analytic_law(base.rates, method, truncation, doc)
    sim = _sim_config(doc, _get(doc, data, "", "sim", {}, dict), "sim")
    th_obj = _get(doc, data, "", "thresholds", {}, dict) or {}
    default_tv = 0.01 if base.num_classes == 1 else 0.02
    thresholds = Thresholds(
        tv_max=float(_get(doc, th_obj, "thresholds", "tv_max", default_tv, _NUM)),
        min_events=_get(doc, th_obj, "thresholds", "min_events", 0, int),
    )
    name = _get(doc, data, "", "name", Path(doc.source).stem, str)
    spec = base.with_workloads(arms[0].workloads)
    echo = {
        "kind": "experiment",
        "name": name,
        "spec": {k: v for k, v in spec_echo.items() if k != "workloads"},
        "arms": [{"name": a.name, "workloads": [w.to_config() for w in a.workloads]} for a in arms],
        "analytic": {"method": method, "truncation": truncation},
        "sim": sim.to_dict(),
        "thresholds": {"tv_max": thresholds.tv_max, "min_events": thresholds.min_events},
    }
    return ExperimentPlan(spec, arms, analytic, sim, thresholds, name, echo)


def analytic_law(rates: RateModel, method: str, truncation: list[int] | None, doc: _Doc | None = None) -> OccupancyDistribution:
    from .balance import ctmc_oracle, solve_loss, solve_single_class, solve_whittle

    method = method.lower()
    try:
        if method == "auto":
            return solve_spec(rates, truncation)
        if method == "ctmc":
            return ctmc_oracle(rates, truncation)
        if method == "single_class" and isinstance(rates, SingleClassRates):
            return solve_single_class(rates.alpha, rates.beta, int(truncation[0]))
        if method == "whittle" and isinstance(rates, WhittleRates):
            return solve_whittle(rates, bounds=truncation)
        if method == "loss" and isinstance(rates, LossRates):
            return solve_loss(rates)
    except (ValueError, TypeError) as exc:
        if doc is None:
            raise
        raise doc.fail("analytic", str(exc)) from None
    msg = f"analytic method {method!r} does not apply to a {type(rates).__name__} model"
    if doc is None:
        raise ConfigError(msg)
    raise doc.fail("analytic.method", msg)


def parse_config(path: str | Path) -> NetworkSpec | ExperimentPlan:
    """Load a spec or plan file (YAML or JSON); plans are recognised by an ``arms`` key."""
    doc = load_document(path)
    return parse_document(doc)


def parse_document(doc: _Doc) -> NetworkSpec | ExperimentPlan:
    if "arms" in doc.data or doc.data.get("kind") == "experiment":
        return _plan(doc)
    spec, _ = _spec(doc, doc.data, "")
    return spec  # type: ignore[return-value]


def spec_echo(doc: _Doc) -> dict:
    _, echo = _spec(doc, doc.data, "")
    return echo


def dump_config(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=1)
