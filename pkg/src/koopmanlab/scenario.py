"""Scenario files: YAML trees naming a flow, observables, grids and knobs.

Every name is resolved eagerly by :func:`load_scenario`, so a malformed
file fails with :class:`ScenarioError` before any numerics run.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import observables as obs
from .observables import AtomicMeasure, CompactSample, Dictionary, Observable
from .report import PreconditionError
from .semiflow import (
    DomainChart, Semiflow, crandall_liggett_flow, cubic_relation, linear_field, linear_relation,
    logistic_field, make_compactified_translation_flow, make_ode_flow, make_rotation_flow,
    make_translation_flow, rotation_field, soft_threshold_relation, zero_field,
)

__all__ = ["Scenario", "ScenarioError", "SPEC_VERSION", "load_scenario", "bundled_scenarios",
           "build_flow", "build_observable", "build_sample", "build_measure"]

SPEC_VERSION = 1

OBSERVABLES = {
    "unit": obs.unit, "constant": obs.constant, "zero": obs.zero, "exp_decay": obs.exp_decay,
    "gaussian": obs.gaussian, "coordinate": obs.coordinate, "power": obs.power,
    "bump": obs.bump, "sine": obs.sine, "cosine": obs.cosine, "cexp": obs.cexp,
    "radius": obs.radius,
}
FIELDS = {"logistic": logistic_field, "linear": linear_field, "zero": zero_field,
          "rotation": rotation_field}
RELATIONS = {"linear": linear_relation, "soft_threshold": soft_threshold_relation,
             "cubic": cubic_relation}
KNOB_DEFAULTS = {"h": 1e-3, "tol": 1e-6, "nu": 1.0, "T_max": 30.0, "n_quad": 512, "tau": 1.0}
POSITIVE_KNOBS = ("h", "tol", "nu", "T_max", "n_quad", "tau")


class ScenarioError(ValueError):
    """The scenario file does not parse or does not validate."""


def _num(v, what: str) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(v, str) and v.strip().lower() in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what}: expected a number, got {v!r}") from None


def _nums(v, what: str) -> list[float]:
    return [_num(x, what) for x in np.atleast_1d(np.asarray(v, dtype=object)).tolist()]


def _call(fn, kwargs: dict, what: str):
    try:
        return fn(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{what}: {exc}") from None


def build_chart(spec: dict | None) -> DomainChart:
    if spec is None:
        return DomainChart.half_line()
    if spec.get("compactified_half_line"):
        return DomainChart.compactified_half_line(int(spec.get("dim", 1)))
    return DomainChart(tuple(_nums(spec["lower"], "chart.lower")),
                       tuple(_nums(spec["upper"], "chart.upper")))


def build_flow(spec: dict) -> Semiflow:
    """Flow from ``{kind: translation | compactified_translation | rotation | ode | crandall_liggett}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioError("flow must be a mapping with a 'kind'")
    kind = spec["kind"]
    if kind == "translation":
        return make_translation_flow()
    if kind == "compactified_translation":
        return make_compactified_translation_flow()
    if kind == "rotation":
        return make_rotation_flow(_num(spec.get("omega", 1.0), "omega"),
                                  _num(spec.get("half_width", 2.0), "half_width"))
    if kind == "ode":
        name = spec.get("field")
        if name not in FIELDS:
            raise ScenarioError(f"unknown vector field {name!r}; choose from {sorted(FIELDS)}")
        step = _num(spec.get("step", 1e-3), "step")
        if not step > 0:
            raise ScenarioError("flow.step must be positive")
        vf = _call(FIELDS[name], dict(spec.get("params", {})), f"field {name}")
        return make_ode_flow(vf, build_chart(spec.get("chart")), step, label=name)
    if kind == "crandall_liggett":
        name = spec.get("relation")
        if name not in RELATIONS:
            raise ScenarioError(f"unknown relation {name!r}; choose from {sorted(RELATIONS)}")
        rel = _call(RELATIONS[name], dict(spec.get("params", {})), f"relation {name}")
        return crandall_liggett_flow(rel, _num(spec.get("tol", 1e-4), "flow.tol"),
                                     int(spec.get("k_max", 1 << 20)))
    raise ScenarioError(f"unknown flow kind {kind!r}")


def build_observable(spec, dim: int = 1) -> Observable:
    """``"sine"`` or ``{name: sine, freq: 2}``; keyword arguments pass through."""
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or spec.get("name") not in OBSERVABLES:
        raise ScenarioError(f"unknown observable {spec!r}; choose from {sorted(OBSERVABLES)}")
    kwargs = {k: v for k, v in spec.items() if k not in ("name", "label")}
    fn = OBSERVABLES[spec["name"]]
    if "dim" in inspect.signature(fn).parameters and "dim" not in kwargs:
        kwargs["dim"] = dim
    f = _call(fn, kwargs, f"observable {spec['name']}")
    return f.relabel(spec["label"]) if "label" in spec else f


def build_sample(spec, label: str = "K") -> CompactSample:
    """``{interval: [a, b, n]}``, ``{box: {lower, upper, n}}`` or ``{points: [...], mesh}``."""
    if not isinstance(spec, dict):
        raise ScenarioError(f"{label}: sample must be a mapping")
    try:
        if "interval" in spec:
            a, b, n = spec["interval"]
            return CompactSample.interval(_num(a, label), _num(b, label), int(n), label=label)
        if "box" in spec:
            box = spec["box"]
            return CompactSample.box(_nums(box["lower"], label), _nums(box["upper"], label),
                                     box["n"], label=label)
        if "points" in spec:
            return CompactSample.from_points(np.asarray(spec["points"], dtype=float),
                                             _num(spec.get("mesh", 0.0), label), label=label)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{label}: {exc}") from None
    raise ScenarioError(f"{label}: need one of interval, box, points")


def build_measure(spec, dim: int = 1) -> AtomicMeasure:
    """``{points: [...], weights: [...]}``; a weight is a number or ``[re, im]``."""
    try:
        pts = np.asarray(spec["points"], dtype=float).reshape(-1, dim)
        raw = spec.get("weights", [1.0] * len(pts))
        w = [complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x) for x in raw]
        return AtomicMeasure(pts, np.asarray(w, dtype=complex))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"measure: {exc}") from None


def _t_grid(spec, what: str) -> np.ndarray:
    if isinstance(spec, dict):
        if "geom" in spec:
            a, b, n = spec["geom"]
            return np.geomspace(_num(a, what), _num(b, what), int(n))
        a, b, n = spec.get("linspace", (None, None, None))
        if n is None:
            raise ScenarioError(f"{what}: need linspace or geom")
        return np.linspace(_num(a, what), _num(b, what), int(n))
    return np.asarray(_nums(spec, what))


@dataclass
class Scenario:
    """A validated scenario; raw sections are kept for per-subcommand options."""

    name: str
    flow: Semiflow
    grid: CompactSample
    observables: list[Observable]
    times: np.ndarray
    knobs: dict[str, float]
    measures: list[AtomicMeasure] = field(default_factory=list)
    raw: dict[str, Any] = field(default_factory=dict)

    def tol(self, key: str = "tol", scale: float = 1.0) -> float:
        return float(self.knobs[key]) * scale

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {}) or {}
        if not isinstance(sec, dict):
            raise ScenarioError(f"section {name!r} must be a mapping")
        return sec

    def sample(self, spec, label: str) -> CompactSample:
        return build_sample(spec, label)

    def observable(self, spec) -> Observable:
        return build_observable(spec, self.flow.dim)

    def dictionary(self, specs=None) -> Dictionary:
        if specs is None:
            return Dictionary(tuple(self.observables))
        return Dictionary(tuple(self.observable(s) for s in specs))

    def t_grid(self, spec, what: str = "t_grid") -> np.ndarray:
        return _t_grid(spec, what)


def bundled_scenarios() -> list[str]:
    root = resources.files("koopmanlab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _resolve(path_or_name: str) -> str:
    p = Path(path_or_name)
    if p.exists():
        return p.read_text()
    res = resources.files("koopmanlab") / "scenarios" / f"{path_or_name}.yaml"
    if res.is_file():
        return res.read_text()
    raise ScenarioError(f"no scenario file or bundled scenario named {path_or_name!r} "
                        f"(bundled: {', '.join(bundled_scenarios())})")


def load_scenario(path_or_name: str) -> Scenario:
    """Parse and validate a scenario file or a bundled scenario name."""
    try:
        raw = yaml.safe_load(_resolve(path_or_name))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"YAML parse error: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    if raw.get("spec_version") != SPEC_VERSION:
        raise ScenarioError(f"spec_version must be {SPEC_VERSION}, got {raw.get('spec_version')!r}")
    if "flow" not in raw:
        raise ScenarioError("missing 'flow'")
    try:
        flow = build_flow(raw["flow"])
    except (ScenarioError, PreconditionError):
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"flow: {exc}") from None
    grid = build_sample(raw.get("grid", {"interval": [0.0, 2.0, 21]}), "grid")
    if grid.dim != flow.dim:
        raise ScenarioError("grid dimension does not match the flow")
    specs = raw.get("observables", ["exp_decay"])
    if not isinstance(specs, list) or not specs:
        raise ScenarioError("observables must be a nonempty list")
    observables = [build_observable(s, flow.dim) for s in specs]
    knobs = dict(KNOB_DEFAULTS)
    for k, v in (raw.get("knobs") or {}).items():
        if k not in KNOB_DEFAULTS:
            raise ScenarioError(f"unknown knob {k!r}")
        knobs[k] = _num(v, k)
    for k in POSITIVE_KNOBS:
        if not knobs[k] > 0:
            raise ScenarioError(f"knob {k} must be positive")
    if int(knobs["n_quad"]) != knobs["n_quad"]:
        raise ScenarioError("knob n_quad must be an integer")
    knobs["n_quad"] = int(knobs["n_quad"])
    times = _t_grid(raw.get("times", [0.25, 0.5, 1.0]), "times")
    if np.any(times < 0):
        raise ScenarioError("times must be nonnegative")
    measures = [build_measure(m, flow.dim) for m in raw.get("measures", [])]
    return Scenario(str(raw.get("name", path_or_name)), flow, grid, observables, times, knobs,
                    measures, raw)
