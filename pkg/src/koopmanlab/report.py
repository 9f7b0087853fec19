"""Residual reports, error types and deterministic serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "ResidualReport", "DomainExitError", "NonConvergenceError", "PreconditionError",
    "AmbiguityError", "CSV_COLUMNS", "format_float", "to_json", "rows_to_csv",
]

CSV_COLUMNS = ("suite", "witness", "point", "value", "residual", "tol", "pass")


class DomainExitError(RuntimeError):
    """A trajectory left the chart by more than the allowed margin."""


class NonConvergenceError(RuntimeError):
    """An iterative construction hit its iteration cap before converging."""


class PreconditionError(ValueError):
    """An input failed a sampled hypothesis check."""


class AmbiguityError(RuntimeError):
    """Point-map recovery found two distinct candidates within tolerance."""


@dataclass
class ResidualReport:
    """Named residuals with tolerances and a pass/fail verdict.

    ``rows`` holds per-witness detail records keyed by :data:`CSV_COLUMNS`;
    ``notes`` carries warnings and untested hypotheses.
    """

    name: str
    residuals: dict[str, float]
    tolerances: dict[str, float]
    passed: bool
    rows: list[dict[str, Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    provenance: str = ""
    verdict: str = ""
    data: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def add_row(self, witness, point, value, residual, tol, ok):
        self.rows.append({
            "suite": self.name,
            "witness": witness,
            "point": _fmt_point(point),
            "value": value,
            "residual": float(residual),
            "tol": float(tol),
            "pass": bool(ok),
        })

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def to_dict(self, with_rows: bool = False) -> dict[str, Any]:
        out = {
            "name": self.name,
            "passed": bool(self.passed),
            "residuals": dict(self.residuals),
            "tolerances": dict(self.tolerances),
            "notes": list(self.notes),
            "provenance": self.provenance,
        }
        if self.verdict:
            out["verdict"] = self.verdict
        if with_rows:
            out["rows"] = list(self.rows)
        return out

    def summary_line(self) -> str:
        worst = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        tail = f" ({self.verdict})" if self.verdict else ""
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {worst}{tail}"


def _fmt_point(point) -> str:
    arr = np.atleast_1d(np.asarray(point, dtype=float))
    return " ".join(format_float(v) for v in arr)


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_json(obj: Any, indent: int = 2) -> str:
    """Serialize plain data with every float written at 17 significant digits.

    The stdlib encoder writes the shortest round-trip repr; fixed-width
    formatting keeps summaries byte-identical across runs and platforms.
    """
    buf = io.StringIO()
    _write_json(obj, buf, indent, 0)
    buf.write("\n")
    return buf.getvalue()


def _write_json(obj, buf, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, ResidualReport):
        obj = obj.to_dict()
    if obj is None:
        buf.write("null")
    elif isinstance(obj, bool):
        buf.write("true" if obj else "false")
    elif isinstance(obj, int):
        buf.write(str(obj))
    elif isinstance(obj, float):
        if math.isfinite(obj):
            buf.write(format_float(obj))
        else:
            buf.write(f'"{format_float(obj)}"')
    elif isinstance(obj, complex):
        _write_json({"re": obj.real, "im": obj.imag}, buf, indent, level)
    elif isinstance(obj, str):
        buf.write(_json_str(obj))
    elif isinstance(obj, dict):
        if not obj:
            buf.write("{}")
            return
        buf.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            buf.write(pad + _json_str(str(k)) + ": ")
            _write_json(v, buf, indent, level + 1)
            buf.write(",\n" if i < len(items) - 1 else "\n")
        buf.write(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            buf.write("[]")
            return
        buf.write("[\n")
        for i, v in enumerate(seq):
            buf.write(pad)
            _write_json(v, buf, indent, level + 1)
            buf.write(",\n" if i < len(seq) - 1 else "\n")
        buf.write(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s: str) -> str:
    return json.dumps(s)


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_cell(v) for k, v in row.items()})
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (complex, np.complexfloating)):
        v = complex(v)
        return f"{format_float(v.real)}{'+' if v.imag >= 0 else '-'}{format_float(abs(v.imag))}j"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v
