"""Command-line front end: ``koopmanlab <subcommand> --scenario <file|name> --out <dir>``.

Each run writes ``<subcommand>_summary.json`` plus one CSV per suite into
the output directory.  Exit codes: 0 when every requested suite passes,
1 on a suite failure, 2 when the scenario does not parse or validate,
3 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .attractor import (
    SetFamily, check_attractive, check_invariance, find_absorbing_time, ideal_basis,
    ideal_of_attractor_check, smallest_attractor,
)
from .characterize import (
    OperatorUnderTest, averaging_operator, check_derivation, check_identity_at_zero, check_kato,
    classify_operator, conjugating_operator, identity_operator, scaled_operator,
)
from .koopman import (
    check_resolvent_identity, generator_on_grid, kernel_fixed_check, resolvent_laplace,
    semigroup_property_check,
)
from .report import (
    AmbiguityError, DomainExitError, NonConvergenceError, PreconditionError, ResidualReport,
    format_float, rows_to_csv, to_json,
)
from .semiflow import check_semiflow_laws
from .scenario import SPEC_VERSION, Scenario, ScenarioError, build_measure, load_scenario

__all__ = ["main", "run", "EXIT_OK", "EXIT_FAIL", "EXIT_PARSE", "EXIT_RUNTIME"]

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "check-laws", "generator", "resolvent", "characterize", "attractor")


class _Run:
    """Collects reports, tables and summary fields; writes everything at the end."""

    def __init__(self, sub: str, sc: Scenario, scale: float):
        self.sub = sub
        self.sc = sc
        self.scale = scale
        self.reports: dict[str, ResidualReport] = {}
        self.tables: dict[str, tuple[list[str], list[list[Any]]]] = {}
        self.extra: dict[str, Any] = {}

    def tol(self, section: dict, key: str = "tol", knob: str = "tol") -> float:
        base = section.get(key, self.sc.knobs[knob])
        return float(base) * self.scale

    def add(self, key: str, rep: ResidualReport):
        self.reports[key] = rep

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values())

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        summary = {
            "subcommand": self.sub,
            "scenario": self.sc.name,
            "spec_version": SPEC_VERSION,
            "flow": self.sc.flow.label,
            "tol_scale": self.scale,
            "passed": self.passed,
            "suites": {k: r.to_dict() for k, r in self.reports.items()},
            **self.extra,
        }
        (out / f"{self.sub}_summary.json").write_text(to_json(summary) + "\n")
        for key, rep in self.reports.items():
            (out / f"{self.sub}_{key}.csv").write_text(rows_to_csv(rep.rows))
        for key, (header, rows) in self.tables.items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
            (out / f"{self.sub}_{key}.csv").write_text(buf.getvalue())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        v = complex(v)
        return format_float(v.real) if v.imag == 0 else f"{format_float(v.real)}{v.imag:+.17g}j"
    return v


def _coords(x) -> list[float]:
    return [float(c) for c in np.atleast_1d(x)]


def _dim_header(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


# -- subcommands -------------------------------------------------------------

def _simulate(run: _Run):
    sc = run.sc
    sec = sc.section("simulate")
    X = np.asarray(sec["x0"], dtype=float).reshape(-1, sc.flow.dim) if "x0" in sec \
        else sc.grid.points
    ts = sc.t_grid(sec.get("t_grid", {"linspace": [0.0, 5.0, 51]}), "simulate.t_grid")
    states = sc.flow.orbit(X, ts)
    rows = [[float(t), i, *_coords(states[k, i])] for k, t in enumerate(ts) for i in range(len(X))]
    run.tables["trajectory"] = (["t", "index", *_dim_header(sc.flow.dim)], rows)
    run.extra["final_states"] = states[-1]


def _check_laws(run: _Run):
    sc = run.sc
    sec = sc.section("check_laws")
    tol = run.tol(sec)
    run.add("semiflow_laws", check_semiflow_laws(sc.flow, sc.grid, sc.times, tol))
    if len(sc.times):
        s, t = float(sc.times[0]), float(sc.times[-1])
        for j, f in enumerate(sc.observables):
            run.add(f"koopman_semigroup_{j}", semigroup_property_check(sc.flow, f, s, t, sc.grid, tol))


def _generator(run: _Run):
    sc = run.sc
    sec = sc.section("generator")
    h = float(sec.get("h", sc.knobs["h"]))
    tol = run.tol(sec)
    rows = []
    for f in sc.observables:
        est = generator_on_grid(sc.flow, f, sc.grid, h)
        for x, v, e in zip(sc.grid.points, est.value, est.pointwise_error):
            rows.append([f.label, *_coords(x), v, float(e)])
    run.tables["table"] = (["observable", *_dim_header(sc.flow.dim), "delta_f", "error_estimate"],
                           rows)
    for j, (f, g) in enumerate(zip(sc.observables, sc.observables[1:])):
        run.add(f"derivation_{j}", check_derivation(sc.flow, f, g, sc.grid, h, tol))
    if sec.get("kernel", True):
        for j, f in enumerate(sc.observables):
            rep = kernel_fixed_check(sc.flow, f, sc.times, sc.grid, h, tol)
            run.add(f"kernel_{j}", rep)


def _resolvent(run: _Run):
    sc = run.sc
    sec = sc.section("resolvent")
    k = sc.knobs
    nu, T_max, n_quad = float(k["nu"]), float(k["T_max"]), int(k["n_quad"])
    h = float(sec.get("h", k["h"]))
    tol = run.tol(sec)
    rows = []
    errors = {}
    for j, f in enumerate(sc.observables):
        res = resolvent_laplace(sc.flow, f, nu, T_max, n_quad, sc.grid)
        u = res.observable.values(sc.grid.points)
        fv = f.values(sc.grid.points)
        for x, uj, fj in zip(sc.grid.points, u, fv):
            rows.append([f.label, *_coords(x), uj, fj])
        errors[f.label] = {"quad_error": res.quad_error, "truncation_error": res.truncation_error}
        run.add(f"resolvent_identity_{j}",
                check_resolvent_identity(sc.flow, f, nu, sc.grid, h, tol, T_max, n_quad))
    run.tables["table"] = (["observable", *_dim_header(sc.flow.dim), "resolvent", "f"], rows)
    run.extra["resolvent_errors"] = errors


def _operator(sc: Scenario, sec: dict) -> OperatorUnderTest:
    name = sec.get("operator", "koopman")
    if name == "koopman":
        return OperatorUnderTest.from_flow(sc.flow)
    if name == "averaging":
        return averaging_operator(sc.flow, float(sec.get("shift", 1.0)))
    if name == "scaled":
        return scaled_operator(sc.flow, float(sec.get("c", 2.0)))
    if name == "conjugating":
        return conjugating_operator(sc.flow)
    if name == "identity":
        return identity_operator()
    raise ScenarioError(f"unknown operator {name!r}")


def _characterize(run: _Run):
    sc = run.sc
    sec = sc.section("characterize")
    op = _operator(sc, sec)
    t = float(sec.get("t", 1.0))
    tol = run.tol(sec)
    dictionary = sc.dictionary(sec.get("dictionary"))
    depth = int(sec.get("closure_depth", 0))
    if depth:
        dictionary = dictionary.closure(depth)
    grid = sc.sample(sec["grid"], "characterize.grid") if "grid" in sec else sc.grid
    cands = sc.sample(sec["candidates"], "candidates") if "candidates" in sec else None
    cl = classify_operator(op, t, dictionary, grid, tol, cands)
    for key, rep in cl.reports.items():
        run.add(key, rep)
    run.add("identity_at_zero", check_identity_at_zero(op, dictionary, grid, tol))
    verdict = ResidualReport("classification", {}, {}, cl.verdict == "koopman-like",
                             verdict=cl.verdict, provenance=op.label)
    run.add("classification", verdict)
    run.extra["verdict"] = cl.verdict
    if cl.psi is not None:
        run.extra["psi"] = {"grid": grid.points, "psi": cl.psi, "match_distance": cl.match_distance}
    if op.kind == "from-flow":
        h = float(sec.get("h", sc.knobs["h"]))
        dtol = float(sec.get("derivation_tol", 1e-5)) * run.scale
        obs = list(sc.observables)
        for j, (f, g) in enumerate(zip(obs, obs[1:])):
            run.add(f"derivation_{j}", check_derivation(sc.flow, f, g, grid, h, dtol))
        ktol = float(sec.get("kato_tol", 1e-4)) * run.scale
        for j, item in enumerate(sec.get("kato", [])):
            f = sc.observable(item["observable"])
            mu = build_measure(item["measure"], sc.flow.dim)
            run.add(f"kato_{j}", check_kato(sc.flow, f, mu, h, tol=ktol))


def _family(sc: Scenario, specs) -> SetFamily:
    if not specs:
        return SetFamily((sc.grid,))
    return SetFamily(tuple(sc.sample(s, f"B{i}") for i, s in enumerate(specs)))


def _attractor(run: _Run):
    sc = run.sc
    sec = sc.section("attractor")
    if "A" not in sec:
        raise ScenarioError("attractor section needs an absorbing sample 'A'")
    A = sc.sample(sec["A"], "A")
    family = _family(sc, sec.get("family"))
    tau = float(sec.get("tau", sc.knobs["tau"]))
    htol = float(sec.get("hausdorff_tol", 1e-6))
    decay_tol = float(sec.get("decay_tol", 1e-3)) * run.scale
    t_grid = sc.t_grid(sec.get("t_grid", {"linspace": [0.0, 12.0, 121]}), "attractor.t_grid")
    absorb_grid = sc.t_grid(sec.get("absorb_t_grid", {"linspace": [0.0, 10.0, 1001]}),
                            "attractor.absorb_t_grid")
    absorb_tol = float(sec.get("absorb_tol", 0.0))

    absorbed = find_absorbing_time(sc.flow, family, A, absorb_grid, absorb_tol)
    entered = [t0 for t0 in absorbed.entry_times if t0 is not None]
    absorb_rep = ResidualReport(
        "absorbing", {"max_entry_time": max(entered) if absorbed.absorbed else float("inf")},
        {"tol": absorb_tol + A.mesh}, absorbed.absorbed, provenance=f"A={A.label}")
    for i, (B, t0) in enumerate(zip(family, absorbed.entry_times)):
        absorb_rep.add_row(f"B{i}", B.points[0], t0 if t0 is not None else "none",
                           0.0 if t0 is not None else float("inf"), absorb_tol + A.mesh,
                           t0 is not None)
    run.add("absorbing", absorb_rep)

    result = smallest_attractor(sc.flow, A, tau, int(sec.get("max_iter", 100)), htol)
    result.absorbed_times = list(absorbed.entry_times)
    M = result.M
    basis_spec = sec.get("basis", {})
    basis = ideal_basis(M, sc.flow.chart, int(basis_spec.get("count", 3)),
                        float(basis_spec.get("sharpness", 4.0)))
    run.add("invariance", check_invariance(sc.flow, M, [tau], (htol + M.mesh) * run.scale))
    att = check_attractive(sc.flow, M, family, basis, t_grid, decay_tol)
    run.add("attractive", att)
    probes = [sc.observable(p) for p in sec.get("probes", ["unit"])]
    run.add("ideal_of_attractor",
            ideal_of_attractor_check(sc.flow, result, family, probes, t_grid, decay_tol, basis))

    run.extra["attractor"] = result.to_dict()
    run.extra["attractor"]["diameter"] = M.diameter()
    run.tables["cloud"] = (_dim_header(sc.flow.dim), [_coords(p) for p in M.points])
    names = sorted(att.data["curves"])
    rows = [[float(t), *[float(att.data["curves"][n][k]) for n in names]]
            for k, t in enumerate(att.data["t_grid"])]
    run.tables["decay_curves"] = (["t", *names], rows)


HANDLERS = {"simulate": _simulate, "check-laws": _check_laws, "generator": _generator,
            "resolvent": _resolvent, "characterize": _characterize, "attractor": _attractor}


def run(subcommand: str, scenario: str, out: str | Path, tol_scale: float = 1.0,
        quiet: bool = True) -> int:
    """Run one subcommand; returns the process exit code."""
    def say(msg):
        if not quiet:
            print(msg)

    if subcommand not in HANDLERS:
        say(f"unknown subcommand {subcommand!r}")
        return EXIT_PARSE
    if not tol_scale > 0:
        say("--tol-scale must be positive")
        return EXIT_PARSE
    try:
        sc = load_scenario(scenario)
    except ScenarioError as exc:
        say(f"scenario error: {exc}")
        return EXIT_PARSE
    except (PreconditionError, DomainExitError, NonConvergenceError) as exc:
        say(f"runtime error: {exc}")
        return EXIT_RUNTIME
    r = _Run(subcommand, sc, tol_scale)
    try:
        HANDLERS[subcommand](r)
    except ScenarioError as exc:
        say(f"scenario error: {exc}")
        return EXIT_PARSE
    except (DomainExitError, NonConvergenceError, PreconditionError, AmbiguityError,
            ArithmeticError, ValueError, RuntimeError) as exc:
        say(f"runtime error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    r.write(Path(out))
    for rep in r.reports.values():
        say(rep.summary_line())
    say(f"{subcommand} on {sc.name}: {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if r.passed else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="koopmanlab", description="Koopman semigroup residual suites on scenarios.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--scenario", required=True, help="scenario YAML path or bundled name")
    p.add_argument("--out", default="koopmanlab-out", help="output directory")
    p.add_argument("--tol-scale", type=float, default=1.0, help="global tolerance multiplier")
    p.add_argument("--quiet", action="store_true", help="suppress the per-suite summary")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.subcommand, args.scenario, args.out, args.tol_scale, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
