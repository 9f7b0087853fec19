"""Attractors through ideals of observables.

A closed set ``M`` corresponds to the ideal of observables vanishing on it.
``M`` attracts a family of sets exactly when the Koopman orbit of every
such observable decays uniformly on each member of the family.  The
smallest attractor is approximated by pushing an absorbing cloud forward
and then validated against that decay characterization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from .observables import CompactSample, Dictionary, Observable, zero
from .report import NonConvergenceError, ResidualReport
from .semiflow import DomainChart, Semiflow

__all__ = [
    "SetFamily", "IdealBasis", "AttractorResult", "AbsorbingTimes", "hausdorff",
    "deduplicate", "ideal_basis", "check_invariance", "check_ideal_invariance",
    "check_attractive", "find_absorbing_time", "smallest_attractor",
    "ideal_of_attractor_check",
]


@dataclass(frozen=True, eq=False)
class SetFamily:
    members: tuple[CompactSample, ...]
    label: str = "B"

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("family must have a nonempty union")
        object.__setattr__(self, "members", members)

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True, eq=False)
class IdealBasis:
    """Observables vanishing on ``M`` (up to ``vanish_tol``)."""

    M: CompactSample
    functions: tuple[Observable, ...]
    vanish_tol: float = 1e-12
    degenerate: bool = False

    def vanishing_residual(self) -> float:
        return max(float(np.max(np.abs(f.values(self.M.points)))) for f in self.functions)


@dataclass
class AttractorResult:
    M: CompactSample
    hausdorff_history: list[float]
    converged: bool
    iterations: int
    absorbed_times: list[float | None] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "points": self.M.points.tolist(),
            "mesh": self.M.mesh,
            "hausdorff_history": list(self.hausdorff_history),
            "converged": self.converged,
            "iterations": self.iterations,
            "absorbed_times": list(self.absorbed_times),
        }


@dataclass
class AbsorbingTimes:
    entry_times: list[float | None]

    @property
    def absorbed(self) -> bool:
        return all(t is not None for t in self.entry_times)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric max-min distance between two point clouds."""
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def deduplicate(points: np.ndarray, radius: float) -> np.ndarray:
    """Greedy thinning in lexicographic order: keep points farther than ``radius``."""
    order = np.lexsort(points.T[::-1])
    kept: list[np.ndarray] = []
    for p in points[order]:
        if not kept or np.min(np.linalg.norm(np.asarray(kept) - p, axis=1)) > radius:
            kept.append(p)
    return np.asarray(kept)


def _dist(points: np.ndarray, X: np.ndarray) -> np.ndarray:
    return cKDTree(points).query(X)[0]


def ideal_basis(M: CompactSample, chart: DomainChart, count: int = 3, sharpness: float = 4.0,
                vanish_tol: float = 1e-12, probe: CompactSample | None = None) -> IdealBasis:
    """``count`` bounded continuous functions vanishing on ``M``.

    The first is ``min(1, sharpness * dist(x, M))``; the others multiply it
    by Gaussian bumps centred at probe points away from ``M``, which
    separates exterior points.  When the probe lies entirely within
    ``M.mesh`` of ``M`` only the zero function qualifies and the basis is
    flagged degenerate.
    """
    if count < 1:
        raise ValueError("empty basis requested")
    if probe is None:
        probe = chart.probe_sample(201 if chart.dim == 1 else 21)
    tree = cKDTree(M.points)
    d_probe = tree.query(probe.points)[0]
    if np.all(d_probe <= max(M.mesh, vanish_tol)):
        return IdealBasis(M, (zero(M.dim),) * count, vanish_tol, degenerate=True)

    def dist_fn(X):
        return np.minimum(1.0, sharpness * tree.query(X)[0])

    base = Observable(dist_fn, 1.0, f"min(1,{sharpness:g}d(.,M))", M.dim)
    funcs = [base]
    exterior = probe.points[d_probe > M.mesh]
    if count > 1:
        idx = np.linspace(0, len(exterior) - 1, count - 1).round().astype(int)
        extent = np.ptp(probe.points, axis=0).max()
        width = max(extent / count, 1e-12)
        for c in exterior[idx]:
            funcs.append(Observable(
                lambda X, c=c: dist_fn(X) * np.exp(-np.sum((X - c) ** 2, axis=1) / (2 * width ** 2)),
                1.0, f"d_M*bump({np.round(c, 3).tolist()})", M.dim))
    basis = IdealBasis(M, tuple(funcs), vanish_tol)
    if basis.vanishing_residual() > vanish_tol:
        raise RuntimeError("constructed basis does not vanish on M")
    return basis


def check_invariance(flow: Semiflow, M: CompactSample, times: Sequence[float],
                     tol: float) -> ResidualReport:
    """``max dist(phi_t(x), M)`` over sample points and times."""
    rep = ResidualReport("set-invariance", {}, {"tol": tol + M.mesh}, False,
                         provenance=f"{flow.label}, M={M.label}")
    worst = 0.0
    for t in times:
        d = _dist(M.points, flow.evaluate_batch(t, M.points))
        i = int(np.argmax(d))
        rep.add_row(f"t={t:g}", M.points[i], float(d[i]), float(d[i]), tol + M.mesh,
                    d[i] < tol + M.mesh)
        worst = max(worst, float(d[i]))
    rep.residuals["distance"] = worst
    rep.passed = worst < tol + M.mesh
    return rep


def check_ideal_invariance(flow: Semiflow, basis: IdealBasis, times: Sequence[float],
                           tol: float) -> ResidualReport:
    """``max |f(phi_t(x))|`` over basis functions, times and points of ``M``."""
    rep = ResidualReport("ideal-invariance", {"vanishing": 0.0}, {"tol": tol}, True,
                         provenance=f"{flow.label}, M={basis.M.label}")
    if len(times) == 0:
        msg = "no times given; invariance holds vacuously"
        warnings.warn(msg, stacklevel=2)
        rep.notes.append(msg)
        return rep
    X = basis.M.points
    worst = 0.0
    for t in times:
        Y = flow.evaluate_batch(t, X)
        for f in basis.functions:
            v = np.abs(f.values(Y))
            i = int(np.argmax(v))
            rep.add_row(f"{f.label},t={t:g}", X[i], float(v[i]), float(v[i]), tol, v[i] < tol)
            worst = max(worst, float(v[i]))
    rep.residuals["vanishing"] = worst
    rep.passed = worst < tol
    return rep


def _family_closure_note(orbits, family: SetFamily, tol: float) -> str | None:
    trees = [(cKDTree(C.points), C.mesh) for C in family]
    for b, states in enumerate(orbits):
        for k, S in enumerate(states):
            if not any(np.max(tree.query(S)[0]) <= mesh + tol for tree, mesh in trees):
                return (f"family not forward-closed on samples: image of member {b} at grid "
                        f"index {k} lies in no member")
    return None


def check_attractive(flow: Semiflow, M: CompactSample, family: SetFamily, basis: IdealBasis,
                     t_grid: Sequence[float], decay_tol: float) -> ResidualReport:
    """Uniform decay of ``T(t) f`` on each member for every basis function of ``M``.

    Decay curves ``d(t) = max_{x in B} |f(phi_t(x))|`` are returned in
    ``report.data["curves"]`` keyed by ``"B<i>|<label>"``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    if basis.vanishing_residual() > max(basis.vanish_tol, decay_tol):
        raise ValueError("basis does not vanish on M")
    rep = ResidualReport("attractive", {}, {"decay_tol": decay_tol}, False,
                         provenance=f"{flow.label}, M={M.label}, t_final={t_grid[-1]:g}")
    orbits = [flow.orbit(B.points, t_grid) for B in family]
    curves = {}
    worst = 0.0
    for b, (B, states) in enumerate(zip(family, orbits)):
        for f in basis.functions:
            vals = np.abs(f.values(states.reshape(-1, flow.dim))).reshape(states.shape[:2])
            curve = vals.max(axis=1)
            curves[f"B{b}|{f.label}"] = curve
            i = int(np.argmax(vals[-1]))
            final = float(curve[-1])
            rep.add_row(f"B{b}:{f.label}", B.points[i], final, final, decay_tol, final < decay_tol)
            worst = max(worst, final)
    note = _family_closure_note(orbits, family, decay_tol)
    if note:
        warnings.warn(note, stacklevel=2)
        rep.notes.append(note)
    if basis.degenerate:
        rep.notes.append("degenerate ideal basis: only the zero function vanishes on M")
    rep.residuals["final_decay"] = worst
    rep.data["t_grid"] = t_grid
    rep.data["curves"] = curves
    rep.passed = worst < decay_tol
    return rep


def find_absorbing_time(flow: Semiflow, family: SetFamily, A: CompactSample,
                        t_grid: Sequence[float], tol: float) -> AbsorbingTimes:
    """Smallest grid time after which every sampled orbit stays within ``tol + A.mesh`` of ``A``.

    An entry is ``None`` when a member is not absorbed by the end of the grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    tree = cKDTree(A.points)
    times: list[float | None] = []
    for B in family:
        states = flow.orbit(B.points, t_grid)
        inside = np.array([np.max(tree.query(S)[0]) < tol + A.mesh for S in states])
        if not inside[-1]:
            times.append(None)
            continue
        outside = np.nonzero(~inside)[0]
        k = int(outside[-1] + 1) if len(outside) else 0
        times.append(float(t_grid[k]))
    return AbsorbingTimes(times)


def smallest_attractor(flow: Semiflow, A: CompactSample, tau: float, max_iter: int,
                       hausdorff_tol: float, mesh: float | None = None) -> AttractorResult:
    """Iterate ``A_{n+1} = phi_tau(A_n)`` until successive clouds are Hausdorff-close.

    Each image is thinned at radius ``mesh`` (default ``A.mesh``).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    radius = A.mesh if mesh is None else mesh
    cur = A.points
    history: list[float] = []
    for n in range(1, max_iter + 1):
        img = flow.evaluate_batch(tau, cur)
        h = hausdorff(cur, img)
        history.append(h)
        cur = deduplicate(img, radius)
        if h < hausdorff_tol:
            M = CompactSample(cur, radius, label="M")
            return AttractorResult(M, history, True, n)
    raise NonConvergenceError(
        f"no Hausdorff convergence after {max_iter} iterations (last {history[-1]:.3g})")


def ideal_of_attractor_check(flow: Semiflow, result: AttractorResult, family: SetFamily,
                             probe_dict: Dictionary | Sequence[Observable],
                             t_grid: Sequence[float], tol: float,
                             basis: IdealBasis | None = None, count: int = 3,
                             sharpness: float = 4.0) -> ResidualReport:
    """Two-sided sampled check that the decaying observables are exactly those vanishing on ``M``.

    (i) every basis function of ``M`` decays below ``tol`` uniformly on each
    member; (ii) every probe with ``max_M |f| > 10 tol`` stays at or above
    ``tol``, while probes with ``max_M |f| <= tol`` must decay.  Probes in
    between are reported and skipped.
    """
    M = result.M
    if basis is None:
        basis = ideal_basis(M, flow.chart, count, sharpness)
    t_grid = np.asarray(t_grid, dtype=float)
    rep = ResidualReport("ideal-of-attractor", {}, {"tol": tol}, False,
                         provenance=f"{flow.label}, t_final={t_grid[-1]:g}")
    orbits = [flow.orbit(B.points, t_grid) for B in family]
    finals = [S[-1] for S in orbits]

    def final_decay(f):
        return max(float(np.max(np.abs(f.values(Y)))) for Y in finals)

    basis_worst = 0.0
    for f in basis.functions:
        d = final_decay(f)
        rep.add_row(f"basis:{f.label}", M.points[0], d, d, tol, d < tol)
        basis_worst = max(basis_worst, d)
    probes_ok = True
    least_nondecay = np.inf
    for f in probe_dict:
        on_M = float(np.max(np.abs(f.values(M.points))))
        d = final_decay(f)
        if on_M > 10 * tol:
            ok = d >= tol
            least_nondecay = min(least_nondecay, d)
            rep.add_row(f"probe:{f.label}:must-persist", M.points[0], on_M, d, tol, ok)
        elif on_M <= tol:
            ok = d < tol
            rep.add_row(f"probe:{f.label}:must-decay", M.points[0], on_M, d, tol, ok)
        else:
            rep.notes.append(f"probe {f.label} skipped: max on M {on_M:.3g} in (tol, 10 tol]")
            continue
        probes_ok &= bool(ok)
    rep.residuals["basis_decay"] = basis_worst
    rep.residuals["least_persistent_probe"] = float(least_nondecay) if np.isfinite(least_nondecay) \
        else float("nan")
    rep.passed = basis_worst < tol and probes_ok
    return rep
