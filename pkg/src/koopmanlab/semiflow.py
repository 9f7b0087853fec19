"""Continuous semiflows on box charts.

Three constructions are provided: closed-form flows, ODE flows integrated
with fixed-step classical RK4, and nonlinear semigroups obtained by
iterating the resolvent of an accretive relation (Crandall-Liggett).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .observables import CompactSample, as_batch, restore_shape
from .report import DomainExitError, NonConvergenceError, PreconditionError, ResidualReport

__all__ = [
    "DomainChart", "Semiflow", "AccretiveRelation", "ContinuityModulus",
    "make_translation_flow", "make_compactified_translation_flow", "compactify",
    "make_rotation_flow", "make_ode_flow", "crandall_liggett_evolve",
    "crandall_liggett_limit", "crandall_liggett_flow", "check_semiflow_laws",
    "continuity_modulus", "logistic_field", "linear_field", "zero_field",
    "rotation_field", "linear_relation", "soft_threshold_relation",
    "cubic_relation",
]

KINDS = ("closed-form", "ode", "crandall-liggett")


@dataclass(frozen=True, eq=False)
class DomainChart:
    """Axis-aligned box chart; bounds may be infinite.

    Axes flagged in ``compactified`` carry the coordinate ``y = x / (1 + x)``
    of a half-line ``[0, inf]``, so the point at infinity sits at ``y = 1``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    compactified: tuple[bool, ...] = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same nonzero length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("lower bound exceeds upper bound")
        comp = tuple(bool(c) for c in self.compactified) or (False,) * len(lo)
        if len(comp) != len(lo):
            raise ValueError("compactified flags must match the dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "compactified", comp)

    @classmethod
    def interval(cls, lo: float = -math.inf, hi: float = math.inf,
                 compactified: bool = False) -> DomainChart:
        return cls((lo,), (hi,), (compactified,))

    @classmethod
    def half_line(cls) -> DomainChart:
        return cls.interval(0.0, math.inf)

    @classmethod
    def compactified_half_line(cls, dim: int = 1) -> DomainChart:
        return cls((0.0,) * dim, (1.0,) * dim, (True,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def excess(self, X: np.ndarray) -> np.ndarray:
        """Per-point distance outside the box (sup over axes), 0 inside."""
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        with np.errstate(invalid="ignore"):
            out = np.maximum(np.maximum(lo - X, X - hi), 0.0)
        return out.max(axis=1)

    def contains(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return self.excess(X) <= tol

    def clamp(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def finite_box(self, span: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
        """Finite stand-in for the box: infinite sides are cut ``span`` away."""
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        lo_f = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - span, -span))
        hi_f = np.where(np.isfinite(hi), hi, np.where(np.isfinite(lo), lo + span, span))
        return lo_f, hi_f

    def probe_sample(self, n_per_axis: int = 21, span: float = 10.0) -> CompactSample:
        lo, hi = self.finite_box(span)
        return CompactSample.box(lo, hi, n_per_axis, label="chart-probe")

    def random_points(self, n: int, rng: np.random.Generator, span: float = 10.0) -> np.ndarray:
        lo, hi = self.finite_box(span)
        return rng.uniform(lo, hi, size=(n, self.dim))

    def encode(self, X: np.ndarray) -> np.ndarray:
        """Map half-line coordinates to chart coordinates on compactified axes."""
        Y = np.array(X, dtype=float)
        for i, c in enumerate(self.compactified):
            if c:
                x = Y[:, i]
                Y[:, i] = np.where(np.isinf(x), 1.0, x / (1.0 + np.where(np.isinf(x), 0.0, x)))
        return Y

    def decode(self, Y: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`encode`; ``y = 1`` maps to ``inf``."""
        X = np.array(Y, dtype=float)
        for i, c in enumerate(self.compactified):
            if c:
                y = X[:, i]
                at_inf = y >= 1.0
                X[:, i] = np.where(at_inf, np.inf, y / np.where(at_inf, 1.0, 1.0 - y))
        return X


@dataclass(frozen=True, eq=False)
class Semiflow:
    """Evaluation map ``(t, x) -> phi_t(x)`` with metadata.

    ``func(t, X)`` receives a scalar ``t`` and a batch ``(n, d)``.
    :meth:`evaluate` returns the input unchanged at ``t == 0`` without
    calling ``func``.
    ``accuracy`` is the nominal local error (0 for closed-form flows).
    """

    chart: DomainChart
    func: Callable[[float, np.ndarray], np.ndarray]
    kind: str = "closed-form"
    accuracy: float = 0.0
    order: int | None = None
    label: str = "phi"
    margin: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def dim(self) -> int:
        return self.chart.dim

    def evaluate_batch(self, t: float, X: np.ndarray) -> np.ndarray:
        t = float(t)
        if not (t >= 0) or math.isinf(t):
            raise ValueError(f"time must be finite and nonnegative, got {t}")
        X = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise ValueError("state points must be finite")
        if np.any(self.chart.excess(X) > self.margin):
            raise ValueError("initial point outside the chart")
        if t == 0.0:
            return X.copy()
        Y = np.asarray(self.func(t, X), dtype=float).reshape(X.shape)
        if not np.all(np.isfinite(Y)):
            raise DomainExitError(f"{self.label}: non-finite state at t={t:g}")
        ex = self.chart.excess(Y)
        if np.any(ex > self.margin):
            raise DomainExitError(f"{self.label}: left the chart by {ex.max():.3g} at t={t:g}")
        return Y

    def evaluate(self, t: float, x):
        X, shape = as_batch(x, self.dim)
        return restore_shape(self.evaluate_batch(t, X), shape, self.dim)

    __call__ = evaluate

    def orbit(self, X: np.ndarray, times: Sequence[float]) -> np.ndarray:
        """States at each of the nondecreasing ``times``, shape ``(m, n, d)``.

        Numerical flows are advanced incrementally (cost linear in the
        horizon); closed-form flows are evaluated directly.
        """
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be nondecreasing")
        X = np.asarray(X, dtype=float)
        out = np.empty((len(times),) + X.shape)
        if self.kind == "closed-form":
            for i, t in enumerate(times):
                out[i] = self.evaluate_batch(t, X)
            return out
        prev_t, Y = 0.0, X
        for i, t in enumerate(times):
            Y = self.evaluate_batch(t - prev_t, Y)
            out[i] = Y
            prev_t = t
        return out


# -- closed-form flows -------------------------------------------------------

def make_translation_flow() -> Semiflow:
    """``x -> x + t`` on ``[0, inf)``."""
    return Semiflow(DomainChart.half_line(), lambda t, X: X + t, "closed-form", 0.0,
                    None, "translation")


def compactify(flow: Semiflow) -> Semiflow:
    """Re-express a flow on ``[0, inf)^d`` in compactified coordinates.

    The point at infinity (``y = 1`` on any axis) is taken to be fixed.
    """
    if any(lo != 0.0 or not math.isinf(hi) for lo, hi in zip(flow.chart.lower, flow.chart.upper)):
        raise ValueError("compactify expects a flow on [0, inf)^d")
    chart = DomainChart.compactified_half_line(flow.dim)

    def func(t, Y):
        out = Y.copy()
        finite = np.all(Y < 1.0, axis=1)
        if np.any(finite):
            out[finite] = chart.encode(flow.evaluate_batch(t, chart.decode(Y[finite])))
        return out

    return Semiflow(chart, func, flow.kind, flow.accuracy, flow.order,
                    f"compactified {flow.label}", flow.margin)


def make_compactified_translation_flow() -> Semiflow:
    """Translation on the one-point compactification ``[0, inf]`` in ``y`` coordinates."""
    return compactify(make_translation_flow())


def make_rotation_flow(omega: float = 1.0, half_width: float = 2.0) -> Semiflow:
    """Planar rotation by angle ``omega t`` on the box ``[-w, w]^2``.

    Use it with samples inside the inscribed disc; corners rotate out.
    """
    chart = DomainChart((-half_width,) * 2, (half_width,) * 2)

    def func(t, X):
        c, s = math.cos(omega * t), math.sin(omega * t)
        return X @ np.array([[c, s], [-s, c]])

    return Semiflow(chart, func, "closed-form", 0.0, None, f"rotation({omega:g})")


# -- ODE flows ---------------------------------------------------------------

def logistic_field(rate: float = 1.0, capacity: float = 1.0):
    return lambda X: rate * X * (1.0 - X / capacity)


def linear_field(a: float = 1.0):
    """``v(x) = -a x``."""
    return lambda X: -a * X


def zero_field():
    return lambda X: np.zeros_like(X)


def rotation_field(omega: float = 1.0):
    return lambda X: omega * np.stack([-X[:, 1], X[:, 0]], axis=1)


def _step_sizes(t: float, step: float) -> np.ndarray:
    n = round(t / step)
    if n >= 1 and abs(t / step - n) <= 1e-6:
        return np.full(n, t / n)
    n_full = int(t // step)
    rem = t - n_full * step
    sizes = np.full(n_full, step)
    return np.append(sizes, rem) if rem > 0 else sizes


def make_ode_flow(vector_field: Callable[[np.ndarray], np.ndarray], chart: DomainChart,
                  step: float, margin: float = 1e-6, label: str = "ode") -> Semiflow:
    """Flow of ``x' = v(x)`` by fixed-step classical RK4.

    ``vector_field`` maps a batch ``(n, d)`` to ``(n, d)``.  A final partial
    step lands exactly on ``t``.  After every step the state is clamped to
    the chart; an excursion beyond ``margin`` raises ``DomainExitError``.
    """
    if not step > 0:
        raise ValueError("step must be positive")

    def v(Y):
        return np.asarray(vector_field(Y), dtype=float).reshape(Y.shape)

    def rk4(t, X):
        Y = X.copy()
        for h in _step_sizes(t, step):
            k1 = v(Y)
            k2 = v(Y + 0.5 * h * k1)
            k3 = v(Y + 0.5 * h * k2)
            k4 = v(Y + h * k3)
            Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(Y)):
                raise DomainExitError(f"{label}: non-finite state")
            ex = chart.excess(Y)
            if np.any(ex > margin):
                raise DomainExitError(f"{label}: trajectory left the chart by {ex.max():.3g}")
            Y = chart.clamp(Y)
        return Y

    return Semiflow(chart, rk4, "ode", step ** 4, 4, label, margin)


# -- Crandall-Liggett --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AccretiveRelation:
    """An accretive relation given through its resolvent ``(Id + lam A)^{-1}``.

    The range condition is assumed; only the Lipschitz bound of the
    resolvent is checked, on sampled pairs.
    """

    resolvent: Callable[[float, np.ndarray], np.ndarray]
    domain_closure: DomainChart
    lipschitz_claim: float = 1.0
    lambda_max: float = math.inf
    label: str = "A"

    @property
    def dim(self) -> int:
        return self.domain_closure.dim

    def check_lipschitz(self, n_pairs: int = 256, lambdas: Sequence[float] | None = None,
                        seed: int = 0) -> ResidualReport:
        rng = np.random.default_rng(seed)
        if lambdas is None:
            lambdas = np.geomspace(1e-3, min(1.0, self.lambda_max), 8)
        X = self.domain_closure.random_points(n_pairs, rng)
        Y = self.domain_closure.random_points(n_pairs, rng)
        dxy = np.linalg.norm(X - Y, axis=1)
        keep = dxy > 0
        worst, worst_lam = 0.0, float("nan")
        for lam in lambdas:
            R = np.linalg.norm(np.asarray(self.resolvent(lam, X)) - np.asarray(self.resolvent(lam, Y)),
                               axis=1)
            ratio = float(np.max(R[keep] / dxy[keep]))
            if ratio > worst:
                worst, worst_lam = ratio, float(lam)
        ok = worst <= self.lipschitz_claim * (1 + 1e-9)
        rep = ResidualReport("resolvent-lipschitz", {"max_ratio": worst},
                             {"lipschitz_claim": self.lipschitz_claim}, ok)
        rep.notes.append(f"worst ratio at lambda={worst_lam:.3g} over {int(keep.sum())} pairs")
        return rep


def linear_relation(a: float = 1.0) -> AccretiveRelation:
    """``A x = a x`` with resolvent ``x / (1 + lam a)``."""
    if a < 0:
        raise ValueError("a must be nonnegative for accretivity")
    return AccretiveRelation(lambda lam, X: X / (1.0 + lam * a), DomainChart.interval(),
                             1.0, math.inf, f"linear({a:g})")


def soft_threshold_relation() -> AccretiveRelation:
    """Subdifferential of ``|x|``; multivalued at 0, resolvent is soft thresholding."""
    return AccretiveRelation(lambda lam, X: np.sign(X) * np.maximum(np.abs(X) - lam, 0.0),
                             DomainChart.interval(), 1.0, math.inf, "subdiff|x|")


def cubic_relation() -> AccretiveRelation:
    """``A x = x**3``; the resolvent solves ``y + lam y**3 = x`` by Newton."""

    def resolvent(lam, X):
        X = np.asarray(X, dtype=float)
        Y = X.copy()
        for _ in range(100):
            g = Y + lam * Y ** 3 - X
            dY = g / (1.0 + 3.0 * lam * Y ** 2)
            Y = Y - dY
            if np.all(np.abs(dY) <= 1e-15 * (1.0 + np.abs(Y))):
                break
        return Y

    return AccretiveRelation(resolvent, DomainChart.interval(), 1.0, math.inf, "cubic")


def crandall_liggett_evolve(rel: AccretiveRelation, t: float, x, k: int):
    """Apply ``(Id + (t/k) A)^{-1}`` ``k`` times to ``x``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not t >= 0:
        raise ValueError("t must be nonnegative")
    X, shape = as_batch(x, rel.dim)
    if t == 0:
        return restore_shape(X.copy(), shape, rel.dim)
    lam = t / k
    if lam > rel.lambda_max:
        raise ValueError(f"step t/k={lam:g} exceeds the resolvent range {rel.lambda_max:g}")
    Y = X
    for _ in range(int(k)):
        Y = np.asarray(rel.resolvent(lam, Y), dtype=float).reshape(X.shape)
    return restore_shape(Y, shape, rel.dim)


def crandall_liggett_limit(rel: AccretiveRelation, t: float, X: np.ndarray, tol: float,
                           k_max: int, k0: int = 8) -> tuple[np.ndarray, int, float]:
    """k-doubling until successive iterates differ by less than ``tol``.

    Returns ``(state, k, last difference)``.
    """
    k = k0
    prev = crandall_liggett_evolve(rel, t, X, k)
    diff = math.inf
    while 2 * k <= k_max:
        k *= 2
        cur = crandall_liggett_evolve(rel, t, X, k)
        diff = float(np.max(np.linalg.norm(np.atleast_2d(cur - prev), axis=-1)))
        if diff < tol:
            return cur, k, diff
        prev = cur
    raise NonConvergenceError(
        f"Crandall-Liggett iteration reached k={k} with difference {diff:.3g} >= {tol:g}")


def crandall_liggett_flow(rel: AccretiveRelation, tol: float, k_max: int = 1 << 20,
                          n_pairs: int = 256, seed: int = 0) -> Semiflow:
    """Semiflow of an accretive relation by resolvent iteration."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    check = rel.check_lipschitz(n_pairs=n_pairs, seed=seed)
    if not check.passed:
        raise PreconditionError(
            f"resolvent of {rel.label} is not {rel.lipschitz_claim:g}-Lipschitz on samples "
            f"(ratio {check.residuals['max_ratio']:.4g})")

    def func(t, X):
        return crandall_liggett_limit(rel, t, X, tol, k_max)[0]

    return Semiflow(rel.domain_closure, func, "crandall-liggett", tol, 1,
                    f"CL[{rel.label}]")


# -- law checks and diagnostics ----------------------------------------------

def _require_in_chart(flow: Semiflow, X: np.ndarray):
    if np.any(flow.chart.excess(X) > flow.margin):
        raise ValueError("grid points must lie in the chart")


def check_semiflow_laws(flow: Semiflow, grid: CompactSample, times: Sequence[float],
                        tol: float) -> ResidualReport:
    """Identity and composition residuals over the grid and all time pairs."""
    X = grid.points
    _require_in_chart(flow, X)
    # the raw map is probed at t=0; evaluate() would short-circuit it
    zero_img = np.asarray(flow.func(0.0, X), dtype=float).reshape(X.shape)
    r_id = float(np.max(np.linalg.norm(zero_img - X, axis=1)))
    rep = ResidualReport("semiflow-laws", {}, {"tol": tol}, False,
                         provenance=f"{flow.label} on {grid.label}")
    rep.add_row("phi_0=id", X[0], r_id, r_id, tol, r_id < tol)
    r_comp = 0.0
    images = {float(t): flow.evaluate_batch(t, X) for t in times}
    for t in times:
        for s in times:
            lhs = flow.evaluate_batch(s, images[float(t)])
            rhs = flow.evaluate_batch(s + t, X)
            err = np.linalg.norm(lhs - rhs, axis=1)
            i = int(np.argmax(err))
            rep.add_row(f"s={s:g},t={t:g}", X[i], float(err[i]), float(err[i]), tol, err[i] < tol)
            r_comp = max(r_comp, float(err[i]))
    rep.residuals.update(identity=r_id, composition=r_comp)
    rep.passed = r_id < tol and r_comp < tol
    return rep


@dataclass
class ContinuityModulus:
    """Largest output displacement per unit input perturbation."""

    max_ratio_x: float
    max_ratio_t: float
    probe_radius: float
    n_probes: int


def continuity_modulus(flow: Semiflow, grid: CompactSample, times: Sequence[float],
                       probe_radius: float) -> ContinuityModulus:
    """Diagnostic for joint continuity: perturb ``x`` along each axis and ``t``.

    Perturbed points falling outside the chart are skipped.  No verdict.
    """
    if not probe_radius > 0:
        raise ValueError("probe_radius must be positive")
    X = grid.points
    _require_in_chart(flow, X)
    r = probe_radius
    rx = rt = 0.0
    n = 0
    for t in times:
        base = flow.evaluate_batch(t, X)
        for axis in range(flow.dim):
            for sign in (1.0, -1.0):
                Xp = X.copy()
                Xp[:, axis] += sign * r
                ok = flow.chart.contains(Xp)
                if not np.any(ok):
                    continue
                moved = flow.evaluate_batch(t, Xp[ok])
                rx = max(rx, float(np.max(np.linalg.norm(moved - base[ok], axis=1)) / r))
                n += int(ok.sum())
        later = flow.evaluate_batch(t + r, X)
        rt = max(rt, float(np.max(np.linalg.norm(later - base, axis=1)) / r))
        n += len(X)
    return ContinuityModulus(rx, rt, r, n)
