"""Residual suites telling Koopman operators apart from other linear operators.

Operator level: unitality, multiplicativity, modulus preservation, and
recovery of the underlying point map.  Generator level: the product rule
and Kato's equality, tested with finite-difference generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .koopman import richardson_batch, adjoint_generator_estimate, koopman_apply
from .observables import (AtomicMeasure, CompactSample, Dictionary, Observable, alg_product,
                          modulus, unit)
from .report import AmbiguityError, PreconditionError, ResidualReport
from .semiflow import Semiflow

__all__ = [
    "OperatorUnderTest", "Classification", "hsign", "hsign_array",
    "averaging_operator", "scaled_operator", "conjugating_operator", "identity_operator",
    "check_unital", "check_linearity", "check_identity_at_zero",
    "check_algebra_homomorphism", "check_lattice_homomorphism", "check_derivation",
    "check_kato", "strong_continuity_spot_check", "classify_operator",
]

ASSUMED = ("strong continuity and local equicontinuity of the operator family are assumed, "
           "not certified at sample scale")


@dataclass(frozen=True, eq=False)
class OperatorUnderTest:
    """A one-parameter family ``t -> T(t)`` acting on observables."""

    apply: Callable[[float, Observable], Observable]
    label: str = "T"
    kind: str = "black-box"

    def __call__(self, t: float, f: Observable) -> Observable:
        return self.apply(t, f)

    @classmethod
    def from_flow(cls, flow: Semiflow) -> OperatorUnderTest:
        return cls(lambda t, f: koopman_apply(flow, t, f), f"Koopman[{flow.label}]", "from-flow")


def averaging_operator(flow: Semiflow, shift: float = 1.0) -> OperatorUnderTest:
    """``t -> (T(t) + T(t + shift)) / 2``: unital and positive, not multiplicative."""

    def apply(t, f):
        a = koopman_apply(flow, t, f)
        b = koopman_apply(flow, t + shift, f)
        return Observable(lambda X: 0.5 * (a.values(X) + b.values(X)), f.bound,
                          f"S({t:g}){f.label}", f.dim)

    return OperatorUnderTest(apply, f"average[{flow.label},{shift:g}]")


def scaled_operator(flow: Semiflow, c: float = 2.0) -> OperatorUnderTest:
    """``c T(t)``; not unital for ``c != 1``."""
    return OperatorUnderTest(lambda t, f: c * koopman_apply(flow, t, f), f"{c:g}*Koopman")


def conjugating_operator(flow: Semiflow) -> OperatorUnderTest:
    """``f -> conj(f o phi_t)``: multiplicative and modulus preserving but conjugate-linear."""
    return OperatorUnderTest(lambda t, f: koopman_apply(flow, t, f).conj(), "conj*Koopman")


def identity_operator() -> OperatorUnderTest:
    return OperatorUnderTest(lambda t, f: f, "Id")


# -- hsign -------------------------------------------------------------------

def hsign(w: complex, z: complex, eps: float = 0.0) -> complex:
    """``sign(w) z`` when ``|w| > eps``, else ``|z|``."""
    w, z = complex(w), complex(z)
    if abs(w) > eps:
        return (w / abs(w)) * z
    return complex(abs(z))


def hsign_array(w: np.ndarray, z: np.ndarray, eps: float = 0.0) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    z = np.asarray(z, dtype=complex)
    aw = np.abs(w)
    big = aw > eps
    sgn = np.where(big, w / np.where(big, aw, 1.0), 0.0)
    return np.where(big, sgn * z, np.abs(z))


# -- operator-level suites ---------------------------------------------------

def _row_worst(rep, witness, X, value, err, tol):
    i = int(np.argmax(err))
    rep.add_row(witness, X[i], value[i], err[i], tol, err[i] < tol)
    return float(err[i])


def check_unital(op: OperatorUnderTest, t: float, grid: CompactSample, tol: float) -> ResidualReport:
    X = grid.points
    one = unit(grid.dim)
    val = op(t, one).values(X)
    r = float(np.max(np.abs(val - 1.0)))
    rep = ResidualReport("unital", {"unit": r}, {"tol": tol}, r < tol, provenance=op.label)
    _row_worst(rep, "1", X, val, np.abs(val - 1.0), tol)
    return rep


def check_identity_at_zero(op: OperatorUnderTest, dictionary: Dictionary, grid: CompactSample,
                           tol: float) -> ResidualReport:
    X = grid.points
    rep = ResidualReport("identity-at-zero", {}, {"tol": tol}, False, provenance=op.label)
    worst = 0.0
    for f in dictionary:
        val = op(0.0, f).values(X)
        worst = max(worst, _row_worst(rep, f.label, X, val, np.abs(val - f.values(X)), tol))
    rep.residuals["identity"] = worst
    rep.passed = worst < tol
    return rep


def check_linearity(op: OperatorUnderTest, t: float, dictionary: Dictionary, grid: CompactSample,
                    tol: float, coeffs: tuple[complex, complex] = (2.0 - 1.0j, 0.5 + 3.0j)
                    ) -> ResidualReport:
    """``|T(a f + b g) - a T f - b T g|`` with complex ``a, b`` over dictionary pairs."""
    X = grid.points
    a, b = coeffs
    obs = list(dictionary)
    images = [op(t, f).values(X) for f in obs]
    rep = ResidualReport("linearity", {}, {"tol": tol}, False, provenance=op.label)
    worst = 0.0
    for i, f in enumerate(obs):
        for j in range(i, len(obs)):
            g = obs[j]
            lhs = op(t, a * f + b * g).values(X)
            err = np.abs(lhs - a * images[i] - b * images[j])
            worst = max(worst, _row_worst(rep, f"f={f.label};g={g.label}", X, lhs, err, tol))
    rep.residuals["linearity"] = worst
    rep.passed = worst < tol
    return rep


def check_algebra_homomorphism(op: OperatorUnderTest, t: float, dictionary: Dictionary,
                               grid: CompactSample, tol: float) -> ResidualReport:
    """Product residual ``|T(fg) - Tf Tg|`` over dictionary pairs, plus unitality."""
    X = grid.points
    obs = list(dictionary)
    images = [op(t, f).values(X) for f in obs]
    rep = ResidualReport("algebra-homomorphism", {}, {"tol": tol}, False,
                         provenance=f"{op.label} at t={t:g}")
    rep.notes.append(ASSUMED)
    worst = 0.0
    for i, f in enumerate(obs):
        for j in range(i, len(obs)):
            g = obs[j]
            lhs = op(t, alg_product(f, g)).values(X)
            err = np.abs(lhs - images[i] * images[j])
            worst = max(worst, _row_worst(rep, f"f={f.label};g={g.label}", X, lhs, err, tol))
    u = check_unital(op, t, grid, tol)
    rep.rows.extend(u.rows)
    rep.residuals.update(product=worst, unit=u.residuals["unit"])
    rep.passed = worst < tol and u.passed
    return rep


def check_lattice_homomorphism(op: OperatorUnderTest, t: float, dictionary: Dictionary,
                               grid: CompactSample, tol: float) -> ResidualReport:
    """Modulus residual ``||Tf| - T|f||`` over the dictionary, plus unitality."""
    X = grid.points
    rep = ResidualReport("lattice-homomorphism", {}, {"tol": tol}, False,
                         provenance=f"{op.label} at t={t:g}")
    rep.notes.append(ASSUMED)
    worst = 0.0
    for f in dictionary:
        lhs = np.abs(op(t, f).values(X))
        err = np.abs(lhs - op(t, modulus(f)).values(X))
        worst = max(worst, _row_worst(rep, f"f={f.label}", X, lhs, err, tol))
    u = check_unital(op, t, grid, tol)
    rep.rows.extend(u.rows)
    rep.residuals.update(modulus=worst, unit=u.residuals["unit"])
    rep.passed = worst < tol and u.passed
    return rep


def strong_continuity_spot_check(op: OperatorUnderTest, f: Observable, K: CompactSample,
                                 t: float, s_values) -> list[float]:
    """``p_K(T(t+s) f - T(t) f)`` for each ``s``; should shrink as ``s -> 0``."""
    base = op(t, f).values(K.points)
    return [float(np.max(np.abs(op(t + s, f).values(K.points) - base))) for s in s_values]


# -- generator-level suites --------------------------------------------------

GeneratorFn = Callable[[Observable, np.ndarray], "np.ndarray | tuple[np.ndarray, np.ndarray]"]


def _fd_generator(flow: Semiflow, h: float) -> GeneratorFn:
    return lambda f, X: richardson_batch(flow, f, X, h)


def _gen(generator: GeneratorFn, f: Observable, X: np.ndarray):
    out = generator(f, X)
    if isinstance(out, tuple):
        return np.asarray(out[0]), np.asarray(out[1], dtype=float)
    out = np.asarray(out)
    return out, np.zeros(out.shape)


def check_derivation(flow: Semiflow | None, f: Observable, g: Observable, grid: CompactSample,
                     h: float, tol: float, generator: GeneratorFn | None = None) -> ResidualReport:
    """Product-rule residual ``|D(fg) - D(f) g - f D(g)|``.

    ``D`` defaults to the finite-difference generator of ``flow``; any map
    ``(f, X) -> values`` or ``(values, errors)`` may be substituted.  A point
    passes when its residual is below ``tol`` plus the propagated error
    estimates.
    """
    if generator is None:
        if flow is None:
            raise ValueError("need a flow or a generator")
        generator = _fd_generator(flow, h)
    X = grid.points
    fv, gv = f.values(X), g.values(X)
    dfg, e_fg = _gen(generator, alg_product(f, g), X)
    df, e_f = _gen(generator, f, X)
    dg, e_g = _gen(generator, g, X)
    err = np.abs(dfg - df * gv - fv * dg)
    slack = e_fg + np.abs(gv) * e_f + np.abs(fv) * e_g
    ok = err < tol + slack
    rep = ResidualReport("derivation", {"product_rule": float(np.max(err))},
                         {"tol": tol, "error_estimate": float(np.max(slack))}, bool(np.all(ok)),
                         provenance=f"f={f.label}, g={g.label}, h={h:g}")
    for j in range(len(X)):
        rep.add_row(f"f={f.label};g={g.label}", X[j], dfg[j], err[j], tol + slack[j], ok[j])
    return rep


def check_kato(flow: Semiflow, f: Observable, mu: AtomicMeasure, h: float,
               eps: float | None = None, tol: float = 1e-4) -> ResidualReport:
    """Kato's equality at an atomic measure.

    Left side: ``<Re hsign(conj f)(D f), mu>``.  Right side: the right
    derivative at 0 of ``t -> <|f|, T(t)' mu>``.  ``eps`` is the band in
    which ``f`` counts as zero (default ``1e-9 (1 + |f|)``).
    """
    if eps is None:
        eps = 1e-9 * (1.0 + f.bound)
    X = mu.points
    fx = f.values(X)
    df, df_err = richardson_batch(flow, f, X, h)
    lhs_pts = np.real(hsign_array(np.conj(fx), df, eps))
    lhs = complex(np.sum(mu.weights * lhs_pts))
    rhs_est = adjoint_generator_estimate(flow, modulus(f), mu, h)
    rhs = complex(rhs_est.value)
    r = abs(lhs - rhs)
    slack = float(np.sum(np.abs(mu.weights) * df_err)) + float(rhs_est.error_estimate)
    rep = ResidualReport("kato", {"kato": r}, {"tol": tol, "error_estimate": slack}, r < tol + slack,
                         provenance=f"f={f.label}, h={h:g}, eps={eps:.3g}")
    zero_branch = np.abs(fx) <= eps
    rep.notes.append(f"atoms on zero branch: {int(zero_branch.sum())} of {len(fx)}")
    rep.notes.append(ASSUMED)
    rep.add_row(f"f={f.label}", X[0] if len(X) else [], lhs, r, tol + slack, rep.passed)
    rep.residuals["lhs"] = lhs.real
    rep.residuals["rhs"] = rhs.real
    return rep


# -- classification ----------------------------------------------------------

@dataclass
class Classification:
    verdict: str
    psi: np.ndarray | None = None
    match_distance: np.ndarray | None = None
    reports: dict[str, ResidualReport] = field(default_factory=dict)


def classify_operator(op: OperatorUnderTest, t: float, dictionary: Dictionary,
                      grid: CompactSample, tol: float,
                      candidates: CompactSample | None = None,
                      check_linear: bool = True) -> Classification:
    """Run the homomorphism suites and, if all pass, recover the point map.

    The point map at a grid point ``x`` is the candidate ``y`` whose point
    evaluation ``f -> f(y)`` best matches ``f -> (T f)(x)`` over the
    dictionary (max-norm).  Verdicts: ``koopman-like``, ``not-linear``,
    ``not-unital``, ``not-multiplicative``, ``not-lattice``.
    """
    X = grid.points
    reports: dict[str, ResidualReport] = {}
    if check_linear:
        reports["linearity"] = check_linearity(op, t, dictionary, grid, tol)
    reports["unital"] = check_unital(op, t, grid, tol)
    reports["algebra"] = check_algebra_homomorphism(op, t, dictionary, grid, tol)
    reports["lattice"] = check_lattice_homomorphism(op, t, dictionary, grid, tol)
    for name, verdict in (("linearity", "not-linear"), ("unital", "not-unital"),
                          ("algebra", "not-multiplicative"), ("lattice", "not-lattice")):
        if name in reports and not reports[name].passed:
            return Classification(verdict, reports=reports)
    if candidates is None:
        return Classification("koopman-like", reports=reports)

    obs = list(dictionary)
    grid_feat = np.stack([f.values(X) for f in obs], axis=1)
    if len(X) > 1:
        sep = np.max(np.abs(grid_feat[:, None, :] - grid_feat[None, :, :]), axis=2)
        np.fill_diagonal(sep, np.inf)
        if np.min(sep) <= tol:
            raise PreconditionError("dictionary does not separate the grid points")
    C = candidates.points
    cand_feat = np.stack([f.values(C) for f in obs], axis=1)
    op_feat = np.stack([op(t, f).values(X) for f in obs], axis=1)
    psi = np.empty_like(X)
    dist = np.empty(len(X))
    radius = 2.0 * candidates.mesh + 1e-12
    for i in range(len(X)):
        d = np.max(np.abs(cand_feat - op_feat[i]), axis=1)
        best = int(np.argmin(d))
        far = np.linalg.norm(C - C[best], axis=1) > radius
        if np.any(far & (d <= d[best] + tol)):
            raise AmbiguityError(f"two separated candidates match grid point {X[i]} within {tol:g}")
        psi[i] = C[best]
        dist[i] = d[best]
    return Classification("koopman-like", psi, dist, reports)
