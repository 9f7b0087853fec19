"""Bounded continuous observables, compact samples and atomic measures.

Point convention used across the package: a state space of dimension ``d``
is handled in batches of shape ``(n, d)``.  User-facing calls also accept a
scalar or a 1-D array when ``d == 1`` (each entry is one point) and arrays
of shape ``(..., d)`` otherwise.  Observables map a batch ``(n, d)`` to
values of shape ``(n,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "as_batch", "restore_shape", "Observable", "CompactSample",
    "VanishingWeight", "AtomicMeasure", "Dictionary", "MixedConvergenceReport",
    "alg_product", "modulus", "seminorm_K", "strict_seminorm", "pair",
    "mixed_convergence_check", "unit", "constant", "zero", "exp_decay",
    "gaussian", "coordinate", "power", "bump", "sine", "cosine", "cexp",
    "radius", "from_scalar", "clipped",
]


def as_batch(x, dim: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Return ``(X, shape)`` with ``X`` of shape ``(n, dim)``."""
    arr = np.asarray(x, dtype=float)
    if dim == 1:
        return arr.reshape(-1, 1), arr.shape
    if arr.shape[-1:] != (dim,):
        raise ValueError(f"expected trailing axis of length {dim}, got shape {arr.shape}")
    return arr.reshape(-1, dim), arr.shape[:-1]


def restore_shape(Y: np.ndarray, shape: tuple[int, ...], dim: int | None):
    """Inverse of :func:`as_batch` for points (``dim`` given) or values."""
    if dim is None or dim == 1:
        out = Y.reshape(shape)
    else:
        out = Y.reshape(shape + (dim,))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Observable:
    """A bounded continuous function on the state space.

    ``bound`` is a claimed sup-norm bound; it is spot-checked on samples
    (:meth:`bound_violation`), never proven.
    """

    func: Callable[[np.ndarray], np.ndarray]
    bound: float
    label: str = "f"
    dim: int = 1

    def __post_init__(self):
        if not (self.bound >= 0):
            raise ValueError("bound must be nonnegative")

    def values(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on a batch of shape ``(n, dim)``."""
        n = X.shape[0]
        v = np.asarray(self.func(X))
        if v.shape != (n,):
            v = np.broadcast_to(v, (n,)).copy()
        return v

    def __call__(self, x):
        X, shape = as_batch(x, self.dim)
        return restore_shape(self.values(X), shape, None)

    def bound_violation(self, points) -> float:
        """Largest amount by which ``|f|`` exceeds ``bound`` on the sample."""
        X = _points_of(points, self.dim)
        if len(X) == 0:
            return 0.0
        return float(max(0.0, np.max(np.abs(self.values(X))) - self.bound))

    def __mul__(self, other):
        if isinstance(other, Observable):
            return alg_product(self, other)
        c = complex(other)
        val = c.real if c.imag == 0 else c
        return Observable(lambda X, f=self.func: val * f(X), abs(c) * self.bound,
                          f"{_num(c)}*{self.label}", self.dim)

    __rmul__ = __mul__

    def __add__(self, other: Observable) -> Observable:
        _same_dim(self, other)
        return Observable(lambda X, f=self.func, g=other.func: f(X) + g(X),
                          self.bound + other.bound, f"({self.label}+{other.label})", self.dim)

    def __sub__(self, other: Observable) -> Observable:
        _same_dim(self, other)
        return Observable(lambda X, f=self.func, g=other.func: f(X) - g(X),
                          self.bound + other.bound, f"({self.label}-{other.label})", self.dim)

    def __neg__(self) -> Observable:
        return -1 * self

    def __abs__(self) -> Observable:
        return modulus(self)

    def conj(self) -> Observable:
        return Observable(lambda X, f=self.func: np.conj(f(X)), self.bound,
                          f"conj({self.label})", self.dim)

    def real(self) -> Observable:
        return Observable(lambda X, f=self.func: np.real(f(X)), self.bound,
                          f"Re({self.label})", self.dim)

    def relabel(self, label: str) -> Observable:
        return Observable(self.func, self.bound, label, self.dim)


def _num(c: complex) -> str:
    return f"{c.real:g}" if c.imag == 0 else f"({c.real:g}{c.imag:+g}j)"


def _same_dim(f: Observable, g: Observable):
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.label} has {f.dim}, {g.label} has {g.dim}")


def alg_product(f: Observable, g: Observable) -> Observable:
    """Pointwise product; the bound is the product of the bounds."""
    _same_dim(f, g)
    return Observable(lambda X, a=f.func, b=g.func: a(X) * b(X), f.bound * g.bound,
                      f"{f.label}*{g.label}", f.dim)


def modulus(f: Observable) -> Observable:
    """Pointwise modulus ``|f|``."""
    return Observable(lambda X, a=f.func: np.abs(a(X)), f.bound, f"|{f.label}|", f.dim)


# -- built-in families -------------------------------------------------------

def from_scalar(fn: Callable[[np.ndarray], np.ndarray], bound: float, label: str = "f") -> Observable:
    """Wrap a function of a single real coordinate (dimension 1)."""
    return Observable(lambda X: fn(X[:, 0]), bound, label, 1)


def clipped(fn: Callable[[np.ndarray], np.ndarray], bound: float, label: str = "f",
            dim: int = 1) -> Observable:
    """Real-valued ``fn`` on batches, clipped into ``[-bound, bound]``."""
    return Observable(lambda X: np.clip(fn(X), -bound, bound), bound, label, dim)


def unit(dim: int = 1) -> Observable:
    return Observable(lambda X: np.ones(X.shape[0]), 1.0, "1", dim)


def constant(c, dim: int = 1) -> Observable:
    c = complex(c)
    val = c.real if c.imag == 0 else c
    return Observable(lambda X: np.full(X.shape[0], val), abs(c), _num(c), dim)


def zero(dim: int = 1) -> Observable:
    return Observable(lambda X: np.zeros(X.shape[0]), 0.0, "0", dim)


def exp_decay(rate: float = 1.0, dim: int = 1) -> Observable:
    """``exp(-rate * |x|)``; equals ``exp(-rate x)`` on ``[0, inf)``."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    return Observable(lambda X: np.exp(-rate * np.linalg.norm(X, axis=1)), 1.0,
                      f"exp(-{rate:g}|x|)", dim)


def gaussian(center=0.0, width: float = 1.0, dim: int = 1) -> Observable:
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    return Observable(lambda X: np.exp(-np.sum((X - c) ** 2, axis=1) / (2 * width ** 2)), 1.0,
                      f"gauss({_pt(c)},{width:g})", dim)


def coordinate(axis: int = 0, lo: float = -1.0, hi: float = 1.0, dim: int = 1) -> Observable:
    """Coordinate function ``x[axis]`` clipped to ``[lo, hi]``."""
    return Observable(lambda X: np.clip(X[:, axis], lo, hi), max(abs(lo), abs(hi)),
                      f"x{axis}[{lo:g},{hi:g}]", dim)


def power(axis: int = 0, center: float = 0.0, p: int = 2, clip: float = 1.0,
          dim: int = 1) -> Observable:
    """``(x[axis] - center)**p`` clipped into ``[-clip, clip]``."""
    return Observable(lambda X: np.clip((X[:, axis] - center) ** p, -clip, clip), clip,
                      f"(x{axis}-{center:g})^{p}", dim)


def bump(center=0.0, radius: float = 1.0, dim: int = 1) -> Observable:
    """Smooth compactly supported bump with peak value 1 at ``center``."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))

    def fn(X):
        r2 = np.sum((X - c) ** 2, axis=1) / radius ** 2
        out = np.zeros(X.shape[0])
        inside = r2 < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return Observable(fn, 1.0, f"bump({_pt(c)},{radius:g})", dim)


def sine(axis: int = 0, freq: float = 1.0, dim: int = 1) -> Observable:
    return Observable(lambda X: np.sin(freq * X[:, axis]), 1.0, f"sin({freq:g}x{axis})", dim)


def cosine(axis: int = 0, freq: float = 1.0, dim: int = 1) -> Observable:
    return Observable(lambda X: np.cos(freq * X[:, axis]), 1.0, f"cos({freq:g}x{axis})", dim)


def cexp(axis: int = 0, freq: float = 1.0, dim: int = 1) -> Observable:
    """Unimodular ``exp(i freq x[axis])``."""
    return Observable(lambda X: np.exp(1j * freq * X[:, axis]), 1.0, f"exp(i{freq:g}x{axis})", dim)


def radius(clip: float = 1.0, center=0.0, dim: int = 2) -> Observable:
    """Euclidean distance to ``center``, clipped at ``clip``."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    return Observable(lambda X: np.minimum(np.linalg.norm(X - c, axis=1), clip), clip,
                      f"min(|x-{_pt(c)}|,{clip:g})", dim)


def _pt(c) -> str:
    c = np.atleast_1d(c)
    return f"{c[0]:g}" if c.size == 1 else "(" + ",".join(f"{v:g}" for v in c) + ")"


# -- compact samples and seminorms -------------------------------------------

@dataclass(frozen=True, eq=False)
class CompactSample:
    """Finite point cloud standing in for a compact set.

    ``mesh`` is the claimed covering radius: every point of the true compact
    set lies within ``mesh`` of some sample point.
    """

    points: np.ndarray
    mesh: float = 0.0
    label: str = "K"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("compact sample must be a nonempty (n, d) point array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("compact sample points must be finite")
        if self.mesh < 0:
            raise ValueError("mesh must be nonnegative")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def interval(cls, a: float, b: float, n: int, label: str | None = None) -> CompactSample:
        """``n`` equispaced points on ``[a, b]``; mesh is half the spacing."""
        if n < 1 or b < a:
            raise ValueError("need n >= 1 and a <= b")
        pts = np.linspace(a, b, n)
        mesh = (b - a) / (2 * (n - 1)) if n > 1 else 0.0
        return cls(pts.reshape(-1, 1), mesh, label or f"[{a:g},{b:g}]")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], n: int | Sequence[int],
            label: str | None = None) -> CompactSample:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        ns = np.broadcast_to(np.asarray(n), lower.shape)
        axes = [np.linspace(lo, hi, k) for lo, hi, k in zip(lower, upper, ns)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))
        spacing = np.array([(hi - lo) / (k - 1) if k > 1 else 0.0
                            for lo, hi, k in zip(lower, upper, ns)])
        return cls(grid, float(np.linalg.norm(spacing) / 2), label or "box")

    @classmethod
    def from_points(cls, points, mesh: float = 0.0, label: str = "K") -> CompactSample:
        return cls(np.asarray(points, dtype=float), mesh, label)

    def union(self, other: CompactSample) -> CompactSample:
        return CompactSample(np.vstack([self.points, other.points]), max(self.mesh, other.mesh),
                             f"{self.label}+{other.label}")

    def diameter(self) -> float:
        from scipy.spatial.distance import pdist
        return float(pdist(self.points).max()) if len(self) > 1 else 0.0


def _points_of(K, dim: int | None = None) -> np.ndarray:
    if isinstance(K, CompactSample):
        return K.points
    if dim is None:
        arr = np.asarray(K, dtype=float)
        return arr.reshape(-1, 1) if arr.ndim <= 1 else arr
    return as_batch(K, dim)[0]


def seminorm_K(f: Observable, K) -> float:
    """``sup`` of ``|f|`` over the sample (a finite maximum)."""
    X = _points_of(K, f.dim)
    if X.shape[0] == 0:
        raise ValueError("seminorm over an empty sample")
    return float(np.max(np.abs(f.values(X))))


@dataclass(frozen=True, eq=False)
class VanishingWeight:
    """Nonnegative weight vanishing at infinity.

    ``witnesses`` pairs each level ``eps`` with a compact sample outside of
    which the weight is at most ``eps``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    witnesses: tuple[tuple[float, CompactSample], ...] = ()
    label: str = "g"
    dim: int = 1

    def values(self, X: np.ndarray) -> np.ndarray:
        v = np.asarray(self.func(X), dtype=float)
        return np.broadcast_to(v, (X.shape[0],)).copy() if v.shape != (X.shape[0],) else v

    def __call__(self, x):
        X, shape = as_batch(x, self.dim)
        return restore_shape(self.values(X), shape, None)

    def decay_violation(self, probe) -> float:
        """Worst excess ``g(x) - eps`` over probe points outside each witness set.

        Negative weights count as violations too.
        """
        from scipy.spatial import cKDTree
        X = _points_of(probe, self.dim)
        g = self.values(X)
        worst = max(0.0, float(-g.min())) if len(g) else 0.0
        for eps, K in self.witnesses:
            d, _ = cKDTree(K.points).query(X)
            outside = d > K.mesh * (1 + 1e-9)
            if np.any(outside):
                worst = max(worst, float(np.max(g[outside] - eps)))
        return worst

    @classmethod
    def radial(cls, profile: Callable[[np.ndarray], np.ndarray], eps_levels=(1e-1, 1e-2, 1e-3),
               dim: int = 1, label: str = "g", n_per_axis: int = 41) -> VanishingWeight:
        """Weight ``profile(|x|)`` for a decreasing profile with ``profile(r) -> 0``."""
        witnesses = []
        for eps in eps_levels:
            if profile(np.array(0.0)) <= eps:
                R = 0.0
            else:
                hi = 1.0
                while profile(np.array(hi)) > eps:
                    hi *= 2
                R = brentq(lambda r: float(profile(np.array(r))) - eps, 0.0, hi)
            K = CompactSample.box([-R] * dim, [R] * dim, n_per_axis, label=f"|x|<={R:.3g}")
            witnesses.append((float(eps), K))
        return cls(lambda X: profile(np.linalg.norm(X, axis=1)), tuple(witnesses), label, dim)

    @classmethod
    def rational(cls, dim: int = 1, **kw) -> VanishingWeight:
        return cls.radial(lambda r: 1.0 / (1.0 + r ** 2), dim=dim, label="1/(1+|x|^2)", **kw)

    @classmethod
    def exponential(cls, rate: float = 1.0, dim: int = 1, **kw) -> VanishingWeight:
        return cls.radial(lambda r: np.exp(-rate * r), dim=dim, label=f"exp(-{rate:g}|x|)", **kw)


def strict_seminorm(f: Observable, g: VanishingWeight, grid) -> float:
    """Finite-sample value of ``sup |f g|``.

    A lower bound for the true seminorm; the gap is governed by the grid
    mesh and the moduli of continuity of ``f`` and ``g``.
    """
    X = _points_of(grid, f.dim)
    if X.shape[0] == 0:
        raise ValueError("strict seminorm over an empty grid")
    return float(np.max(np.abs(f.values(X)) * g.values(X)))


# -- atomic measures ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite combination of point masses ``sum_i w_i delta_{x_i}``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=complex).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("one weight per atom required")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("atoms and weights must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def dirac(cls, x, weight=1.0, dim: int | None = None) -> AtomicMeasure:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x.reshape(1, -1) if dim is None else x.reshape(1, dim), [weight])

    @classmethod
    def from_atoms(cls, atoms, dim: int = 1) -> AtomicMeasure:
        atoms = list(atoms)
        if not atoms:
            return cls.zero(dim)
        pts = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in atoms])
        return cls(pts.reshape(len(atoms), -1), [w for _, w in atoms])

    @classmethod
    def zero(cls, dim: int = 1) -> AtomicMeasure:
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=complex))

    def total_variation(self) -> float:
        return float(np.sum(np.abs(self.weights)))

    def __add__(self, other: AtomicMeasure) -> AtomicMeasure:
        return AtomicMeasure(np.vstack([self.points, other.points]),
                             np.concatenate([self.weights, other.weights]))

    def __mul__(self, c) -> AtomicMeasure:
        return AtomicMeasure(self.points, complex(c) * self.weights)

    __rmul__ = __mul__

    def __sub__(self, other: AtomicMeasure) -> AtomicMeasure:
        return self + (-1) * other


def pair(f: Observable, mu: AtomicMeasure) -> complex:
    """Dual pairing ``<f, mu> = sum_i w_i f(x_i)``."""
    if mu.points.shape[0] == 0:
        return 0j
    return complex(np.sum(mu.weights * f.values(mu.points)))


# -- dictionaries ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dictionary:
    """Test-function family for residual suites; always contains the unit."""

    observables: tuple[Observable, ...]

    def __post_init__(self):
        obs = tuple(self.observables)
        if not obs:
            raise ValueError("dictionary needs at least one observable")
        dims = {f.dim for f in obs}
        if len(dims) != 1:
            raise ValueError("dictionary members must share a dimension")
        if not any(f.label == "1" for f in obs):
            obs = (unit(obs[0].dim),) + obs
        object.__setattr__(self, "observables", obs)

    @property
    def dim(self) -> int:
        return self.observables[0].dim

    def __iter__(self):
        return iter(self.observables)

    def __len__(self) -> int:
        return len(self.observables)

    def closure(self, depth: int = 1, products: bool = True, moduli: bool = True,
                max_size: int = 64) -> Dictionary:
        """Add pairwise products and moduli, ``depth`` rounds, capped at ``max_size``."""
        obs = list(self.observables)
        seen = {f.label for f in obs}
        for _ in range(depth):
            new = []
            cur = list(obs)
            if moduli:
                new += [modulus(f) for f in cur]
            if products:
                new += [alg_product(f, g) for i, f in enumerate(cur) for g in cur[i:]
                        if f.label != "1" and g.label != "1"]
            for f in new:
                if f.label not in seen and len(obs) < max_size:
                    seen.add(f.label)
                    obs.append(f)
        return Dictionary(tuple(obs))


# -- mixed-topology convergence ----------------------------------------------

@dataclass
class MixedConvergenceReport:
    bounded: bool
    bound_violations: list[int]
    residuals: np.ndarray  # (len(seq), len(Ks)) values of p_K(f_n - f)
    converged: list[bool]
    onset: list[int | None]
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.bounded and all(self.converged))


def mixed_convergence_check(seq: Sequence[Observable], f: Observable,
                            Ks: Sequence[CompactSample], bound: float,
                            tol: float | Callable[[int], float] = 1e-2) -> MixedConvergenceReport:
    """Sequential convergence test: uniform bound plus compact-open convergence.

    ``tol`` is a constant or a schedule ``n -> tol_n`` (``n`` counts from 1).
    A compact ``K`` converges when, from some index onward, every residual
    ``p_K(f_n - f)`` sits below the schedule.
    """
    if not seq:
        raise ValueError("empty sequence")
    schedule = tol if callable(tol) else (lambda n: tol)
    union = np.vstack([K.points for K in Ks]) if Ks else np.zeros((0, f.dim))
    violations = []
    for n, fn in enumerate(seq):
        if fn.bound > bound * (1 + 1e-12) or fn.bound_violation(union) > 0 or (
                len(union) and np.max(np.abs(fn.values(union))) > bound * (1 + 1e-12)):
            violations.append(n)
    res = np.array([[seminorm_K(fn - f, K) for K in Ks] for fn in seq]).reshape(len(seq), len(Ks))
    thresholds = np.array([schedule(n + 1) for n in range(len(seq))])
    converged, onset = [], []
    for j in range(len(Ks)):
        below = res[:, j] <= thresholds
        if not below[-1]:
            converged.append(False)
            onset.append(None)
            continue
        bad = np.nonzero(~below)[0]
        onset.append(int(bad[-1] + 1) if len(bad) else 0)
        converged.append(True)
    return MixedConvergenceReport(not violations, violations, res, converged, onset)
