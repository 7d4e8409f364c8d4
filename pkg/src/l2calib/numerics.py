"""Quadrature, box-constrained minimization and finite differences.

Shared numerical machinery for the calibrators: tensor-product
Gauss-Legendre rules over rectangular domains, a deterministic
grid-scan-plus-refinement minimizer, and central-difference
derivatives.

Evaluators passed to the quadrature helpers are vectorized: they take
an ``(n, d)`` array of points and return an ``(n,)`` array of values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize as _scipy_minimize

Evaluator = Callable[[np.ndarray], np.ndarray]

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def as_points(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` to an ``(n, d)`` float array.

    One-dimensional input is treated as n points in R^1.
    """
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None]
    elif pts.ndim != 2:
        raise ValueError(f"points must be at most 2-d, got shape {pts.shape}")
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"expected points in R^{d}, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower_1, upper_1] x ... x [lower_d, upper_d]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    units: str = ""

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same length")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper in every coordinate, got {lo} / {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def contains(self, x, atol: float = 0.0) -> bool:
        pts = as_points(x, self.dim)
        lo = np.asarray(self.lower) - atol
        hi = np.asarray(self.upper) + atol
        return bool(np.all(pts >= lo) and np.all(pts <= hi))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights pair; weights sum to the volume of the source box."""

    nodes: np.ndarray   # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.ndim != 2 or self.weights.ndim != 1:
            raise ValueError("nodes must be (n, d), weights (n,)")
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise ValueError("nodes and weights length mismatch")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    """Grid-scan plus local-refinement settings for :func:`minimize`."""

    grid_points: int = 401
    tolerance: float = 1e-9
    max_iterations: int = 200

    def __post_init__(self):
        if self.grid_points < 3:
            raise ValueError("need at least 3 grid points per dimension")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    on_boundary: bool = False


def gauss_legendre(domain: BoxDomain, m: int) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule with ``m`` nodes per dimension.

    Exact for polynomials of coordinate degree up to ``2m - 1``.
    """
    if m < 1:
        raise ValueError("need at least one node per dimension")
    xi, wi = leggauss(m)
    axes, wts = [], []
    for lo, hi in zip(domain.lower, domain.upper):
        half = 0.5 * (hi - lo)
        axes.append(half * xi + 0.5 * (hi + lo))
        wts.append(half * wi)
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = wts[0]
    for w in wts[1:]:
        weights = np.multiply.outer(weights, w)
    return QuadratureRule(nodes=nodes, weights=np.asarray(weights).ravel())


def integrate(f: Evaluator, rule: QuadratureRule) -> float:
    """Plain weighted sum ``sum_i w_i f(z_i)``."""
    vals = _eval_on_nodes(f, rule, "f")
    return float(rule.weights @ vals)


def l2_distance_sq(f: Evaluator, g: Evaluator, rule: QuadratureRule) -> float:
    """Squared L2 distance ``integral (f - g)^2 dz`` over the rule's box.

    Uses the raw ``dz`` measure; no volume normalization.
    """
    fv = _eval_on_nodes(f, rule, "f")
    gv = _eval_on_nodes(g, rule, "g")
    diff = fv - gv
    return float(rule.weights @ (diff * diff))


def _eval_on_nodes(f: Evaluator, rule: QuadratureRule, name: str) -> np.ndarray:
    vals = np.asarray(f(rule.nodes), dtype=float).reshape(-1)
    if vals.shape[0] != rule.nodes.shape[0]:
        raise ValueError(f"evaluator {name} returned {vals.shape[0]} values for "
                         f"{rule.nodes.shape[0]} nodes")
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"evaluator {name} is non-finite at node {rule.nodes[i]}")
    return vals


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-9, max_iterations: int = 200) -> tuple[float, float, int]:
    """Golden-section search for a minimum of ``f`` on ``[lo, hi]``.

    Returns ``(x, f(x), iterations)``; assumes a single minimum in the
    bracket but degrades gracefully (stays inside the bracket) otherwise.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iterations:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    return x, f(x), it


def minimize(objective: Callable[[np.ndarray], float], box: BoxDomain,
             config: OptimizerConfig = OptimizerConfig()) -> MinimizeResult:
    """Minimize over a box: global grid scan, then local refinement.

    The coarse scan evaluates a full tensor grid (``grid_points`` per
    dimension, endpoints included) and refinement starts from the best
    grid cell: golden-section for one-dimensional boxes, Nelder-Mead
    clamped to the box otherwise.  Deterministic given the config.
    """
    q = box.dim
    axes = [np.linspace(lo, hi, config.grid_points)
            for lo, hi in zip(box.lower, box.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = np.array([objective(p) for p in pts], dtype=float)
    finite = np.isfinite(vals)
    if not np.any(finite):
        raise ValueError("objective is non-finite on the whole coarse grid")
    vals = np.where(finite, vals, np.inf)
    best = int(np.argmin(vals))
    levels = np.unravel_index(best, tuple(len(a) for a in axes))

    if q == 1:
        ax = axes[0]
        i = levels[0]
        lo = ax[max(i - 1, 0)]
        hi = ax[min(i + 1, len(ax) - 1)]
        x, fx, it = golden_section(lambda t: float(objective(np.array([t]))),
                                   lo, hi, config.tolerance, config.max_iterations)
        xs, fs = np.array([x]), fx
        if vals[best] < fs:
            xs, fs = pts[best], float(vals[best])
            it = 0
    else:
        x0 = pts[best]
        def clamped(t):
            return float(objective(box.clip(t)))
        res = _scipy_minimize(clamped, x0, method="Nelder-Mead",
                              options={"xatol": config.tolerance,
                                       "fatol": 1e-14,
                                       "maxiter": config.max_iterations * q * 10})
        xs, fs, it = box.clip(res.x), float(res.fun), int(res.nit)
        if vals[best] < fs:
            xs, fs, it = pts[best], float(vals[best]), 0

    eps = 1e-12
    on_boundary = bool(np.any(np.abs(xs - np.asarray(box.lower)) <= eps)
                       or np.any(np.abs(xs - np.asarray(box.upper)) <= eps))
    return MinimizeResult(x=np.asarray(xs, dtype=float), fun=float(fs),
                          iterations=it, on_boundary=on_boundary)


def fd_step(x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Per-coordinate central-difference step: ``max(h, h * |x_j|)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.maximum(h, h * np.abs(x))


def fd_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function on R^q."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    steps = fd_step(x, h)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        g[j] = (f(x + e) - f(x - e)) / (2.0 * steps[j])
    return g


def fd_hess(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of a scalar function on R^q (symmetrized)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    steps = fd_step(x, h)
    q = x.size
    H = np.empty((q, q))
    f0 = f(x)
    for j in range(q):
        ej = np.zeros_like(x)
        ej[j] = steps[j]
        H[j, j] = (f(x + ej) - 2.0 * f0 + f(x - ej)) / steps[j] ** 2
        for k in range(j + 1, q):
            ek = np.zeros_like(x)
            ek[k] = steps[k]
            H[j, k] = (f(x + ej + ek) - f(x + ej - ek)
                       - f(x - ej + ek) + f(x - ej - ek)) / (4.0 * steps[j] * steps[k])
            H[k, j] = H[j, k]
    return H
