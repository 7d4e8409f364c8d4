"""The three calibration estimators.

* ``l2_calibrate`` smooths the physical data into a nonparametric
  response-surface estimate, then moves the simulator parameter to
  minimize the squared L2 distance between surface and simulator.
* ``ols_calibrate`` minimizes the residual sum of squares of the
  simulator against the raw observations.
* ``ko_calibrate`` is the frequentist Gaussian-process variant: the
  observations are modeled as the simulator mean plus a stationary GP
  discrepancy plus white noise, and the parameter maximizes the profiled
  marginal likelihood.

All three search the parameter box with the same deterministic
grid-plus-refinement minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from . import kernels, rkhs
from .kernels import KernelSpec
from .numerics import (BoxDomain, OptimizerConfig, QuadratureRule,
                       as_points, fd_step, minimize)
from .rkhs import GcvLambda, KrrModel, LambdaRule

ETA_BOUNDS = (1e-8, 1e8)  # noise-to-process variance ratio search range


@dataclass(frozen=True)
class FixedPhi:
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("phi must be positive")


@dataclass(frozen=True)
class LooCvPhi:
    grid: tuple[float, ...] = rkhs.DEFAULT_PHI_GRID
    lambda_rule: LambdaRule = field(default_factory=GcvLambda)

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid or any(g <= 0 for g in grid):
            raise ValueError("phi grid must be nonempty and positive")


PhiRule = FixedPhi | LooCvPhi


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family plus the rules that pick its tuning parameters."""

    family: str = "gaussian"
    nu: float | None = None
    phi_rule: PhiRule = field(default_factory=LooCvPhi)
    lambda_rule: LambdaRule = field(default_factory=GcvLambda)

    def spec(self, phi: float) -> KernelSpec:
        return KernelSpec(self.family, phi, self.nu)


@dataclass
class ComputerModel:
    """Vectorized simulator wrapper.

    ``eval(points, theta)`` maps an ``(n, d)`` array of control points
    and a parameter vector ``theta`` to an ``(n,)`` output array.
    ``grad`` and ``hess``, when given, must be vectorized the same way
    (returning ``(n, q)`` and ``(n, q, q)``); otherwise central
    differences are used.  ``smooth_in_theta`` gates derivative-based
    inference.
    """

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    theta_domain: BoxDomain
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    smooth_in_theta: bool = True
    name: str = "computer-model"

    @property
    def q(self) -> int:
        return self.theta_domain.dim

    def __call__(self, x, theta) -> np.ndarray:
        pts = as_points(x)
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.asarray(self.eval(pts, th), dtype=float).reshape(-1)
        if out.shape[0] != pts.shape[0]:
            raise ValueError("model eval returned wrong number of values")
        return out

    def grad_theta(self, x, theta) -> np.ndarray:
        """Jacobian of the output in theta, shape ``(n, q)``."""
        pts = as_points(x)
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.grad is not None:
            g = np.asarray(self.grad(pts, th), dtype=float)
            return g.reshape(pts.shape[0], self.q)
        steps = fd_step(th)
        cols = []
        for j in range(self.q):
            e = np.zeros_like(th)
            e[j] = steps[j]
            cols.append((self(pts, th + e) - self(pts, th - e)) / (2.0 * steps[j]))
        return np.stack(cols, axis=1)

    def hess_theta(self, x, theta) -> np.ndarray:
        """Per-point Hessian of the output in theta, shape ``(n, q, q)``."""
        pts = as_points(x)
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.hess is not None:
            H = np.asarray(self.hess(pts, th), dtype=float)
            return H.reshape(pts.shape[0], self.q, self.q)
        steps = fd_step(th)
        n, q = pts.shape[0], self.q
        H = np.empty((n, q, q))
        f0 = self(pts, th)
        for j in range(q):
            ej = np.zeros_like(th)
            ej[j] = steps[j]
            H[:, j, j] = (self(pts, th + ej) - 2.0 * f0 + self(pts, th - ej)) / steps[j] ** 2
            for k in range(j + 1, q):
                ek = np.zeros_like(th)
                ek[k] = steps[k]
                mixed = (self(pts, th + ej + ek) - self(pts, th + ej - ek)
                         - self(pts, th - ej + ek) + self(pts, th - ej - ek))
                H[:, j, k] = H[:, k, j] = mixed / (4.0 * steps[j] * steps[k])
        return H


def emulator_model(surrogate: KrrModel, theta_domain: BoxDomain,
                   smooth_in_theta: bool = True) -> ComputerModel:
    """Wrap a kernel interpolant over (x, theta) space as a ComputerModel.

    The surrogate's design lives in R^(d+q) with the parameter
    coordinates last; gradients come from central differences.
    """
    q = theta_domain.dim

    def _eval(pts: np.ndarray, th: np.ndarray) -> np.ndarray:
        joint = np.hstack([pts, np.broadcast_to(th, (pts.shape[0], q))])
        return rkhs.predict(surrogate, joint)

    return ComputerModel(eval=_eval, theta_domain=theta_domain,
                         smooth_in_theta=smooth_in_theta, name="emulator")


@dataclass(frozen=True)
class CalibrationEstimate:
    theta_hat: np.ndarray
    method: str                      # "L2" | "OLS" | "KO"
    objective_value: float
    covariance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _check_data(points, y) -> tuple[np.ndarray, np.ndarray]:
    pts = as_points(points)
    yv = np.asarray(y, dtype=float).reshape(-1)
    if pts.shape[0] == 0:
        raise ValueError("data must be nonempty")
    if yv.shape[0] != pts.shape[0]:
        raise ValueError("points and responses length mismatch")
    return pts, yv


def fit_response_surface(points, y, config: KernelConfig,
                         jitter: float = rkhs.DEFAULT_JITTER) -> tuple[KrrModel, float]:
    """Resolve (phi, lambda) per the config rules and fit the regressor."""
    if isinstance(config.phi_rule, FixedPhi):
        phi = config.phi_rule.value
    else:
        phi = rkhs.loo_cv_phi(points, y, config.family, config.phi_rule.grid,
                              config.phi_rule.lambda_rule, config.nu, jitter)
    model = rkhs.fit_with_rule(points, y, config.spec(phi),
                               rkhs.KrrConfig(config.lambda_rule, jitter))
    return model, phi


def l2_calibrate(points, y, kernel_cfg: KernelConfig, model: ComputerModel,
                 rule: QuadratureRule,
                 opt: OptimizerConfig = OptimizerConfig()) -> CalibrationEstimate:
    """L2 calibration: smooth, then project onto the simulator sweep.

    The reported objective value is the achieved L2 distance (square
    root of the minimized squared distance).  ``meta`` records the
    selected tuning parameters and flags boundary solutions.
    """
    pts, yv = _check_data(points, y)
    zeta_hat, phi = fit_response_surface(pts, yv, kernel_cfg)
    zeta_nodes = rkhs.predict(zeta_hat, rule.nodes)
    ys_nodes = lambda th: model(rule.nodes, th)

    def objective(th: np.ndarray) -> float:
        diff = zeta_nodes - ys_nodes(th)
        return float(rule.weights @ (diff * diff))

    res = minimize(objective, model.theta_domain, opt)
    return CalibrationEstimate(
        theta_hat=res.x, method="L2",
        objective_value=float(np.sqrt(max(res.fun, 0.0))),
        meta={"phi": phi, "lambda": zeta_hat.lam, "iterations": res.iterations,
              "boundary": res.on_boundary},
    )


def ols_calibrate(points, y, model: ComputerModel,
                  opt: OptimizerConfig = OptimizerConfig()) -> CalibrationEstimate:
    """Least-squares calibration; the objective value is the minimized RSS."""
    pts, yv = _check_data(points, y)

    def objective(th: np.ndarray) -> float:
        resid = yv - model(pts, th)
        return float(resid @ resid)

    res = minimize(objective, model.theta_domain, opt)
    return CalibrationEstimate(
        theta_hat=res.x, method="OLS", objective_value=res.fun,
        meta={"iterations": res.iterations, "boundary": res.on_boundary},
    )


class _ProfiledGpLikelihood:
    """Concentrated negative log marginal likelihood for the GP calibrator.

    With correlation matrix ``R`` (fixed phi), noise-to-process ratio
    ``eta`` and residual ``r(theta)``, the process variance profiles to
    ``tau2 = r^T (R + eta I)^{-1} r / n`` and the objective becomes
    ``(n/2) log tau2 + (1/2) log det(R + eta I)``.
    """

    def __init__(self, points: np.ndarray, y: np.ndarray, model: ComputerModel,
                 spec: KernelSpec, jitter: float):
        self.pts = points
        self.y = y
        self.model = model
        self.n = y.shape[0]
        R = kernels.gram(spec, points) + jitter * np.eye(self.n)
        self.rho, self.Q = np.linalg.eigh(R)
        if self.rho.min() <= 0:
            raise rkhs.FitError("GP correlation matrix is not positive definite "
                                f"after jitter (smallest eigenvalue {self.rho.min():.3e})")
        self._lo = np.log(ETA_BOUNDS[0])
        self._hi = np.log(ETA_BOUNDS[1])

    def residual_sq(self, theta: np.ndarray) -> np.ndarray:
        r = self.y - self.model(self.pts, theta)
        return (self.Q.T @ r) ** 2

    def value_from_parts(self, qtr2: np.ndarray, log_eta: float) -> float:
        denom = self.rho + np.exp(log_eta)
        tau2 = float(np.sum(qtr2 / denom)) / self.n
        if not np.isfinite(tau2) or tau2 <= 0.0:
            tau2 = np.finfo(float).tiny
        return 0.5 * self.n * np.log(tau2) + 0.5 * float(np.sum(np.log(denom)))

    def __call__(self, params: np.ndarray) -> float:
        theta, log_eta = params[:-1], params[-1]
        if not self.model.theta_domain.contains(theta):
            return np.inf
        if not (self._lo <= log_eta <= self._hi):
            return np.inf
        return self.value_from_parts(self.residual_sq(theta), log_eta)

    def tau2_sigma2(self, theta: np.ndarray, log_eta: float) -> tuple[float, float]:
        denom = self.rho + np.exp(log_eta)
        tau2 = float(np.sum(self.residual_sq(theta) / denom)) / self.n
        return tau2, tau2 * np.exp(log_eta)


def ko_calibrate(points, y, model: ComputerModel,
                 family: str = "gaussian",
                 phi_rule: PhiRule = LooCvPhi(),
                 opt: OptimizerConfig = OptimizerConfig(),
                 nu: float | None = None,
                 seed: int = 0,
                 n_starts: int = 5,
                 jitter: float = rkhs.DEFAULT_JITTER) -> CalibrationEstimate:
    """Gaussian-process calibration by profiled maximum likelihood.

    phi is fixed up front by cross-validation on the physical data (or
    taken as given), then (theta, log eta) are searched jointly: a
    coarse grid pass, Nelder-Mead from the best cell, and ``n_starts``
    seeded random restarts to dodge likelihood multimodality.
    """
    pts, yv = _check_data(points, y)
    if yv.shape[0] < 3:
        raise ValueError("GP calibration needs at least 3 observations")
    if isinstance(phi_rule, FixedPhi):
        phi = phi_rule.value
    else:
        phi = rkhs.loo_cv_phi(pts, yv, family, phi_rule.grid,
                              phi_rule.lambda_rule, nu, jitter)
    spec = KernelSpec(family, phi, nu)
    nll = _ProfiledGpLikelihood(pts, yv, model, spec, jitter)
    box = model.theta_domain

    # Coarse deterministic pass over theta x log(eta).
    n_theta = max(9, opt.grid_points // 5)
    axes = [np.linspace(lo, hi, n_theta) for lo, hi in zip(box.lower, box.upper)]
    theta_grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    log_etas = np.linspace(np.log(ETA_BOUNDS[0]), np.log(ETA_BOUNDS[1]), 17)
    best_val, best_start = np.inf, None
    for th in theta_grid:
        qtr2 = nll.residual_sq(th)
        for le in log_etas:
            v = nll.value_from_parts(qtr2, le)
            if v < best_val:
                best_val, best_start = v, np.append(th, le)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6B6F]))
    starts = [best_start]
    for _ in range(n_starts):
        th0 = rng.uniform(box.lower, box.upper)
        le0 = rng.uniform(np.log(1e-6), np.log(1e4))
        starts.append(np.append(th0, le0))

    best = None
    for s0 in starts:
        res = _scipy_minimize(nll, s0, method="Nelder-Mead",
                              options={"xatol": opt.tolerance, "fatol": 1e-12,
                                       "maxiter": 400 * (box.dim + 1)})
        if best is None or res.fun < best.fun:
            best = res
    theta_hat = box.clip(best.x[:-1])
    log_eta = float(np.clip(best.x[-1], np.log(ETA_BOUNDS[0]), np.log(ETA_BOUNDS[1])))
    tau2, sigma2 = nll.tau2_sigma2(theta_hat, log_eta)
    eps = 1e-12
    on_boundary = bool(np.any(np.abs(theta_hat - np.asarray(box.lower)) <= eps)
                       or np.any(np.abs(theta_hat - np.asarray(box.upper)) <= eps))
    return CalibrationEstimate(
        theta_hat=np.asarray(theta_hat, dtype=float), method="KO",
        objective_value=float(best.fun),
        meta={"phi": phi, "eta": float(np.exp(log_eta)), "tau2": tau2,
              "sigma2": sigma2, "boundary": on_boundary,
              "iterations": int(best.nit)},
    )
