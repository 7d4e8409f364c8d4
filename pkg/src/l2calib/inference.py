"""Plug-in sandwich covariances for the L2 and least-squares calibrators.

Writing ``g = d(simulator)/d(theta)`` and ``delta = surface - simulator``
at the estimate, the two building blocks are

    W = E[g g^T]                 (positive semidefinite)
    V = E[2 (g g^T - delta * H)] (objective curvature, H the theta-Hessian)

with the expectation taken under the uniform distribution on the
control domain and estimated by empirical means over the design points.
The asymptotic covariances are then

    cov(L2)  = (4 sigma^2 / n) V^{-1} W V^{-1}
    cov(OLS) = (1 / n) V^{-1} Sigma2 V^{-1},
    Sigma2   = 4 sigma^2 W + 4 E[delta^2 g g^T]

so the least-squares spread exceeds the L2 spread exactly when the
model discrepancy is nonzero where the sweep moves.  Quadrature
variants of W, V, Sigma2 (divided by the domain volume, same
uniform-expectation convention) serve as population oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rkhs
from .calibrate import ComputerModel
from .numerics import QuadratureRule, as_points
from .rkhs import KrrModel


class SingularCurvatureError(np.linalg.LinAlgError):
    """The estimated curvature matrix is not invertible.

    The sandwich form needs an invertible second derivative of the
    population objective at the estimate; a singular estimate usually
    means the parameter is not locally identified.
    """


@dataclass(frozen=True)
class SandwichEstimate:
    """Everything the sandwich formulas produce for one fit."""

    V_hat: np.ndarray
    W_hat: np.ndarray
    sigma2_hat: float
    Sigma2_hat: np.ndarray
    cov_l2: np.ndarray
    cov_ols: np.ndarray
    n: int

    @property
    def se_l2(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_l2))

    @property
    def se_ols(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_ols))


def _require_smooth(model: ComputerModel):
    if not model.smooth_in_theta:
        raise ValueError(
            f"model {model.name!r} is flagged non-smooth in theta; "
            "derivative-based covariance estimation is not valid for it")


def estimate_sigma2(points, y, zeta_hat: KrrModel) -> float:
    """Noise variance from smoother residuals and effective dof."""
    return rkhs.sigma2_hat(points, y, zeta_hat)


def estimate_W(model: ComputerModel, theta_hat, points) -> np.ndarray:
    """Empirical mean of ``g g^T`` over the design points."""
    _require_smooth(model)
    pts = as_points(points)
    G = model.grad_theta(pts, theta_hat)
    if np.any(~np.isfinite(G)):
        raise ValueError("model gradient is non-finite at some design point")
    return (G.T @ G) / pts.shape[0]


def estimate_V(model: ComputerModel, zeta_hat: Callable[[np.ndarray], np.ndarray],
               theta_hat, points) -> np.ndarray:
    """Empirical curvature ``(1/n) sum 2 [g g^T - delta * H]``, symmetrized."""
    _require_smooth(model)
    pts = as_points(points)
    G = model.grad_theta(pts, theta_hat)
    H = model.hess_theta(pts, theta_hat)
    if np.any(~np.isfinite(G)) or np.any(~np.isfinite(H)):
        raise ValueError("model derivatives are non-finite at some design point")
    delta = np.asarray(zeta_hat(pts), dtype=float).reshape(-1) - model(pts, theta_hat)
    n = pts.shape[0]
    V = 2.0 * (G.T @ G - np.einsum("i,ijk->jk", delta, H)) / n
    return 0.5 * (V + V.T)


def _inv_v(V_hat: np.ndarray) -> np.ndarray:
    V = np.atleast_2d(np.asarray(V_hat, dtype=float))
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularCurvatureError(
            f"curvature matrix is singular or near-singular (cond={cond:.3e}); "
            "the asymptotic covariance requires invertible curvature at the estimate")
    return np.linalg.inv(V)


def l2_cov(V_hat, W_hat, sigma2_hat: float, n: int) -> np.ndarray:
    """Covariance of the L2 estimate: ``(4 sigma^2 / n) V^{-1} W V^{-1}``."""
    Vinv = _inv_v(V_hat)
    W = np.atleast_2d(np.asarray(W_hat, dtype=float))
    cov = (4.0 * sigma2_hat / n) * (Vinv @ W @ Vinv)
    return 0.5 * (cov + cov.T)


def sigma2_matrix(W_hat, sigma2_hat: float, model: ComputerModel,
                  zeta_hat: Callable[[np.ndarray], np.ndarray],
                  theta_hat, points) -> np.ndarray:
    """Middle matrix of the least-squares sandwich:
    ``4 sigma^2 W + (4/n) sum delta_i^2 g_i g_i^T``."""
    _require_smooth(model)
    pts = as_points(points)
    G = model.grad_theta(pts, theta_hat)
    delta = np.asarray(zeta_hat(pts), dtype=float).reshape(-1) - model(pts, theta_hat)
    extra = 4.0 * (G * (delta ** 2)[:, None]).T @ G / pts.shape[0]
    S = 4.0 * sigma2_hat * np.atleast_2d(np.asarray(W_hat, dtype=float)) + extra
    return 0.5 * (S + S.T)


def ols_cov(V_hat, Sigma2_hat, n: int) -> np.ndarray:
    """Covariance of the least-squares estimate: ``(1/n) V^{-1} Sigma2 V^{-1}``."""
    Vinv = _inv_v(V_hat)
    S = np.atleast_2d(np.asarray(Sigma2_hat, dtype=float))
    cov = (Vinv @ S @ Vinv) / n
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class EfficiencyGap:
    gap: np.ndarray
    min_eigenvalue: float
    psd: bool


def efficiency_gap(Sigma1_hat, Sigma2_hat, tol: float = 1e-8) -> EfficiencyGap:
    """``Sigma2 - Sigma1`` with a PSD verdict.

    A nonnegative gap certifies that least squares cannot beat the L2
    calibration in asymptotic spread.
    """
    S1 = np.atleast_2d(np.asarray(Sigma1_hat, dtype=float))
    S2 = np.atleast_2d(np.asarray(Sigma2_hat, dtype=float))
    if S1.shape != S2.shape:
        raise ValueError(f"shape mismatch: {S1.shape} vs {S2.shape}")
    gap = S2 - S1
    gap = 0.5 * (gap + gap.T)
    min_eig = float(np.linalg.eigvalsh(gap).min())
    return EfficiencyGap(gap=gap, min_eigenvalue=min_eig, psd=min_eig >= -tol)


def estimate_sandwich(points, y, zeta_hat: KrrModel, model: ComputerModel,
                      theta_hat) -> SandwichEstimate:
    """Assemble every sandwich quantity from one dataset and fit."""
    pts, yv = as_points(points), np.asarray(y, dtype=float).reshape(-1)
    s2 = estimate_sigma2(pts, yv, zeta_hat)
    W = estimate_W(model, theta_hat, pts)
    zfun = lambda p: rkhs.predict(zeta_hat, p)
    V = estimate_V(model, zfun, theta_hat, pts)
    S2m = sigma2_matrix(W, s2, model, zfun, theta_hat, pts)
    n = pts.shape[0]
    return SandwichEstimate(V_hat=V, W_hat=W, sigma2_hat=s2, Sigma2_hat=S2m,
                            cov_l2=l2_cov(V, W, s2, n),
                            cov_ols=ols_cov(V, S2m, n), n=n)


# ---------------------------------------------------------------------------
# Population (quadrature) versions, used as Monte-Carlo oracles.

def population_W(model: ComputerModel, theta, rule: QuadratureRule) -> np.ndarray:
    """Quadrature version of W under the uniform density on the domain."""
    _require_smooth(model)
    G = model.grad_theta(rule.nodes, theta)
    vol = float(np.sum(rule.weights))
    return (G * rule.weights[:, None]).T @ G / vol


def population_V(model: ComputerModel, zeta: Callable[[np.ndarray], np.ndarray],
                 theta, rule: QuadratureRule) -> np.ndarray:
    """Quadrature version of the curvature V under the uniform density."""
    _require_smooth(model)
    G = model.grad_theta(rule.nodes, theta)
    H = model.hess_theta(rule.nodes, theta)
    delta = np.asarray(zeta(rule.nodes), dtype=float).reshape(-1) - model(rule.nodes, theta)
    vol = float(np.sum(rule.weights))
    V = 2.0 * ((G * rule.weights[:, None]).T @ G
               - np.einsum("i,i,ijk->jk", rule.weights, delta, H)) / vol
    return 0.5 * (V + V.T)


def population_sigma2_matrix(model: ComputerModel,
                             zeta: Callable[[np.ndarray], np.ndarray],
                             theta, sigma2: float,
                             rule: QuadratureRule) -> np.ndarray:
    """Quadrature version of Sigma2 under the uniform density."""
    _require_smooth(model)
    G = model.grad_theta(rule.nodes, theta)
    delta = np.asarray(zeta(rule.nodes), dtype=float).reshape(-1) - model(rule.nodes, theta)
    vol = float(np.sum(rule.weights))
    W = (G * rule.weights[:, None]).T @ G / vol
    extra = 4.0 * (G * (rule.weights * delta ** 2)[:, None]).T @ G / vol
    S = 4.0 * sigma2 * W + extra
    return 0.5 * (S + S.T)
