"""Pseudo-MLE, Bayesian and trajectory-fitting estimators on gridded paths.

The single-path functions (``pmle``, ``bayes``, ``tfe``) are thin wrappers
around estimator engines that precompute everything depending only on the
assumed model and the grid, then process batches of paths at once.  The
Monte Carlo driver uses the engines directly.

Change-point models get exact treatment: with left-endpoint sums the
log-likelihood ratio is constant in theta on each grid cell, so prefix sums
give its value on every cell in O(n).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from ._quad import cumulative, integrate, trapezoid_weights
from .errors import InvalidSpecError, NumericUnderflowError
from .functionals import COARSE_POINTS, kl_minimizer, phi, tol_theta
from .observation import ObservationPath, ito_integral
from .optimize import refine
from .signals import ChangePoint, ParamWindow, Signal, TimeGrid

log = logging.getLogger(__name__)

BAYES_POINTS = 4096
LOG_FLOOR = -700.0

BOUNDARY_MLE = 1
BOUNDARY_TFE = 2


@dataclass(frozen=True)
class EstimateRecord:
    rep: int
    eps: float
    theta_mle: float
    loglr: float
    theta_bayes: float | None = None
    theta_tfe: float | None = None
    boundary_flag: int = 0    # bit 1: pseudo-MLE on the window edge, bit 2: TFE
    noiseless: bool = False

    CSV_HEADER = ("rep", "eps", "theta_mle", "theta_bayes", "theta_tfe", "loglr", "boundary_flag")

    def row(self) -> tuple:
        return (self.rep, self.eps, self.theta_mle, self.theta_bayes, self.theta_tfe, self.loglr,
                self.boundary_flag)


@dataclass(frozen=True)
class Prior:
    """Prior density on the window; ``None`` means uniform.

    Only ratios of the density matter, so it need not be normalized.
    """

    density: Callable | None = None

    @classmethod
    def uniform(cls) -> "Prior":
        return cls(None)

    @classmethod
    def tabulated(cls, theta: Sequence[float], values: Sequence[float]) -> "Prior":
        theta = np.asarray(theta, dtype=float)
        values = np.asarray(values, dtype=float)
        return cls(lambda x: np.interp(x, theta, values))

    def log_weights(self, theta: np.ndarray) -> np.ndarray:
        """``log(p / max p)`` on the given points."""
        theta = np.asarray(theta, dtype=float)
        if self.density is None:
            return np.zeros(theta.shape)
        p = np.broadcast_to(np.asarray(self.density(theta), dtype=float), theta.shape)
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise InvalidSpecError("prior density must be finite and positive on the window")
        return np.log(p / p.max())


@dataclass(frozen=True)
class PointEstimate:
    theta: float
    objective: float
    boundary: bool


# Deterministic building blocks -------------------------------------------

def m_cumulative(assumed: Signal, theta: float, grid: TimeGrid) -> np.ndarray:
    """``m(theta, t_i) = int_0^{t_i} M(theta, s) ds`` at every node."""
    return cumulative(lambda t, side: assumed.value(theta, t, side), grid.nodes,
                      assumed.breakpoints(theta))


def _square_integral(assumed: Signal, theta: float, grid: TimeGrid) -> float:
    # dt-term of the log-LR: cell rule for change points, trapezoid otherwise
    if isinstance(assumed, ChangePoint):
        return float(np.sum(assumed.value(theta, grid.nodes[:-1]) ** 2) * grid.step)
    return integrate(lambda t, side: assumed.value(theta, t, side) ** 2, grid.nodes,
                     assumed.breakpoints(theta))


def log_pseudo_lr(assumed: Signal, theta: float, path: ObservationPath) -> float:
    """``eps^-2 int M dX - (2 eps^2)^-1 int M^2 dt``.

    At ``eps = 0`` returns the noiseless objective ``-phi(theta)`` instead.
    """
    grid = path.grid
    if path.eps == 0:
        _need_truth(path)
        return -phi(assumed, path.truth, path.theta0, theta, grid)
    m = assumed.value(theta, grid.nodes)
    val = ito_integral(m, path) - 0.5 * _square_integral(assumed, theta, grid)
    return val / path.eps ** 2


def _need_truth(path: ObservationPath) -> None:
    if path.truth is None or path.theta0 is None:
        raise InvalidSpecError("a noiseless path must carry its true signal and theta0")


def _as_batch(values: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.asarray(values, dtype=float))


# Engines -------------------------------------------------------------------

class Engine:
    """Estimators for one (assumed model, window, grid) on batches of paths.

    Batches are arrays of path values with shape ``(B, n + 1)``.
    """

    def __init__(self, assumed: Signal, window: ParamWindow, grid: TimeGrid,
                 prior: Prior | None = None):
        window.check_inside(grid)
        self.assumed = assumed
        self.window = window
        self.grid = grid
        self.prior = prior or Prior.uniform()
        self.lo, self.hi = window.inner(grid)
        if not self.lo < self.hi:
            raise InvalidSpecError("window is narrower than two grid steps")
        self.tol = tol_theta(window)
        self.tw = trapezoid_weights(grid.steps, grid.step)

    def mle(self, X: np.ndarray, eps: float):
        """Return ``(theta, loglr, boundary)`` arrays."""
        raise NotImplementedError

    def bayes(self, X: np.ndarray, eps: float) -> np.ndarray:
        raise NotImplementedError

    def tfe(self, X: np.ndarray):
        """Return ``(theta, boundary)`` arrays."""
        raise NotImplementedError


class ChangePointEngine(Engine):
    """Exact cell-by-cell evaluation for change-point models."""

    def __init__(self, assumed: ChangePoint, window, grid, prior=None):
        super().__init__(assumed, window, grid, prior)
        t = grid.nodes
        dt = grid.step
        self.b = assumed.before(t[:-1])
        self.a = assumed.after(t[:-1])
        self.b_sq = 0.5 * self.b ** 2 * dt
        self.a_sq = 0.5 * self.a ** 2 * dt
        # cell k is theta in (t_{k-1}, t_k]; keep the cells inside [lo, hi]
        tiny = 1e-9 * dt
        k = np.arange(1, grid.steps + 1)
        keep = (t[k - 1] >= self.lo - tiny) & (t[k] <= self.hi + tiny)
        self.cells = k[keep]
        if len(self.cells) < 2:
            raise InvalidSpecError("window holds fewer than two grid cells")
        self.mids = 0.5 * (t[self.cells - 1] + t[self.cells])
        self.log_prior = self.prior.log_weights(self.mids)
        # antiderivatives for the trajectory fit
        self.H = assumed.before.integral()
        self.G = assumed.after.integral()
        self.Hn = self.H(t)
        self.Gn = self.G(t)
        node_keep = (t >= self.lo - tiny) & (t <= self.hi + tiny)
        self.tnodes = np.flatnonzero(node_keep)

    def cell_loglr(self, X: np.ndarray) -> np.ndarray:
        """``eps^2`` times the log-LR on every candidate cell, shape ``(B, cells)``."""
        dX = np.diff(_as_batch(X), axis=1)
        A = np.cumsum(self.b * dX - self.b_sq, axis=1)
        Bc = np.cumsum(self.a * dX - self.a_sq, axis=1)
        j = self.cells - 1
        return A[:, j] + (Bc[:, -1:] - Bc[:, j])

    def mle(self, X, eps):
        L = self.cell_loglr(X)
        idx = np.argmax(L, axis=1)
        rows = np.arange(L.shape[0])
        boundary = (idx == 0) | (idx == L.shape[1] - 1)
        return self.mids[idx], L[rows, idx] / eps ** 2, boundary

    def bayes(self, X, eps, L: np.ndarray | None = None):
        if L is None:
            L = self.cell_loglr(X)
        return _posterior_mean(L / eps ** 2 + self.log_prior, self.mids)

    def both(self, X, eps):
        L = self.cell_loglr(X)
        idx = np.argmax(L, axis=1)
        rows = np.arange(L.shape[0])
        boundary = (idx == 0) | (idx == L.shape[1] - 1)
        return (self.mids[idx], L[rows, idx] / eps ** 2, boundary,
                self.bayes(X, eps, L))

    def _fit_sums(self, X: np.ndarray):
        w = self.tw
        D = X - self.Hn
        Y = X - self.Gn
        P = np.cumsum(w * D * D, axis=1)
        c2 = np.cumsum(w * Y * Y, axis=1)
        c1 = np.cumsum(w * Y, axis=1)
        cw = np.cumsum(w)
        S2 = c2[:, -1:] - c2
        S1 = c1[:, -1:] - c1
        W = cw[-1] - cw
        return P, S2, S1, W

    def tfe(self, X):
        X = _as_batch(X)
        t = self.grid.nodes
        P, S2, S1, W = self._fit_sums(X)
        ks = self.tnodes
        c = self.Hn[ks] - self.Gn[ks]
        J = P[:, ks] + S2[:, ks] - 2 * c * S1[:, ks] + c * c * W[ks]
        best = np.argmin(J, axis=1)
        out = np.empty(X.shape[0])
        bnd = (best == 0) | (best == len(ks) - 1)
        for r in range(X.shape[0]):
            k = ks[best[r]]
            theta, jval = float(t[k]), float(J[r, best[r]])
            # inside a cell only c(theta) = H - G moves; J is quadratic in c
            for j, a, b in ((k - 1, t[k - 1], t[k]), (k, t[k], t[min(k + 1, len(t) - 1)])):
                if j < 0 or j >= len(t) - 1 or a < self.lo or b > self.hi or W[j] <= 0:
                    continue
                target = S1[r, j] / W[j]
                root = _solve_cell(lambda x: self.H(x) - self.G(x) - target, a, b)
                if root is None:
                    continue
                val = P[r, j] + S2[r, j] - S1[r, j] ** 2 / W[j]
                if val < jval or (val == jval and root < theta):
                    theta, jval = root, val
            out[r] = theta
        return out, bnd


def _solve_cell(f, a: float, b: float) -> float | None:
    fa, fb = f(a), f(b)
    if fa == 0 or fb == 0 or fa * fb > 0:
        return None
    return float(brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))


class ScanEngine(Engine):
    """Coarse scan on 512 points plus per-path refinement, for all other models."""

    def __init__(self, assumed: Signal, window, grid, prior=None, points: int = COARSE_POINTS):
        super().__init__(assumed, window, grid, prior)
        self.thetas = np.linspace(self.lo, self.hi, points)
        t = grid.nodes
        self.M = np.stack([np.broadcast_to(assumed.value(th, t[:-1]), (grid.steps,))
                           for th in self.thetas])
        self.Q = np.array([_square_integral(assumed, th, grid) for th in self.thetas])
        self.smooth = assumed.smooth_in_theta
        self._bayes = None
        self._fit = None

    # log-LR
    def _f(self, th: float, dX: np.ndarray) -> float:
        m = self.assumed.value(th, self.grid.nodes[:-1])
        return -(float(np.dot(m, dX)) - 0.5 * _square_integral(self.assumed, th, self.grid))

    def _df(self, th: float, dX: np.ndarray) -> float:
        t = self.grid.nodes
        md = self.assumed.dtheta(th, t[:-1])
        cross = integrate(lambda s, side: self.assumed.dtheta(th, s) * self.assumed.value(th, s, side),
                          t, self.assumed.breakpoints(th))
        return -(float(np.dot(md, dX)) - cross)

    def mle(self, X, eps):
        X = _as_batch(X)
        dX = np.diff(X, axis=1)
        L = dX @ self.M.T - 0.5 * self.Q
        theta = np.empty(len(X))
        val = np.empty(len(X))
        bnd = np.zeros(len(X), dtype=bool)
        for r in range(len(X)):
            d = dX[r]
            res = refine(lambda th: self._f(th, d), self.thetas, -L[r], self.tol,
                         (lambda th: self._df(th, d)) if self.smooth else None)
            theta[r], val[r], bnd[r] = res.x, -res.fx / eps ** 2, res.on_boundary
        return theta, val, bnd

    def bayes(self, X, eps):
        if self._bayes is None:
            th = np.linspace(self.lo, self.hi, BAYES_POINTS)
            t = self.grid.nodes
            M = np.stack([np.broadcast_to(self.assumed.value(x, t[:-1]), (self.grid.steps,)) for x in th])
            Q = np.array([_square_integral(self.assumed, x, self.grid) for x in th])
            w = trapezoid_weights(BAYES_POINTS - 1, th[1] - th[0])
            self._bayes = (th, M, Q, np.log(w) + self.prior.log_weights(th))
        th, M, Q, logw = self._bayes
        dX = np.diff(_as_batch(X), axis=1)
        L = dX @ M.T - 0.5 * Q
        return _posterior_mean(L / eps ** 2 + logw, th)

    # trajectory fit
    def _fit_tables(self):
        if self._fit is None:
            m = np.stack([m_cumulative(self.assumed, th, self.grid) for th in self.thetas])
            self._fit = (m * self.tw, np.sum(self.tw * m * m, axis=1))
        return self._fit

    def _fit_value(self, th: float, x: np.ndarray) -> float:
        r = x - m_cumulative(self.assumed, th, self.grid)
        return float(np.dot(self.tw, r * r))

    def _fit_slope(self, th: float, x: np.ndarray) -> float:
        g = self.grid
        r = x - m_cumulative(self.assumed, th, g)
        md = cumulative(lambda t, side: self.assumed.dtheta(th, t), g.nodes)
        return -2.0 * float(np.dot(self.tw, r * md))

    def tfe(self, X):
        X = _as_batch(X)
        mw, msq = self._fit_tables()
        J = np.sum(self.tw * X * X, axis=1)[:, None] - 2 * X @ mw.T + msq
        theta = np.empty(len(X))
        bnd = np.zeros(len(X), dtype=bool)
        for r in range(len(X)):
            x = X[r]
            res = refine(lambda th: self._fit_value(th, x), self.thetas, J[r], self.tol,
                         (lambda th: self._fit_slope(th, x)) if self.smooth else None)
            theta[r], bnd[r] = res.x, res.on_boundary
        return theta, bnd


def _posterior_mean(logw: np.ndarray, theta: np.ndarray) -> np.ndarray:
    logw = np.atleast_2d(logw)
    if not np.all(np.isfinite(logw)):
        raise NumericUnderflowError("log posterior weights are not finite")
    shifted = logw - logw.max(axis=1, keepdims=True)
    w = np.where(shifted < LOG_FLOOR, 0.0, np.exp(np.maximum(shifted, LOG_FLOOR)))
    total = w.sum(axis=1)
    if np.any(total <= 0):
        raise NumericUnderflowError("posterior mass vanished after max-normalization")
    return (w @ theta) / total


def make_engine(assumed: Signal, window: ParamWindow, grid: TimeGrid,
                prior: Prior | None = None) -> Engine:
    if isinstance(assumed, ChangePoint):
        return ChangePointEngine(assumed, window, grid, prior)
    return ScanEngine(assumed, window, grid, prior)


# Single-path API -----------------------------------------------------------

def pmle_detail(assumed: Signal, window: ParamWindow, path: ObservationPath) -> PointEstimate:
    if path.eps == 0:
        _need_truth(path)
        th = kl_minimizer(assumed, path.truth, path.theta0, window, path.grid)
        return PointEstimate(th, log_pseudo_lr(assumed, th, path), False)
    theta, val, bnd = make_engine(assumed, window, path.grid).mle(path.values, path.eps)
    return PointEstimate(float(theta[0]), float(val[0]), bool(bnd[0]))


def pmle(assumed: Signal, window: ParamWindow, path: ObservationPath) -> float:
    """Maximizer of the pseudo log-likelihood ratio over the window."""
    return pmle_detail(assumed, window, path).theta


def bayes(assumed: Signal, window: ParamWindow, prior: Prior | None, path: ObservationPath) -> float:
    """Posterior mean under the pseudo-likelihood.

    At ``eps = 0`` the posterior collapses onto the pseudo-MLE limit.
    """
    if path.eps == 0:
        return pmle(assumed, window, path)
    return float(make_engine(assumed, window, path.grid, prior).bayes(path.values, path.eps)[0])


def tfe_detail(assumed: Signal, window: ParamWindow, path: ObservationPath) -> PointEstimate:
    engine = make_engine(assumed, window, path.grid)
    theta, bnd = engine.tfe(path.values)
    th = float(theta[0])
    return PointEstimate(th, trajectory_misfit(assumed, th, path), bool(bnd[0]))


def tfe(assumed: Signal, window: ParamWindow, path: ObservationPath) -> float:
    """Minimizer of ``int (X_t - m(theta, t))^2 dt`` over the window."""
    return tfe_detail(assumed, window, path).theta


def trajectory_misfit(assumed: Signal, theta: float, path: ObservationPath) -> float:
    r = path.values - m_cumulative(assumed, theta, path.grid)
    return float(np.dot(trapezoid_weights(path.grid.steps, path.grid.step), r * r))
