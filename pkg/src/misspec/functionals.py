"""Deterministic functionals of an (assumed, true) signal pair.

``phi`` is the squared L2 distance between the assumed signal at ``theta``
and the true signal at ``theta0``; its minimizer is the limit of the
pseudo-MLE.  The rest of the module computes the local shape of ``phi``
around that minimizer: curvature, jump size, Fisher information and the
quadratic minorant constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ._quad import integrate, merge_breaks, panel_integrals
from .errors import (
    BoundaryMinimizerError,
    ConditionViolatedError,
    InternalConsistencyError,
    NonUniqueMinimizerError,
    NotApplicableError,
    NotDifferentiableError,
)
from .optimize import refine
from .signals import ChangePoint, Cusp, ParamWindow, PowerSgn, Signal, TimeFunction, TimeGrid

log = logging.getLogger(__name__)

COARSE_POINTS = 512
TOL_THETA_REL = 1e-8
TOL_CURV = 0.01
TOL_MM_REL = 1e-6
CURV_STEPS = (1e-2, 1e-3)


def tol_theta(window: ParamWindow) -> float:
    return TOL_THETA_REL * window.width


def _breaks(assumed: Signal, theta, truth: Signal, theta0) -> tuple[float, ...]:
    return assumed.breakpoints(theta) + truth.breakpoints(theta0)


def phi(assumed: Signal, truth: Signal, theta0: float, theta: float, grid: TimeGrid) -> float:
    """``int_0^T [M(theta, t) - S(theta0, t)]^2 dt``."""

    def f(t, side):
        return (assumed.value(theta, t, side) - truth.value(theta0, t, side)) ** 2

    return integrate(f, grid.nodes, _breaks(assumed, theta, truth, theta0))


def truth_midpoint(truth: Signal, theta0: float, t: float) -> float:
    """``S(theta0, t)`` averaged over its one-sided limits (matters at a jump only)."""
    return 0.5 * float(truth.value(theta0, t, -1) + truth.value(theta0, t, 1))


def phi_dot(assumed: Signal, truth: Signal, theta0: float, theta: float, grid: TimeGrid):
    """Analytic ``d phi / d theta``, or None when the family has none."""
    if isinstance(assumed, ChangePoint):
        s = truth_midpoint(truth, theta0, theta)
        return float((assumed.before(theta) - s) ** 2 - (assumed.after(theta) - s) ** 2)
    if assumed.smooth_in_theta:
        def f(t, side):
            return assumed.dtheta(theta, t) * (assumed.value(theta, t, side) - truth.value(theta0, t, side))
        return 2.0 * integrate(f, grid.nodes, _breaks(assumed, theta, truth, theta0))
    return None


def phi_on_nodes(assumed: ChangePoint, truth: Signal, theta0: float, grid: TimeGrid) -> np.ndarray:
    """``phi(t_k)`` at every grid node in O(n) via running integrals.

    Uses the same sub-panel rule as ``phi`` so the two agree to rounding.
    """
    nodes = grid.nodes
    breaks = truth.breakpoints(theta0)

    def pre(t, side):
        return (assumed.before(t) - truth.value(theta0, t, side)) ** 2

    def post(t, side):
        return (assumed.after(t) - truth.value(theta0, t, side)) ** 2

    a = panel_integrals(pre, nodes, breaks)
    b = panel_integrals(post, nodes, breaks)
    head = np.concatenate(([0.0], np.cumsum(a)))
    tail = np.concatenate((np.cumsum(b[::-1])[::-1], [0.0]))
    return head + tail


@dataclass(frozen=True)
class PhiScan:
    theta: np.ndarray
    values: np.ndarray


def scan_grid(assumed: Signal, window: ParamWindow, grid: TimeGrid) -> np.ndarray:
    """Coarse theta grid: time-grid nodes for change-point models, 512 points otherwise."""
    lo, hi = window.inner(grid)
    if isinstance(assumed, ChangePoint):
        nodes = grid.nodes
        return nodes[(nodes >= lo - 1e-12 * grid.horizon) & (nodes <= hi + 1e-12 * grid.horizon)].copy()
    return np.linspace(lo, hi, COARSE_POINTS)


def phi_scan(assumed: Signal, truth: Signal, theta0: float, window: ParamWindow, grid: TimeGrid,
             thetas: np.ndarray | None = None) -> PhiScan:
    if thetas is None:
        thetas = scan_grid(assumed, window, grid)
        if isinstance(assumed, ChangePoint):
            all_nodes = phi_on_nodes(assumed, truth, theta0, grid)
            idx = np.searchsorted(grid.nodes, thetas)
            return PhiScan(thetas, all_nodes[idx])
    values = np.array([phi(assumed, truth, theta0, float(th), grid) for th in thetas])
    return PhiScan(np.asarray(thetas, dtype=float), values)


def tabulation_grid(window: ParamWindow, grid: TimeGrid) -> np.ndarray:
    lo, hi = window.inner(grid)
    return np.linspace(lo, hi, COARSE_POINTS)


def _check_unique(scan: PhiScan) -> None:
    v = scan.values
    vmin = float(v.min())
    tol = 64 * np.finfo(float).eps * max(1.0, float(np.abs(v).max()))
    near = np.flatnonzero(v <= vmin + tol)
    contiguous = near[-1] - near[0] == len(near) - 1
    if not contiguous or len(near) > 3:
        where = ", ".join(f"{scan.theta[i]:.6g}" for i in near[:6])
        raise NonUniqueMinimizerError(
            f"phi has {len(near)} near-minimal scan points ({where}{', ...' if len(near) > 6 else ''})")


def kl_minimizer(assumed: Signal, truth: Signal, theta0: float, window: ParamWindow,
                 grid: TimeGrid, scan: PhiScan | None = None) -> float:
    """Minimizer of ``phi`` over the window: coarse scan, golden section, derivative polish.

    Raises BoundaryMinimizerError when the scan minimum sits on the window
    edge and NonUniqueMinimizerError when several scan points tie.
    """
    if scan is None:
        scan = phi_scan(assumed, truth, theta0, window, grid)
    _check_unique(scan)
    i = int(np.argmin(scan.values))
    if i == 0 or i == len(scan.theta) - 1:
        side = "lower" if i == 0 else "upper"
        raise BoundaryMinimizerError(
            f"phi is minimal at the {side} window edge theta={scan.theta[i]:.6g}", side,
            float(scan.theta[i]))

    def f(th):
        return phi(assumed, truth, theta0, th, grid)

    def slope(th):
        return phi_dot(assumed, truth, theta0, th, grid)

    dfun = slope if isinstance(assumed, ChangePoint) or assumed.smooth_in_theta else None

    res = refine(f, scan.theta, scan.values, tol_theta(window), dfun)
    return res.x


def necessary_condition_residual(assumed: ChangePoint, truth: Signal, theta0: float,
                                 theta_hat: float, grid: TimeGrid | None = None) -> float:
    """``S(theta0, theta_hat) - (h + g)(theta_hat) / 2`` (midpoint of S at a jump)."""
    if not isinstance(assumed, ChangePoint):
        raise NotApplicableError("the midpoint condition needs a change-point assumed model")
    s = truth_midpoint(truth, theta0, theta_hat)
    return float(s - 0.5 * (assumed.before(theta_hat) + assumed.after(theta_hat)))


def curvature_cp(assumed: ChangePoint, truth: Signal, theta0: float, theta_hat: float,
                 grid: TimeGrid | None = None) -> float:
    """Second derivative of ``phi`` at ``theta_hat`` for a change-point assumed model.

    ``2 (h - S)(h' - S') - 2 (g - S)(g' - S')`` with ``S, S'`` the true signal
    and its time derivative at ``t = theta_hat``; ``h`` is the pre-jump regime.
    """
    if not isinstance(assumed, ChangePoint):
        raise NotApplicableError("curvature_cp needs a change-point assumed model")
    if theta_hat in truth.breakpoints(theta0) and isinstance(truth, ChangePoint):
        raise NotDifferentiableError("the true signal jumps at theta_hat; phi has a corner there")
    t = theta_hat
    s = float(truth.value(theta0, t))
    ds = float(truth.dt(theta0, t))
    h, g = assumed.before, assumed.after
    val = 2 * (h(t) - s) * (h.derivative()(t) - ds) - 2 * (g(t) - s) * (g.derivative()(t) - ds)
    val = float(val)
    if not val > 0:
        raise ConditionViolatedError(f"curvature {val:.6g} is not positive", "M4")
    return val


def second_difference(assumed: Signal, truth: Signal, theta0: float, theta_hat: float,
                      grid: TimeGrid, step: float = 1e-3) -> float:
    """``(phi(x+h) - 2 phi(x) + phi(x-h)) / h^2``, the curvature oracle."""
    p0 = phi(assumed, truth, theta0, theta_hat, grid)
    pp = phi(assumed, truth, theta0, theta_hat + step, grid)
    pm = phi(assumed, truth, theta0, theta_hat - step, grid)
    return (pp - 2 * p0 + pm) / step ** 2


@dataclass(frozen=True)
class CurvatureRegime:
    label: str            # "quadratic" or "non-quadratic"
    coarse: float         # oracle at h = 1e-2
    fine: float           # oracle at h = 1e-3

    @property
    def quadratic(self) -> bool:
        return self.label == "quadratic"


def curvature_regime(assumed: Signal, truth: Signal, theta0: float, theta_hat: float,
                     grid: TimeGrid) -> CurvatureRegime:
    """Quadratic iff the second-difference oracle is stable under a tenfold step change."""
    coarse, fine = (second_difference(assumed, truth, theta0, theta_hat, grid, h) for h in CURV_STEPS)
    stable = fine > 0 and coarse > 0 and abs(coarse - fine) <= 0.2 * abs(fine)
    return CurvatureRegime("quadratic" if stable else "non-quadratic", coarse, fine)


def curvature_smooth(assumed: Signal, truth: Signal, theta0: float, theta_hat: float,
                     grid: TimeGrid) -> float:
    """Coefficient of ``u^2`` in the local expansion of the normalized log-LR.

    ``int Mdot^2 dt + int Mddot (M - S) dt``, which is half the second
    derivative of ``phi``.
    """
    if not assumed.smooth_in_theta:
        raise NotApplicableError(f"{assumed.tag} is not twice differentiable in theta")
    th = theta_hat

    def f(t, side):
        m = assumed.value(th, t, side)
        return assumed.dtheta(th, t) ** 2 + assumed.dtheta2(th, t) * (m - truth.value(theta0, t, side))

    val = integrate(f, grid.nodes, _breaks(assumed, th, truth, theta0))
    if not val > 0:
        raise ConditionViolatedError(f"curvature {val:.6g} is not positive", "R4")
    return val


def fisher_info(assumed: Signal, theta: float, grid: TimeGrid) -> float:
    """``int_0^T Mdot(theta, t)^2 dt``."""
    if isinstance(assumed, ChangePoint):
        raise NotApplicableError("change-point signals have no Fisher information in theta")
    if isinstance(assumed, Cusp) or (isinstance(assumed, PowerSgn) and assumed.kappa <= 0.5):
        raise NotApplicableError(f"{assumed.tag} has infinite Fisher information")
    nodes = merge_breaks(grid.nodes, assumed.breakpoints(theta))
    vals = assumed.dtheta(theta, nodes) ** 2
    return float(trapezoid(vals, nodes))


def minorant_kappa(thetas: np.ndarray, phis: np.ndarray, theta_hat: float, phi_hat: float,
                   window: ParamWindow, curvature: float | None = None,
                   retries: int = 10) -> float:
    """Constant ``k > 0`` with ``phi - phi_hat >= k (theta - theta_hat)^2`` on ``thetas``.

    ``min(m(nu) / (beta - alpha)^2, local)`` where ``m(nu)`` is the smallest
    excess of ``phi`` farther than ``nu`` from the minimizer and ``local`` is
    ``curvature / 4`` (or, when no quadratic curvature exists, the smallest
    ratio ``excess / distance^2`` within ``nu``).  ``nu`` starts at a tenth
    of the window and is halved whenever the pointwise check fails.
    """
    thetas = np.asarray(thetas, dtype=float)
    excess = np.asarray(phis, dtype=float) - phi_hat
    dist = np.abs(thetas - theta_hat)
    nu = window.width / 10
    for _ in range(retries + 1):
        far = dist > nu
        m_nu = float(excess[far].min()) if far.any() else np.inf
        if curvature is not None:
            local = curvature / 4
        else:
            near = ~far & (dist > 0)
            local = float((excess[near] / dist[near] ** 2).min()) if near.any() else np.inf
        kappa = min(m_nu / window.width ** 2, local)
        if np.isfinite(kappa) and kappa > 0 and np.all(excess >= kappa * dist ** 2):
            return float(kappa)
        nu /= 2
    raise InternalConsistencyError(
        f"no positive quadratic minorant found after {retries} halvings of nu")


@dataclass(frozen=True)
class ConditionReport:
    margin_before: float     # min over [alpha, beta] of q - (g - h)/2
    margin_after: float      # min over [alpha, beta] of (h - g)/2 - r
    holds_before: bool
    holds_after: bool

    @property
    def verdict(self) -> bool:
        return self.holds_before and self.holds_after


def check_5152(h: TimeFunction, g: TimeFunction, q: TimeFunction, r: TimeFunction,
               window: ParamWindow, grid: TimeGrid) -> ConditionReport:
    """Check ``q > (g - h)/2`` and ``r < (h - g)/2`` on the window's grid nodes."""
    nodes = grid.nodes
    t = nodes[(nodes >= window.lower) & (nodes <= window.upper)]
    t = np.union1d(t, [window.lower, window.upper])
    delta = h(t) - g(t)
    if np.any(delta <= 0):
        raise ConditionViolatedError("h - g must be positive on the window", "h>g")
    m1 = float(np.min(q(t) + delta / 2))
    m2 = float(np.min(delta / 2 - r(t)))
    return ConditionReport(m1, m2, m1 > 0, m2 > 0)


@dataclass(frozen=True)
class DeterministicProfile:
    """Everything about ``phi`` the Monte Carlo stage needs, computed once."""

    theta_hat: float
    phi_hat: float
    tab_theta: np.ndarray
    tab_phi: np.ndarray
    regime: CurvatureRegime
    curvature_cp: float | None = None
    curvature_smooth: float | None = None
    jump: float | None = None
    fisher: float | None = None
    minorant_kappa: float = float("nan")
    mm_residual: float | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def phi_ddot(self) -> float | None:
        """Second derivative of ``phi`` at the minimizer, when quadratic."""
        if self.curvature_cp is not None:
            return self.curvature_cp
        if self.curvature_smooth is not None:
            return 2 * self.curvature_smooth
        return self.regime.fine if self.regime.quadratic else None


def deterministic_profile(assumed: Signal, truth: Signal, theta0: float, window: ParamWindow,
                          grid: TimeGrid) -> DeterministicProfile:
    theta_hat = kl_minimizer(assumed, truth, theta0, window, grid)
    phi_hat = phi(assumed, truth, theta0, theta_hat, grid)
    tab = tabulation_grid(window, grid)
    tab_phi = np.array([phi(assumed, truth, theta0, float(x), grid) for x in tab])
    regime = curvature_regime(assumed, truth, theta0, theta_hat, grid)
    if isinstance(assumed, Cusp):
        # infinite Fisher information: phi grows like |v|^(1 + 2 kappa), never quadratically
        regime = CurvatureRegime("non-quadratic", regime.coarse, regime.fine)
    notes = []
    c_cp = c_sm = jump = fisher = resid = None
    if isinstance(assumed, ChangePoint):
        jump = float(assumed.jump(theta_hat))
        resid = necessary_condition_residual(assumed, truth, theta0, theta_hat, grid)
        if regime.quadratic:
            c_cp = curvature_cp(assumed, truth, theta0, theta_hat, grid)
            if abs(c_cp - regime.fine) > TOL_CURV * abs(regime.fine):
                notes.append(f"curvature formula {c_cp:.6g} disagrees with oracle {regime.fine:.6g}")
    elif assumed.smooth_in_theta:
        c_sm = curvature_smooth(assumed, truth, theta0, theta_hat, grid)
        fisher = fisher_info(assumed, theta_hat, grid)
    if isinstance(assumed, Cusp):
        notes.append("cusp: limit law out of scope")
    ddot = c_cp if c_cp is not None else (2 * c_sm if c_sm is not None else
                                          (regime.fine if regime.quadratic else None))
    kappa = minorant_kappa(tab, tab_phi, theta_hat, phi_hat, window, ddot)
    return DeterministicProfile(theta_hat, phi_hat, tab, tab_phi, regime, c_cp, c_sm, jump, fisher,
                                kappa, resid, tuple(notes))
