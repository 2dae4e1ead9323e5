"""Argmax limit laws of drifted two-sided Wiener processes, and the Gaussian limit.

Three laws are sampled on a lattice over ``[-U, U]``:

* quadratic:  argmax ``delta W(u) - gamma u^2 / 2``
* power:      argmax ``W(u) - |u|^(1+kappa) / (1+kappa)``, ``kappa > 1/2``
* linear-cp:  argmax ``delta W(u) - delta^2 |u| / 2``

``W`` is built from two independent one-sided Wiener paths, each with its
own RNG stream.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidSpecError, TruncationTooSmallError, UnknownNameError
from .functionals import curvature_smooth, fisher_info
from .observation import make_rng
from .signals import Signal, TimeGrid

log = logging.getLogger(__name__)

TAIL_TARGET = 1e-6
LATTICE_POINTS = 1000      # lattice steps per side
BLOCK = 1000               # samples per RNG block
HIT_FRACTION = 0.9
MAX_HIT_RATE = 1e-3

KINDS = ("quadratic", "power", "linear-cp")


@dataclass(frozen=True)
class ArgmaxLawSpec:
    kind: str
    delta: float = 1.0
    gamma: float = 1.0
    kappa: float = 1.0
    truncation: float | None = None
    step: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownNameError(f"unknown limit law {self.kind!r}; known: {', '.join(KINDS)}")
        if self.kind == "power":
            if not (self.kappa > 0.5 and math.isfinite(self.kappa)):
                raise InvalidSpecError(f"power law needs kappa > 1/2, got {self.kappa}")
        else:
            if not self.delta > 0:
                raise InvalidSpecError(f"delta must be positive, got {self.delta}")
            if self.kind == "quadratic" and not self.gamma > 0:
                raise InvalidSpecError(f"gamma must be positive, got {self.gamma}")
        if self.truncation is None:
            object.__setattr__(self, "truncation", default_truncation(self))
        if self.step is None:
            object.__setattr__(self, "step", self.truncation / LATTICE_POINTS)
        if not (self.truncation > 0 and 0 < self.step <= 1e-3 * self.truncation * (1 + 1e-12)):
            raise InvalidSpecError("lattice step must be positive and at most U / 1000")

    @classmethod
    def quadratic(cls, delta: float, gamma: float, **kw) -> "ArgmaxLawSpec":
        return cls("quadratic", delta=delta, gamma=gamma, **kw)

    @classmethod
    def power(cls, kappa: float, **kw) -> "ArgmaxLawSpec":
        return cls("power", kappa=kappa, **kw)

    @classmethod
    def linear_cp(cls, delta: float, **kw) -> "ArgmaxLawSpec":
        return cls("linear-cp", delta=delta, **kw)

    def drift(self, u: np.ndarray) -> np.ndarray:
        au = np.abs(u)
        if self.kind == "quadratic":
            return -0.5 * self.gamma * au ** 2
        if self.kind == "power":
            return -au ** (1 + self.kappa) / (1 + self.kappa)
        return -0.5 * self.delta ** 2 * au

    @property
    def sigma(self) -> float:
        return 1.0 if self.kind == "power" else self.delta

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "truncation": self.truncation, "step": self.step}
        if self.kind == "power":
            d["kappa"] = self.kappa
        else:
            d["delta"] = self.delta
            if self.kind == "quadratic":
                d["gamma"] = self.gamma
        return d


def default_truncation(spec: ArgmaxLawSpec) -> float:
    """Half-width beyond which the drift swamps the noise with tail below 1e-6."""
    log_t = math.log(1 / TAIL_TARGET)
    if spec.kind == "quadratic":
        # exp(-gamma^2 U^2 / (8 delta^2)) <= target
        return spec.delta / spec.gamma * math.sqrt(8 * log_t)
    if spec.kind == "power":
        return (5.25 * (1 + spec.kappa)) ** (1 / spec.kappa)
    # exp(-delta^2 U / 8) <= target
    return 8 * log_t / spec.delta ** 2


@dataclass(frozen=True)
class ArgmaxSample:
    values: np.ndarray
    hits: int

    @property
    def hit_rate(self) -> float:
        return self.hits / len(self.values)


def _block(spec: ArgmaxLawSpec, seed: int, domain: int, block: int, size: int) -> np.ndarray:
    L = int(round(spec.truncation / spec.step))
    u = spec.step * np.arange(1, L + 1)
    drift = spec.drift(u)
    scale = spec.sigma * math.sqrt(spec.step)
    path = np.empty((size, 2 * L + 1))
    path[:, L] = 0.0
    for side in (0, 1):
        inc = make_rng(seed, (domain, block, side)).standard_normal((size, L))
        w = np.cumsum(inc, axis=1)
        w *= scale
        w += drift
        if side == 0:
            path[:, :L] = w[:, ::-1]
        else:
            path[:, L + 1:] = w
    # first maximum means the smallest u on ties
    idx = np.argmax(path, axis=1)
    return (idx - L) * spec.step


def sample_argmax_detail(spec: ArgmaxLawSpec, seed: int, count: int, domain: int = 0) -> ArgmaxSample:
    if count < 1:
        raise InvalidSpecError("count must be at least 1")
    blocks = []
    for b in range(-(-count // BLOCK)):
        size = min(BLOCK, count - b * BLOCK)
        blocks.append(_block(spec, seed, domain, b, size))
    values = np.concatenate(blocks)
    hits = int(np.count_nonzero(np.abs(values) > HIT_FRACTION * spec.truncation))
    return ArgmaxSample(values, hits)


def sample_argmax(spec: ArgmaxLawSpec, seed: int, count: int, domain: int = 0) -> np.ndarray:
    """Lattice argmax samples; raises when more than 0.1% land near the truncation edge."""
    s = sample_argmax_detail(spec, seed, count, domain)
    if s.hits >= MAX_HIT_RATE * count and s.hits > 0:
        raise TruncationTooSmallError(
            f"{s.hits} of {count} samples within 10% of the truncation U={spec.truncation:.6g}")
    return s.values


def ks_critical(n: int, m: int, coeff: float = 1.628) -> float:
    """Two-sample KS critical value at the 99% level (asymptotic)."""
    return coeff * math.sqrt((n + m) / (n * m))


def quadratic_scaling_check(delta: float, gamma: float, seed: int, count: int) -> float:
    """KS distance between the (delta, gamma) law and the rescaled unit law."""
    from .experiments import ks_two_sample

    a = sample_argmax(ArgmaxLawSpec.quadratic(delta, gamma), seed, count, domain=0)
    r = (delta / gamma) ** (2 / 3)
    b = r * sample_argmax(ArgmaxLawSpec.quadratic(1.0, 1.0), seed, count, domain=1)
    return ks_two_sample(a, b)


@dataclass(frozen=True)
class GaussianLimit:
    variance: float
    fisher: float
    curvature: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def gaussian_limit(assumed: Signal, truth: Signal, theta0: float, grid: TimeGrid,
                   theta_hat: float) -> GaussianLimit:
    """``D^2 = I / c^2`` at the KL minimizer, ``c`` the u^2-coefficient of the log-LR."""
    c = curvature_smooth(assumed, truth, theta0, theta_hat, grid)
    info = fisher_info(assumed, theta_hat, grid)
    return GaussianLimit(info / c ** 2, info, c)


REGIMES = ("regular", "change-point", "disc-vs-disc", "disc-vs-smooth", "remark1", "cusp-vs-smooth")


def rate_exponent(regime: str, kappa: float | None = None) -> Fraction:
    """Exponent ``rho`` such that errors scale like ``eps^rho``."""
    if regime == "regular":
        return Fraction(1)
    if regime in ("change-point", "disc-vs-disc"):
        return Fraction(2)
    if regime == "disc-vs-smooth":
        return Fraction(2, 3)
    if regime in ("remark1", "cusp-vs-smooth"):
        if kappa is None:
            raise InvalidSpecError(f"regime {regime!r} needs kappa")
        k = Fraction(str(kappa))
        return Fraction(2) / (2 * k + 1) if regime == "remark1" else Fraction(2) / (3 - 2 * k)
    raise UnknownNameError(f"unknown regime {regime!r}; known: {', '.join(REGIMES)}")
