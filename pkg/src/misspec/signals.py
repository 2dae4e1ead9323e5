"""Signal families, time grids and parameter windows.

Every family is evaluated as ``value(theta, t, side)`` with numpy
broadcasting over both ``theta`` and ``t``.  ``side`` only matters at a jump:
``+1`` gives the right limit (the stored value, since change-point signals are
right-continuous) and ``-1`` the left limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InvalidSpecError, NotDifferentiableError, UnknownNameError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i * T / n`` on ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise InvalidSpecError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidSpecError(f"steps must be an integer >= 2, got {self.steps}")

    @property
    def step(self) -> float:
        return self.horizon / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(0.0, self.horizon, self.steps + 1)
        nodes.flags.writeable = False
        return nodes

    def with_steps(self, steps: int) -> "TimeGrid":
        return TimeGrid(self.horizon, int(steps))


@dataclass(frozen=True)
class ParamWindow:
    """Open parameter interval ``(lower, upper)``."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0 < self.lower < self.upper):
            raise InvalidSpecError(
                f"window needs 0 < lower < upper, got ({self.lower}, {self.upper})")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def check_inside(self, grid: TimeGrid) -> None:
        if self.upper >= grid.horizon:
            raise InvalidSpecError(
                f"window upper {self.upper} must lie below the horizon {grid.horizon}")

    def inner(self, grid: TimeGrid) -> tuple[float, float]:
        """Closed search interval, one grid step inside the open window."""
        return self.lower + grid.step, self.upper - grid.step

    def contains(self, theta: float) -> bool:
        return self.lower < theta < self.upper


@dataclass(frozen=True)
class TimeFunction:
    """Polynomial in time, ``sum(coeffs[k] * t**k)``."""

    coeffs: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coeffs))
        if not coeffs or not all(math.isfinite(c) for c in coeffs):
            raise InvalidSpecError(f"bad polynomial coefficients {self.coeffs!r}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def const(cls, value: float) -> "TimeFunction":
        return cls((float(value),))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if len(self.coeffs) == 1:
            return np.full(t.shape, self.coeffs[0]) if t.ndim else self.coeffs[0]
        return npoly.polyval(t, self.coeffs)

    def derivative(self) -> "TimeFunction":
        if len(self.coeffs) == 1:
            return TimeFunction((0.0,))
        return TimeFunction(tuple(npoly.polyder(self.coeffs)))

    def integral(self) -> "TimeFunction":
        """Antiderivative vanishing at ``t = 0``."""
        return TimeFunction(tuple(npoly.polyint(self.coeffs)))

    def __add__(self, other: "TimeFunction") -> "TimeFunction":
        return TimeFunction(tuple(npoly.polyadd(self.coeffs, other.coeffs)))

    def __sub__(self, other: "TimeFunction") -> "TimeFunction":
        return TimeFunction(tuple(npoly.polysub(self.coeffs, other.coeffs)))

    def scale(self, c: float) -> "TimeFunction":
        return TimeFunction(tuple(c * x for x in self.coeffs))

    @property
    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coeffs)

    def to_json(self) -> list[float]:
        return list(self.coeffs)


ZERO = TimeFunction((0.0,))


def _sgn(x):
    # sign with sgn(0) = +1, the right-continuous convention used throughout
    return np.where(x >= 0, 1.0, -1.0)


class Signal:
    """Base class for the signal families ``M(theta, t)`` / ``S(theta, t)``."""

    tag: str = ""
    #: twice continuously differentiable in theta
    smooth_in_theta: bool = False
    is_change_point: bool = False

    def value(self, theta, t, side: int = 1):
        raise NotImplementedError

    def dtheta(self, theta, t):
        raise NotImplementedError

    def dtheta2(self, theta, t):
        raise NotImplementedError

    def dt(self, theta, t, side: int = 1):
        raise NotImplementedError

    def breakpoints(self, theta: float) -> tuple[float, ...]:
        """Times where the signal is not smooth in ``t``."""
        return ()

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearDrift(Signal):
    """``t - theta``."""

    tag = "linear-drift"
    smooth_in_theta = True

    def value(self, theta, t, side=1):
        return np.asarray(t, dtype=float) - theta

    def dtheta(self, theta, t):
        return -np.ones(np.broadcast(np.asarray(theta), np.asarray(t)).shape)

    def dtheta2(self, theta, t):
        return np.zeros(np.broadcast(np.asarray(theta), np.asarray(t)).shape)

    def dt(self, theta, t, side=1):
        return np.ones(np.broadcast(np.asarray(theta), np.asarray(t)).shape)

    def to_dict(self):
        return {"family": self.tag}


@dataclass(frozen=True)
class Sine(Signal):
    """``a * sin(omega * t - theta) + offset``."""

    amplitude: float = 1.0
    omega: float = 1.0
    offset: float = 0.0

    tag = "sine"
    smooth_in_theta = True

    def __post_init__(self):
        for name in ("amplitude", "omega", "offset"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpecError(f"sine {name} must be finite")

    def value(self, theta, t, side=1):
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) - theta) + self.offset

    def dtheta(self, theta, t):
        return -self.amplitude * np.cos(self.omega * np.asarray(t, dtype=float) - theta)

    def dtheta2(self, theta, t):
        return -self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) - theta)

    def dt(self, theta, t, side=1):
        return self.amplitude * self.omega * np.cos(self.omega * np.asarray(t, dtype=float) - theta)

    def to_dict(self):
        return {"family": self.tag, "a": self.amplitude, "omega": self.omega, "offset": self.offset}


@dataclass(frozen=True)
class PowerSgn(Signal):
    """``sgn(t - theta) * |t - theta| ** kappa``."""

    kappa: float = 1.0

    tag = "power-sgn"

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise InvalidSpecError(f"power-sgn exponent must be > 0, got {self.kappa}")

    def value(self, theta, t, side=1):
        d = np.asarray(t, dtype=float) - theta
        return _sgn(d) * np.abs(d) ** self.kappa

    def dtheta(self, theta, t):
        d = np.asarray(t, dtype=float) - theta
        k = self.kappa
        if k < 1 and np.any(d == 0):
            raise NotDifferentiableError(f"power-sgn with kappa={k} is singular at t = theta")
        if k == 1:
            return -np.ones(d.shape)
        return -k * np.abs(d) ** (k - 1)

    def dtheta2(self, theta, t):
        d = np.asarray(t, dtype=float) - theta
        k = self.kappa
        if k < 2 and k != 1 and np.any(d == 0):
            raise NotDifferentiableError(f"power-sgn with kappa={k} has no second derivative at t = theta")
        if k == 1:
            return np.zeros(d.shape)
        return k * (k - 1) * _sgn(d) * np.abs(d) ** (k - 2)

    def dt(self, theta, t, side=1):
        return -self.dtheta(theta, t)

    def breakpoints(self, theta):
        return (float(theta),)

    def to_dict(self):
        return {"family": self.tag, "kappa": self.kappa}


@dataclass(frozen=True)
class Cusp(Signal):
    """``a * |t - theta| ** kappa`` with ``0 < kappa < 1/2``."""

    amplitude: float = 1.0
    kappa: float = 0.25

    tag = "cusp"

    def __post_init__(self):
        if not (0 < self.kappa < 0.5):
            raise InvalidSpecError(f"cusp exponent must lie in (0, 1/2), got {self.kappa}")
        if not math.isfinite(self.amplitude):
            raise InvalidSpecError("cusp amplitude must be finite")

    def value(self, theta, t, side=1):
        return self.amplitude * np.abs(np.asarray(t, dtype=float) - theta) ** self.kappa

    def dtheta(self, theta, t):
        d = np.asarray(t, dtype=float) - theta
        if np.any(d == 0):
            raise NotDifferentiableError("cusp signal is not differentiable at t = theta")
        return -self.amplitude * self.kappa * np.sign(d) * np.abs(d) ** (self.kappa - 1)

    def dtheta2(self, theta, t):
        d = np.asarray(t, dtype=float) - theta
        if np.any(d == 0):
            raise NotDifferentiableError("cusp signal is not differentiable at t = theta")
        k = self.kappa
        return self.amplitude * k * (k - 1) * np.abs(d) ** (k - 2)

    def dt(self, theta, t, side=1):
        return -self.dtheta(theta, t)

    def breakpoints(self, theta):
        return (float(theta),)

    def to_dict(self):
        return {"family": self.tag, "a": self.amplitude, "kappa": self.kappa}


@dataclass(frozen=True)
class ChangePoint(Signal):
    """``(h + q)(t)`` before ``theta`` and ``(g + r)(t)`` from ``theta`` on.

    ``q`` and ``r`` are additive perturbations of the two regimes; they
    default to zero.
    """

    h: TimeFunction = field(default_factory=lambda: TimeFunction.const(1.0))
    g: TimeFunction = field(default_factory=lambda: TimeFunction.const(-1.0))
    q: TimeFunction = ZERO
    r: TimeFunction = ZERO

    tag = "step-hg"
    is_change_point = True

    @classmethod
    def sgn(cls) -> "ChangePoint":
        """``sgn(t - theta)``: -1 before the jump, +1 from it on."""
        return cls(TimeFunction.const(-1.0), TimeFunction.const(1.0))

    @cached_property
    def before(self) -> TimeFunction:
        return self.h if self.q.is_zero else self.h + self.q

    @cached_property
    def after(self) -> TimeFunction:
        return self.g if self.r.is_zero else self.g + self.r

    def jump(self, t):
        """``delta(t) = h(t) - g(t)``."""
        return self.h(t) - self.g(t)

    def _pre(self, theta, t, side):
        t = np.asarray(t, dtype=float)
        return t < theta if side >= 0 else t <= theta

    def value(self, theta, t, side=1):
        t = np.asarray(t, dtype=float)
        return np.where(self._pre(theta, t, side), self.before(t), self.after(t))

    def dtheta(self, theta, t):
        t = np.asarray(t, dtype=float)
        if np.any(t == theta):
            raise NotDifferentiableError("change-point signal jumps at t = theta")
        return np.zeros(np.broadcast(np.asarray(theta), t).shape)

    def dtheta2(self, theta, t):
        return self.dtheta(theta, t)

    def dt(self, theta, t, side=1):
        t = np.asarray(t, dtype=float)
        return np.where(self._pre(theta, t, side), self.before.derivative()(t),
                        self.after.derivative()(t))

    def breakpoints(self, theta):
        return (float(theta),)

    def to_dict(self):
        d = {"family": self.tag, "h": self.h.to_json(), "g": self.g.to_json()}
        if not self.q.is_zero:
            d["q"] = self.q.to_json()
        if not self.r.is_zero:
            d["r"] = self.r.to_json()
        return d


FAMILY_TAGS = ("linear-drift", "sgn", "power-sgn", "cusp", "step-hg", "sine")


def _time_function(value) -> TimeFunction:
    if isinstance(value, TimeFunction):
        return value
    if isinstance(value, (int, float)):
        return TimeFunction.const(value)
    return TimeFunction(tuple(value))


def signal_from_dict(d: dict[str, Any]) -> Signal:
    """Build a signal from its config description (inverse of ``to_dict``)."""
    d = dict(d)
    family = d.pop("family", None)
    try:
        if family == "linear-drift":
            return LinearDrift()
        if family == "sgn":
            return ChangePoint.sgn()
        if family == "sine":
            return Sine(float(d.get("a", 1.0)), float(d.get("omega", 1.0)),
                        float(d.get("offset", 0.0)))
        if family == "power-sgn":
            return PowerSgn(float(d["kappa"]))
        if family == "cusp":
            return Cusp(float(d.get("a", 1.0)), float(d["kappa"]))
        if family == "step-hg":
            return ChangePoint(_time_function(d["h"]), _time_function(d["g"]),
                               _time_function(d.get("q", 0.0)), _time_function(d.get("r", 0.0)))
    except KeyError as exc:
        raise InvalidSpecError(f"signal family {family!r} is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidSpecError(f"bad field in signal family {family!r}: {exc}") from None
    raise UnknownNameError(f"unknown signal family {family!r}; known: {', '.join(FAMILY_TAGS)}")


# Module-level operations ---------------------------------------------------

def eval_signal(spec: Signal, theta, t, side: int = 1):
    return spec.value(theta, t, side)


def signal_dtheta(spec: Signal, theta, t):
    """Analytic ``dM/dtheta``; raises NotDifferentiableError at jumps and cusps."""
    return spec.dtheta(theta, t)


def fd_dtheta(spec: Signal, theta: float, t, step: float = 1e-6):
    """Central finite difference in theta, independent of the analytic path."""
    return (spec.value(theta + step, t) - spec.value(theta - step, t)) / (2 * step)
