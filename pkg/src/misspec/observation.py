"""Wiener noise, synthetic observation paths and grid integrals."""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ._quad import cumulative, integrate, panel_integrals
from .signals import Signal, TimeGrid

Stream = Union[int, Sequence[int]]


def _spawn_key(stream: Stream) -> tuple[int, ...]:
    if isinstance(stream, (int, np.integer)):
        return (int(stream),)
    return tuple(int(s) for s in stream)


def make_rng(seed: int, stream: Stream) -> np.random.Generator:
    """Generator keyed by ``(seed, stream)``.

    The stream tuple is used as a SeedSequence spawn key, so any replication
    can be regenerated on its own without touching the others.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=_spawn_key(stream))
    return np.random.Generator(np.random.PCG64(ss))


def wiener_increments(grid: TimeGrid, seed: int, stream: Stream) -> np.ndarray:
    return make_rng(seed, stream).standard_normal(grid.steps) * np.sqrt(grid.step)


@dataclass(frozen=True)
class WienerPath:
    grid: TimeGrid
    increments: np.ndarray
    seed: int
    stream: tuple[int, ...]

    @property
    def values(self) -> np.ndarray:
        """``W`` at the grid nodes, starting from ``W_0 = 0``."""
        out = np.zeros(self.grid.steps + 1)
        np.cumsum(self.increments, out=out[1:])
        return out


@dataclass(frozen=True)
class ObservationPath:
    """Discretized ``X`` on a grid, split into its drift and noise parts."""

    grid: TimeGrid
    values: np.ndarray
    eps: float
    drift: np.ndarray
    noise: np.ndarray
    truth: Signal | None = None
    theta0: float | None = None
    seed: int | None = None
    stream: tuple[int, ...] | None = None


def sample_wiener(grid: TimeGrid, seed: int, stream: Stream = 0) -> WienerPath:
    return WienerPath(grid, wiener_increments(grid, seed, stream), int(seed), _spawn_key(stream))


def drift_increments(truth: Signal, theta0: float, grid: TimeGrid) -> np.ndarray:
    """``int_{t_i}^{t_{i+1}} S(theta0, s) ds`` per panel, split at the jump."""
    return panel_integrals(lambda t, side: truth.value(theta0, t, side), grid.nodes,
                           truth.breakpoints(theta0))


def synthesize(truth: Signal, theta0: float, eps: float, wiener: WienerPath) -> ObservationPath:
    if eps < 0:
        raise ValueError(f"noise level must be >= 0, got {eps}")
    grid = wiener.grid
    drift = np.zeros(grid.steps + 1)
    np.cumsum(drift_increments(truth, theta0, grid), out=drift[1:])
    noise = eps * wiener.values
    return ObservationPath(grid, drift + noise, float(eps), drift, noise, truth, float(theta0),
                           wiener.seed, wiener.stream)


def _node_values(f, grid: TimeGrid) -> np.ndarray:
    if callable(f):
        return np.broadcast_to(np.asarray(f(grid.nodes), dtype=float), grid.nodes.shape)
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return np.full(grid.nodes.shape, float(f))
    return f


def ito_integral(f: Callable | np.ndarray | float, path: ObservationPath | WienerPath) -> float:
    """Left-endpoint sum ``sum_i f(t_i) (X_{i+1} - X_i)``."""
    fv = _node_values(f, path.grid)
    return float(np.dot(fv[:-1], np.diff(path.values)))


def riemann_integral(f: Callable, grid: TimeGrid, breakpoints=()) -> float:
    """Trapezoid rule for ``int_0^T f dt`` with extra breakpoints.

    ``f`` takes ``t`` or ``(t, side)``; the two-argument form lets a jump
    sitting on a breakpoint be evaluated from each side.
    """
    return integrate(_sided(f), grid.nodes, breakpoints)


def cumulative_integral(f: Callable, grid: TimeGrid, breakpoints=()) -> np.ndarray:
    return cumulative(_sided(f), grid.nodes, breakpoints)


def _sided(f):
    try:
        n_args = len(inspect.signature(f).parameters)
    except (TypeError, ValueError):
        n_args = 1
    if n_args >= 2:
        return lambda t, side: np.broadcast_to(np.asarray(f(t, side), dtype=float), np.shape(t))
    return lambda t, side: np.broadcast_to(np.asarray(f(t), dtype=float), np.shape(t))


def write_path_csv(path: ObservationPath, filename) -> None:
    """Dump ``(t, X_t)`` with 17 significant digits."""
    from .io import format_float

    with open(filename, "w", newline="") as fh:
        fh.write("t,X_t\n")
        for t, x in zip(path.grid.nodes, path.values):
            fh.write(f"{format_float(t)},{format_float(x)}\n")
