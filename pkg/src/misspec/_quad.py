"""Jump-aware composite trapezoid rules on a fixed node set."""

from __future__ import annotations

import numpy as np


def merge_breaks(nodes: np.ndarray, breaks=()) -> np.ndarray:
    inner = [b for b in breaks if nodes[0] < b < nodes[-1]]
    if not inner:
        return nodes
    return np.union1d(nodes, np.asarray(inner, dtype=float))


def panel_integrals(f, nodes: np.ndarray, breaks=()) -> np.ndarray:
    """Trapezoid integral of ``f`` over each panel ``[nodes[i], nodes[i+1]]``.

    ``f(t, side)`` is evaluated with ``side=+1`` at the left end of every
    sub-panel and ``side=-1`` at its right end, so a jump sitting exactly on a
    breakpoint never straddles a sub-panel.  Exact for piecewise-linear ``f``.
    """
    merged = merge_breaks(nodes, breaks)
    right = f(merged[:-1], 1)
    left = f(merged[1:], -1)
    sub = 0.5 * (right + left) * np.diff(merged)
    if merged is nodes:
        return sub
    starts = np.searchsorted(merged, nodes[:-1])
    return np.add.reduceat(sub, starts, axis=-1)


def integrate(f, nodes: np.ndarray, breaks=()) -> float:
    return float(np.sum(panel_integrals(f, nodes, breaks)))


def cumulative(f, nodes: np.ndarray, breaks=()) -> np.ndarray:
    """Running integral ``int_0^{t_i} f``, zero at the first node."""
    out = np.zeros(len(nodes))
    np.cumsum(panel_integrals(f, nodes, breaks), out=out[1:])
    return out


def trapezoid_weights(n_panels: int, step: float) -> np.ndarray:
    w = np.full(n_panels + 1, step)
    w[0] = w[-1] = 0.5 * step
    return w
