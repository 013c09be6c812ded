"""Fixed-step classical Runge-Kutta integration."""

from __future__ import annotations

import numpy as np


def rk4_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(f, y0, t0: float, t1: float, h: float, breaks=()) -> np.ndarray:
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t1`` with steps clipped at ``breaks``."""
    y = np.array(y0, dtype=float)
    for a, b in zip(*_segments(t0, t1, h, breaks)):
        y = rk4_step(f, a, y, b - a)
    return y


def time_grid(t0: float, t1: float, h: float, breaks=()) -> np.ndarray:
    """Multiples of ``h`` from ``t0`` merged with the break points inside ``(t0, t1)``."""
    n = int(np.floor((t1 - t0) / h + 1e-9))
    pts = t0 + h * np.arange(n + 1)
    extra = [b for b in breaks if t0 < b < t1]
    pts = np.union1d(pts, np.asarray(extra, dtype=float))
    if t1 - pts[-1] > 1e-9 * max(1.0, abs(t1)):
        pts = np.append(pts, t1)
    # merge points closer than rounding noise
    keep = np.concatenate([[True], np.diff(pts) > 1e-9 * max(1.0, abs(t1))])
    return pts[keep]


def _segments(t0, t1, h, breaks):
    g = time_grid(t0, t1, h, breaks)
    return g[:-1], g[1:]
