"""Log-log rate fits and cumulative-work measurements on adaptive histories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError

__all__ = ["RateFit", "fit_rate", "fit_slope", "ncum_at_tolerance", "NcumResult"]


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of ``log q`` against ``log N`` over a window of levels."""

    quantity: str
    slope: float
    window: tuple
    residual: float
    points: int

    def line(self):
        lo, hi = self.window
        return f"{self.quantity},{self.slope:.6f},{lo}-{hi},{self.residual:.3e}"


def fit_slope(N, q, decades=1.0, min_points=4, name="q"):
    """Slope over the trailing window where ``N`` spans ``decades`` decades.

    Levels with non-positive or non-finite ``q`` are dropped before the
    window is chosen.  Raises :class:`InputError` when fewer than
    ``min_points`` levels remain or the kept levels do not span the window.
    """
    N = np.asarray(N, float)
    q = np.asarray(q, float)
    if N.shape != q.shape:
        raise InputError("N and q must have the same length")
    ok = np.isfinite(q) & (q > 0) & (N > 0)
    N, q = N[ok], q[ok]
    if len(N) == 0:
        raise InputError(f"no positive values of {name} to fit")
    lo = N[-1] / 10.0**decades
    sel = N >= lo * (1 - 1e-12)
    # the window has to reach back a full span; otherwise the fit collapses
    if N[0] > lo * (1 + 1e-12) or sel.sum() < min_points:
        raise InputError(f"fit window for {name} needs {min_points} levels spanning "
                         f"{decades:g} decade(s); have {int(sel.sum())} in [{N[sel][0]:.0f}, {N[-1]:.0f}]")
    x, y = np.log(N[sel]), np.log(q[sel])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return RateFit(name, float(coef[0]), (int(N[sel][0]), int(N[-1])),
                   float(np.sqrt(np.mean(resid**2))), int(sel.sum()))


def fit_rate(history, quantity, window=1.0, min_points=4):
    """Rate of ``quantity`` (a column of the history) over the trailing ``window`` decades."""
    return fit_slope(history.N, history.column(quantity), window, min_points, quantity)


@dataclass(frozen=True)
class NcumResult:
    ncum: int
    reached: bool
    level: int


def ncum_at_tolerance(history, tol, quantity="product"):
    """``Σ_{j ≤ l*} #T_j`` for the first level ``l*`` with ``quantity ≤ tol``.

    When the tolerance is never met, the sum over the whole history is
    returned with ``reached=False``.
    """
    q = history.column(quantity)
    N = history.N
    hit = np.flatnonzero(q <= tol)
    if hit.size == 0:
        return NcumResult(int(np.sum(N)), False, len(N) - 1)
    k = int(hit[0])
    return NcumResult(int(np.sum(N[: k + 1])), True, k)
