"""Log-log least-squares fits used by every rate check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n: int

    def within(self, target: float, tol: float, r2_min: float = 0.98) -> bool:
        return abs(self.slope - target) <= tol and self.r2 > r2_min

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": self.n}


def fit_slope(pairs, min_points: int = 4) -> SlopeFit:
    """Fit ``log value = slope * log x + intercept``.

    Parameters
    ----------
    pairs : iterable of (x, value)
        Abscissae and values; both must be positive.
    min_points : int
        Smallest accepted number of pairs.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected (x, value) pairs")
    if len(arr) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(arr)}")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("nonpositive or non-finite value in fit data")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2, len(arr))
