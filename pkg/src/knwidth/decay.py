"""Least-squares fits of ``eps(n) ~ C exp(-b n^a)`` to n-width upper-bound curves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["DecayFit", "InsufficientDataError", "fit_decay", "compare_models", "plateau_cut"]


MIN_POINTS = 4


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class DecayFit:
    a: float
    C: float
    b: float
    r2: float  # nan when log eps is constant over the fitted points
    n_cut: float  # first excluded n; inf when nothing was cut
    points_used: int

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)

    def model(self, n):
        return self.C * np.exp(-self.b * np.asarray(n, dtype=float) ** self.a)

    def as_text(self) -> str:
        r2 = f"{self.r2:.6f}" if self.r2_defined else "undefined"
        cut = "none" if math.isinf(self.n_cut) else f"{self.n_cut:g}"
        return (f"a={self.a:.6g} C={self.C:.6e} b={self.b:.6e} R2={r2} "
                f"n_cut={cut} points={self.points_used}")


def _sorted_points(points):
    arr = np.asarray([(float(n), float(e)) for n, e in points], dtype=float).reshape(-1, 2)
    order = np.argsort(arr[:, 0], kind="stable")
    return arr[order, 0], arr[order, 1]


def plateau_cut(n, eps, a: float = 1 / 3, tau: float = 1e-8, slope_factor: float = 3.0) -> float:
    """Smallest n excluded from the fit, or ``inf``.

    Two triggers: eps falls below ``tau * eps(n_min)`` (or is not positive),
    or the magnitude of the discrete slope of log eps against n^a exceeds
    ``slope_factor`` times the median slope magnitude (onset of self-convergence).
    The slope trigger only fires once ``MIN_POINTS`` points precede it.
    """
    n = np.asarray(n, dtype=float)
    eps = np.asarray(eps, dtype=float)
    cut = math.inf
    small = (eps <= 0) | (eps < tau * eps[0])
    if small.any():
        cut = float(n[np.argmax(small)])
    ok = n < cut
    nn, ee = n[ok], eps[ok]
    if nn.size >= 3:
        slopes = np.abs(np.diff(np.log(ee)) / np.diff(nn**a))
        med = float(np.median(slopes))
        if med > 0:
            steep = slopes > slope_factor * med
            steep[: MIN_POINTS - 1] = False  # an early fast drop is not self-convergence
            if steep.any():
                cut = min(cut, float(nn[np.argmax(steep) + 1]))
    return cut


def _ols(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    tiny = 1e-28 * max(1.0, float(np.sum(y**2)))
    r2 = math.nan if ss_tot <= tiny else 1.0 - ss_res / ss_tot
    return coef, r2


def _fit_on(n, eps, a, n_cut) -> DecayFit:
    x = n**a
    y = np.log(eps)
    (c0, c1), r2 = _ols(x, y)
    b = -float(c1)
    if not math.isfinite(r2):
        b = 0.0 if abs(b) < 1e-12 else b
    return DecayFit(float(a), float(math.exp(c0)), b, r2, n_cut, int(n.size))


def _usable(points, a, tau, slope_factor):
    n, eps = _sorted_points(points)
    if n.size < MIN_POINTS:
        raise InsufficientDataError(f"need at least {MIN_POINTS} points, got {n.size}")
    if (n <= 0).any():
        raise ValueError("n values must be positive")
    cut = plateau_cut(n, eps, a, tau, slope_factor)
    keep = n < cut
    if keep.sum() < MIN_POINTS:
        raise InsufficientDataError(f"only {int(keep.sum())} points before the plateau at n={cut:g}")
    return n[keep], eps[keep], cut


def fit_decay(points, a: float = 1 / 3, tau: float = 1e-8, slope_factor: float = 3.0) -> DecayFit:
    """Ordinary least squares of ``log eps`` on ``n**a`` over the pre-plateau points.

    ``points`` is an iterable of ``(n, eps)`` pairs in any order.
    """
    n, eps, cut = _usable(points, a, tau, slope_factor)
    return _fit_on(n, eps, a, cut)


def compare_models(points, exponents=(1 / 3, 1 / 2, 1.0), tau: float = 1e-8,
                   slope_factor: float = 3.0) -> list[DecayFit]:
    """Fit each exponent on one shared point subset and rank by R^2, best first.

    The plateau cut is decided with the first exponent so that every model
    sees the identical points.
    """
    exponents = list(exponents)
    if not exponents:
        raise ValueError("no exponents given")
    n, eps, cut = _usable(points, exponents[0], tau, slope_factor)
    fits = [_fit_on(n, eps, a, cut) for a in exponents]
    return sorted(fits, key=lambda f: -f.r2 if f.r2_defined else math.inf)
