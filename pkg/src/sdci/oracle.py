"""Brute-force validators for the closed-form intervals and the fast selection.

Nothing here is used by the main code path.  The routines favour
transparency over speed: acceptance regions are written down directly and
inverted on a grid, coverage is computed from the covering set of
observations, and the selection count is found by literally building each
candidate interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist import STANDARD_NORMAL, find_root
from .errors import ConfigError, NumericError
from .intervals import (
    NONE, Bounds, Interval, Kind, MarginalFamily, cbar_delta, classify_codes,
    interval_bounds, outside_codes, qc_constants,
)

__all__ = [
    "GridSpec",
    "acceptance_qc",
    "acceptance_mqc",
    "acceptance_mqc_delta",
    "acceptance_region",
    "invert_acceptance_grid",
    "invert_acceptance_many",
    "coverage_quadrature",
    "naive_R",
    "effective_acceptance_mqc",
    "noncover_sign_prob",
    "psi_star",
]


@dataclass(frozen=True)
class GridSpec:
    lo: float = -12.0
    hi: float = 12.0
    step: float = 1e-4
    # extra log-spaced points on both sides of 0, where regions jump
    near_zero: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError("grid requires lo < hi")
        if not self.step > 0:
            raise ConfigError("grid requires step > 0")

    def points(self) -> np.ndarray:
        # integer multiples of step so that 0 is on the grid when lo <= 0 <= hi
        k0 = math.ceil(self.lo / self.step - 1e-9)
        k1 = math.floor(self.hi / self.step + 1e-9)
        pts = np.arange(k0, k1 + 1) * self.step
        if self.near_zero and self.lo < 0 < self.hi:
            tiny = np.geomspace(1e-13, self.step, self.near_zero, endpoint=False)
            pts = np.union1d(pts, np.concatenate([-tiny, tiny]))
        return pts


def _mirror(theta, pos_fn, zero):
    """Build a reflected acceptance region from its ``theta > 0`` branch."""
    theta = np.asarray(theta, dtype=float)
    a = np.abs(theta)
    lo, hi = pos_fn(np.where(a > 0, a, 1.0))
    neg = theta < 0
    lo, hi = np.where(neg, -hi, lo), np.where(neg, -lo, hi)
    lo = np.where(theta == 0, zero[0], lo)
    hi = np.where(theta == 0, zero[1], hi)
    f = np.zeros(theta.shape, dtype=bool)
    return Bounds(lo, hi, f, f.copy())


def acceptance_qc(theta, alpha, psi, base=STANDARD_NORMAL) -> Bounds:
    """Open QC acceptance regions, symmetric ``(-c, c)`` at zero."""
    k = qc_constants(alpha, psi, base)
    cb, ct, c = k.cbar, k.ctilde, k.c_half

    def pos(t):
        mid_hi = t + base.quantile(np.clip(alpha - base.cdf(-t), 1e-300, 1 - 1e-16))
        lo = np.select([t <= cb, t <= c], [t - cb, 0.0], default=t - c)
        hi = np.select([t <= cb, t <= c], [t + ct, mid_hi], default=t + c)
        return lo, hi

    return _mirror(theta, pos, (-c, c))


def _g(t, alpha, shift, base):
    return t + base.quantile(alpha - base.cdf(-shift - t))


def acceptance_mqc(theta, alpha, psi, base=STANDARD_NORMAL) -> Bounds:
    """Open MQC acceptance regions, symmetric ``(-c, c)`` at zero."""
    k = qc_constants(alpha, psi, base)
    cb, c = k.cbar, k.c_half

    def pos(t):
        inner = t <= cb + c
        lo = np.where(inner, -cb, t - c)
        hi = np.where(inner, _g(t, alpha, cb, base), t + c)
        return lo, hi

    return _mirror(theta, pos, (-c, c))


def acceptance_mqc_delta(theta, alpha, delta, base=STANDARD_NORMAL) -> Bounds:
    """Open acceptance regions of the large-effect interval."""
    cb = float(cbar_delta(alpha, delta, base))
    c = float(base.quantile(alpha / 2.0))
    edge = delta + cb

    def pos(t):
        # theta = edge + c joins the middle branch, matching the MQC convention
        lo = np.where(t <= edge + c, -edge, t - c)
        hi = np.select([t <= delta, t <= edge + c], [edge, _g(t, alpha, edge, base)],
                       default=t + c)
        return lo, hi

    return _mirror(theta, pos, (-edge, edge))


def acceptance_region(fam: MarginalFamily, alpha):
    """The vectorised acceptance-region function of a QC/MQC/MQC-delta family."""
    if fam.kind is Kind.QC:
        return lambda t: acceptance_qc(t, alpha, fam.psi, fam.base)
    if fam.kind is Kind.MQC:
        return lambda t: acceptance_mqc(t, alpha, fam.psi, fam.base)
    if fam.kind is Kind.MQC_DELTA:
        return lambda t: acceptance_mqc_delta(t, alpha, fam.delta, fam.base)
    raise ConfigError(f"no acceptance-region oracle for {fam.kind.value}")


def invert_acceptance_many(ar, ys, grid: GridSpec = GridSpec(), chunk: int = 64):
    """Grid inversion at many observations.

    Returns ``(lower, upper, zero_accepted)``: the smallest and largest grid
    value of ``theta`` whose region contains each ``y``, and whether
    ``theta = 0`` itself is accepted.
    """
    thetas = grid.points()
    region = ar(thetas)
    lo_t, hi_t = region.lower, region.upper
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    lower = np.empty(ys.size)
    upper = np.empty(ys.size)
    zero = np.zeros(ys.size, dtype=bool)
    iz = np.flatnonzero(thetas == 0.0)
    for s in range(0, ys.size, chunk):
        yc = ys[s:s + chunk, None]
        acc = (lo_t < yc) & (yc < hi_t)
        anyacc = acc.any(axis=1)
        if not anyacc.all():
            bad = ys[s:s + chunk][~anyacc][0]
            raise NumericError(f"no accepted theta on the grid for y={bad}")
        lower[s:s + chunk] = thetas[acc.argmax(axis=1)]
        upper[s:s + chunk] = thetas[acc.shape[1] - 1 - acc[:, ::-1].argmax(axis=1)]
        if iz.size:
            zero[s:s + chunk] = acc[:, iz[0]]
    return lower, upper, zero


def invert_acceptance_grid(ar, y: float, grid: GridSpec = GridSpec()) -> Interval:
    """Convex hull of the grid values ``theta`` with ``y`` in ``ar(theta)``.

    The returned interval is closed on grid points; endpoint error is at
    most ``grid.step``.

    Raises
    ------
    NumericError
        If no grid value accepts ``y``.
    """
    lo, hi, _ = invert_acceptance_many(ar, [y], grid)
    return Interval(lo[0], hi[0], True, True)


def _covers(fam, alpha, y, theta):
    return interval_bounds(fam, y, alpha).covers(theta)


def _cover_edge(fam, alpha, theta, direction, span=40.0, n_iter=80):
    # last y (moving from theta in `direction`) whose interval still covers theta
    inner = theta.copy()
    outer = theta + direction * span
    unbounded = _covers(fam, alpha, outer, theta)
    for _ in range(n_iter):
        mid = 0.5 * (inner + outer)
        ok = _covers(fam, alpha, mid, theta)
        inner = np.where(ok, mid, inner)
        outer = np.where(ok, outer, mid)
    edge = 0.5 * (inner + outer)
    return np.where(unbounded, direction * math.inf, edge)


def coverage_quadrature(fam: MarginalFamily, theta, alpha):
    """``P_theta(theta in C(Y; alpha))`` for ``Y = theta + noise``.

    Both endpoints of every family are non-decreasing in ``y``, so the set
    of covering observations is an interval around ``theta``; its two ends
    are located by bisection and the probability is a difference of cdfs.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(_covers(fam, alpha, theta, theta)):
        raise NumericError("interval at y = theta does not cover theta")
    y_lo = _cover_edge(fam, alpha, theta, -1.0)
    y_hi = _cover_edge(fam, alpha, theta, +1.0)
    F = fam.base.cdf
    # mass below y_lo plus mass above y_hi, each from its own tail
    miss = F(y_lo - theta) + F(theta - y_hi)
    return (1.0 - np.asarray(miss, dtype=float))[()]


def _determines(fam: MarginalFamily, b: Bounds) -> np.ndarray:
    if fam.kind is Kind.MQC_DELTA:
        return outside_codes(b, fam.delta) != NONE
    return classify_codes(b) != NONE


def naive_R(z, fam: MarginalFamily, q: float) -> int:
    """Largest ``r`` such that the ``r``-th largest ``|z|`` has a level ``r q / m``
    interval that determines the sign; 0 if there is none."""
    z = np.asarray(z, dtype=float)
    m = z.size
    order = z[np.argsort(-np.abs(z), kind="stable")]
    for r in range(m, 0, -1):
        b = interval_bounds(fam, [order[r - 1]], r * q / m)
        if _determines(fam, b)[0]:
            return r
    return 0


def effective_acceptance_mqc(theta, alpha, psi, base=STANDARD_NORMAL):
    """Lower and upper ends of the effective MQC acceptance regions.

    These are the regions whose plain inversion, without taking a convex
    hull, reproduces the MQC interval (case 1 of the MQC construction).
    """
    k = qc_constants(alpha, psi, base)
    cb, ct, c = k.cbar, k.ctilde, k.c_half
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    t = np.abs(theta)
    g = t + base.quantile(alpha - base.cdf(-cb - t))
    lo = np.select([t == 0, t <= cb + c], [-c, -cb], default=t - c)
    hi = np.select([t == 0, t <= ct - cb, t <= cb + c], [c, ct, g], default=t + c)
    neg = theta < 0
    return np.where(neg, -hi, lo), np.where(neg, -lo, hi)


def noncover_sign_prob(theta, alpha, psi, base=STANDARD_NORMAL):
    """``P_theta(|Y| >= cbar and Y outside the effective acceptance region)``.

    This is the probability that a single MQC interval determines the sign
    and misses ``theta``.
    """
    k = qc_constants(alpha, psi, base)
    cb = k.cbar
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    lo, hi = effective_acceptance_mqc(theta, alpha, psi, base)
    F = base.cdf
    # Y - theta ~ F; probabilities of the two tails of |Y| >= cbar
    p_far = F(-cb - theta) + F(-cb + theta)
    # accepted mass inside [cbar, inf) and (-inf, -cbar]
    a1 = np.maximum(lo, cb)
    in_pos = np.where(hi > a1, F(hi - theta) - F(a1 - theta), 0.0)
    b1 = np.minimum(hi, -cb)
    in_neg = np.where(b1 > lo, F(b1 - theta) - F(lo - theta), 0.0)
    return (p_far - in_pos - in_neg)[()]


def psi_star(alpha, base=STANDARD_NORMAL) -> float:
    """The ``psi`` at which ``ctilde + cbar = 2 c_{alpha/4}``."""
    target = 2.0 * float(base.quantile(alpha / 4.0))

    def excess(psi):
        cbar = float(base.quantile(psi * alpha))
        ctilde = float(base.quantile((1.0 - psi) * alpha))
        return cbar + ctilde - target

    return find_root(excess, 0.5, 1.0 - 1e-12, tol=1e-13)
