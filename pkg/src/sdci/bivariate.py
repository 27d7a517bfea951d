"""Dominance and recessiveness effects from 2x3 case-control genotype tables.

A table is summarised by the log-odds increments for the first and second
copy of the minor allele together with their estimated covariance.  The
minimum-variance principal component of that covariance gives a direction
in which both effects share a sign; selection and sign determination take
place on the standardized projection onto it, while the orthogonal
direction receives a fixed-level interval.  The two intervals form a
rectangle in effect space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateTableError, DomainError, NumericError
from .intervals import Interval, MarginalFamily, interval_bounds
from .selection import bh_directional_z, sdci_z

__all__ = [
    "Table2x3",
    "BivariateEffect",
    "PCDecomposition",
    "RectRegion",
    "effects_from_table",
    "principal_components",
    "z_pc2",
    "cochran_armitage",
    "rect_region",
    "rect_sdci",
    "RectSelection",
    "rect_cover_counts",
]


@dataclass(frozen=True)
class Table2x3:
    """Genotype counts; row 0 holds controls, row 1 cases, columns 0/1/2 minor-allele copies."""

    counts: tuple

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=float)
        if arr.shape != (2, 3):
            raise DomainError(f"a 2x3 table is required, got shape {arr.shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise DomainError("counts must be finite and non-negative")
        object.__setattr__(self, "counts", tuple(tuple(float(v) for v in row) for row in arr))

    @classmethod
    def from_rows(cls, controls: Sequence[float], cases: Sequence[float]) -> "Table2x3":
        return cls((tuple(controls), tuple(cases)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)

    def swapped(self) -> "Table2x3":
        """Exchange the roles of cases and controls."""
        return Table2x3((self.counts[1], self.counts[0]))


@dataclass(frozen=True)
class BivariateEffect:
    beta_dom: float
    beta_rec: float
    var_dom: float
    var_rec: float
    cov: float

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.beta_dom, self.beta_rec])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([[self.var_dom, self.cov], [self.cov, self.var_rec]])


@dataclass(frozen=True)
class PCDecomposition:
    """Eigen-directions of the effect covariance, ``var1 >= var2``.

    ``pc2`` is oriented so that both components are non-negative and
    ``pc1`` is ``pc2`` rotated a quarter turn counter-clockwise.
    """

    pc1: np.ndarray
    var1: float
    pc2: np.ndarray
    var2: float


def effects_from_table(t: Table2x3, continuity_correction: bool = False) -> BivariateEffect:
    """Log-odds increments of the first and second minor-allele copy.

    Parameters
    ----------
    t : Table2x3
    continuity_correction : bool
        Add 0.5 to every cell before estimating.

    Raises
    ------
    DegenerateTableError
        If a cell is zero and no correction is requested.
    """
    n = t.array
    if continuity_correction:
        n = n + 0.5
    elif np.any(n == 0):
        raise DegenerateTableError("table has a zero cell; enable the continuity correction")
    gamma = np.log(n[1] / n[0])
    inv = 1.0 / n[0] + 1.0 / n[1]
    return BivariateEffect(
        beta_dom=float(gamma[1] - gamma[0]),
        beta_rec=float(gamma[2] - gamma[1]),
        var_dom=float(inv[0] + inv[1]),
        var_rec=float(inv[1] + inv[2]),
        cov=float(-inv[1]),
    )


def principal_components(effect: BivariateEffect) -> PCDecomposition:
    """Principal directions of the effect covariance.

    Raises
    ------
    NumericError
        If the covariance is not positive definite.
    """
    sigma = effect.sigma
    if not np.all(np.isfinite(sigma)):
        raise NumericError("covariance has non-finite entries")
    vals, vecs = np.linalg.eigh(sigma)
    if vals[0] <= 1e-14 * max(abs(vals[1]), 1e-300):
        raise NumericError("covariance matrix is singular or not positive definite")
    pc2 = vecs[:, 0].copy()
    if pc2.sum() < 0 or (pc2.sum() == 0 and pc2[1] < 0):
        pc2 = -pc2
    pc2 = np.where(pc2 == 0, 0.0, pc2)
    pc1 = np.array([-pc2[1], pc2[0]]) + 0.0
    return PCDecomposition(pc1=pc1, var1=float(vals[1]), pc2=pc2, var2=float(vals[0]))


def z_pc2(effect: BivariateEffect, pcs: PCDecomposition | None = None) -> float:
    """Projection of the estimate onto ``pc2`` in units of its sd."""
    pcs = principal_components(effect) if pcs is None else pcs
    return float(effect.beta @ pcs.pc2 / math.sqrt(pcs.var2))


def cochran_armitage(t: Table2x3, w=(0.0, 1.0, 2.0)) -> float:
    """Signed Cochran-Armitage trend statistic, positive when cases carry higher weights.

    Raises
    ------
    DegenerateTableError
        If a row or column total is zero or the weights are constant.
    """
    n = t.array
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise DomainError("three weights are required")
    controls, cases = n
    S, R = controls.sum(), cases.sum()
    col = controls + cases
    N = R + S
    if R == 0 or S == 0 or np.any(col == 0):
        raise DegenerateTableError("Cochran-Armitage requires positive row and column totals")
    T = float(np.sum(w * (cases * S - controls * R)))
    # Var(T) = R S / N * [sum w^2 C (N - C) - 2 sum_{j<k} w_j w_k C_j C_k]
    wc = w * col
    var = R * S / N * (float(np.sum(w * w * col * (N - col))) - (wc.sum() ** 2 - float(np.sum(wc * wc))))
    if not var > 0:
        raise DegenerateTableError("trend statistic has zero variance for these weights")
    return T / math.sqrt(var)


@dataclass(frozen=True)
class RectRegion:
    """Rectangle in (dominance, recessiveness) space aligned with the principal axes.

    ``interval_pc1`` and ``interval_pc2`` are intervals for the projections
    of the effect vector onto ``pc1`` and ``pc2``.
    """

    interval_pc1: Interval
    interval_pc2: Interval
    alpha1: float
    alpha2: float
    pc1: np.ndarray
    pc2: np.ndarray

    @property
    def joint_level(self) -> float:
        return (1.0 - self.alpha1) * (1.0 - self.alpha2)

    def __contains__(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return (float(p @ self.pc1) in self.interval_pc1) and (float(p @ self.pc2) in self.interval_pc2)

    def corners(self) -> np.ndarray:
        """The four corners as a ``(4, 2)`` array; unbounded sides give infinite coordinates."""
        out = []
        for u in (self.interval_pc1.lower, self.interval_pc1.upper):
            for v in (self.interval_pc2.lower, self.interval_pc2.upper):
                out.append(_combine(u, self.pc1) + _combine(v, self.pc2))
        return np.array(out)


def _combine(scale: float, direction: np.ndarray) -> np.ndarray:
    # scale * direction with inf * 0 taken as 0
    return np.where(direction == 0, 0.0, scale * direction)


def _pc_interval(fam, z, alpha, sd) -> Interval:
    if alpha >= 1.0:
        return Interval(-math.inf, math.inf)
    return interval_bounds(fam, [z], alpha).interval(0).scaled(sd)


def rect_region(effect: BivariateEffect, alpha1: float, alpha2: float,
                family2: MarginalFamily | None = None,
                adjusted_alpha2: float | None = None) -> RectRegion:
    """Rectangular confidence region of joint level ``(1 - alpha1)(1 - alpha2)``.

    The ``pc1`` side is a symmetric interval at level ``1 - alpha1``
    (``alpha1 = 1`` leaves it unbounded).  The ``pc2`` side uses
    ``family2`` at ``adjusted_alpha2`` when given, else at ``alpha2``.
    """
    if not 0.0 < alpha1 <= 1.0:
        raise DomainError("alpha1 must lie in (0, 1]")
    if not 0.0 < alpha2 < 1.0:
        raise DomainError("alpha2 must lie in (0, 1)")
    level2 = alpha2 if adjusted_alpha2 is None else adjusted_alpha2
    if not 0.0 < level2 < 1.0:
        raise DomainError("adjusted_alpha2 must lie in (0, 1)")
    family2 = MarginalFamily.symmetric() if family2 is None else family2
    pcs = principal_components(effect)
    sd1, sd2 = math.sqrt(pcs.var1), math.sqrt(pcs.var2)
    z1 = float(effect.beta @ pcs.pc1) / sd1
    z2 = float(effect.beta @ pcs.pc2) / sd2
    i1 = _pc_interval(MarginalFamily.symmetric(), z1, alpha1, sd1)
    i2 = _pc_interval(family2, z2, level2, sd2)
    return RectRegion(i1, i2, float(alpha1), float(level2), pcs.pc1, pcs.pc2)


@dataclass(frozen=True)
class RectSelection:
    selected: bool
    region: RectRegion
    effect: BivariateEffect
    z_pc2: float


def rect_sdci(tables: Sequence[Table2x3], q1: float, q2: float,
              family2: MarginalFamily | None = None, selector: str = "sdci",
              continuity_correction: bool = False) -> list[RectSelection]:
    """Select tables on their ``pc2`` scores and build adjusted rectangles.

    Selection runs on the standardized ``pc2`` scores: with
    ``selector="sdci"`` the ``family2`` sign-determining rule at level
    ``q2``, with ``selector="bh"`` the BH rule at ``q2``.  Selected tables
    get ``pc2`` intervals at level ``R q2 / m``; every ``pc1`` interval is
    at the fixed level ``1 - q1``.  Unselected tables carry the unadjusted
    level-``q2`` rectangle.
    """
    if len(tables) == 0:
        raise DomainError("at least one table is required")
    if not 0.0 < q2 < 1.0:
        raise DomainError("q2 must lie in (0, 1)")
    family2 = MarginalFamily.symmetric() if family2 is None else family2
    effects = [effects_from_table(t, continuity_correction) for t in tables]
    z = np.array([z_pc2(e) for e in effects])
    m = z.size
    if selector == "sdci":
        R, selected, _ = sdci_z(z, family2, q2)
    elif selector == "bh":
        R, selected = bh_directional_z(z, q2)
    else:
        raise DomainError(f"unknown selector {selector!r}")
    adjusted = R * q2 / m
    out = []
    for e, zi, sel in zip(effects, z, selected):
        region = rect_region(e, q1, q2, family2, adjusted if sel else None)
        out.append(RectSelection(bool(sel), region, e, float(zi)))
    return out


def rect_cover_counts(theta1, theta2, y1, y2, q1, q2, family2, selected, R):
    """Vectorised rectangle and pc2 non-coverage among the selected for one replicate.

    Works in standardized principal coordinates with unit variances.
    Returns ``(V_rect, V_pc2)``.
    """
    if R == 0:
        return 0, 0
    m = y2.size
    s = selected
    b2 = interval_bounds(family2, y2[s], R * q2 / m)
    miss2 = ~b2.covers(theta2[s])
    if q1 >= 1.0:
        miss1 = np.zeros_like(miss2)
    else:
        b1 = interval_bounds(MarginalFamily.symmetric(), y1[s], q1)
        miss1 = ~b1.covers(theta1[s])
    return int((miss1 | miss2).sum()), int(miss2.sum())

