"""Location-family primitives: cdf, upper quantiles, bisection and Fisher's z.

All routines accept scalars or numpy arrays.  Quantiles follow the
upper-tail convention used throughout the package: ``quantile(p)`` is the
value ``c_p`` with ``F(c_p) = 1 - p``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, NumericError

__all__ = [
    "FamilyKind",
    "LocationFamily",
    "STANDARD_NORMAL",
    "cdf",
    "pdf",
    "quantile",
    "find_root",
    "bisect_increasing",
    "fisher_z",
    "fisher_z_inv",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class FamilyKind(enum.Enum):
    STANDARD_NORMAL = "standard-normal"


@dataclass(frozen=True)
class LocationFamily:
    """A symmetric unimodal noise density ``f`` with an optional scale.

    Only the normal backend exists; ``scale`` multiplies the standard
    variable, so ``LocationFamily(scale=s)`` is ``N(0, s**2)``.
    """

    kind: FamilyKind = FamilyKind.STANDARD_NORMAL
    scale: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DomainError(f"scale must be positive and finite, got {self.scale}")

    def cdf(self, x):
        return cdf(self, x)

    def pdf(self, x):
        return pdf(self, x)

    def quantile(self, p):
        return quantile(self, p)


STANDARD_NORMAL = LocationFamily()


def cdf(family: LocationFamily, x):
    """Distribution function ``F(x)``."""
    return special.ndtr(np.asarray(x, dtype=float) / family.scale)[()]


def pdf(family: LocationFamily, x):
    """Density ``f(x)``."""
    z = np.asarray(x, dtype=float) / family.scale
    return (np.exp(-0.5 * z * z) / (_SQRT2PI * family.scale))[()]


def _std_upper_quantile(p):
    """Standard normal ``c_p = Phi^{-1}(1 - p)`` for an array ``p`` in (0, 1)."""
    # ndtri on the smaller tail, so that 1 - p never loses digits
    small = p <= 0.5
    x = special.ndtri(np.where(small, p, 1.0 - p))
    return np.where(small, -x, x)


def quantile(family: LocationFamily, p):
    """Upper quantile ``c_p = F^{-1}(1 - p)``.

    Parameters
    ----------
    family : LocationFamily
    p : float or array_like
        Tail probabilities, each strictly inside (0, 1).

    Returns
    -------
    float or ndarray

    Raises
    ------
    DomainError
        If any ``p`` is outside the open unit interval.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("quantile requires 0 < p < 1")
    flat = np.atleast_1d(arr)
    out = family.scale * _std_upper_quantile(flat)
    return (out.reshape(arr.shape) + 0.0)[()]


def find_root(f, lo, hi, tol=1e-12, max_iter=400):
    """Bisection root of a monotone function on ``[lo, hi]``.

    Returns the midpoint of the final bracket, whose width is at most
    ``tol`` (or has stopped shrinking in floating point).

    Raises
    ------
    NumericError
        If ``f(lo)`` and ``f(hi)`` have the same strict sign.
    """
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NumericError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")
    rising = fhi > 0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == rising:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def bisect_increasing(f, target, lo, hi, tol=1e-12, n_iter=None):
    """Vectorised bisection for ``f(x) = target`` with ``f`` increasing.

    ``lo``, ``hi`` and ``target`` broadcast together; the caller guarantees
    ``f(lo) <= target <= f(hi)`` elementwise.  Returns the upper end of the
    final bracket, so that ``f(result) >= target``.  The number of halvings
    is chosen so that every bracket ends narrower than ``tol`` unless
    ``n_iter`` is given.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    if n_iter is None:
        width = float(np.max(hi - lo)) if target.size else 0.0
        n_iter = max(1, math.ceil(math.log2(width / tol))) if width > tol else 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        above = f(mid) >= target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return hi


def fisher_z(r, n):
    """Fisher-transformed correlation on the z scale, ``atanh(r) * sqrt(n - 3)``."""
    r_arr = np.asarray(r, dtype=float)
    if not np.all(np.abs(r_arr) < 1.0):
        raise DomainError("fisher_z requires |r| < 1")
    if n < 4:
        raise DomainError("fisher_z requires n >= 4")
    return (np.arctanh(r_arr) * math.sqrt(n - 3))[()]


def fisher_z_inv(z, n):
    """Inverse of :func:`fisher_z`; infinite inputs map to +-1."""
    if n < 4:
        raise DomainError("fisher_z_inv requires n >= 4")
    return np.tanh(np.asarray(z, dtype=float) / math.sqrt(n - 3))[()]
