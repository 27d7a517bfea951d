"""Marginal confidence-interval families and sign classification.

Six families are provided: the symmetric interval, the one-sided interval
that is either the whole line or a half-line at zero, Pratt's interval,
the quasi-conventional interval (QC), its modification (MQC) and the
large-effect variant MQC-delta.  Every family satisfies the nesting and
reflection requirements needed by the selection procedure, and each knows
the smallest ``|y|`` at which its interval determines the sign.

The vectorised entry point is :func:`interval_bounds`; the scalar
:func:`marginal_interval` wraps it into an :class:`Interval`.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dist import STANDARD_NORMAL, LocationFamily, bisect_increasing, find_root
from .errors import ConfigError, DomainError, NumericError

__all__ = [
    "Interval",
    "Kind",
    "MarginalFamily",
    "SignDecision",
    "Bounds",
    "QCConstants",
    "qc_constants",
    "cbar_delta",
    "interval_bounds",
    "marginal_interval",
    "sign_threshold",
    "mqc_psi_breakpoints",
    "mqc_case",
    "classify",
    "classify_outside",
    "classify_codes",
    "outside_codes",
]

_INF = math.inf


@dataclass(frozen=True)
class Interval:
    """A real interval with independently open or closed, possibly infinite ends."""

    lower: float
    upper: float
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise DomainError(f"invalid interval bounds ({lo}, {hi})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if math.isinf(lo):
            object.__setattr__(self, "lower_closed", False)
        if math.isinf(hi):
            object.__setattr__(self, "upper_closed", False)
        object.__setattr__(self, "lower_closed", bool(self.lower_closed))
        object.__setattr__(self, "upper_closed", bool(self.upper_closed))

    def __contains__(self, x) -> bool:
        x = float(x)
        above = x > self.lower or (x == self.lower and self.lower_closed)
        below = x < self.upper or (x == self.upper and self.upper_closed)
        return above and below

    def __neg__(self) -> "Interval":
        return Interval(-self.upper, -self.lower, self.upper_closed, self.lower_closed)

    def scaled(self, factor: float) -> "Interval":
        """Multiply both endpoints by a positive factor."""
        if not factor > 0:
            raise DomainError("scale factor must be positive")
        return Interval(self.lower * factor, self.upper * factor,
                        self.lower_closed, self.upper_closed)

    def map(self, fn) -> "Interval":
        """Apply an increasing function to both endpoints."""
        return Interval(float(fn(self.lower)), float(fn(self.upper)),
                        self.lower_closed, self.upper_closed)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def __str__(self):
        left = "[" if self.lower_closed else "("
        right = "]" if self.upper_closed else ")"
        return f"{left}{self.lower:.6g}, {self.upper:.6g}{right}"


class Kind(enum.Enum):
    SYMMETRIC = "symmetric"
    ONE_SIDED = "one-sided"
    PRATT = "pratt"
    QC = "qc"
    MQC = "mqc"
    MQC_DELTA = "mqc-delta"


class SignDecision(enum.Enum):
    POSITIVE = "positive"
    NON_NEGATIVE = "non-negative"
    NEGATIVE = "negative"
    NON_POSITIVE = "non-positive"
    NOT_DETERMINING = "none"

    @property
    def determined(self) -> bool:
        return self is not SignDecision.NOT_DETERMINING


# integer codes used by the vectorised paths, index into _DECISIONS
_DECISIONS = (SignDecision.NOT_DETERMINING, SignDecision.POSITIVE,
              SignDecision.NON_NEGATIVE, SignDecision.NEGATIVE,
              SignDecision.NON_POSITIVE)
NONE, POS, NONNEG, NEG, NONPOS = range(5)


@dataclass(frozen=True)
class MarginalFamily:
    """Configuration selecting one marginal interval family.

    Use the constructors :meth:`symmetric`, :meth:`one_sided`,
    :meth:`pratt`, :meth:`qc`, :meth:`mqc` and :meth:`mqc_delta`, or
    :meth:`from_name` when parsing user input.
    """

    kind: Kind
    psi: float | None = None
    delta: float | None = None
    base: LocationFamily = STANDARD_NORMAL

    def __post_init__(self):
        if self.kind in (Kind.QC, Kind.MQC):
            if self.psi is None or not (0.5 <= self.psi < 1.0):
                raise ConfigError(f"{self.kind.value} requires 0.5 <= psi < 1, got {self.psi}")
        elif self.psi is not None:
            raise ConfigError(f"psi is only meaningful for qc/mqc, not {self.kind.value}")
        if self.kind is Kind.MQC_DELTA:
            if self.delta is None or not (self.delta > 0 and math.isfinite(self.delta)):
                raise ConfigError(f"mqc-delta requires delta > 0, got {self.delta}")
        elif self.delta is not None:
            raise ConfigError(f"delta is only meaningful for mqc-delta, not {self.kind.value}")

    @classmethod
    def symmetric(cls, base=STANDARD_NORMAL):
        return cls(Kind.SYMMETRIC, base=base)

    @classmethod
    def one_sided(cls, base=STANDARD_NORMAL):
        return cls(Kind.ONE_SIDED, base=base)

    @classmethod
    def pratt(cls, base=STANDARD_NORMAL):
        return cls(Kind.PRATT, base=base)

    @classmethod
    def qc(cls, psi, base=STANDARD_NORMAL):
        return cls(Kind.QC, psi=float(psi), base=base)

    @classmethod
    def mqc(cls, psi, base=STANDARD_NORMAL):
        return cls(Kind.MQC, psi=float(psi), base=base)

    @classmethod
    def mqc_delta(cls, delta, base=STANDARD_NORMAL):
        return cls(Kind.MQC_DELTA, delta=float(delta), base=base)

    @classmethod
    def from_name(cls, name, psi=None, delta=None, base=STANDARD_NORMAL):
        """Build a family from its command-line name such as ``"mqc"``."""
        try:
            kind = Kind(name)
        except ValueError:
            choices = ", ".join(k.value for k in Kind)
            raise ConfigError(f"unknown family {name!r}; choose from {choices}") from None
        return cls(kind, psi=None if psi is None else float(psi),
                   delta=None if delta is None else float(delta), base=base)

    def with_base(self, base: LocationFamily) -> "MarginalFamily":
        return MarginalFamily(self.kind, self.psi, self.delta, base)

    @property
    def target_delta(self) -> float:
        """Half-width of the region a selected interval must avoid (0 for sign)."""
        return self.delta if self.kind is Kind.MQC_DELTA else 0.0

    def describe(self) -> dict:
        out = {"family": self.kind.value}
        if self.psi is not None:
            out["psi"] = self.psi
        if self.delta is not None:
            out["delta"] = self.delta
        return out


class Bounds(NamedTuple):
    """Endpoint arrays of a batch of intervals."""

    lower: np.ndarray
    upper: np.ndarray
    lower_closed: np.ndarray
    upper_closed: np.ndarray

    def interval(self, i=()) -> Interval:
        return Interval(float(self.lower[i]), float(self.upper[i]),
                        bool(self.lower_closed[i]), bool(self.upper_closed[i]))

    def covers(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        above = (self.lower < theta) | ((self.lower == theta) & self.lower_closed)
        below = (theta < self.upper) | ((theta == self.upper) & self.upper_closed)
        return above & below


def _check_alpha(alpha, below_half=True, what="these intervals"):
    a = np.asarray(alpha, dtype=float)
    if not np.all((a > 0.0) & (a < 1.0)):
        raise DomainError("alpha must lie strictly between 0 and 1")
    # every construction but the symmetric one needs c_alpha > 0
    if below_half and not np.all(a < 0.5):
        raise DomainError(f"{what} require alpha < 0.5")


@dataclass(frozen=True)
class QCConstants:
    """Constants of the QC/MQC construction at one level.

    ``cbar`` is the sign-determination threshold, ``ctilde`` the point where
    the QC/MQC interval first separates from zero, ``c_half`` the two-sided
    quantile ``c_{alpha/2}`` and ``g_top`` the value ``g(cbar + c_half)``.
    """

    alpha: float
    psi: float
    cbar: float
    ctilde: float
    c_half: float
    g_top: float
    case: int


def qc_constants(alpha, psi, base=STANDARD_NORMAL) -> QCConstants:
    """Constants for one ``(alpha, psi)`` pair, cached per configuration."""
    _check_alpha(alpha)
    if not 0.5 <= psi < 1.0:
        raise ConfigError("psi must satisfy 0.5 <= psi < 1")
    return _qc_constants(float(alpha), float(psi), base)


@functools.lru_cache(maxsize=4096)
def _qc_constants(alpha, psi, base) -> QCConstants:
    cbar = float(base.quantile(psi * alpha))
    # F(-cbar) = psi * alpha exactly, so ctilde = c_{(1 - psi) alpha}
    ctilde = float(base.quantile((1.0 - psi) * alpha))
    c_half = float(base.quantile(alpha / 2.0))
    g_top = float(_g(cbar + c_half, alpha, cbar, base))
    if ctilde <= 2.0 * cbar + c_half:
        case = 1
    elif ctilde <= cbar + 2.0 * c_half:
        case = 2
    else:
        case = 3
    return QCConstants(alpha, psi, cbar, ctilde, c_half, g_top, case)


def _g(theta, alpha, shift, base):
    """Upper acceptance boundary ``theta + F^{-1}(1 - alpha + F(-shift - theta))``."""
    theta = np.asarray(theta, dtype=float)
    return theta + base.quantile(alpha - base.cdf(-shift - theta))


def cbar_delta(alpha, delta, base=STANDARD_NORMAL):
    """Solve ``F(c) - F(-2 delta - c) = 1 - alpha`` for ``c`` (vectorised in alpha).

    This is the worst-case coverage of the central acceptance region
    ``(-delta - c, delta + c)``, attained at ``theta = delta``.
    """
    _check_alpha(alpha)
    a = np.asarray(alpha, dtype=float)
    lo = base.quantile(a)
    hi = base.quantile(a / 2.0)
    # tail form F(-c) + F(-2 delta - c) = alpha keeps precision for small alpha
    root = bisect_increasing(lambda c: -(base.cdf(-c) + base.cdf(-2.0 * delta - c)),
                             -a, lo, hi, tol=1e-13)
    return root[()]


def sign_threshold(fam: MarginalFamily, alpha):
    """Smallest ``|y|`` at which the level ``1 - alpha`` interval is selected.

    For the sign families this is where the interval stops containing values
    of both signs; for MQC-delta it is where the interval clears
    ``[-delta, delta]``.  Vectorised in ``alpha``.
    """
    _check_alpha(alpha, fam.kind is not Kind.SYMMETRIC, f"{fam.kind.value} intervals")
    a = np.asarray(alpha, dtype=float)
    q = fam.base.quantile
    if fam.kind is Kind.SYMMETRIC:
        out = q(a / 2.0)
    elif fam.kind in (Kind.ONE_SIDED, Kind.PRATT):
        out = q(a)
    elif fam.kind in (Kind.QC, Kind.MQC):
        out = q(fam.psi * a)
    else:
        out = fam.delta + cbar_delta(a, fam.delta, fam.base)
    return np.asarray(out, dtype=float)[()]


def mqc_case(alpha, psi, base=STANDARD_NORMAL) -> int:
    """Which of the three piecewise MQC forms applies (1, 2 or 3)."""
    return qc_constants(alpha, psi, base).case


def mqc_psi_breakpoints(alpha, base=STANDARD_NORMAL):
    """Return ``(psi1, psi2)`` where the MQC interval changes its piecewise form.

    ``psi1`` solves ``ctilde = 2 cbar + c_{alpha/2}`` and ``psi2`` solves
    ``ctilde = cbar + 2 c_{alpha/2}``.  The root search runs over
    ``log(1 - psi)`` because both breakpoints sit very close to one for
    small ``alpha``.

    Raises
    ------
    NumericError
        If a breakpoint is not bracketed inside ``1/2 <= psi < 1`` in double
        precision (very small or very large ``alpha``).
    """
    _check_alpha(alpha)
    alpha = float(alpha)
    c_half = float(base.quantile(alpha / 2.0))

    def excess(log_s, k_cbar, k_half):
        s = math.exp(log_s)
        cbar = float(base.quantile((1.0 - s) * alpha))
        ctilde = float(base.quantile(s * alpha))
        return ctilde - (k_cbar * cbar + k_half * c_half)

    # smallest tail probability the quantile can still resolve
    lo = math.log(1e-300 / alpha)
    hi = math.log(0.5)
    out = []
    for k_cbar, k_half in ((2.0, 1.0), (1.0, 2.0)):
        try:
            log_s = find_root(lambda t: excess(t, k_cbar, k_half), lo, hi, tol=1e-13)
        except NumericError as exc:
            raise NumericError(f"MQC breakpoint not bracketed for alpha={alpha}") from exc
        out.append(1.0 - math.exp(log_s))
    return out[0], out[1]


def _reflect(a_lo, a_hi, a_lc, a_hc, neg):
    lo = np.where(neg, -a_hi, a_lo) + 0.0
    hi = np.where(neg, -a_lo, a_hi) + 0.0
    lc = np.where(neg, a_hc, a_lc)
    hc = np.where(neg, a_lc, a_hc)
    return lo, hi, lc, hc


def _bounds_symmetric(a, alpha, base):
    c = base.quantile(alpha / 2.0)
    f = np.zeros_like(a, dtype=bool)
    return a - c, a + c, f, f.copy()


def _bounds_one_sided(a, alpha, base):
    z = base.quantile(alpha)
    det = a >= z
    lo = np.where(det, 0.0, -_INF)
    hi = np.full_like(a, _INF)
    f = np.zeros_like(a, dtype=bool)
    return lo, hi, f, f.copy()


def _bounds_pratt(a, alpha, base):
    z = base.quantile(alpha)
    det = a >= z
    lo = np.where(det, 0.0, a - z)
    f = np.zeros_like(a, dtype=bool)
    return lo, a + z, f, f.copy()


def _bounds_qc(a, alpha, psi, base):
    k = qc_constants(alpha, psi, base)
    cb, ct, c = k.cbar, k.ctilde, k.c_half
    lo = np.select(
        [a == 0.0, a < cb, a < ct, a < cb + ct],
        [-cb, a - cb, 0.0, a - ct],
        default=a - c,
    )
    hi = np.where(a == 0.0, cb, a + c)
    lc = (a >= cb) & (a < c)
    return lo, hi, lc, np.zeros_like(lc)


def _bounds_mqc(a, alpha, psi, base):
    k = qc_constants(alpha, psi, base)
    cb, ct, c, top = k.cbar, k.ctilde, k.c_half, k.g_top
    lo = np.where(a < cb, -(cb + c), 0.0)
    hi = np.where(a < cb, cb + c, a + c)
    far = a >= ct
    lo = np.where(far, np.maximum(cb + c, a - c), lo)
    if k.case == 1:
        steep = far & (a < top)
        if steep.any():
            # increasing branch of g starts at ctilde - cbar where g = ctilde
            ys = a[steep]
            lo[steep] = bisect_increasing(lambda t: _g(t, alpha, cb, base), ys,
                                          ct - cb, cb + c, tol=1e-11)
    # theta = +-(cbar + c) still accepts every |y| < cbar, so the hull is closed there
    inner = a < cb
    lc = ((a >= cb) & (a < c)) | inner
    return lo, hi, lc, inner


def _bounds_mqc_delta(a, alpha, delta, base):
    cb = float(cbar_delta(alpha, delta, base))
    c = float(base.quantile(alpha / 2.0))
    edge = delta + cb
    top = float(_g(edge + c, alpha, edge, base))
    lo = np.where(a < edge, -(edge + c), np.maximum(edge + c, a - c))
    hi = np.where(a < edge, edge + c, a + c)
    steep = (a >= edge) & (a < top)
    if steep.any():
        ys = a[steep]
        inv = bisect_increasing(lambda t: _g(t, alpha, edge, base), ys, delta, edge + c, tol=1e-11)
        lo[steep] = np.maximum(inv, delta)
    # as for MQC, theta = +-(edge + c) accepts every |y| < edge
    inner = a < edge
    return lo, hi, inner, inner.copy()


def interval_bounds(fam: MarginalFamily, y, alpha) -> Bounds:
    """Vectorised marginal ``1 - alpha`` intervals at observations ``y``.

    Parameters
    ----------
    fam : MarginalFamily
    y : array_like
        Observations on the scale of ``fam.base``.
    alpha : float
        Non-coverage level in (0, 1); below 0.5 for all but the symmetric family.

    Returns
    -------
    Bounds
        Arrays of lower/upper endpoints and their closedness flags.
    """
    _check_alpha(alpha, fam.kind is not Kind.SYMMETRIC, f"{fam.kind.value} intervals")
    if np.ndim(alpha) != 0:
        raise DomainError("interval_bounds takes a scalar alpha")
    alpha = float(alpha)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(y)):
        raise DomainError("observations must be finite")
    a = np.abs(y)
    base = fam.base
    if fam.kind is Kind.SYMMETRIC:
        parts = _bounds_symmetric(a, alpha, base)
    elif fam.kind is Kind.ONE_SIDED:
        parts = _bounds_one_sided(a, alpha, base)
    elif fam.kind is Kind.PRATT:
        parts = _bounds_pratt(a, alpha, base)
    elif fam.kind is Kind.QC:
        parts = _bounds_qc(a, alpha, fam.psi, base)
    elif fam.kind is Kind.MQC:
        parts = _bounds_mqc(a, alpha, fam.psi, base)
    else:
        parts = _bounds_mqc_delta(a, alpha, fam.delta, base)
    neg = y < 0
    lo, hi, lc, hc = _reflect(*parts, neg)
    if fam.kind in (Kind.ONE_SIDED, Kind.PRATT):
        # zero belongs to the non-positive side
        hc = hc | (neg & (hi == 0.0))
    lc = lc & np.isfinite(lo)
    hc = hc & np.isfinite(hi)
    return Bounds(lo, hi, lc, hc)


def marginal_interval(fam: MarginalFamily, y: float, alpha: float) -> Interval:
    """The marginal ``1 - alpha`` interval of ``fam`` at a single observation."""
    return interval_bounds(fam, [y], alpha).interval(0)


def classify_codes(b: Bounds) -> np.ndarray:
    """Integer sign codes (see ``NONE``, ``POS``...) for a batch of intervals."""
    pos_side = (b.lower > 0) | ((b.lower == 0) & ~b.lower_closed)
    nonneg = (b.lower == 0) & b.lower_closed
    neg_side = (b.upper < 0) | ((b.upper == 0) & ~b.upper_closed)
    nonpos = (b.upper == 0) & b.upper_closed
    return np.select([pos_side, nonneg, neg_side, nonpos], [POS, NONNEG, NEG, NONPOS], default=NONE)


def outside_codes(b: Bounds, delta: float) -> np.ndarray:
    """``POS`` if inside ``(delta, inf)``, ``NEG`` if inside ``(-inf, -delta)``, else ``NONE``."""
    above = (b.lower > delta) | ((b.lower == delta) & ~b.lower_closed)
    below = (b.upper < -delta) | ((b.upper == -delta) & ~b.upper_closed)
    return np.select([above, below], [POS, NEG], default=NONE)


def _as_bounds(interval: Interval) -> Bounds:
    return Bounds(np.array([interval.lower]), np.array([interval.upper]),
                  np.array([interval.lower_closed]), np.array([interval.upper_closed]))


def classify(interval: Interval) -> SignDecision:
    """Sign decision carried by an interval.

    ``POSITIVE`` for a subset of ``(0, inf)``, ``NON_NEGATIVE`` for a subset
    of ``[0, inf)`` containing 0, the mirrored labels on the negative side,
    and ``NOT_DETERMINING`` when both strictly negative and strictly positive
    values are included.
    """
    return _DECISIONS[int(classify_codes(_as_bounds(interval))[0])]


def classify_outside(interval: Interval, delta: float) -> SignDecision:
    """Whether an interval lies inside ``(delta, inf)`` or ``(-inf, -delta)``.

    Returns ``POSITIVE``, ``NEGATIVE`` or ``NOT_DETERMINING``.
    """
    return _DECISIONS[int(outside_codes(_as_bounds(interval), delta)[0])]


def decision_from_code(code: int) -> SignDecision:
    return _DECISIONS[int(code)]
