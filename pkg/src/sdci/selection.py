"""Selection-and-construction procedures and their error metrics.

:func:`sdci` selects the parameters whose FCR-adjusted marginal interval
determines the sign and reports those intervals.  :func:`bh_directional`
is the decision-only directional Benjamini-Hochberg rule, and
:func:`by_adjust` builds BY-adjusted intervals for an arbitrary selection.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, InputError
from .intervals import (
    NEG, NONE, NONNEG, NONPOS, POS,
    Bounds, Interval, Kind, MarginalFamily, SignDecision,
    classify_codes, decision_from_code, interval_bounds, sign_threshold,
)

__all__ = [
    "Unit",
    "Dependency",
    "ProcedureConfig",
    "UnitRecord",
    "SelectionResult",
    "ErrorMetrics",
    "harmonic",
    "sdci",
    "sdci_z",
    "bh_directional",
    "bh_directional_z",
    "by_adjust",
    "evaluate",
    "error_counts",
]


@dataclass(frozen=True)
class Unit:
    """One parameter: an identifier, its estimate and the estimate's sd."""

    id: str
    estimate: float
    sd: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.estimate):
            raise InputError(f"unit {self.id!r}: estimate must be finite")
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise InputError(f"unit {self.id!r}: sd must be positive and finite")


class Dependency(enum.Enum):
    INDEPENDENT = "independent"
    GENERAL = "general"


def harmonic(m: int) -> float:
    """``H_m = sum_{j=1}^m 1/j``."""
    return math.fsum(1.0 / j for j in range(1, m + 1))


@dataclass(frozen=True)
class ProcedureConfig:
    """Target level ``q``, interval family and dependency handling.

    Under ``Dependency.GENERAL`` the working level becomes ``q / H_m``.
    """

    q: float
    family: MarginalFamily = field(default_factory=MarginalFamily.symmetric)
    dependency: Dependency = Dependency.INDEPENDENT

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")
        if not isinstance(self.dependency, Dependency):
            object.__setattr__(self, "dependency", Dependency(self.dependency))

    def effective_q(self, m: int) -> float:
        if self.dependency is Dependency.GENERAL:
            return self.q / harmonic(m)
        return self.q


@dataclass(frozen=True)
class UnitRecord:
    id: str
    selected: bool
    decision: SignDecision
    interval: Interval | None
    adjusted_alpha: float | None


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a selection procedure over ``m`` units.

    Arrays are aligned with the input units.  ``lower``/``upper`` are NaN
    for unselected units and for decision-only procedures.
    """

    R: int
    m: int
    q_eff: float
    ids: tuple
    selected: np.ndarray
    codes: np.ndarray
    bounds: Bounds | None

    @property
    def adjusted_alpha(self) -> float:
        """The common level ``R * q_eff / m`` of the constructed intervals (0 if none)."""
        return self.R * self.q_eff / self.m

    @property
    def has_intervals(self) -> bool:
        return self.bounds is not None

    def decision(self, i: int) -> SignDecision:
        return decision_from_code(self.codes[i])

    def interval(self, i: int) -> Interval | None:
        if self.bounds is None or not self.selected[i]:
            return None
        return self.bounds.interval(i)

    @property
    def records(self) -> list[UnitRecord]:
        out = []
        for i, uid in enumerate(self.ids):
            sel = bool(self.selected[i])
            out.append(UnitRecord(
                id=uid,
                selected=sel,
                decision=self.decision(i),
                interval=self.interval(i),
                adjusted_alpha=self.adjusted_alpha if sel and self.has_intervals else None,
            ))
        return out


@dataclass(frozen=True)
class ErrorMetrics:
    R_ci: int
    V_ci: int
    R_d: int
    V_d: int

    @property
    def fcp(self) -> float:
        return self.V_ci / max(self.R_ci, 1)

    @property
    def wdfdp(self) -> float:
        return self.V_d / max(self.R_d, 1)


def _standardize(units: Sequence[Unit]):
    if len(units) == 0:
        raise DomainError("at least one unit is required")
    est = np.array([u.estimate for u in units], dtype=float)
    sd = np.array([u.sd for u in units], dtype=float)
    return est / sd, sd, tuple(u.id for u in units)


@functools.lru_cache(maxsize=256)
def _thresholds(fam: MarginalFamily, q_eff: float, m: int) -> np.ndarray:
    levels = np.arange(1, m + 1) * (q_eff / m)
    tau = np.atleast_1d(sign_threshold(fam, levels)).astype(float)
    tau.setflags(write=False)
    return tau


def _step_up(abs_sorted_desc: np.ndarray, tau: np.ndarray) -> int:
    ok = np.flatnonzero(tau <= abs_sorted_desc)
    return int(ok[-1] + 1) if ok.size else 0


def select_count(z, fam: MarginalFamily, q_eff: float) -> int:
    """Number of units selected by the step-up rule on standardized scores ``z``."""
    z = np.asarray(z, dtype=float)
    a = np.sort(np.abs(z))[::-1]
    return _step_up(a, _thresholds(fam, float(q_eff), z.size))


def sdci_z(z, fam: MarginalFamily, q_eff: float):
    """Core of :func:`sdci` on standardized scores.

    Returns ``(R, selected, bounds)`` where ``bounds`` covers all units but
    only selected entries are meaningful.
    """
    z = np.asarray(z, dtype=float)
    m = z.size
    a = np.abs(z)
    order = np.sort(a)[::-1]
    R = _step_up(order, _thresholds(fam, float(q_eff), m))
    if R == 0:
        return 0, np.zeros(m, dtype=bool), None
    selected = a >= order[R - 1]
    b = interval_bounds(fam, z[selected], R * q_eff / m)
    return R, selected, b


def _expand(b: Bounds | None, selected: np.ndarray, sd: np.ndarray) -> Bounds:
    m = selected.size
    lo = np.full(m, np.nan)
    hi = np.full(m, np.nan)
    lc = np.zeros(m, dtype=bool)
    hc = np.zeros(m, dtype=bool)
    if b is not None:
        s = sd[selected]
        lo[selected] = b.lower * s
        hi[selected] = b.upper * s
        lc[selected] = b.lower_closed
        hc[selected] = b.upper_closed
    return Bounds(lo, hi, lc, hc)


def _family_on_z(fam: MarginalFamily, sd: np.ndarray) -> MarginalFamily:
    if fam.kind is not Kind.MQC_DELTA:
        return fam
    # delta lives on the estimate scale, so all units must share one sd
    if not np.all(sd == sd[0]):
        raise InputError("mqc-delta requires a common sd across units")
    return MarginalFamily.mqc_delta(fam.delta / sd[0], base=fam.base)


def sdci(units: Sequence[Unit], cfg: ProcedureConfig) -> SelectionResult:
    """FCR-adjusted selective sign-determining confidence intervals.

    The marginal thresholds ``tau(r)`` at levels ``r q / m`` are compared
    with the ordered absolute standardized scores; ``R`` is the largest
    ``r`` with ``tau(r) <= |z|_(r)``.  Selected units get their level
    ``R q / m`` interval, rescaled by their sd.

    Examples
    --------
    >>> res = sdci([Unit("a", 3.0), Unit("b", 0.5), Unit("c", -2.5)], ProcedureConfig(0.1))
    >>> res.R, res.selected.tolist()
    (2, [True, False, True])
    """
    z, sd, ids = _standardize(units)
    fam = _family_on_z(cfg.family, sd)
    q_eff = cfg.effective_q(z.size)
    R, selected, b = sdci_z(z, fam, q_eff)
    full = _expand(b, selected, sd)
    codes = np.where(selected, classify_codes(full), NONE)
    return SelectionResult(R, z.size, q_eff, ids, selected, codes, full)


def bh_directional_z(z, q: float, base=None):
    """Directional BH on standardized scores; returns ``(R, selected)``."""
    fam = MarginalFamily.symmetric() if base is None else MarginalFamily.symmetric(base)
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    order = np.sort(a)[::-1]
    # p_(r) <= r q / m  is  |z|_(r) >= c_{r q / (2 m)}
    R = _step_up(order, _thresholds(fam, float(q), z.size))
    if R == 0:
        return 0, np.zeros(z.size, dtype=bool)
    return R, a >= order[R - 1]


def bh_directional(units: Sequence[Unit], q: float) -> SelectionResult:
    """Directional BH: select by two-sided p-values, classify by the estimate's sign."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    z, _, ids = _standardize(units)
    R, selected = bh_directional_z(z, q)
    codes = np.select([selected & (z > 0), selected & (z < 0)], [POS, NEG], default=NONE)
    return SelectionResult(R, z.size, q, ids, selected, codes, None)


def by_adjust(selected, R_min: int, units: Sequence[Unit], family: MarginalFamily,
              q: float) -> list[Interval]:
    """BY-adjusted intervals at level ``R_min q / m`` for the selected indices."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    z, sd, _ = _standardize(units)
    m = z.size
    idx = np.asarray(list(selected), dtype=int)
    if idx.size == 0:
        return []
    if not 1 <= R_min <= m:
        raise DomainError(f"R_min must lie in [1, {m}], got {R_min}")
    if np.any((idx < 0) | (idx >= m)):
        raise DomainError("selected index out of range")
    fam = _family_on_z(family, sd)
    b = interval_bounds(fam, z[idx], R_min * q / m)
    return [b.interval(k).scaled(sd[i]) for k, i in enumerate(idx)]


def error_counts(theta, selected, codes, bounds: Bounds | None) -> ErrorMetrics:
    """Count non-covering intervals and wrong sign decisions among the selected."""
    theta = np.asarray(theta, dtype=float)
    if bounds is not None:
        R_ci = int(selected.sum())
        V_ci = int((selected & ~bounds.covers(theta)).sum())
    else:
        R_ci = V_ci = 0
    made = codes != NONE
    wrong = (((codes == POS) & (theta <= 0)) | ((codes == NONNEG) & (theta < 0))
             | ((codes == NEG) & (theta >= 0)) | ((codes == NONPOS) & (theta > 0)))
    return ErrorMetrics(R_ci, V_ci, int(made.sum()), int(wrong.sum()))


def evaluate(result: SelectionResult, truth) -> ErrorMetrics:
    """FCP and weak directional FDP of a result against the true parameters."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (result.m,):
        raise InputError(f"truth has {truth.size} entries for {result.m} units")
    return error_counts(truth, result.selected, result.codes, result.bounds)
