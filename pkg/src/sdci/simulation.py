"""Monte Carlo experiments for selection procedures.

A :class:`SimConfig` names a parameter model, a noise model, a procedure
and a replicate count.  :func:`run` draws the parameters (once, or afresh
in every replicate), simulates noisy estimates, runs the procedure and
averages the false coverage and weak directional false discovery
proportions.

Every replicate draws from its own counter-based stream derived from the
master seed, so results do not depend on how replicates are spread over
worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import ndimage

from .dist import fisher_z
from .errors import ConfigError
from .intervals import NEG, NONE, POS, Kind, MarginalFamily, classify_codes
from .selection import ProcedureConfig, bh_directional_z, error_counts, sdci_z

__all__ = [
    "FixedVector",
    "ExpNormalMix",
    "NormalPrior",
    "SparseField",
    "Independent",
    "SmoothedField",
    "SimConfig",
    "SimSummary",
    "run",
    "smoothed_field_noise",
    "RectSimConfig",
    "RectSummary",
    "run_rect",
    "worker_count",
]


@dataclass(frozen=True)
class FixedVector:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def draw(self, m, rng):
        if len(self.values) != m:
            raise ConfigError(f"theta vector has {len(self.values)} entries, m = {m}")
        return np.array(self.values)


@dataclass(frozen=True)
class ExpNormalMix:
    """``n_exp`` exponential magnitudes followed by ``n_norm`` normal draws."""

    n_exp: int = 160
    exp_mean: float = 0.5
    n_norm: int = 40
    norm_mean: float = 3.0
    norm_sd: float = 1.0
    random_signs: bool = True

    def __post_init__(self):
        if self.n_exp < 0 or self.n_norm < 0 or self.exp_mean <= 0 or self.norm_sd < 0:
            raise ConfigError("exp-normal mixture parameters out of range")

    def draw(self, m, rng):
        if self.n_exp + self.n_norm != m:
            raise ConfigError(f"n_exp + n_norm = {self.n_exp + self.n_norm}, m = {m}")
        theta = np.concatenate([rng.exponential(self.exp_mean, self.n_exp),
                                rng.normal(self.norm_mean, self.norm_sd, self.n_norm)])
        if self.random_signs:
            theta = theta * rng.choice([-1.0, 1.0], size=m)
        return theta


@dataclass(frozen=True)
class NormalPrior:
    sd: float = 2.0
    mean: float = 0.0

    def __post_init__(self):
        if not self.sd >= 0:
            raise ConfigError("prior sd must be non-negative")

    def draw(self, m, rng):
        return rng.normal(self.mean, self.sd, m)


@dataclass(frozen=True)
class SparseField:
    """Each voxel carries the Fisher-transformed correlation ``rho1`` with probability ``pi1``."""

    pi1: float = 0.1
    rho1: float = 0.3
    n_subjects: int = 16

    def __post_init__(self):
        if not 0.0 <= self.pi1 <= 1.0:
            raise ConfigError("pi1 must lie in [0, 1]")
        if not -1.0 < self.rho1 < 1.0:
            raise ConfigError("rho1 must lie in (-1, 1)")
        if self.n_subjects < 4:
            raise ConfigError("n_subjects must be at least 4")

    def draw(self, m, rng):
        on = rng.random(m) < self.pi1
        return np.where(on, float(fisher_z(self.rho1, self.n_subjects)), 0.0)


ThetaModel = Union[FixedVector, ExpNormalMix, NormalPrior, SparseField]


@dataclass(frozen=True)
class Independent:
    def draw(self, m, rng):
        return rng.standard_normal(m)


@dataclass(frozen=True)
class SmoothedField:
    dims: tuple = (10, 10, 10)
    fwhm: float = 4.7

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError("dims must be three positive integers")
        if not (self.fwhm > 0 and math.isfinite(self.fwhm)):
            raise ConfigError("fwhm must be positive")

    def draw(self, m, rng):
        if math.prod(self.dims) != m:
            raise ConfigError(f"dims {self.dims} hold {math.prod(self.dims)} voxels, m = {m}")
        return smoothed_field_noise(self.dims, self.fwhm, rng).ravel()


NoiseModel = Union[Independent, SmoothedField]


def _gaussian_kernel(fwhm):
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def smoothed_field_noise(dims, fwhm, rng) -> np.ndarray:
    """Unit-variance Gaussian noise smoothed by a separable Gaussian kernel.

    White noise on the grid is convolved axis by axis with a Gaussian of
    the given full width at half maximum, truncated at four standard
    deviations and zero outside the grid.  Each voxel is then divided by
    its exact standard deviation, which is smaller near the boundary.
    """
    dims = tuple(int(d) for d in dims)
    if not fwhm > 0:
        raise ConfigError("fwhm must be positive")
    k = _gaussian_kernel(fwhm)
    field_ = rng.standard_normal(dims)
    var = np.ones(dims)
    for axis, n in enumerate(dims):
        field_ = ndimage.convolve1d(field_, k, axis=axis, mode="constant", cval=0.0)
        ax_var = ndimage.convolve1d(np.ones(n), k * k, mode="constant", cval=0.0)
        shape = [1, 1, 1]
        shape[axis] = n
        var = var * ax_var.reshape(shape)
    return field_ / np.sqrt(var)


@dataclass(frozen=True)
class SimConfig:
    m: int
    theta_model: ThetaModel
    procedure: ProcedureConfig
    noise: NoiseModel = field(default_factory=Independent)
    n_reps: int = 1000
    seed: int = 0
    theta_fixed_across_reps: bool = True
    method: str = "sdci"

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.n_reps < 1:
            raise ConfigError("n_reps must be positive")
        if self.method not in ("sdci", "bh"):
            raise ConfigError(f"method must be 'sdci' or 'bh', got {self.method!r}")
        if isinstance(self.noise, SmoothedField) and math.prod(self.noise.dims) != self.m:
            raise ConfigError(f"dims {self.noise.dims} do not multiply to m = {self.m}")


@dataclass(frozen=True)
class SimSummary:
    mean_fcp: float
    se_fcp: float
    mean_wdfdp: float
    se_wdfdp: float
    mean_R: float
    reps: int
    wd_exceeds_fcp: int
    fcp: np.ndarray = field(repr=False, compare=False)
    wdfdp: np.ndarray = field(repr=False, compare=False)
    R: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "mean_fcp": self.mean_fcp,
            "se_fcp": self.se_fcp,
            "mean_wdfdp": self.mean_wdfdp,
            "se_wdfdp": self.se_wdfdp,
            "mean_R": self.mean_R,
            "reps": self.reps,
            "wd_exceeds_fcp": self.wd_exceeds_fcp,
        }


def _stream(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _replicate(cfg: SimConfig, theta, rng):
    m = cfg.m
    if theta is None:
        theta = cfg.theta_model.draw(m, rng)
    y = theta + cfg.noise.draw(m, rng)
    q_eff = cfg.procedure.effective_q(m)
    if cfg.method == "bh":
        R, selected = bh_directional_z(y, q_eff)
        codes = np.select([selected & (y > 0), selected & (y < 0)], [POS, NEG], default=NONE)
        met = error_counts(theta, selected, codes, None)
        return R, met
    fam = cfg.procedure.family
    R, selected, b = sdci_z(y, fam, q_eff)
    if R == 0:
        return 0, error_counts(theta, selected, np.full(m, NONE), None)
    codes = np.full(m, NONE)
    codes[selected] = classify_codes(b)
    # bounds for the selected entries only
    met = error_counts(theta[selected], np.ones(R, dtype=bool), codes[selected], b)
    return R, met


def _run_chunk(cfg: SimConfig, start: int, stop: int, theta):
    out = np.empty((stop - start, 5))
    for k, rep in enumerate(range(start, stop)):
        rng = _stream(cfg.seed, 1, rep)
        R, met = _replicate(cfg, theta, rng)
        out[k] = (R, met.R_ci, met.V_ci, met.R_d, met.V_d)
    return out


def worker_count(n_reps: int) -> int:
    """Worker processes to use: the CPU count capped by ``SDCI_THREADS``."""
    cap = os.environ.get("SDCI_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"SDCI_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n, n_reps // 50 or 1))


def _map_chunks(fn, cfg, n_reps, theta, workers):
    workers = worker_count(n_reps) if workers is None else max(1, int(workers))
    if workers == 1:
        return fn(cfg, 0, n_reps, theta)
    edges = np.linspace(0, n_reps, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = [pool.submit(fn, cfg, int(a), int(b), theta) for a, b in zip(edges[:-1], edges[1:])]
        # gathered in submission order, so scheduling cannot change the result
        return np.concatenate([p.result() for p in parts])


def _mean_se(x):
    n = x.size
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(x)), se


def run(cfg: SimConfig, workers: int | None = None) -> SimSummary:
    """Run all replicates of ``cfg`` and summarise them.

    Parameters
    ----------
    cfg : SimConfig
    workers : int, optional
        Number of processes; defaults to :func:`worker_count`.
    """
    theta = None
    if cfg.theta_fixed_across_reps:
        theta = cfg.theta_model.draw(cfg.m, _stream(cfg.seed, 0))
    rows = _map_chunks(_run_chunk, cfg, cfg.n_reps, theta, workers)
    R, R_ci, V_ci, R_d, V_d = rows.T
    fcp = V_ci / np.maximum(R_ci, 1)
    wdfdp = V_d / np.maximum(R_d, 1)
    mf, sf = _mean_se(fcp)
    mw, sw = _mean_se(wdfdp)
    exceeds = int(np.sum(wdfdp > fcp)) if cfg.method == "sdci" else 0
    return SimSummary(mf, sf, mw, sw, float(np.mean(R)), cfg.n_reps, exceeds,
                      fcp, wdfdp, R.astype(int))


@dataclass(frozen=True)
class RectSimConfig:
    """Two independent unit-variance coordinates per parameter.

    Selection uses only the second coordinate; rectangles combine a fixed
    level ``1 - q1`` interval for the first with the selection-adjusted
    ``family2`` interval for the second.
    """

    theta1: tuple
    theta2: tuple
    q1: float = 0.01
    q2: float = 0.05
    family2: MarginalFamily = field(default_factory=MarginalFamily.symmetric)
    n_reps: int = 2000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta1", tuple(float(v) for v in self.theta1))
        object.__setattr__(self, "theta2", tuple(float(v) for v in self.theta2))
        if len(self.theta1) != len(self.theta2) or not self.theta1:
            raise ConfigError("theta1 and theta2 must be non-empty and of equal length")
        if not 0.0 < self.q1 <= 1.0 or not 0.0 < self.q2 < 1.0:
            raise ConfigError("levels out of range")
        if self.family2.kind is Kind.MQC_DELTA:
            raise ConfigError("rectangle simulation supports sign families only")


@dataclass(frozen=True)
class RectSummary:
    """Rectangle FCP, second-coordinate FCP and the identity residual.

    ``diff`` is the per-replicate ``FCP_rect - q1 * [R >= 1] - (1 - q1) FCP_2``,
    whose expectation is zero.
    """

    mean_fcp_rect: float
    se_fcp_rect: float
    mean_fcp_pc2: float
    se_fcp_pc2: float
    mean_diff: float
    se_diff: float
    frac_any_selected: float
    reps: int
    q1: float

    @property
    def predicted(self) -> float:
        """``q1 + (1 - q1) * mean FCP_2``, the rectangle FCR implied by the identity."""
        return self.q1 + (1.0 - self.q1) * self.mean_fcp_pc2


def _rect_chunk(cfg: RectSimConfig, start: int, stop: int, _theta):
    from .bivariate import rect_cover_counts

    t1 = np.array(cfg.theta1)
    t2 = np.array(cfg.theta2)
    out = np.empty((stop - start, 3))
    for k, rep in enumerate(range(start, stop)):
        rng = _stream(cfg.seed, 1, rep)
        y1 = t1 + rng.standard_normal(t1.size)
        y2 = t2 + rng.standard_normal(t2.size)
        R, selected, _ = sdci_z(y2, cfg.family2, cfg.q2)
        v_rect, v2 = rect_cover_counts(t1, t2, y1, y2, cfg.q1, cfg.q2, cfg.family2, selected, R)
        out[k] = (R, v_rect, v2)
    return out


def run_rect(cfg: RectSimConfig, workers: int | None = None) -> RectSummary:
    """Simulate the rectangle procedure and the identity linking its FCR to the pc2 FCR."""
    rows = _map_chunks(_rect_chunk, cfg, cfg.n_reps, None, workers)
    R, v_rect, v2 = rows.T
    f_rect = v_rect / np.maximum(R, 1)
    f2 = v2 / np.maximum(R, 1)
    diff = f_rect - cfg.q1 * (R >= 1) - (1.0 - cfg.q1) * f2
    mr, sr = _mean_se(f_rect)
    m2, s2 = _mean_se(f2)
    md, sd = _mean_se(diff)
    return RectSummary(mr, sr, m2, s2, md, sd, float(np.mean(R >= 1)), cfg.n_reps, cfg.q1)
