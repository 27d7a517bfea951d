import numpy as np
import pytest

from sdci.errors import ConfigError
from sdci.intervals import MarginalFamily
from sdci.selection import ProcedureConfig
from sdci.simulation import (
    ExpNormalMix, FixedVector, Independent, NormalPrior, RectSimConfig, SimConfig, SmoothedField,
    SparseField, run, run_rect, smoothed_field_noise, worker_count,
)


def small_cfg(**kw):
    base = dict(m=50, theta_model=NormalPrior(2.0), procedure=ProcedureConfig(0.1), n_reps=40,
                seed=11)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------- determinism


def test_same_seed_is_identical():
    a, b = run(small_cfg(), workers=1), run(small_cfg(), workers=1)
    np.testing.assert_array_equal(a.fcp, b.fcp)
    np.testing.assert_array_equal(a.R, b.R)
    assert a.to_dict() == b.to_dict()


def test_different_seed_differs():
    a, b = run(small_cfg(), workers=1), run(small_cfg(seed=12), workers=1)
    assert not np.array_equal(a.R, b.R) or not np.array_equal(a.fcp, b.fcp)


def test_pool_matches_serial():
    cfg = small_cfg(n_reps=60)
    a, b = run(cfg, workers=1), run(cfg, workers=3)
    np.testing.assert_array_equal(a.fcp, b.fcp)
    np.testing.assert_array_equal(a.wdfdp, b.wdfdp)
    np.testing.assert_array_equal(a.R, b.R)


def test_rect_pool_matches_serial():
    cfg = RectSimConfig(theta1=[0.0] * 20, theta2=[4.0] * 5 + [0.0] * 15, n_reps=30, seed=2)
    assert run_rect(cfg, workers=1) == run_rect(cfg, workers=2)


# ---------------------------------------------------------------- smoothed field


@pytest.mark.parametrize("fwhm", [3.3, 5.7])
def test_field_has_unit_variance(fwhm):
    rng = np.random.default_rng(0)
    draws = np.stack([smoothed_field_noise((6, 6, 6), fwhm, rng) for _ in range(10_000)])
    for idx in [(0, 0, 0), (3, 3, 3), (0, 3, 5), (5, 5, 0)]:
        assert draws[(slice(None),) + idx].var() == pytest.approx(1.0, abs=0.05)


def lag1_corr(fwhm, n=2000):
    rng = np.random.default_rng(1)
    x = np.stack([smoothed_field_noise((8, 8, 8), fwhm, rng) for _ in range(n)])
    a, b = x[:, 3:5, 3:5, 3].ravel(), x[:, 3:5, 3:5, 4].ravel()
    return np.corrcoef(a, b)[0, 1]


def test_correlation_grows_with_fwhm():
    r = [lag1_corr(f) for f in (3.3, 4.7, 5.7)]
    assert 0.3 < r[0] < r[1] < r[2] < 1.0


def test_tiny_fwhm_is_white_noise():
    a = smoothed_field_noise((4, 5, 6), 1e-3, np.random.default_rng(5))
    b = np.random.default_rng(5).standard_normal((4, 5, 6))
    np.testing.assert_allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize("make", [
    lambda: small_cfg(m=0),
    lambda: small_cfg(n_reps=0),
    lambda: small_cfg(method="fdr"),
    lambda: small_cfg(noise=SmoothedField((3, 3, 3), 4.7)),
    lambda: SmoothedField((10, 10), 4.7),
    lambda: SmoothedField((2, 2, 2), 0.0),
    lambda: SparseField(pi1=1.5),
    lambda: SparseField(rho1=1.0),
    lambda: SparseField(n_subjects=3),
    lambda: NormalPrior(sd=-1.0),
    lambda: ExpNormalMix(exp_mean=0.0),
    lambda: RectSimConfig(theta1=[0.0], theta2=[0.0, 1.0]),
    lambda: RectSimConfig(theta1=[0.0], theta2=[0.0], q1=0.0),
    lambda: RectSimConfig(theta1=[0.0], theta2=[0.0], family2=MarginalFamily.mqc_delta(0.5)),
])
def test_config_errors(make):
    with pytest.raises(ConfigError):
        make()


@pytest.mark.parametrize("model", [FixedVector([1.0, 2.0]), ExpNormalMix()])
def test_theta_length_mismatch(model):
    with pytest.raises(ConfigError):
        run(small_cfg(theta_model=model), workers=1)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("SDCI_THREADS", "1")
    assert worker_count(10_000) == 1
    monkeypatch.setenv("SDCI_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_count(10_000)


# ---------------------------------------------------------------- behaviour


@pytest.mark.parametrize("fam", [MarginalFamily.symmetric(), MarginalFamily.mqc(0.85)],
                         ids=lambda f: f.kind.value)
def test_global_null_fcp_below_q(fam):
    # every selection is a false coverage here, so FCP is the familywise rate
    s = run(SimConfig(m=100, theta_model=FixedVector([0.0] * 100),
                      procedure=ProcedureConfig(0.1, fam), n_reps=500, seed=4), workers=1)
    assert s.mean_fcp <= 0.1 + 2 * s.se_fcp
    assert s.wd_exceeds_fcp == 0


def test_weak_errors_never_exceed_coverage_errors():
    s = run(small_cfg(m=200, theta_model=ExpNormalMix(), n_reps=200,
                      procedure=ProcedureConfig(0.2, MarginalFamily.qc(0.85))), workers=1)
    assert s.wd_exceeds_fcp == 0
    assert np.all(s.wdfdp <= s.fcp + 1e-15)


def test_mqc_selects_between_bh_levels():
    q = 0.1
    common = dict(m=200, theta_model=ExpNormalMix(), n_reps=100, seed=8)
    mqc = run(SimConfig(procedure=ProcedureConfig(q, MarginalFamily.mqc(0.85)), **common), workers=1)
    lo = run(SimConfig(procedure=ProcedureConfig(q), method="bh", **common), workers=1)
    hi = run(SimConfig(procedure=ProcedureConfig(2 * q), method="bh", **common), workers=1)
    # same seed means the same estimates in every replicate
    assert np.all(lo.R <= mqc.R) and np.all(mqc.R <= hi.R)
    assert lo.mean_R < hi.mean_R


def test_bh_method_reports_no_coverage_errors():
    s = run(small_cfg(method="bh"), workers=1)
    assert s.mean_fcp == 0.0 and s.wd_exceeds_fcp == 0


def test_redrawn_theta_changes_between_reps():
    fixed = run(small_cfg(theta_model=SparseField(0.3, 0.6), m=64, n_reps=30,
                          noise=SmoothedField((4, 4, 4), 3.3)), workers=1)
    redraw = run(small_cfg(theta_model=SparseField(0.3, 0.6), m=64, n_reps=30,
                           noise=SmoothedField((4, 4, 4), 3.3), theta_fixed_across_reps=False),
                 workers=1)
    assert fixed.reps == redraw.reps == 30
    assert not np.array_equal(fixed.R, redraw.R)


def test_rect_identity_residual_is_small():
    rng = np.random.default_rng(0)
    cfg = RectSimConfig(theta1=rng.normal(size=40), theta2=[5.0] * 8 + list(rng.normal(size=32)),
                        n_reps=300, seed=3)
    s = run_rect(cfg, workers=1)
    assert s.frac_any_selected == 1.0
    assert abs(s.mean_diff) <= 3 * s.se_diff + 1e-12
    assert s.predicted == pytest.approx(cfg.q1 + (1 - cfg.q1) * s.mean_fcp_pc2)


def test_independent_noise_shape():
    assert Independent().draw(7, np.random.default_rng(0)).shape == (7,)
