import json

import numpy as np
import pytest
from scipy import stats

from mrsnts import mrs_garch as mg
from mrsnts import synthetic
from mrsnts.data import ReturnPanel
from mrsnts.estimation import (
    EstimationConfig,
    EstimationError,
    JointModel,
    denoise_correlation,
    estimate,
    implied_internal_sigma,
    ks_report,
    ks_statistic,
    load_model,
    marchenko_pastur_edge,
    nearest_psd,
    regime_conditional_residual_corr,
    save_model,
)
from mrsnts.tempered_stable import StdMntsParams, covariance_identity, mnts_sample, nts_marginal_cdf


def equicorr(n, rho):
    return np.full((n, n), rho) + (1 - rho) * np.eye(n)


# ---------------------------------------------------------------------------
# correlation tools


def test_conditional_corr_examples(rng):
    x = rng.standard_normal(200)
    path = np.zeros(200, int)
    path[::3] = 1
    c = regime_conditional_residual_corr(np.column_stack([x, x, -x]), path, 0)
    np.testing.assert_allclose(c, [[1, 1, -1], [1, 1, -1], [-1, -1, 1]], atol=1e-12)
    big = rng.standard_normal((10_000, 4))
    c = regime_conditional_residual_corr(big, np.zeros(10_000, int), 0)
    assert np.max(np.abs(c - np.eye(4))) < 0.05


def test_conditional_corr_uses_regime_subsample(rng):
    z = rng.standard_normal((400, 2))
    path = np.repeat([0, 1], 200)
    z[200:, 1] = z[200:, 0]
    assert regime_conditional_residual_corr(z, path, 1)[0, 1] == pytest.approx(1.0)
    assert abs(regime_conditional_residual_corr(z, path, 0)[0, 1]) < 0.2


def test_conditional_corr_sparse_regime(rng):
    path = np.zeros(100, int)
    path[:4] = 1
    with pytest.raises(ValueError, match="need at least"):
        regime_conditional_residual_corr(rng.standard_normal((100, 3)), path, 1)


def test_marchenko_pastur_edge():
    assert marchenko_pastur_edge(50, 100) == pytest.approx((1 + np.sqrt(0.5)) ** 2)
    assert marchenko_pastur_edge(50, 100) == pytest.approx(2.9142, abs=1e-4)
    with pytest.raises(ValueError):
        denoise_correlation(np.eye(5), 5)


def test_denoise_identity_fixed_point():
    np.testing.assert_allclose(denoise_correlation(np.eye(6), 100), np.eye(6), atol=1e-14)


def test_denoise_pure_noise_collapses(rng):
    x = rng.standard_normal((100, 50))
    c = np.corrcoef(x, rowvar=False)
    edge = marchenko_pastur_edge(50, 100)
    assert np.max(np.linalg.eigvalsh(c)) < edge
    raw = denoise_correlation(c, 100, rescale=False)
    np.testing.assert_allclose(np.linalg.eigvalsh(raw), 1.0, atol=1e-10)


def test_denoise_keeps_factor_and_trace(rng):
    n, t = 20, 500
    f = rng.standard_normal((t, 1))
    x = 0.8 * f + 0.6 * rng.standard_normal((t, n))
    c = np.corrcoef(x, rowvar=False)
    w = np.linalg.eigvalsh(c)
    assert w[-1] > 5 * marchenko_pastur_edge(n, t)
    raw = denoise_correlation(c, t, rescale=False)
    v = np.linalg.eigvalsh(raw)
    assert v[-1] == pytest.approx(w[-1], abs=1e-9)
    assert np.trace(raw) == pytest.approx(n, abs=1e-10)
    out = denoise_correlation(c, t)
    np.testing.assert_allclose(np.diag(out), 1.0, atol=1e-12)
    np.testing.assert_allclose(out, out.T)


def test_nearest_psd_examples():
    a = equicorr(3, 0.4)
    np.testing.assert_allclose(nearest_psd(a), a, atol=1e-12)
    b = nearest_psd(np.array([[1, 1.2], [1.2, 1]]))
    assert np.min(np.linalg.eigvalsh(b)) >= 1e-8 * 0.999
    assert b[0, 1] < 1.2
    np.testing.assert_allclose(np.diag(b), 1.0)
    d = nearest_psd(np.diag([1.0, -0.5]), unit_diagonal=False)
    np.testing.assert_allclose(d, np.diag([1.0, 1e-8]), atol=1e-15)
    with pytest.raises(ValueError):
        nearest_psd(np.array([[1, 0.2], [0.3, 1]]))


def test_nearest_psd_random_indefinite(rng):
    for _ in range(20):
        a = rng.uniform(-1, 1, (5, 5))
        a = (a + a.T) / 2
        np.fill_diagonal(a, 1)
        b = nearest_psd(a)
        np.linalg.cholesky(b)
        np.testing.assert_allclose(np.diag(b), 1.0, atol=1e-12)


def test_implied_sigma_examples():
    sx = equicorr(3, 0.5)
    np.testing.assert_allclose(implied_internal_sigma(sx, 1.2, 1.0, np.zeros(3), np.ones(3)), sx, atol=1e-12)
    lam, theta, nu = 1.1, 0.7, np.array([0.4, -0.3, 0.2])
    p = StdMntsParams(lam, theta, nu, equicorr(3, 0.35))
    back = implied_internal_sigma(covariance_identity(lam, theta, nu, p.gamma, p.sigma), lam, theta, nu)
    np.testing.assert_allclose(back, p.sigma, atol=1e-10)
    emp = np.corrcoef(mnts_sample(p, 300_000, 1), rowvar=False)
    np.testing.assert_allclose(implied_internal_sigma(emp, lam, theta, nu), p.sigma, atol=0.02)
    bad = implied_internal_sigma(equicorr(3, 0.95), 0.5, 0.3, np.array([0.6, -0.6, 0.6]))
    np.linalg.cholesky(bad)


# ---------------------------------------------------------------------------
# KS reporting


def test_ks_statistic_against_scipy(rng):
    x = rng.standard_normal(300)
    assert ks_statistic(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)


def test_ks_null_distribution():
    p = StdMntsParams(1.3, 0.9, [-0.2], np.eye(1))
    draws = mnts_sample(p, 100 * 400, seed=2)[:, 0].reshape(100, 400)
    pv = [stats.kstwobign.sf(np.sqrt(400) * ks_statistic(d, lambda v: nts_marginal_cdf(v, 0, p))) for d in draws]
    assert np.mean(np.array(pv) > 0.05) >= 0.90


def test_ks_report_rows():
    p = [StdMntsParams(1.3, 0.9, [0.0, 0.1], np.eye(2)), StdMntsParams(1.0, 0.5, [0.0, -0.2], np.eye(2))]
    z = mnts_sample(p[0], 300, seed=1)
    path = np.zeros(300, int)
    path[:10] = 1
    rows = ks_report(z + np.array([0.0, 3.0]), path, p, ["X", "Y"])
    assert [(r.asset, r.regime) for r in rows] == [("X", 1), ("X", 2), ("Y", 1), ("Y", 2)]
    x1, x2, y1, _ = rows
    assert x1.pvalue > 0.01 and y1.pvalue < 1e-6
    assert np.isnan(x2.pvalue) and x2.n == 10
    assert x1.nu == 0.0 and y1.nu == pytest.approx(0.1)
    assert 0 <= x1.statistic <= 1


# ---------------------------------------------------------------------------
# pipeline


def test_model_invariants(small_model):
    m = small_model
    assert m.k == 2 and m.n_assets == 3
    assert m.regime_counts.sum() == 600
    for j in range(m.k):
        np.linalg.cholesky(m.nts[j].sigma)
        np.testing.assert_allclose(m.nts[j].sigma, m.nts[j].sigma.T)
        bound = np.sqrt(2 * m.nts[j].theta / (2 - m.nts[j].lam))
        assert np.all(np.abs(m.nts[j].nu) < bound)
    assert all(f.params.k == m.k for f in m.asset_fits)
    assert len(m.diagnostics["ks"]) == 3 * m.k


def test_covariance_round_trip(small_model):
    for j in range(small_model.k):
        p = small_model.nts[j]
        rebuilt = covariance_identity(p.lam, p.theta, p.nu, p.gamma, p.sigma)
        assert np.linalg.norm(rebuilt - small_model.sigma_x[j]) < 0.1


def test_document_round_trip(small_model, tmp_path):
    path = save_model(small_model, tmp_path / "m.json")
    again = load_model(path)
    assert again.dumps() == small_model.dumps()
    doc = json.loads(path.read_text())
    assert doc["format"] == "mrsnts-model" and doc["version"] == 1
    with pytest.raises(ValueError):
        JointModel.from_document({**doc, "version": 99})


def test_pipeline_is_deterministic(small_market, small_model):
    panel, index, _ = small_market
    cfg = EstimationConfig(regimes=2, n_starts=3, min_window=500, seed=5)
    assert estimate(panel, index, cfg).digest() == small_model.digest()


def test_single_asset_equal_to_index(small_market):
    panel, index, _ = small_market
    one = ReturnPanel(panel.dates, ("IDX",), index)
    m = estimate(one, index, EstimationConfig(regimes=2, n_starts=2, min_window=500))
    for j in range(m.k):
        np.testing.assert_allclose(m.nts[j].sigma, [[1.0]])


def test_errors_carry_step(small_market):
    panel, index, _ = small_market
    with pytest.raises(EstimationError) as e:
        estimate(panel, index[:-1], EstimationConfig(min_window=10))
    assert e.value.step == 0
    with pytest.raises(EstimationError, match="minimum"):
        estimate(panel, index, EstimationConfig())
    strict = EstimationConfig(regimes=3, n_starts=1, min_window=500, sparse_regime="error", min_tail_obs=400)
    with pytest.raises(EstimationError) as e:
        estimate(panel, index, strict)
    assert e.value.step in (2, 4, 5)


@pytest.mark.slow
def test_recovers_regime_correlations():
    trans = np.array([[0.995, 0.005], [0.0075, 0.9925]])

    def model(vol):
        a, b = np.array([0.05, 0.08]), np.array([0.90, 0.85])
        target = np.array([vol, 3 * vol]) ** 2
        return mg.MrsGarchParams(np.zeros(2), target * (1 - a - b), a, b, trans, "normal")

    truth = [equicorr(3, 0.2), equicorr(3, 0.7)]
    nts = [StdMntsParams(1.7, 2.0, np.zeros(4), equicorr(4, 0.2)),
           StdMntsParams(1.5, 1.5, np.zeros(4), equicorr(4, 0.7))]
    idx, r, states = synthetic.simulate_market(model(0.01), [model(v) for v in (0.01, 0.012, 0.014)],
                                               nts, 5000, seed=0)
    panel = ReturnPanel(synthetic.business_days(5000), ("A1", "A2", "A3"), r)
    m = estimate(panel, idx, EstimationConfig(regimes=2, n_starts=3, min_window=1000, seed=1))
    assert np.mean(m.index_path == states) > 0.9
    for j in range(2):
        assert np.linalg.norm(m.sigma_x[j] - truth[j]) < 0.15
