"""The twelve acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import csv
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from mrsnts import backtest as bt
from mrsnts import mrs_garch as mg
from mrsnts import risk, synthetic
from mrsnts.data import ReturnPanel
from mrsnts.optimizer import DEFAULT_BOX, DEFAULT_FLOORS, LEVEL_LABELS, Measure, frontier, solve
from mrsnts.tempered_stable import StdMntsParams, covariance_identity, mnts_sample, nu_bound, subordinator_sample

from oracles import garch_loglik, simplex_grid, spectral_radius_dense

pytestmark = pytest.mark.acceptance

N_DRAWS = 10**6


def random_corr(rng, n):
    a = rng.standard_normal((n, n + 2))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    return c / np.outer(d, d)


def sample_variance_se(x):
    c = x - x.mean(axis=0)
    return np.std(c * c, axis=0) / np.sqrt(x.shape[0])


# ---------------------------------------------------------------------------
# tempered stable


def test_01_subordinator_moments(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for i, (lam, theta) in enumerate([(0.8, 0.5), (1.2, 1.0), (1.8, 5.0)]):
        x = subordinator_sample(lam, theta, N_DRAWS, seed=100 + i)
        a = lam / 2
        k2 = (1 - a) / theta
        k4 = (1 - a) * (2 - a) * (3 - a) / theta**3
        se_mean = np.sqrt(k2 / N_DRAWS)
        se_var = np.sqrt((k4 + 2 * k2**2) / N_DRAWS)
        assert k2 == pytest.approx((2 - lam) / (2 * theta))
        worst = max(worst, abs(x.mean() - 1) / se_mean, abs(x.var() - k2) / se_var)
    elapsed = time.perf_counter() - t0
    acceptance(1, "subordinator moments", worst < 5 and elapsed < 30,
               f"max deviation {worst:.2f} SE, {elapsed:.1f} s")


def test_02_standardization(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(20):
        lam = rng.uniform(0.3, 1.9)
        theta = float(np.exp(rng.uniform(np.log(0.2), np.log(10.0))))
        nu = rng.uniform(-0.9, 0.9, 3) * nu_bound(lam, theta)
        p = StdMntsParams(lam, theta, nu, random_corr(rng, 3))
        x = mnts_sample(p, N_DRAWS, seed=200 + i)
        dev_mean = np.abs(x.mean(axis=0)) / (x.std(axis=0) / np.sqrt(N_DRAWS))
        dev_var = np.abs(x.var(axis=0) - 1) / sample_variance_se(x)
        worst = max(worst, dev_mean.max(), dev_var.max())
    elapsed = time.perf_counter() - t0
    acceptance(2, "stdMNTS zero mean and unit variance", worst < 5 and elapsed < 120,
               f"20 parameter sets x 3 components, max deviation {worst:.2f} SE, {elapsed:.1f} s")


def test_03_covariance_identity(acceptance):
    sigma = np.array([[1.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 1.0]])
    p = StdMntsParams(1.1, 0.8, [0.4, -0.3, 0.2], sigma)
    x = mnts_sample(p, N_DRAWS, seed=3)
    target = covariance_identity(p.lam, p.theta, p.nu, p.gamma, p.sigma)
    c = x - x.mean(axis=0)
    emp = c.T @ c / N_DRAWS
    prod = c[:, :, None] * c[:, None, :]
    se = prod.std(axis=0) / np.sqrt(N_DRAWS)
    worst = float(np.max(np.abs(emp - target) / se))
    acceptance(3, "covariance identity", worst < 5, f"N=3, max deviation {worst:.2f} SE")


# ---------------------------------------------------------------------------
# MRS-GARCH


def test_04_nesting(acceptance):
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(100):
        a, b = rng.uniform(0, 0.25), rng.uniform(0.4, 0.74)
        om, eta = rng.uniform(0.01, 0.5), rng.normal(0, 0.1)
        df = None if i % 2 == 0 else rng.uniform(3, 30)
        r = rng.standard_normal(500) * np.sqrt(om / (1 - a - b)) + eta
        p = mg.MrsGarchParams([eta], om, a, b, [[1.0]], "normal" if df is None else "t", df)
        worst = max(worst, abs(mg.loglik(p, r) - garch_loglik(r, eta, om, a, b, df)))
    acceptance(4, "k=1 nests plain GARCH", worst <= 1e-8, f"100 pairs, max |diff| {worst:.2e}")


def test_05_stationarity(acceptance):
    rng = np.random.default_rng(5)
    exact = True
    for _ in range(50):
        a, b = rng.uniform(0, 0.5), rng.uniform(0, 0.5)
        exact &= mg.stationarity_spectral_radius(mg.MrsGarchParams([0.0], 1.0, a, b, [[1.0]])) == a + b
    worst = 0.0
    for _ in range(50):
        trans = rng.dirichlet([1, 1], 2)
        a, b = rng.uniform(0, 0.3, 2), rng.uniform(0, 0.99, 2)
        p = mg.MrsGarchParams([0.0, 0.0], [1.0, 1.0], a, b, trans)
        worst = max(worst, abs(mg.stationarity_spectral_radius(p) - spectral_radius_dense(trans, a, b)))
    acceptance(5, "spectral radius", exact and worst <= 1e-10,
               f"k=1 exact: {exact}, k=2 max |diff| {worst:.2e} over 50 models")


@pytest.mark.slow
def test_06_simulation_recovery(acceptance):
    true = mg.MrsGarchParams([0.0005, -0.0005], [5e-6, 1.6e-4], [0.05, 0.10], [0.90, 0.80],
                             [[0.98, 0.02], [0.03, 0.97]], "t", 8.0)
    t0 = time.perf_counter()
    ok = 0
    for s in range(20):
        r = mg.simulate(true, 5000, seed=1000 + s)[0]
        p = mg.fit(r, 2, "t", seed=s).params  # labels already canonical (ascending regime variance)
        d_trans = np.abs(np.diag(p.trans) - np.diag(true.trans)).max()
        d_pers = np.abs(p.alpha + p.beta - (true.alpha + true.beta)).max()
        ok += d_trans <= 0.1 and d_pers <= 0.1
    elapsed = time.perf_counter() - t0
    acceptance(6, "simulation recovery", ok >= 18 and elapsed < 600, f"{ok}/20 trials, {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# risk measures


def test_07_risk_exactness(acceptance):
    x = np.arange(-4, 6)
    c9, c8 = risk.cvar_scenario(x, 0.9), risk.cvar_scenario(x, 0.8)
    rng = np.random.default_rng(7)
    exact = True
    for _ in range(1000):
        dd = risk.drawdowns(np.cumsum(rng.normal(0, 1, rng.integers(1, 60))))
        exact &= risk.cdar_single(dd, 0) == risk.add(dd) and risk.cdar_single(dd, 1) == risk.mdd(dd)
    ok = c9 == 4 and c8 == 3.5 and exact
    acceptance(7, "risk measure exactness", ok, f"CVaR 0.9={c9}, 0.8={c8}, CDaR endpoints exact on 1000 series: {exact}")


def test_08_cdar_forms(acceptance):
    grid = [Fraction(v) for v in range(4)]
    etas = [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1)]
    cases = mismatches = 0
    for m in range(1, 7):
        for dd in itertools.product(grid, repeat=m):
            d = np.array(dd, dtype=object)
            for eta in etas:
                cases += 1
                mismatches += risk.cdar_single(d, eta) != risk.cdar_mixed(d, eta)
    acceptance(8, "variational and mixed CDaR agree", mismatches == 0,
               f"{cases} exact cases, {mismatches} mismatches")


# ---------------------------------------------------------------------------
# optimizer


def _tail_mean(values, eta):
    """Exact upper-tail average of the (1 - eta) mass along axis 0 (eta = 1 gives the max)."""
    v = -np.sort(-values, axis=0)
    k = v.shape[0]
    if eta >= 1:
        return v[0]
    mass = (1 - eta) * k
    whole = int(np.floor(mass + 1e-12))
    out = v[:whole].sum(axis=0)
    if whole < k and mass - whole > 1e-12:
        out = out + (mass - whole) * v[whole]
    return out / mass


def test_09_optimizer_vs_grid(acceptance):
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    worst_gap, worst_res, ok = -np.inf, 0.0, True
    for i in range(25):
        n, s, m = int(rng.integers(2, 5)), int(rng.integers(10, 51)), int(rng.integers(2, 11))
        r = rng.normal(rng.uniform(-0.002, 0.002, n), rng.uniform(0.005, 0.02, n), (s, m, n))
        terminal, acc = r.sum(axis=1), np.cumsum(r, axis=1)
        d = float(np.quantile(terminal.mean(axis=0), 0.5)) if i % 2 else -np.inf
        grid = np.array(list(simplex_grid(n, 0.02)))
        grid = grid[grid @ terminal.mean(axis=0) >= d]
        for measure in (Measure("cvar", rng.choice([0.5, 0.7, 0.9])),
                        Measure("cdar", rng.choice([0.0, 0.3, 0.7, 1.0]))):
            p = solve(r, measure, d, (0.0, 1.0))
            if measure.kind == "cvar":
                values = _tail_mean(-(terminal @ grid.T), measure.eta)
                lip = np.abs(terminal).max()
            else:
                path = np.einsum("smn,gn->smg", acc, grid)
                peak = np.maximum.accumulate(np.maximum(path, 0.0), axis=1)
                values = _tail_mean((peak - path).reshape(s * m, -1), measure.eta)
                lip = 2 * np.abs(acc).max()
            bound = lip * 0.02 * n  # L1 distance to the nearest grid point is at most 0.02 n
            gap = p.objective - values.min()
            res = max(abs(p.weights.sum() - 1), max(0.0, -p.weights.min()), max(0.0, p.weights.max() - 1),
                      max(0.0, d - p.expected_return) if np.isfinite(d) else 0.0)
            worst_gap, worst_res = max(worst_gap, gap / bound), max(worst_res, res)
            ok &= gap <= bound and res <= 1e-6 and abs(p.objective - p.risk) <= 1e-6
    elapsed = time.perf_counter() - t0
    acceptance(9, "LP optimum vs grid search", ok and elapsed < 300,
               f"50 problems, worst (LP - grid)/bound {worst_gap:.3f}, residual {worst_res:.1e}, {elapsed:.1f} s")


def test_10_frontier_monotone(acceptance):
    rng = np.random.default_rng(10)
    ok, inherited, points = True, 0, 0
    for i in range(8):
        n = 8
        r = rng.normal(rng.uniform(0.0, 0.006, n), rng.uniform(0.005, 0.02, n), (60, 10, n))
        for text in ("cvar:0.5", "cdar:0", "cdar:1", "std"):
            f = frontier(r, Measure.parse(text), DEFAULT_FLOORS, DEFAULT_BOX)
            risks = [p.risk for p in f.points]
            ok &= all(b >= a - 1e-9 for a, b in zip(risks, risks[1:]))
            last = None
            for p in f.points:
                points += 1
                if p.feasible:
                    last = p
                else:
                    inherited += 1
                    ok &= p.inherited and last is not None and np.array_equal(p.weights, last.weights)
            ok &= f.floors == DEFAULT_FLOORS
    acceptance(10, "frontier monotonicity and inheritance", ok and inherited > 0,
               f"32 frontiers on the default 10-floor grid, {inherited}/{points} points inherited")


# ---------------------------------------------------------------------------
# backtester


def test_11_no_lookahead(acceptance):
    panel, idx, _ = synthetic.demo_market(3, 540, seed=11)
    cfg = bt.BacktestConfig(window=500, rebalance=10, horizon=10, paths=100, measures=("cdar:0", "cvar:0.5", "std"),
                            box=(0.05, 0.6), regimes=2, n_starts=2, seed=3, max_rebalances=4)
    base = bt.run(cfg, panel, idx)
    cut = 520
    r = panel.returns.copy()
    r[cut:] = r[cut:][::-1] * 2.0
    idx2 = idx.copy()
    idx2[cut:] = 0.05
    other = bt.run(cfg, ReturnPanel(panel.dates, panel.assets, r), idx2)
    t = panel.dates[cut - 1]
    a = [w for w in base.weights if w.date <= t]
    b = [w for w in other.weights if w.date <= t]
    same = len(a) == len(b) > 0 and all(
        (x.date, x.measure, x.level) == (y.date, y.measure, y.level) and x.weights.tobytes() == y.weights.tobytes()
        for x, y in zip(a, b))
    changed = any(x.weights.tobytes() != y.weights.tobytes() for x, y in zip(base.weights, other.weights)
                  if x.date > t)
    acceptance(11, "backtest no-lookahead replay", same and changed,
               f"{len(a)} weight records dated <= {t} byte-identical, later records changed: {changed}")


def _check_tables(outdir):
    perf = list(csv.reader((outdir / "performance.csv").open()))
    sub = list(csv.reader((outdir / "suboptimal.csv").open()))
    perf_ok = (len(perf) == 1 + 3 + 2 and all(len(row) == 9 for row in perf)
              and [row[0] for row in perf[-2:]] == ["Index", "Equal Weight"])
    sub_ok = len(sub) == 1 + 3 * 9 and [row[1] for row in sub[1:10]] == list(LEVEL_LABELS)
    return perf_ok, sub_ok


@pytest.mark.slow
def test_12_desk_scale(acceptance, tmp_path):
    measures = ("cdar:0", "cvar:0.5", "variance")
    wins, desk = 0, None
    for s in range(10):
        panel, idx, _ = synthetic.demo_market(5, 540, seed=100 + s, storm=(495, 540))
        cfg = bt.BacktestConfig(window=500, rebalance=10, horizon=10, paths=100, measures=measures,
                                box=(0.01, 0.5), seed=s, max_rebalances=4)
        t0 = time.perf_counter()
        track = bt.run(cfg, panel, idx)
        elapsed = time.perf_counter() - t0
        if s == 0:
            bt.export_reports(track, tmp_path, bt.TABLE_MEASURES)
            desk = (elapsed, track.n_rebalances, *_check_tables(tmp_path))

        def mdd(x):
            return risk.mdd(risk.drawdowns(np.cumsum(x)))

        ew = mdd(track.benchmarks["Equal Weight"])
        tails = [mdd(track.optimal(Measure.parse(m))) for m in measures[:2]]
        wins += all(t <= ew for t in tails)
    elapsed, n_reb, perf_ok, sub_ok = desk
    ok = elapsed < 600 and n_reb == 4 and perf_ok and sub_ok and wins >= 7
    acceptance(12, "desk-scale end-to-end run", ok,
               f"run time {elapsed:.0f} s, {n_reb} rebalances, performance CSV {perf_ok}, suboptimal CSV {sub_ok}; "
               f"tail-measure MDD <= equal-weight MDD in {wins}/10 runs")
