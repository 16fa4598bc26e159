import csv
import json

import numpy as np
import pytest

from mrsnts import backtest as bt
from mrsnts import risk, synthetic
from mrsnts.data import ReturnPanel
from mrsnts.optimizer import LEVEL_LABELS, Measure, frontier

MEASURES = ("cdar:0", "cvar:0.5", "std")
FLOORS = (-0.002, 0.0, 0.002, 0.004)


def config(**kw):
    base = dict(window=300, rebalance=10, horizon=10, paths=50, measures=MEASURES, box=(0.05, 0.6),
                regimes=1, n_starts=1, seed=1, floors=FLOORS)
    base.update(kw)
    return bt.BacktestConfig(**base)


@pytest.fixture(scope="module")
def market():
    return synthetic.demo_market(3, 330, seed=4)


@pytest.fixture(scope="module")
def track(market):
    panel, idx, _ = market
    return bt.run(config(), panel, idx)


def test_config_rules(tmp_path):
    with pytest.raises(ValueError):
        bt.BacktestConfig(rebalance=10, horizon=5)
    cfg = bt.BacktestConfig()
    assert (cfg.window, cfg.rebalance, cfg.paths, cfg.horizon) == (1764, 10, 1000, 10)
    assert cfg.box == (0.01, 0.15)
    path = tmp_path / "bt.json"
    path.write_text(json.dumps({"window": 400, "measures": ["cvar:0.7"], "box": [0.0, 0.5]}))
    loaded = bt.load_config(path)
    assert loaded.window == 400 and loaded.measures == (Measure("cvar", 0.7),) and loaded.box == (0.0, 0.5)
    path.write_text(json.dumps({"windw": 400}))
    with pytest.raises(ValueError, match="windw"):
        bt.load_config(path)


def test_track_shape(track, market):
    panel, idx, _ = market
    assert track.n_rebalances == 3
    assert len(track.dates) == 30
    assert track.dates[0] == panel.dates[300]
    for key, v in track.strategies.items():
        assert v.shape == (30,)
    assert len(track.strategies) == 3 * len(LEVEL_LABELS)
    assert not track.failures


def test_single_rebalance_boundary(market):
    panel, idx, _ = market
    short = panel.window(0, 310)
    tr = bt.run(config(), short, idx[:310])
    assert tr.n_rebalances == 1 and len(tr.dates) == 10
    with pytest.raises(ValueError):
        bt.run(config(), panel.window(0, 309), idx[:309])


def test_equal_weight_and_index(track, market):
    panel, idx, _ = market
    held = panel.returns[300:330]
    np.testing.assert_array_equal(track.benchmarks["Equal Weight"], held.mean(axis=1))
    np.testing.assert_array_equal(track.benchmarks["Index"], idx[300:330])


def test_weights_obey_box_and_budget(track):
    for w in track.weights:
        assert abs(w.weights.sum() - 1) <= 1e-9
        assert np.all(w.weights >= 0.05 - 1e-9) and np.all(w.weights <= 0.6 + 1e-9)


def test_realized_returns_use_held_weights(track, market):
    panel, _, _ = market
    r = panel.returns
    for w in track.weights:
        if w.level != "Optimal":
            continue
        i = w.rebalance
        realized = track.strategies[(w.measure, "Optimal")][10 * i : 10 * (i + 1)]
        np.testing.assert_array_equal(realized, r[300 + 10 * i : 310 + 10 * i] @ w.weights)


def test_no_lookahead_replay(track, market):
    panel, idx, _ = market
    cut = 310
    noisy = panel.returns.copy()
    noisy[cut:] = noisy[cut:] * 3.0 + 0.01
    idx2 = idx.copy()
    idx2[cut:] = -idx2[cut:]
    other = bt.run(config(), ReturnPanel(panel.dates, panel.assets, noisy), idx2)
    t = panel.dates[cut - 1]
    before = [w for w in track.weights if w.date <= t]
    after = [w for w in other.weights if w.date <= t]
    assert len(before) == 2 * 3 * len(LEVEL_LABELS)
    for a, b in zip(before, after):
        assert (a.date, a.measure, a.level) == (b.date, b.measure, b.level)
        assert a.weights.tobytes() == b.weights.tobytes()
    assert any(not np.array_equal(a.weights, b.weights)
               for a, b in zip(track.weights, other.weights) if a.date > t)


def test_deterministic(track, market):
    panel, idx, _ = market
    again = bt.run(config(), panel, idx)
    for k, v in track.strategies.items():
        assert v.tobytes() == again.strategies[k].tobytes()


def test_failed_fit_carries_weights(market, monkeypatch, caplog):
    panel, idx, _ = market
    real = bt.estimate
    calls = {"n": 0}

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("no convergence")
        return real(*a, **kw)

    monkeypatch.setattr(bt, "estimate", flaky)
    tr = bt.run(config(max_rebalances=2), panel, idx)
    assert [f["rebalance"] for f in tr.failures] == [1]
    first = {(w.measure, w.level): w for w in tr.weights if w.rebalance == 0}
    for w in tr.weights:
        if w.rebalance == 1:
            assert w.carried
            np.testing.assert_array_equal(w.weights, first[(w.measure, w.level)].weights)
    assert "no convergence" in caplog.text


# ---------------------------------------------------------------------------
# tables


def test_ratio_guards():
    vals, flags = bt.ratios(np.full(20, 0.001), bt.TABLE_MEASURES)
    cdar = [i for i, m in enumerate(bt.TABLE_MEASURES) if m.kind == "cdar"]
    assert all(flags[i] and vals[i] == np.inf for i in cdar)
    losing = np.random.default_rng(0).normal(-0.01, 0.002, 50)
    vals, flags = bt.ratios(losing)
    assert np.all(vals < 0) and not flags.any()


def test_performance_table_layout_and_parity(track):
    t = bt.performance_table(track)
    assert t.rows == ("0-CDAR", "0.5-CVAR", "Standard Deviation", "Index", "Equal Weight")
    assert t.columns == ("0-CDAR", "0.3-CDAR", "0.7-CDAR", "1-CDAR", "0.5-CVAR", "0.7-CVAR", "0.9-CVAR",
                         "Standard Deviation")
    x = track.benchmarks["Index"]
    dd = risk.drawdowns(np.cumsum(x))
    direct = [x.mean() / risk.cdar_single(dd, e) for e in (0, 0.3, 0.7, 1)]
    direct += [x.mean() / risk.cvar_scenario(x, e) for e in (0.5, 0.7, 0.9)]
    direct.append(x.mean() / np.std(x))
    np.testing.assert_allclose(t.values[3], direct, rtol=1e-12)


def test_suboptimal_blocks(track):
    blocks = bt.suboptimal_report(track)
    assert list(blocks) == ["0-CDAR", "0.5-CVAR", "Standard Deviation"]
    for b in blocks.values():
        assert b.rows == LEVEL_LABELS and b.values.shape == (9, 8)


def test_levels_increase_return_on_monotone_frontier():
    rng = np.random.default_rng(3)
    mu = np.linspace(0.0, 0.004, 4)
    vol = np.linspace(0.002, 0.03, 4)
    r = mu / 10 + vol / np.sqrt(10) * rng.standard_normal((400, 10, 4))
    floors = np.linspace(0.0005, 0.0035, 9)
    f = frontier(r, Measure("cvar", 0.5), floors, (0.0, 1.0))
    ret = [p.expected_return for p in f.points]
    assert all(b >= a - 1e-12 for a, b in zip(ret, ret[1:]))


def test_export_reports(track, tmp_path):
    files = {p.name: p for p in bt.export_reports(track, tmp_path)}
    assert set(files) == {"performance.csv", "suboptimal.csv", "wealth.csv", "relative_drawdown.csv",
                          "returns.csv", "weights.csv", "failures.csv"}
    rows = list(csv.DictReader(files["weights.csv"].open()))
    assert len(rows) == len(track.weights)
    for row in rows:
        assert sum(float(row[a]) for a in track.assets) == pytest.approx(1.0, abs=1e-9)
    rel = np.array([[float(v) for v in row[1:]] for row in list(csv.reader(files["relative_drawdown.csv"].open()))[1:]])
    assert np.all(rel >= 0) and np.all(rel <= 1)
    sub = list(csv.reader(files["suboptimal.csv"].open()))
    assert sub[0][:2] == ["optimization", "level"] and len(sub) == 1 + 3 * 9


def test_equal_weight_wealth_toy(tmp_path):
    r = np.array([[0.1, -0.1], [0.0, 0.2], [-0.05, 0.05]])
    ew = r.mean(axis=1)
    track = bt.RealizedTrack(("d1", "d2", "d3"), ("X", "Y"), {}, {"Index": ew, "Equal Weight": ew}, [], [],
                             None)
    bt.export_reports(track, tmp_path, (Measure("std"),))
    rows = list(csv.DictReader((tmp_path / "wealth.csv").open()))
    got = np.exp([float(row["Equal Weight"]) for row in rows])
    np.testing.assert_allclose(got, [1.0, 1.1, 1.1], rtol=1e-12)
    dd = [float(row["Equal Weight"]) for row in csv.DictReader((tmp_path / "relative_drawdown.csv").open())]
    assert dd == [0.0, 0.0, 0.0]


def test_portfolio_drawdown_bounded_by_assets(track, market):
    panel, _, _ = market
    # one holding period, so the weights are constant
    r = panel.returns[300:310]
    asset_dd = np.column_stack([risk.drawdowns(np.cumsum(r[:, n])) for n in range(r.shape[1])])
    for (label, level), x in track.strategies.items():
        dd = risk.drawdowns(np.cumsum(x[:10]))
        assert np.all(dd <= asset_dd.max(axis=1) + 1e-12)
