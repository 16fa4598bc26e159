"""Rolling-window out-of-sample backtest.

At every rebalance the joint model is refitted on the trailing window, a
scenario cube is simulated, one efficient frontier per configured risk
measure is solved, and the chosen weights are held (drift-free) over the
next ``rebalance`` days. Weights decided at rebalance ``i`` use only data up
to the day before the holding period starts, and the random streams of
rebalance ``i`` depend only on ``(seed, i)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import risk
from .data import ReturnPanel
from .estimation import EstimationConfig, estimate
from .optimizer import _clean, DEFAULT_BOX, DEFAULT_FLOORS, LEVEL_LABELS, Measure, frontier
from .scenarios import simulate_scenarios

__all__ = [
    "TABLE_MEASURES",
    "BacktestConfig",
    "WeightRecord",
    "RealizedTrack",
    "RatioTable",
    "run",
    "performance_table",
    "suboptimal_report",
    "export_reports",
    "load_config",
]

log = logging.getLogger(__name__)

TABLE_MEASURES = tuple(
    Measure.parse(m)
    for m in ("cdar:0", "cdar:0.3", "cdar:0.7", "cdar:1", "cvar:0.5", "cvar:0.7", "cvar:0.9", "std")
)
INDEX_ROW = "Index"
EQUAL_ROW = "Equal Weight"


@dataclass(frozen=True)
class BacktestConfig:
    window: int = 1764
    rebalance: int = 10
    paths: int = 1000
    horizon: int = 10
    measures: tuple[Measure, ...] = TABLE_MEASURES
    floors: tuple[float, ...] = DEFAULT_FLOORS
    box: tuple[float, float] = DEFAULT_BOX
    seed: int = 0
    max_rebalances: int | None = None
    regimes: int | None = None
    n_starts: int = 8
    coupled: bool = True
    anchor: bool = True

    def __post_init__(self) -> None:
        if self.rebalance != self.horizon:
            raise ValueError("rebalance period must equal the simulation horizon")
        if self.window < 2 or self.rebalance < 1 or self.paths < 1:
            raise ValueError("window, rebalance and paths must be positive")
        object.__setattr__(self, "measures", tuple(
            m if isinstance(m, Measure) else Measure.parse(str(m)) for m in self.measures))
        object.__setattr__(self, "floors", tuple(float(f) for f in self.floors))
        object.__setattr__(self, "box", (float(self.box[0]), float(self.box[1])))

    def estimation(self, seed: int) -> EstimationConfig:
        return EstimationConfig(regimes=self.regimes, n_starts=self.n_starts, min_window=self.window,
                                seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["measures"] = [m.label for m in self.measures]
        d["floors"] = list(self.floors)
        d["box"] = list(self.box)
        return d


def load_config(path) -> BacktestConfig:
    """Read a JSON backtest config; keys mirror :class:`BacktestConfig`."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("backtest config must be a JSON object")
    known = set(BacktestConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "measures" in raw:
        raw["measures"] = tuple(Measure.parse(m) for m in raw["measures"])
    if "floors" in raw:
        raw["floors"] = tuple(raw["floors"])
    if "box" in raw:
        raw["box"] = tuple(raw["box"])
    return BacktestConfig(**raw)


@dataclass(frozen=True)
class WeightRecord:
    date: object
    rebalance: int
    measure: str
    level: str
    weights: np.ndarray
    d: float
    carried: bool = False


@dataclass
class RealizedTrack:
    """Realized per-day returns of every strategy over the holding periods.

    ``strategies`` maps ``(measure_label, level)`` to a return vector; the
    level ``"Optimal"`` is the optimal portfolio. ``benchmarks`` holds the
    index and equal-weight tracks.
    """

    dates: tuple
    assets: tuple[str, ...]
    strategies: dict
    benchmarks: dict
    weights: list[WeightRecord]
    failures: list[dict] = field(default_factory=list)
    config: BacktestConfig | None = None

    @property
    def n_rebalances(self) -> int:
        return len({w.rebalance for w in self.weights})

    def optimal(self, measure: Measure | str) -> np.ndarray:
        label = measure.label if isinstance(measure, Measure) else measure
        return self.strategies[(label, "Optimal")]


def _seeds(seed: int, i: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence([seed, i]).generate_state(2)
    return int(a), int(b)


def _equal_weights(n: int, box) -> np.ndarray:
    return _clean(np.full(n, 1.0 / n), box[0], box[1])


def run(config: BacktestConfig, panel: ReturnPanel, index) -> RealizedTrack:
    """Roll the window across ``panel``; see the module docstring."""
    r = np.asarray(panel.returns, dtype=float)
    idx = np.asarray(index, dtype=float).ravel()
    T, N = r.shape
    if idx.size != T:
        raise ValueError("index series not aligned with the panel")
    if config.window <= N:
        raise ValueError("window must exceed the number of assets")
    if T < config.window + config.rebalance:
        raise ValueError("panel shorter than window + rebalance")
    starts = list(range(config.window, T - config.rebalance + 1, config.rebalance))
    if config.max_rebalances is not None:
        starts = starts[: config.max_rebalances]
    keys = [(m.label, lab) for m in config.measures for lab in LEVEL_LABELS]
    current = {k: _equal_weights(N, config.box) for k in keys}
    have = {k: False for k in keys}
    out = {k: [] for k in keys}
    records: list[WeightRecord] = []
    failures: list[dict] = []
    days: list = []
    for i, t0 in enumerate(starts):
        fit_seed, sim_seed = _seeds(config.seed, i)
        window = panel.window(t0 - config.window, t0)
        decided = window.dates[-1] if window.dates else t0 - 1
        hold = slice(t0, t0 + config.rebalance)
        fronts = {}
        try:
            model = estimate(window, idx[t0 - config.window : t0], config.estimation(fit_seed))
            cube = simulate_scenarios(model, config.paths, config.horizon, sim_seed, config.coupled)
        except Exception as exc:  # a real backtest carries on with the previous weights
            log.warning("rebalance %d (%s): fit/simulation failed: %s", i, decided, exc)
            failures.append({"rebalance": i, "date": str(decided), "stage": "fit", "error": str(exc)})
            cube = None
        for m in config.measures:
            if cube is None:
                continue
            try:
                fronts[m.label] = frontier(cube, m, config.floors, config.box, anchor=config.anchor)
            except Exception as exc:
                log.warning("rebalance %d (%s): %s frontier failed: %s", i, decided, m.label, exc)
                failures.append({"rebalance": i, "date": str(decided), "stage": m.label, "error": str(exc)})
        for m in config.measures:
            f = fronts.get(m.label)
            for lab in LEVEL_LABELS:
                key = (m.label, lab)
                if f is not None:
                    p = f.level(lab)
                    current[key], have[key] = p.weights, True
                    d = p.d
                else:
                    d = float("nan")
                records.append(WeightRecord(decided, i, m.label, lab, current[key].copy(), d,
                                            carried=f is None))
                out[key].append(r[hold] @ current[key])
        days.extend(panel.dates[hold] if panel.dates else range(hold.start, hold.stop))
    held = np.concatenate([np.arange(t0, t0 + config.rebalance) for t0 in starts])
    strategies = {k: np.concatenate(v) for k, v in out.items()}
    benchmarks = {INDEX_ROW: idx[held], EQUAL_ROW: r[held].mean(axis=1)}
    return RealizedTrack(tuple(days), tuple(panel.assets), strategies, benchmarks, records, failures, config)


@dataclass(frozen=True)
class RatioTable:
    """Mean realized return divided by each realized risk measure.

    ``flags[i][j]`` is True where the risk was zero and the ratio is reported
    as a signed infinity.
    """

    rows: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    flags: np.ndarray
    title: str = ""

    def value(self, row: str, column: str) -> float:
        return float(self.values[self.rows.index(row), self.columns.index(column)])

    def to_csv(self, path, first: str = "strategy") -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([first, *self.columns])
            for name, vals in zip(self.rows, self.values):
                w.writerow([name, *(repr(float(v)) for v in vals)])
        return path


def realized_risk(returns, measure: Measure) -> float:
    """Risk of a realized path: CDaR on the uncompounded accumulated path, CVaR on pooled daily returns."""
    x = np.asarray(returns, dtype=float)
    if measure.kind == "cdar":
        return float(risk.cdar_single(risk.drawdowns(np.cumsum(x)), measure.eta))
    if measure.kind == "cvar":
        return float(risk.cvar_scenario(x, measure.eta))
    return float(np.std(x))


def ratios(returns, measures: Sequence[Measure] = TABLE_MEASURES) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(returns, dtype=float)
    if x.size == 0:
        raise ValueError("empty track")
    mean = float(np.mean(x))
    vals, flags = [], []
    for m in measures:
        rk = realized_risk(x, m)
        if abs(rk) <= 1e-15:
            vals.append(0.0 if mean == 0 else math.copysign(math.inf, mean))
            flags.append(True)
        else:
            vals.append(mean / rk)
            flags.append(False)
    return np.array(vals), np.array(flags)


def performance_table(track: RealizedTrack, measures: Sequence[Measure] = TABLE_MEASURES) -> RatioTable:
    """Rows: the optimal portfolio of each configured measure, then the index and equal weight."""
    cfg_measures = track.config.measures if track.config else sorted({k[0] for k in track.strategies})
    rows, vals, flags = [], [], []
    for m in cfg_measures:
        label = m.label if isinstance(m, Measure) else m
        rows.append(label)
        v, f = ratios(track.strategies[(label, "Optimal")], measures)
        vals.append(v)
        flags.append(f)
    for name in (INDEX_ROW, EQUAL_ROW):
        rows.append(name)
        v, f = ratios(track.benchmarks[name], measures)
        vals.append(v)
        flags.append(f)
    return RatioTable(tuple(rows), tuple(m.label for m in measures), np.array(vals), np.array(flags),
                      "Performance of optimal portfolios")


def suboptimal_report(track: RealizedTrack, measures: Sequence[Measure] = TABLE_MEASURES) -> dict[str, RatioTable]:
    """One block per optimized measure with rows L4..H4 (levels resolved at each rebalance)."""
    blocks = {}
    cfg_measures = track.config.measures if track.config else sorted({k[0] for k in track.strategies})
    for m in cfg_measures:
        label = m.label if isinstance(m, Measure) else m
        vals, flags = [], []
        for lab in LEVEL_LABELS:
            v, f = ratios(track.strategies[(label, lab)], measures)
            vals.append(v)
            flags.append(f)
        blocks[label] = RatioTable(LEVEL_LABELS, tuple(x.label for x in measures), np.array(vals),
                                   np.array(flags), f"Suboptimal portfolios, {label} optimization")
    return blocks


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def export_reports(track: RealizedTrack, outdir, measures: Sequence[Measure] = TABLE_MEASURES) -> list[Path]:
    """Write the performance tables and plot-ready series as CSV files.

    Files: ``performance.csv`` (optimal portfolios and benchmarks),
    ``suboptimal.csv`` (one block per measure, first column ``optimization``),
    ``wealth.csv`` (log compounded wealth), ``relative_drawdown.csv``
    (``1 - W / running max W`` with ``W_0 = 1``), ``returns.csv`` (realized
    daily returns), ``weights.csv`` (weights history), ``failures.csv``.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = [performance_table(track, measures).to_csv(out / "performance.csv")]

    cols = [m.label for m in measures]
    rows = []
    for label, table in suboptimal_report(track, measures).items():
        for lab, vals in zip(table.rows, table.values):
            rows.append([label, lab, *(repr(float(v)) for v in vals)])
    written.append(_write_rows(out / "suboptimal.csv", ["optimization", "level", *cols], rows))

    series = {f"{m}|Optimal": v for (m, lab), v in track.strategies.items() if lab == "Optimal"}
    series.update(track.benchmarks)
    names = list(series)
    mat = np.column_stack([series[n] for n in names])
    wealth = np.cumprod(1.0 + mat, axis=0)
    peak = np.maximum.accumulate(np.vstack([np.ones((1, mat.shape[1])), wealth]), axis=0)[1:]
    dates = [str(d) for d in track.dates]
    written.append(_write_rows(out / "wealth.csv", ["date", *names],
                               [[d, *(repr(float(v)) for v in row)] for d, row in zip(dates, np.log(wealth))]))
    written.append(_write_rows(out / "relative_drawdown.csv", ["date", *names],
                               [[d, *(repr(float(v)) for v in row)] for d, row in zip(dates, 1.0 - wealth / peak)]))
    written.append(_write_rows(out / "returns.csv", ["date", *names],
                               [[d, *(repr(float(v)) for v in row)] for d, row in zip(dates, mat)]))
    written.append(_write_rows(out / "weights.csv",
                               ["date", "rebalance", "measure", "level", "d", "carried", *track.assets],
                               [[str(w.date), w.rebalance, w.measure, w.level, repr(w.d), int(w.carried),
                                 *(repr(float(v)) for v in w.weights)] for w in track.weights]))
    written.append(_write_rows(out / "failures.csv", ["rebalance", "date", "stage", "error"],
                               [[f["rebalance"], f["date"], f["stage"], f["error"]] for f in track.failures]))
    return written
