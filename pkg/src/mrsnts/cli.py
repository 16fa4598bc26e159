"""Command-line interface: ``mrsnts <command> [options]``.

Commands
--------
ingest     prices CSV -> simple-return CSV
fit        prices (+ index) -> joint model document
simulate   model document -> scenario cube
risk       cube + weights -> risk estimate and drawdown CSV
optimize   cube -> efficient frontier CSV
backtest   config + prices + index -> report CSVs
report     model document -> KS, transition and regime tables
sample     write the bundled 3-asset sample data set

Every command writes a JSON run manifest next to its output. Exit status is
0 on success, 1 on a domain error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import shutil
import sys
from importlib import resources
from pathlib import Path

__all__ = ["main", "build_parser", "CliError"]

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


class CliError(Exception):
    """A domain failure, tagged with the module and step that raised it."""

    def __init__(self, module: str, step: str, message: str):
        super().__init__(message)
        self.module = module
        self.step = step


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _existing(path: str | None, flag: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: file not found: {path}")
    return p


class Run:
    """Collects inputs and outputs of one command for the manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.started = _now()

    def input(self, path: Path | None) -> Path | None:
        if path is not None:
            self.inputs.append(path)
        return path

    def output(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return Path(path)

    def config(self) -> dict:
        skip = {"func", "manifest", "threads", "seed_given"}
        return {k: v for k, v in sorted(vars(self.args).items()) if k not in skip}

    def manifest(self, path: Path) -> Path:
        from . import __version__

        cfg = json.dumps(self.config(), sort_keys=True, default=str)
        doc = {
            "tool": "mrsnts",
            "version": __version__,
            "command": ["mrsnts", *self.argv],
            "config_hash": hashlib.sha256(cfg.encode()).hexdigest(),
            "config": json.loads(cfg),
            "seed": self.args.seed,
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": {str(p): _sha256(p) for p in self.outputs if p.is_file()},
            "started": self.started,
            "finished": _now(),
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _parse_box(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo:hi, e.g. 0.01:0.15") from None
    return lo, hi


def _parse_floors(text: str):
    from .optimizer import DEFAULT_FLOORS

    if text == "default":
        return DEFAULT_FLOORS
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'default' or comma-separated numbers") from None


def _measure(kind: str, eta: float | None):
    from .optimizer import Measure

    if kind in ("std", "variance"):
        return Measure("std")
    if eta is None:
        raise UsageError(f"--eta is required for --measure {kind}")
    return Measure(kind, eta)


def _load_panel(run: Run, prices: Path, index: str | None):
    """Return panel and index returns; ``index`` is a column name or a CSV path."""
    from .data import load_prices, to_returns

    panel = to_returns(load_prices(prices))
    if index is None:
        return panel, None, None
    ipath = Path(index)
    if ipath.is_file():
        run.input(ipath)
        iret = to_returns(load_prices(ipath))
        if iret.N != 1:
            raise CliError("data-ingest", "index", f"{ipath} must hold exactly one price column")
        common = sorted(set(panel.dates) & set(iret.dates))
        if len(common) < 2:
            raise CliError("data-ingest", "align", "index and prices share fewer than 2 dates")
        keep = {d: i for i, d in enumerate(panel.dates)}
        ikeep = {d: i for i, d in enumerate(iret.dates)}
        from .data import ReturnPanel

        rows = [keep[d] for d in common]
        panel = ReturnPanel(tuple(common), panel.assets, panel.returns[rows])
        return panel, iret.returns[[ikeep[d] for d in common], 0], iret.assets[0]
    if index not in panel.assets:
        raise UsageError(f"--index: {index!r} is neither a file nor a column of {prices}")
    others = [a for a in panel.assets if a != index]
    if not others:
        raise CliError("data-ingest", "select", "no asset columns besides the index")
    return panel.select(others), panel.column(index), index


def _write_returns(path: Path, panel) -> None:
    import csv

    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *panel.assets])
        for d, row in zip(panel.dates, panel.returns):
            w.writerow([d.isoformat(), *(repr(float(v)) for v in row)])


def _read_weights(path: Path, assets) -> "object":
    import csv

    import numpy as np

    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CliError("risk-measures", "weights", f"{path} is empty")
    head = [c.strip().lower() for c in rows[0]]
    if head[:2] == ["asset", "weight"]:
        table = {r[0].strip(): float(r[1]) for r in rows[1:]}
    elif len(rows) >= 2:
        table = {name.strip(): float(v) for name, v in zip(rows[0], rows[1])}
    else:
        raise CliError("risk-measures", "weights", "expected 'asset,weight' rows or a header plus one row")
    missing = [a for a in assets if a not in table]
    if missing:
        raise CliError("risk-measures", "weights", f"no weight for assets {missing}")
    return np.array([table[a] for a in assets])


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(run: Run) -> Path:
    from .data import load_prices, to_returns

    a = run.args
    prices = load_prices(run.input(_existing(a.prices, "--prices")))
    panel = to_returns(prices)
    out = run.output(Path(a.out))
    _write_returns(out, panel)
    print(f"{panel.T} returns x {panel.N} assets written to {out} ({prices.dropped} rows dropped)")
    return out


def cmd_fit(run: Run) -> Path:
    from .estimation import EstimationConfig, EstimationError, estimate, save_model

    a = run.args
    panel, index, name = _load_panel(run, run.input(_existing(a.prices, "--prices")), a.index)
    if a.window:
        if a.window > panel.T:
            raise CliError("data-ingest", "window", f"--window {a.window} exceeds {panel.T} observations")
        panel, index = panel.window(panel.T - a.window, panel.T), index[panel.T - a.window:]
    regimes = None if a.regimes == "auto" else int(a.regimes)
    cfg = EstimationConfig(regimes=regimes, asset_regimes=a.asset_regimes, n_starts=a.starts,
                           min_window=a.min_window, zero_mean=a.zero_mean, seed=a.seed)
    try:
        model = estimate(panel, index, cfg, name)
    except EstimationError as exc:
        raise CliError("joint-estimator", f"step {exc.step}", str(exc)) from exc
    out = run.output(save_model(model, a.out))
    print(f"fitted {model.n_assets} assets, {model.k} regimes "
          f"(days per regime: {', '.join(map(str, model.regime_counts.tolist()))}); model written to {out}")
    return out


def cmd_simulate(run: Run) -> Path:
    from .estimation import load_model
    from .scenarios import cube_to_csv, save_cube, simulate_scenarios

    a = run.args
    model = load_model(run.input(_existing(a.model, "--model")))
    if a.paths < 1 or a.horizon < 1:
        raise UsageError("--paths and --horizon must be positive")
    try:
        cube = simulate_scenarios(model, a.paths, a.horizon, a.seed, coupled=not a.independent_variance)
    except ValueError as exc:
        raise CliError("scenario-engine", "simulate", str(exc)) from exc
    out = run.output(save_cube(cube, a.out))
    if a.csv:
        run.output(cube_to_csv(cube, a.csv))
    print(f"cube {cube.S} x {cube.M} x {cube.N} written to {out}")
    return out


def cmd_risk(run: Run) -> Path:
    import csv

    import numpy as np

    from . import risk
    from .optimizer import evaluate_risk
    from .scenarios import load_cube

    a = run.args
    cube = load_cube(run.input(_existing(a.cube, "--cube")))
    w = _read_weights(run.input(_existing(a.weights, "--weights")), cube.assets)
    if a.measure == "var":
        if a.eta is None or not 0 < a.eta < 1:
            raise UsageError("--measure var needs --eta in (0, 1)")
        value, label = float(risk.var_scenario(cube.terminal() @ w, a.eta)), f"{a.eta:g}-VAR"
    else:
        measure = _measure(a.measure, a.eta)
        value, label = evaluate_risk(cube, w, measure), measure.label
    dd = risk.drawdowns(cube.portfolio_accumulated(w))
    out = run.output(Path(a.dd_out))
    with out.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", *(f"m{m + 1}" for m in range(dd.shape[1]))])
        for s, row in enumerate(dd):
            wr.writerow([s + 1, *(repr(float(v)) for v in row)])
    print(f"{label}\t{value!r}")
    print(f"mean drawdown curve: {np.array2string(dd.mean(axis=0), precision=6)}")
    return out


def cmd_optimize(run: Run) -> Path:
    from .optimizer import InfeasibleError, SolverError, frontier, write_frontier_csv
    from .scenarios import load_cube

    a = run.args
    cube = load_cube(run.input(_existing(a.cube, "--cube")))
    measure = _measure(a.measure, a.eta)
    try:
        front = frontier(cube, measure, a.floors, a.box)
    except InfeasibleError as exc:
        raise CliError("optimizer", "frontier", str(exc)) from exc
    except SolverError as exc:
        raise CliError("optimizer", "solve", str(exc)) from exc
    except ValueError as exc:
        raise CliError("optimizer", "problem", str(exc)) from exc
    out = run.output(write_frontier_csv(front, a.out, cube.assets))
    opt = front.optimal
    print(f"{measure.label}: optimal floor d={opt.d} ratio={opt.ratio:.6g}; frontier written to {out}")
    return out


def cmd_backtest(run: Run) -> Path:
    from . import backtest

    a = run.args
    cfg_path = run.input(_existing(a.config, "--config"))
    try:
        cfg = backtest.load_config(cfg_path)
    except (ValueError, TypeError) as exc:
        raise CliError("backtester", "config", str(exc)) from exc
    if a.seed_given:
        from dataclasses import replace

        cfg = replace(cfg, seed=a.seed)
    else:
        a.seed = cfg.seed
    panel, index, _ = _load_panel(run, run.input(_existing(a.prices, "--prices")), a.index)
    if index is None:
        raise UsageError("--index is required")
    try:
        track = backtest.run(cfg, panel, index)
    except ValueError as exc:
        raise CliError("backtester", "run", str(exc)) from exc
    outdir = Path(a.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for p in backtest.export_reports(track, outdir, cfg.measures):
        run.output(p)
    print(f"{track.n_rebalances} rebalances, {len(track.failures)} failed; reports in {outdir}")
    return outdir / "manifest.json"


def cmd_report(run: Run) -> Path:
    import csv

    from .estimation import load_model

    a = run.args
    model = load_model(run.input(_existing(a.model, "--model")))
    outdir = Path(a.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ks = run.output(outdir / "ks.csv")
    with ks.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["asset", "regime", "nu", "ks_statistic", "p_value", "n"])
        for row in model.diagnostics.get("ks", []):
            w.writerow([row["asset"], row["regime"], row["nu"], row["statistic"], row["pvalue"], row["n"]])
    tr = run.output(outdir / "transition.csv")
    with tr.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["from", *(f"to_{j + 1}" for j in range(model.k))])
        for i, row in enumerate(model.trans):
            w.writerow([i + 1, *(repr(float(v)) for v in row)])
    rc = run.output(outdir / "regimes.csv")
    with rc.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "days", "lambda", "theta"])
        for j, (n, p) in enumerate(zip(model.regime_counts, model.nts)):
            w.writerow([j + 1, int(n), repr(p.lam), repr(p.theta)])
    sel = model.diagnostics.get("selection")
    if sel:
        bic = run.output(outdir / "selection.csv")
        with bic.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            keys = list(sel[0])
            w.writerow(keys)
            for row in sel:
                w.writerow([row[k] for k in keys])
    print(f"reports for {model.n_assets} assets and {model.k} regimes written to {outdir}")
    return outdir / "manifest.json"


def cmd_sample(run: Run) -> Path:
    outdir = Path(run.args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    src = resources.files("mrsnts") / "sample_data"
    for name in ("prices.csv", "index.csv", "backtest.json"):
        with resources.as_file(src / name) as p:
            shutil.copyfile(p, outdir / name)
        run.output(outdir / name)
    print(f"sample data written to {outdir}")
    return outdir / "manifest.json"


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 as well; keep the message format uniform
        self.print_usage(sys.stderr)
        self.exit(2, f"mrsnts: usage error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("--manifest", default=None, help="manifest path (default: next to the output)")

    p = _Parser(prog="mrsnts", description="Regime-switching NTS-GARCH scenarios and CVaR/CDaR allocation.")
    from . import __version__

    p.add_argument("--version", action="version", version=f"mrsnts {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("ingest", parents=[common], help="convert prices to simple returns")
    s.add_argument("--prices", required=True)
    s.add_argument("--out", required=True, help="returns CSV")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", parents=[common], help="estimate the joint model")
    s.add_argument("--prices", required=True)
    s.add_argument("--index", required=True, help="index column in --prices, or a one-column price CSV")
    s.add_argument("--out", required=True, help="model document (JSON)")
    s.add_argument("--regimes", default="auto", choices=["auto", "1", "2", "3"])
    s.add_argument("--asset-regimes", default="index", choices=["index", "own"])
    s.add_argument("--window", type=int, default=None, help="use only the last N returns")
    s.add_argument("--min-window", type=int, default=1764)
    s.add_argument("--starts", type=int, default=8, help="optimizer starts per fit")
    s.add_argument("--zero-mean", action="store_true", help="drop regime means")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", parents=[common], help="simulate a scenario cube")
    s.add_argument("--model", required=True)
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--horizon", type=int, default=10)
    s.add_argument("--out", required=True, help="cube file")
    s.add_argument("--csv", default=None, help="also write the cube as long CSV")
    s.add_argument("--independent-variance", action="store_true",
                   help="drive variance recursions with independent normal shocks")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("risk", parents=[common], help="risk of a fixed allocation")
    s.add_argument("--cube", required=True)
    s.add_argument("--weights", required=True, help="CSV: 'asset,weight' rows or header + one row")
    s.add_argument("--measure", required=True, choices=["var", "cvar", "cdar", "std", "variance"])
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--dd-out", default="drawdowns.csv", help="per-scenario drawdown CSV")
    s.set_defaults(func=cmd_risk)

    s = sub.add_parser("optimize", parents=[common], help="efficient frontier")
    s.add_argument("--cube", required=True)
    s.add_argument("--measure", required=True, choices=["cvar", "cdar", "std", "variance"])
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--floors", type=_parse_floors, default="default")
    s.add_argument("--box", type=_parse_box, default="0.01:0.15")
    s.add_argument("--out", required=True, help="frontier CSV")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("backtest", parents=[common], help="rolling-window backtest")
    s.add_argument("--config", required=True, help="JSON backtest config")
    s.add_argument("--prices", required=True)
    s.add_argument("--index", required=True, help="index column in --prices, or a one-column price CSV")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("report", parents=[common], help="tables from a model document")
    s.add_argument("--model", required=True)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sample", parents=[common], help="write the bundled sample data")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_sample)
    return p


def _domain_error(exc: BaseException, command: str) -> CliError:
    from .data import DataError
    from .mrs_garch import FitError

    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, DataError):
        return CliError("data-ingest", "load", str(exc))
    if isinstance(exc, FitError):
        return CliError("mrs-garch", "fit", str(exc))
    module = {"ingest": "data-ingest", "fit": "joint-estimator", "simulate": "scenario-engine",
              "risk": "risk-measures", "optimize": "optimizer", "backtest": "backtester",
              "report": "cli", "sample": "cli"}[command]
    return CliError(module, command, str(exc))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.threads is not None:
        if args.threads < 1:
            print("mrsnts: usage error: --threads must be positive", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
        try:
            import numba

            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        except (ImportError, ValueError):
            pass
    run = Run(args, argv)
    try:
        primary = args.func(run)
    except UsageError as exc:
        print(f"mrsnts: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError, OSError, KeyError) as exc:
        err = _domain_error(exc, args.command)
        print(f"mrsnts: error [{err.module} / {err.step}]: {err}", file=sys.stderr)
        return 1
    except CliError as exc:
        print(f"mrsnts: error [{exc.module} / {exc.step}]: {exc}", file=sys.stderr)
        return 1
    manifest = Path(args.manifest) if args.manifest else Path(str(primary) + ".manifest.json") \
        if primary.name != "manifest.json" else primary
    run.manifest(manifest)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
