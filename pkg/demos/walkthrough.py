"""Estimate, simulate and optimize on a synthetic two-regime market.

Run ``python3 demos/walkthrough.py [outdir]``. The script

1. draws six years of daily returns for three assets and an index from a
   market that alternates between long calm spells and shorter turbulent
   ones (three times the volatility, correlation 0.7 instead of 0.2),
2. fits the joint MRS-GARCH / stdMNTS model and prints what it found,
3. simulates a scenario cube over the next ten days,
4. builds CDaR, CVaR and variance frontiers and compares the optimal
   allocations,
5. saves the model, the cube and the frontiers under ``outdir``.

It takes about a minute on one core.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from mrsnts import estimation, optimizer, scenarios, synthetic
from mrsnts.data import ReturnPanel
from mrsnts.mrs_garch import MrsGarchParams
from mrsnts.optimizer import Measure
from mrsnts.tempered_stable import StdMntsParams

outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="mrsnts-demo-"))
outdir.mkdir(parents=True, exist_ok=True)

# --- 1. data -----------------------------------------------------------------
# Every series follows a two-regime GARCH driven by the same market chain.
# Tails are moderately heavy; much heavier tails (as in synthetic.demo_market)
# tempt a t-likelihood into a short "crash day" regime instead of the
# volatility regimes we want to show here.
trans = np.array([[0.995, 0.005], [0.0075, 0.9925]])


def garch(vol, drift):
    a, b = np.array([0.05, 0.08]), np.array([0.90, 0.85])
    target = np.array([vol, 3 * vol]) ** 2
    return MrsGarchParams(np.array([drift, -2 * drift]), target * (1 - a - b), a, b, trans, "normal")


def equicorr(n, rho):
    return np.full((n, n), rho) + (1 - rho) * np.eye(n)


nts = [StdMntsParams(1.7, 2.0, np.zeros(4), equicorr(4, 0.2)),
       StdMntsParams(1.5, 1.5, np.full(4, -0.1), equicorr(4, 0.7))]
index, r, states = synthetic.simulate_market(
    garch(0.01, 0.0004), [garch(v, d) for v, d in ((0.008, 0.0003), (0.012, 0.0005), (0.016, 0.0007))],
    nts, 1500, seed=7)
panel = ReturnPanel(synthetic.business_days(1500), ("A1", "A2", "A3"), r)
print(f"{panel.returns.shape[0]} days, assets {', '.join(panel.assets)}; "
      f"true turbulent share {np.mean(states == 1):.1%}")

# --- 2. estimation -----------------------------------------------------------
cfg = estimation.EstimationConfig(regimes=2, n_starts=3, min_window=1000, seed=1)
model = estimation.estimate(panel, index, cfg)
agree = np.mean(model.index_path == states)
print(f"\nindex regimes recovered on {agree:.1%} of days")
print("transition matrix (row = today, column = tomorrow):")
print(np.array2string(model.trans, precision=3))
for j, p in enumerate(model.nts):
    print(f"regime {j + 1}: {model.regime_counts[j]} days, lambda {p.lam:.2f}, theta {p.theta:.2f}, "
          f"mean asset correlation {np.mean(model.sigma_x[j][np.triu_indices(p.dim, 1)]):.2f}")
for row in model.diagnostics["ks"][:6]:
    print(f"  KS {row['asset']:>5} regime {row['regime']}: D = {row['statistic']:.3f}, p = {row['pvalue']:.2f}")
estimation.save_model(model, outdir / "model.json")

# --- 3. scenarios ------------------------------------------------------------
cube = scenarios.simulate_scenarios(model, paths=2000, horizon=10, seed=2)
total = cube.returns.sum(axis=1)
print(f"\n{cube.S} scenarios x {cube.M} days; mean 10-day return per asset "
      + ", ".join(f"{v:+.3%}" for v in total.mean(axis=0)))
print("share of simulated days in the turbulent regime "
      f"{np.mean(cube.regimes == model.k - 1):.1%}")
scenarios.save_cube(cube, outdir / "cube.npz")

# --- 4. frontiers ------------------------------------------------------------
box = (0.05, 0.6)
floors = tuple(np.linspace(-0.002, 0.006, 9))
print(f"\nfrontiers with weights in {box}, return floors {floors[0]:+.3f} .. {floors[-1]:+.3f}")
for text in ("cdar:0", "cdar:1", "cvar:0.5", "cvar:0.9", "std"):
    m = Measure.parse(text)
    front = optimizer.frontier(cube, m, floors, box, anchor=True)
    best = front.optimal
    print(f"  {m.label:>9}: weights {np.array2string(best.weights, precision=3)}, "
          f"return {best.expected_return:+.4f}, risk {best.risk:.4f}, ratio {best.ratio:.3f}")
    optimizer.write_frontier_csv(front, outdir / f"frontier_{text.replace(':', '_')}.csv", cube.assets)

# Risk of the equal-weight allocation for comparison.
ew = np.full(cube.N, 1 / cube.N)
print("  equal weight: "
      + ", ".join(f"{Measure.parse(t).label} {optimizer.evaluate_risk(cube, ew, Measure.parse(t)):.4f}"
                  for t in ("cdar:0", "cvar:0.9", "std")))
print(f"\noutputs written to {outdir}")
