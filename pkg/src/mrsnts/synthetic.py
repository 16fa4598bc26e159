"""Synthetic regime-switching markets for tests, demos and the bundled sample data.

One market regime chain drives everything: the index and every asset follow
an MRS-GARCH variance recursion whose regime is the market regime, and their
standardized innovations are a joint stdMNTS draw for that regime (index in
column 0). This is the estimation model with the asset chains tied to the
market chain, which makes regime-conditional quantities recoverable.
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ReturnPanel
from .mrs_garch import MrsGarchParams, stationary_distribution
from .scenarios import transition_sampler
from .tempered_stable import StdMntsParams, mnts_sample

__all__ = [
    "simulate_market",
    "demo_market",
    "business_days",
    "prices_from_returns",
    "write_price_csv",
]


def simulate_market(index_params: MrsGarchParams, asset_params: Sequence[MrsGarchParams],
                    nts: Sequence[StdMntsParams], n: int, seed=None, burn: int = 250, forced=None):
    """Simulate ``n`` days of index and asset returns.

    ``nts[k]`` has dimension ``1 + len(asset_params)``; component 0 is the
    index. All models must share the index regime count. ``forced`` (length
    ``n``, ``-1`` meaning free) pins the market regime on chosen days; the
    chain continues from the pinned state.

    Returns
    -------
    index : ndarray, shape (n,)
    assets : ndarray, shape (n, N)
    states : ndarray of int, shape (n,)
        Market regime of each day.
    """
    models = [index_params, *asset_params]
    k = index_params.k
    if any(m.k != k for m in models) or len(nts) != k:
        raise ValueError("all models must share the index regime count")
    dim = len(models)
    if any(p.dim != dim for p in nts):
        raise ValueError("innovation dimension must be 1 + number of assets")
    rng = np.random.default_rng(seed)
    total = n + burn
    step = transition_sampler(index_params.trans)
    pi = stationary_distribution(index_params.trans)
    state = np.array([rng.choice(k, p=pi)])
    u = rng.uniform(size=total)
    pin = np.full(total, -1, dtype=np.int64)
    if forced is not None:
        forced = np.asarray(forced, dtype=np.int64)
        if forced.shape != (n,) or forced.max(initial=-1) >= k:
            raise ValueError("forced must have length n with entries in -1..k-1")
        pin[burn:] = forced
    states = np.empty(total, dtype=np.int64)
    for t in range(total):
        state = step(state, u[t : t + 1])
        if pin[t] >= 0:
            state = pin[t : t + 1].copy()
        states[t] = state[0]
    eps = np.empty((total, dim))
    for j in range(k):
        idx = np.flatnonzero(states == j)
        eps[idx] = mnts_sample(nts[j], idx.size, rng)
    out = np.empty((total, dim))
    for c, p in enumerate(models):
        s2 = np.where(np.isfinite(p.regime_variance), p.regime_variance, p.omega)
        for t in range(total):
            sd = np.sqrt(s2[states[t]])
            shock = sd * eps[t, c]
            out[t, c] = p.eta[states[t]] + shock
            s2 = p.omega + p.alpha * shock * shock + p.beta * s2
    out = out[burn:]
    return out[:, 0], out[:, 1:], states[burn:]


def business_days(n: int, start: dt.date = dt.date(2000, 1, 3)) -> tuple[dt.date, ...]:
    days = []
    d = start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return tuple(days)


def _equicorrelation(n: int, rho: float) -> np.ndarray:
    return np.full((n, n), rho) + (1 - rho) * np.eye(n)


def demo_market(n_assets: int = 3, n: int = 1000, seed=0, burn: int = 250, storm=None):
    """A two-regime market with an embedded high-volatility regime.

    Regime 1 is calm (daily vol 0.8-1.5%, mild correlation, positive drift).
    Regime 2 is turbulent: correlation rises to 0.7, tails get heavier, drift
    turns negative and volatility is multiplied by a factor that grows from
    1.6 for the first asset to 3.0 for the last, so the names that look only
    moderately riskier in calm markets carry most of the crash risk.

    Parameters
    ----------
    storm : (start, stop), optional
        Day range pinned to the turbulent regime, e.g. to place a crisis in
        an out-of-sample holding period.

    Returns
    -------
    panel : ReturnPanel
        Asset returns named ``A1..AN`` on business days.
    index : ndarray
        Index returns on the same days.
    states : ndarray
        Market regime of each day.
    """
    trans = np.array([[0.985, 0.015], [0.04, 0.96]])
    vols = np.linspace(0.008, 0.015, n_assets) if n_assets > 1 else np.array([0.01])
    mults = np.linspace(1.6, 3.0, n_assets) if n_assets > 1 else np.array([2.2])

    def model(vol: float, drift: float, mult: float) -> MrsGarchParams:
        alpha = np.array([0.05, 0.10])
        beta = np.array([0.90, 0.85])
        target = np.array([vol, mult * vol]) ** 2
        return MrsGarchParams(np.array([drift, -mult * drift]), target * (1 - alpha - beta), alpha, beta,
                              trans, "normal")

    index_params = model(0.009, 0.0005, 2.2)
    assets = [model(v, 0.0004 + 0.0002 * i / max(n_assets - 1, 1), m)
              for i, (v, m) in enumerate(zip(vols, mults))]
    dim = n_assets + 1
    calm = _equicorrelation(dim, 0.3)
    calm[0, 1:] = calm[1:, 0] = 0.6
    turbulent = _equicorrelation(dim, 0.7)
    turbulent[0, 1:] = turbulent[1:, 0] = 0.85
    nts = [
        StdMntsParams(1.7, 2.0, np.zeros(dim), calm),
        StdMntsParams(1.2, 0.8, np.full(dim, -0.2), turbulent),
    ]
    forced = None
    if storm is not None:
        forced = np.full(n, -1)
        forced[storm[0] : storm[1]] = 1
    index, r, states = simulate_market(index_params, assets, nts, n, seed, burn, forced)
    r = np.maximum(r, -0.95)
    panel = ReturnPanel(business_days(n), tuple(f"A{i + 1}" for i in range(n_assets)), r)
    return panel, np.maximum(index, -0.95), states


def prices_from_returns(returns, start: float = 100.0) -> np.ndarray:
    """Price levels whose simple returns are ``returns`` (one extra leading row)."""
    r = np.asarray(returns, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    first = np.full((1, r.shape[1]), start)
    return np.vstack([first, start * np.cumprod(1.0 + r, axis=0)])


def write_price_csv(path, dates: Sequence[dt.date], names: Sequence[str], prices) -> Path:
    path = Path(path)
    prices = np.asarray(prices, dtype=float)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *names])
        for d, row in zip(dates, prices):
            w.writerow([d.isoformat(), *(f"{v:.10g}" for v in row)])
    return path
