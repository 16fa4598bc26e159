"""Forward scenario generation from a fitted joint model.

Four steps:

1. per-asset parallel-variance paths, each asset following its own regime
   chain,
2. a market regime chain per scenario (index transition matrix) and the
   per-regime tallies,
3. exactly ``tally_k`` stdMNTS draws for market regime ``k``, placed into the
   cube cells tagged ``k`` in row-major ``(s, m)`` order,
4. ``r = eta_asset_regime + sigma * eps``.

By default the innovation ``eps`` placed in a cell also drives that asset's
variance recursion (``u_t = sigma_t eps_t``), so steps 1 and 3 run
interleaved. ``coupled=False`` uses independent standard normal shocks for
the variance recursion instead.

Seed splitting: the master seed feeds a :class:`numpy.random.SeedSequence`
whose ``spawn(3 + N)`` children drive, in order, the market chain, the
innovation pools, the decoupled normal shocks, and the N asset chains.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mrs_garch import MrsGarchParams, stationarity_spectral_radius, stationary_distribution
from .tempered_stable import StdMntsParams, mnts_sample

__all__ = [
    "ScenarioCube",
    "transition_sampler",
    "simulate_regime_chain",
    "simulate_variance_paths",
    "draw_regime_tagged_innovations",
    "place_innovations",
    "assemble_returns",
    "simulate_scenarios",
    "save_cube",
    "cube_to_csv",
    "load_cube",
    "CUBE_FORMAT",
    "CUBE_VERSION",
]

CUBE_FORMAT = "mrsnts-cube"
CUBE_VERSION = 1


@dataclass(frozen=True)
class ScenarioCube:
    """``S x M x N`` simulated per-period simple returns with market-regime tags."""

    returns: np.ndarray
    regimes: np.ndarray
    assets: tuple[str, ...]
    seed: int | None = None
    asset_regimes: np.ndarray | None = field(default=None, repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 3:
            raise ValueError("returns must be S x M x N")
        if not np.all(np.isfinite(r)):
            raise ValueError("non-finite scenario returns")
        if np.shape(self.regimes) != r.shape[:2]:
            raise ValueError("regime tags must be S x M")
        if len(self.assets) != r.shape[2]:
            raise ValueError("asset list does not match the cube")
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "regimes", np.asarray(self.regimes, dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.returns.shape  # type: ignore[return-value]

    @property
    def S(self) -> int:
        return self.returns.shape[0]

    @property
    def M(self) -> int:
        return self.returns.shape[1]

    @property
    def N(self) -> int:
        return self.returns.shape[2]

    def accumulated(self) -> np.ndarray:
        """Uncompounded accumulated returns (prefix sums along the horizon)."""
        return np.cumsum(self.returns, axis=1)

    def terminal(self) -> np.ndarray:
        """``S x N`` accumulated return at the last period."""
        return self.returns.sum(axis=1)

    def portfolio(self, weights) -> np.ndarray:
        """``S x M`` per-period portfolio returns."""
        return self.returns @ np.asarray(weights, dtype=float)

    def portfolio_accumulated(self, weights) -> np.ndarray:
        return np.cumsum(self.portfolio(weights), axis=1)


# ---------------------------------------------------------------------------
# step 2: market chain


def transition_sampler(trans):
    """Return ``step(states, u)`` mapping current states and uniforms to next states.

    Inverse-CDF on each row; a draw landing on a zero-probability entry (only
    possible through rounding of the cumulative sums) is moved to the nearest
    state with positive probability, so the chain never leaves P's support.
    """
    p = np.asarray(trans, dtype=float)
    k = p.shape[0]
    cum = np.cumsum(p, axis=1)
    cum /= cum[:, -1:]
    cum[:, -1] = 1.0
    fix = np.empty((k, k), dtype=np.int64)
    for i in range(k):
        support = np.flatnonzero(p[i] > 0)
        for j in range(k):
            fix[i, j] = support[np.argmin(np.abs(support - j))]

    def step(states: np.ndarray, u: np.ndarray) -> np.ndarray:
        rows = cum[states]
        nxt = (u[:, None] >= rows).sum(axis=1)
        nxt = np.minimum(nxt, k - 1)
        return fix[states, nxt]

    return step


def _start_states(start, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if np.ndim(start) == 0:
        s = int(start)
        if not 0 <= s < k:
            raise ValueError("start state out of range")
        return np.full(count, s, dtype=np.int64)
    p = np.asarray(start, dtype=float)
    if p.shape != (k,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-8:
        raise ValueError("start distribution must be a probability vector of length k")
    cum = np.cumsum(p / p.sum())
    cum[-1] = 1.0
    idx = np.minimum(np.searchsorted(cum, rng.uniform(size=count), side="right"), k - 1)
    support = np.flatnonzero(p > 0)
    bad = p[idx] == 0
    if bad.any():
        idx[bad] = support[np.abs(support[None, :] - idx[bad, None]).argmin(axis=1)]
    return idx.astype(np.int64)


def simulate_regime_chain(trans, start, m: int, count: int, seed=None):
    """Simulate ``count`` chains of ``m`` periods.

    ``start`` is either a state index or a distribution and describes the
    state at time 0 (the last observed day); the returned ``count x m``
    states are those at times ``1..m``.

    Returns
    -------
    states : ndarray of int, shape (count, m)
    tallies : ndarray of int, shape (k,)
        Number of cells in each regime; sums to ``count * m``.
    """
    rng = np.random.default_rng(seed)
    p = np.asarray(trans, dtype=float)
    k = p.shape[0]
    if p.shape != (k, k) or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-10):
        raise ValueError("transition matrix must be row-stochastic")
    step = transition_sampler(p)
    cur = _start_states(start, k, count, rng)
    u = rng.uniform(size=(m, count))
    states = np.empty((count, m), dtype=np.int64)
    for t in range(m):
        cur = step(cur, u[t])
        states[:, t] = cur
    return states, np.bincount(states.ravel(), minlength=k)


# ---------------------------------------------------------------------------
# step 3: innovations


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def draw_regime_tagged_innovations(nts: Sequence[StdMntsParams], tallies, seed=None) -> list[np.ndarray]:
    """One pool of stdMNTS draws per regime with exactly ``tallies[k]`` rows."""
    tallies = np.asarray(tallies, dtype=np.int64)
    if len(nts) != tallies.size:
        raise ValueError("one parameter set per regime is required")
    children = _seed_sequence(seed).spawn(len(nts))
    pools = []
    for p, n, ss in zip(nts, tallies, children):
        pool = mnts_sample(p, int(n), np.random.default_rng(ss))
        assert pool.shape[0] == n
        pools.append(pool)
    return pools


def place_innovations(pools: Sequence[np.ndarray], states) -> np.ndarray:
    """Fill an ``S x M x N`` array: cells tagged ``k`` consume pool ``k`` in row-major order."""
    states = np.asarray(states)
    n = next((p.shape[1] for p in pools if p.ndim == 2), 0)
    out = np.empty(states.shape + (n,))
    flat_states = states.ravel()
    flat = out.reshape(-1, n)
    for k, pool in enumerate(pools):
        cells = np.flatnonzero(flat_states == k)
        if cells.size != pool.shape[0]:
            raise ValueError(f"pool {k} has {pool.shape[0]} draws for {cells.size} cells")
        flat[cells] = pool
    return out


# ---------------------------------------------------------------------------
# step 1: variance paths


def simulate_variance_paths(params: MrsGarchParams, m: int, count: int, seed=None,
                            sigma2_0=None, start_probs=None, shocks=None):
    """Parallel-variance recursion along each asset's own regime chain.

    Parameters
    ----------
    params : MrsGarchParams
        Fitted model (refused if not stationary).
    sigma2_0 : array_like, optional
        Parallel variances for the first simulated period (default: the
        per-regime unconditional variances).
    start_probs : array_like, optional
        Regime distribution on the last observed day (default: stationary).
    shocks : ndarray, optional
        ``count x m`` standardized shocks; ``u = sigma * shock`` feeds the
        next period's variances. Standard normal draws when omitted.

    Returns
    -------
    sigma : ndarray, shape (count, m)
        Realized standard deviation (selected by the asset regime).
    regimes : ndarray of int, shape (count, m)
    """
    if stationarity_spectral_radius(params) >= 1.0:
        raise ValueError("non-stationary model (spectral radius >= 1)")
    rng = np.random.default_rng(seed)
    k = params.k
    if start_probs is None:
        start_probs = stationary_distribution(params.trans)
    if sigma2_0 is None:
        s2 = params.regime_variance
        sigma2_0 = np.where(np.isfinite(s2), s2, params.omega)
    regimes, _ = simulate_regime_chain(params.trans, start_probs, m, count, rng)
    if shocks is None:
        shocks = rng.standard_normal((count, m))
    else:
        shocks = np.asarray(shocks, dtype=float)
        if shocks.shape != (count, m):
            raise ValueError("shocks must be count x m")
    s2 = np.tile(np.asarray(sigma2_0, dtype=float), (count, 1))
    sigma = np.empty((count, m))
    rows = np.arange(count)
    for t in range(m):
        sd = np.sqrt(s2[rows, regimes[:, t]])
        sigma[:, t] = sd
        u = sd * shocks[:, t]
        s2 = params.omega + params.alpha * (u * u)[:, None] + params.beta * s2
    return sigma, regimes


# ---------------------------------------------------------------------------
# step 4: assembly


def assemble_returns(sigma, innovations, asset_regimes, eta) -> np.ndarray:
    """``r[s, m, n] = eta_n[regime_n(s, m)] + sigma[s, m, n] * eps[s, m, n]``.

    ``eta`` is a list with one regime-mean vector per asset.
    """
    sigma = np.asarray(sigma, dtype=float)
    eps = np.asarray(innovations, dtype=float)
    reg = np.asarray(asset_regimes)
    if sigma.shape != eps.shape or reg.shape != sigma.shape or sigma.ndim != 3:
        raise ValueError("sigma, innovations and regimes must share an S x M x N shape")
    if len(eta) != sigma.shape[2]:
        raise ValueError("one mean vector per asset is required")
    means = np.empty_like(sigma)
    for n, e in enumerate(eta):
        means[:, :, n] = np.asarray(e, dtype=float)[reg[:, :, n]]
    return means + sigma * eps


def simulate_scenarios(model, paths: int = 1000, horizon: int = 10, seed: int = 0,
                       coupled: bool = True) -> ScenarioCube:
    """Run the four simulation steps for a fitted :class:`~mrsnts.estimation.JointModel`."""
    N = model.n_assets
    ss = np.random.SeedSequence(seed)
    chain_ss, pool_ss, normal_ss, *asset_ss = ss.spawn(3 + N)
    states, tallies = simulate_regime_chain(
        model.trans, model.index_fit.last_probs, horizon, paths, np.random.default_rng(chain_ss))
    pools = draw_regime_tagged_innovations(model.nts, tallies, pool_ss)
    eps = place_innovations(pools, states)
    normal = np.random.default_rng(normal_ss)
    sigma = np.empty((paths, horizon, N))
    reg = np.empty((paths, horizon, N), dtype=np.int64)
    for n, f in enumerate(model.asset_fits):
        shocks = eps[:, :, n] if coupled else normal.standard_normal((paths, horizon))
        sigma[:, :, n], reg[:, :, n] = simulate_variance_paths(
            f.params, horizon, paths, np.random.default_rng(asset_ss[n]),
            sigma2_0=f.next_sigma2, start_probs=f.last_probs, shocks=shocks)
    r = assemble_returns(sigma, eps, reg, [f.params.eta for f in model.asset_fits])
    return ScenarioCube(r, states, tuple(model.assets), seed, reg, sigma)


# ---------------------------------------------------------------------------
# files


def save_cube(cube: ScenarioCube, path) -> Path:
    """Binary cube file: an uncompressed ``.npz`` with a JSON header entry."""
    path = Path(path)
    header = {
        "format": CUBE_FORMAT,
        "version": CUBE_VERSION,
        "S": cube.S,
        "M": cube.M,
        "N": cube.N,
        "assets": list(cube.assets),
        "seed": cube.seed,
    }
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
             returns=cube.returns, regimes=cube.regimes)
    path.write_bytes(buf.getvalue())
    return path


def load_cube(path) -> ScenarioCube:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != CUBE_FORMAT or header.get("version") != CUBE_VERSION:
            raise ValueError("not a scenario cube file")
        returns, regimes = z["returns"], z["regimes"]
    if returns.shape != (header["S"], header["M"], header["N"]):
        raise ValueError("cube header does not match the data")
    return ScenarioCube(returns, regimes, tuple(header["assets"]), header["seed"])


def cube_to_csv(cube: ScenarioCube, path) -> Path:
    """Long-format CSV: ``scenario, period, regime, <asset returns...>`` (1-based indices)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "period", "regime", *cube.assets])
        for s in range(cube.S):
            for m in range(cube.M):
                w.writerow([s + 1, m + 1, int(cube.regimes[s, m]) + 1,
                            *(repr(float(v)) for v in cube.returns[s, m])])
    return path
