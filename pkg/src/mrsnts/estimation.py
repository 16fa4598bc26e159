"""Joint MRS-GARCH / stdMNTS estimation.

Pipeline (each step's output is kept on the returned model):

1. regime-switching GARCH with Student-t innovations on the market index;
   smoothed regime path and standardized residuals,
2. common tail parameters ``(lam_k, theta_k)`` per market regime from the
   index residuals,
3. regime-switching GARCH on every asset, standardized residuals,
4. per-asset skew ``nu_k`` per market regime with the tails frozen,
5. per-regime residual correlation, denoised by eigenvalue clipping at the
   Marchenko-Pastur edge,
6. internal normal correlation ``Sigma_k`` implied by the covariance identity,
   repaired to the nearest positive definite correlation matrix.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import mrs_garch as mg
from .data import ReturnPanel
from .tempered_stable import (
    InversionGrid,
    StdMntsParams,
    fit_skew,
    fit_tail_params,
    nts_cdf,
    std_gamma,
)

__all__ = [
    "EstimationError",
    "EstimationConfig",
    "JointModel",
    "KsRow",
    "regime_conditional_residual_corr",
    "marchenko_pastur_edge",
    "denoise_correlation",
    "nearest_psd",
    "implied_internal_sigma",
    "ks_report",
    "estimate",
    "save_model",
    "load_model",
    "MODEL_FORMAT",
    "MODEL_VERSION",
]

log = logging.getLogger(__name__)

MODEL_FORMAT = "mrsnts-model"
MODEL_VERSION = 1


class EstimationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


# ---------------------------------------------------------------------------
# correlation tools


def regime_conditional_residual_corr(residuals, path, regime: int) -> np.ndarray:
    """Sample correlation of the residual panel over days classified as ``regime``."""
    e = np.atleast_2d(np.asarray(residuals, dtype=float))
    if e.shape[0] == 1 and e.shape[1] > 1 and np.ndim(residuals) == 1:
        e = e.T
    hard = path.hard if hasattr(path, "hard") else np.asarray(path)
    sub = e[hard == regime]
    n = e.shape[1]
    if sub.shape[0] < n + 2:
        raise ValueError(f"regime {regime} has {sub.shape[0]} days; need at least {n + 2}")
    if n == 1:
        return np.ones((1, 1))
    c = np.corrcoef(sub, rowvar=False)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


def marchenko_pastur_edge(n_assets: int, t_obs: float) -> float:
    return (1.0 + np.sqrt(n_assets / t_obs)) ** 2


def _to_corr(a: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(a))
    c = a / np.outer(d, d)
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return c


def denoise_correlation(corr, t_obs: float, rescale: bool = True) -> np.ndarray:
    """Replace noise eigenvalues (below the Marchenko-Pastur edge) by their mean.

    The trace is preserved; with ``rescale`` the result is mapped back to a
    unit-diagonal correlation matrix.
    """
    c = np.asarray(corr, dtype=float)
    n = c.shape[0]
    if t_obs <= n:
        raise ValueError(f"need more observations ({t_obs}) than assets ({n})")
    if n == 1:
        return np.ones((1, 1))
    vals, vecs = np.linalg.eigh(0.5 * (c + c.T))
    noise = vals < marchenko_pastur_edge(n, t_obs)
    if noise.any():
        vals = vals.copy()
        vals[noise] = vals[noise].mean()
    out = (vecs * vals) @ vecs.T
    out = 0.5 * (out + out.T)
    return _to_corr(out) if rescale else out


def nearest_psd(matrix, eps: float = 1e-8, unit_diagonal: bool = True) -> np.ndarray:
    """Eigenvalue clipping at ``eps`` (Frobenius-nearest in the spectral sense).

    With ``unit_diagonal`` the clipped matrix is rescaled to a correlation
    matrix; the clip level is raised until the rescaled result still has
    smallest eigenvalue ``>= eps``.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    scale = max(1.0, float(np.max(np.abs(a))))
    if not np.allclose(a, a.T, atol=1e-10 * scale, rtol=0.0):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    level = eps
    for _ in range(60):
        clipped = (vecs * np.maximum(vals, level)) @ vecs.T
        clipped = 0.5 * (clipped + clipped.T)
        if not unit_diagonal:
            return clipped
        out = _to_corr(clipped)
        if np.linalg.eigvalsh(out).min() >= eps:
            return out
        level *= 2.0
    raise ArithmeticError("could not repair matrix")


def implied_internal_sigma(sigma_x, lam: float, theta: float, nu, gamma=None, eps: float = 1e-8):
    """Invert the covariance identity for the normal correlation, then repair."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    gamma = std_gamma(nu, lam, theta) if gamma is None else np.atleast_1d(np.asarray(gamma, float))
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    raw = np.asarray(sigma_x, float) - (2.0 - lam) / (2.0 * theta) * np.outer(nu, nu)
    raw = raw / np.outer(gamma, gamma)
    return nearest_psd(raw, eps=eps)


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class KsRow:
    asset: str
    regime: int
    nu: float
    statistic: float
    pvalue: float
    n: int


KS_COLUMNS = ("asset", "regime", "nu", "ks_statistic", "p_value", "n")


def ks_statistic(sample, cdf) -> float:
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_report(residuals, path, nts: Sequence[StdMntsParams], assets=None, min_n: int = 20,
              grid: InversionGrid | None = None) -> list[KsRow]:
    """Two-sided KS test of each asset's residuals in each market regime.

    The p-value uses the asymptotic Kolmogorov distribution. Regimes with
    fewer than ``min_n`` days are reported with NaN statistic and p-value.
    """
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    hard = path.hard if hasattr(path, "hard") else np.asarray(path)
    assets = list(assets) if assets is not None else [str(i) for i in range(e.shape[1])]
    rows = []
    for n, name in enumerate(assets):
        for j, p in enumerate(nts):
            sub = e[hard == j, n]
            nu = float(p.nu[n])
            if sub.size < min_n:
                rows.append(KsRow(name, j + 1, nu, float("nan"), float("nan"), int(sub.size)))
                continue
            d = ks_statistic(sub, lambda x: nts_cdf(x, p.lam, p.theta, nu, p.gamma[n], grid=grid))
            pval = float(stats.kstwobign.sf(np.sqrt(sub.size) * d))
            rows.append(KsRow(name, j + 1, nu, d, min(max(pval, 0.0), 1.0), int(sub.size)))
    return rows


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class EstimationConfig:
    """Estimation settings.

    ``regimes=None`` selects the index regime count by BIC over 1..3.
    ``asset_regimes`` is ``"index"`` (assets use the index count) or
    ``"own"`` (each asset selects its own). ``sparse_regime`` controls a
    regime with too few days for a correlation or tail fit: ``"error"``
    raises, ``"pool"`` falls back to all days. With
    ``standardize_subsamples`` each regime's residual sub-sample is z-scored
    before the shape fits of steps 2 and 4, so a scale offset between an
    asset's own variance regimes and the market regimes is not absorbed into
    the tail and skew parameters. ``index_skew`` lets the step-2 tail fit
    carry its own skew (default: symmetric, skew is left to step 4);
    ``skew_shrink`` is the tie-breaking penalty of :func:`fit_skew`.
    """

    regimes: int | None = None
    asset_regimes: str = "index"
    innovation: str = "t"
    zero_mean: bool = False
    n_starts: int = 8
    min_window: int = 1764
    denoise: bool = True
    psd_eps: float = 1e-8
    sparse_regime: str = "pool"
    min_tail_obs: int = 30
    standardize_subsamples: bool = True
    index_skew: bool = False
    skew_shrink: float = 100.0
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class AssetFit:
    params: mg.MrsGarchParams
    next_sigma2: np.ndarray
    last_probs: np.ndarray
    loglik: float
    bic: float
    spectral_radius: float


@dataclass
class JointModel:
    assets: tuple[str, ...]
    index_fit: AssetFit
    asset_fits: list[AssetFit]
    nts: list[StdMntsParams]
    sigma_x: list[np.ndarray]
    index_path: np.ndarray
    regime_counts: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.index_fit.params.k

    @property
    def trans(self) -> np.ndarray:
        return self.index_fit.params.trans

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def to_document(self) -> dict:
        def fit_doc(f: AssetFit) -> dict:
            return {
                "params": f.params.to_dict(),
                "next_sigma2": f.next_sigma2.tolist(),
                "last_probs": f.last_probs.tolist(),
                "loglik": f.loglik,
                "bic": f.bic,
                "spectral_radius": f.spectral_radius,
            }

        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "assets": list(self.assets),
            "regimes": self.k,
            "index": fit_doc(self.index_fit),
            "asset_models": [fit_doc(f) for f in self.asset_fits],
            "nts": [
                {"lambda": p.lam, "theta": p.theta, "nu": p.nu.tolist(), "sigma": p.sigma.tolist()}
                for p in self.nts
            ],
            "sigma_x": [s.tolist() for s in self.sigma_x],
            "index_path": self.index_path.tolist(),
            "regime_counts": self.regime_counts.tolist(),
            "diagnostics": self.diagnostics,
            "meta": self.meta,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "JointModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a model document")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")

        def fit_from(d: dict) -> AssetFit:
            return AssetFit(
                mg.MrsGarchParams.from_dict(d["params"]),
                np.asarray(d["next_sigma2"], float),
                np.asarray(d["last_probs"], float),
                d["loglik"], d["bic"], d["spectral_radius"],
            )

        nts = [StdMntsParams(p["lambda"], p["theta"], p["nu"], np.asarray(p["sigma"])) for p in doc["nts"]]
        return cls(
            tuple(doc["assets"]),
            fit_from(doc["index"]),
            [fit_from(d) for d in doc["asset_models"]],
            nts,
            [np.asarray(s, float) for s in doc["sigma_x"]],
            np.asarray(doc["index_path"], int),
            np.asarray(doc["regime_counts"], int),
            doc.get("diagnostics", {}),
            doc.get("meta", {}),
        )

    def dumps(self) -> str:
        return json.dumps(_jsonable(self.to_document()), sort_keys=True, indent=1)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def save_model(model: JointModel, path) -> Path:
    path = Path(path)
    path.write_text(model.dumps() + "\n", encoding="utf-8")
    return path


def load_model(path) -> JointModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return JointModel.from_document(doc)


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else x - x.mean()


def _asset_fit(f: mg.MrsGarchFit) -> AssetFit:
    return AssetFit(f.params, f.next_sigma2, f.last_probs, f.loglik, f.bic, f.spectral_radius)


def estimate(returns: ReturnPanel, index_returns, config: EstimationConfig | None = None,
             index_name: str = "INDEX") -> JointModel:
    """Run the six estimation steps on aligned asset and index returns."""
    cfg = config or EstimationConfig()
    r = np.asarray(returns.returns, dtype=float)
    idx = np.asarray(index_returns, dtype=float).ravel()
    T, N = r.shape
    if idx.size != T:
        raise EstimationError(0, "index series not aligned with the return panel")
    if T < cfg.min_window:
        raise EstimationError(0, f"window of {T} days is shorter than the minimum {cfg.min_window}")
    if cfg.asset_regimes not in ("index", "own"):
        raise EstimationError(0, "asset_regimes must be 'index' or 'own'")
    seeds = np.random.SeedSequence(cfg.seed).spawn(N + 1)

    def seed_of(i):
        return int(seeds[i].generate_state(1)[0])

    # step 1
    try:
        if cfg.regimes is None:
            sel = mg.select_regime_count(idx, cfg.innovation, seed_of(0), n_starts=cfg.n_starts,
                                         zero_mean=cfg.zero_mean)
            ifit, selection = sel.best, _jsonable(sel.table)
        else:
            ifit = mg.fit(idx, cfg.regimes, cfg.innovation, seed_of(0), n_starts=cfg.n_starts,
                          zero_mean=cfg.zero_mean)
            selection = None
    except (mg.FitError, ValueError) as exc:
        raise EstimationError(1, str(exc)) from exc
    k = ifit.k
    hard = ifit.path.hard
    counts = np.bincount(hard, minlength=k)
    log.info("index: k=%d, regime days %s", k, counts.tolist())

    def regime_mask(j: int, need: int, step: int) -> np.ndarray:
        mask = hard == j
        if mask.sum() >= need:
            return mask
        if cfg.sparse_regime == "pool":
            log.warning("step %d: regime %d has %d days; pooling all days", step, j + 1, mask.sum())
            return np.ones_like(mask)
        raise EstimationError(step, f"regime {j + 1} has {mask.sum()} days; need {need}")

    # step 2
    tails = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for j in range(k):
            mask = regime_mask(j, cfg.min_tail_obs, 2)
            try:
                sub = ifit.residuals[mask]
                sub = _zscore(sub) if cfg.standardize_subsamples else sub
                tails.append(fit_tail_params(sub, fit_skew=cfg.index_skew))
            except ValueError as exc:
                raise EstimationError(2, str(exc)) from exc

    # step 3
    afits = []
    resid = np.empty((T, N))
    for n in range(N):
        try:
            if cfg.asset_regimes == "index":
                f = mg.fit(r[:, n], k, cfg.innovation, seed_of(n + 1), n_starts=cfg.n_starts,
                           zero_mean=cfg.zero_mean)
            else:
                f = mg.select_regime_count(r[:, n], cfg.innovation, seed_of(n + 1),
                                           n_starts=cfg.n_starts, zero_mean=cfg.zero_mean).best
        except (mg.FitError, ValueError) as exc:
            raise EstimationError(3, f"asset {returns.assets[n]}: {exc}") from exc
        afits.append(f)
        resid[:, n] = f.residuals

    # step 4
    nus = np.zeros((k, N))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for j in range(k):
            mask = regime_mask(j, cfg.min_tail_obs, 4)
            for n in range(N):
                sub = resid[mask, n]
                sub = _zscore(sub) if cfg.standardize_subsamples else sub
                nus[j, n] = fit_skew(sub, tails[j].lam, tails[j].theta, shrink=cfg.skew_shrink).nu

    # steps 5 and 6
    raw_corr, sigma_x, nts = [], [], []
    for j in range(k):
        mask = regime_mask(j, N + 2, 5)
        sub_path = np.where(mask, j, -1)
        try:
            c = regime_conditional_residual_corr(resid, sub_path, j)
        except ValueError as exc:
            raise EstimationError(5, str(exc)) from exc
        t_obs = int(mask.sum())
        sx = denoise_correlation(c, t_obs) if (cfg.denoise and t_obs > N) else c
        try:
            sig = implied_internal_sigma(sx, tails[j].lam, tails[j].theta, nus[j], eps=cfg.psd_eps)
        except (ValueError, ArithmeticError) as exc:
            raise EstimationError(6, str(exc)) from exc
        raw_corr.append(c)
        sigma_x.append(sx)
        nts.append(StdMntsParams(tails[j].lam, tails[j].theta, nus[j], sig))

    ks = ks_report(resid, hard, nts, returns.assets)
    diagnostics = {
        "selection": selection,
        "tail_fits": [
            {"regime": j + 1, "lambda": t.lam, "theta": t.theta, "index_nu": t.nu, "loss": t.loss,
             "n": t.n, "small_sample": t.small_sample}
            for j, t in enumerate(tails)
        ],
        "raw_corr": [c.tolist() for c in raw_corr],
        "ks": [row.__dict__ for row in ks],
        "asset_bic": [f.bic for f in afits],
    }
    meta = {
        "index": index_name,
        "window": [str(returns.dates[0]), str(returns.dates[-1])] if returns.dates else None,
        "observations": T,
        "config": cfg.to_dict(),
    }
    return JointModel(
        tuple(returns.assets), _asset_fit(ifit), [_asset_fit(f) for f in afits], nts,
        sigma_x, hard.astype(int), counts, _jsonable(diagnostics), _jsonable(meta),
    )
