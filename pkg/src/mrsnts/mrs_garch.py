"""Markov regime switching GARCH(1,1) with parallel regime variances.

Every regime keeps its own GARCH(1,1) recursion, all driven by the same
realized shock, and a Markov chain picks which one is realized::

    r_t       = eta[D_t] + sigma[D_t, t] * eps_t
    sigma2_t  = omega + alpha * u_{t-1}^2 + beta * sigma2_{t-1}     (k-vectors)

Because the whole variance vector is a deterministic function of past data,
the likelihood follows from a plain Hamilton filter over ``D_t``.

When regime means differ the realized shock is not observed exactly; the
filter uses ``u_t = r_t - sum_j P(D_t = j | F_t) eta_j``. With equal (or
zero) means this is the exact shock.

Scale convention: fitting works on returns divided by their sample standard
deviation and maps the result back, so ``eta`` is in return units and
``omega`` in squared return units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy import optimize

from .tempered_stable import as_generator

__all__ = [
    "FitError",
    "MrsGarchParams",
    "RegimePath",
    "MrsGarchFit",
    "RegimeSelection",
    "stationary_distribution",
    "stationarity_spectral_radius",
    "unconditional_variance",
    "recurse_variance",
    "loglik",
    "filter_series",
    "smooth",
    "fit",
    "select_regime_count",
    "simulate",
    "bimodality_coefficient",
]

INNOVATIONS = ("normal", "t")
_NORMAL, _STUDENT = 0, 1


class FitError(RuntimeError):
    """No admissible optimum was found."""


def stationary_distribution(trans: np.ndarray) -> np.ndarray:
    """Left Perron vector of a row-stochastic matrix (least squares solve)."""
    trans = np.asarray(trans, dtype=float)
    k = trans.shape[0]
    a = np.vstack([trans.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _is_irreducible(trans: np.ndarray) -> bool:
    k = trans.shape[0]
    reach = (trans > 0).astype(int) + np.eye(k, dtype=int)
    acc = np.linalg.matrix_power(reach, k)
    return bool(np.all(acc > 0))


@dataclass(frozen=True)
class MrsGarchParams:
    eta: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    trans: np.ndarray
    innovation: str = "normal"
    df: float | None = None

    def __post_init__(self) -> None:
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        k = eta.size
        vecs = {}
        for name in ("omega", "alpha", "beta"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (k,)).copy()
            vecs[name] = v
        trans = np.atleast_2d(np.asarray(self.trans, dtype=float))
        if not 1 <= k <= 3:
            raise ValueError("regime count must be 1, 2 or 3")
        if trans.shape != (k, k):
            raise ValueError("transition matrix shape mismatch")
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        if np.any(vecs["omega"] <= 0) or np.any(vecs["alpha"] < 0) or np.any(vecs["beta"] < 0):
            raise ValueError("need omega > 0, alpha >= 0, beta >= 0")
        if self.innovation not in INNOVATIONS:
            raise ValueError(f"innovation must be one of {INNOVATIONS}")
        if self.innovation == "t" and (self.df is None or self.df <= 2):
            raise ValueError("student-t innovations need df > 2")
        object.__setattr__(self, "eta", eta)
        for name, v in vecs.items():
            object.__setattr__(self, name, v)
        object.__setattr__(self, "trans", trans)

    @property
    def k(self) -> int:
        return self.eta.size

    @property
    def irreducible(self) -> bool:
        return _is_irreducible(self.trans)

    @property
    def regime_variance(self) -> np.ndarray:
        """Per-regime ``omega / (1 - alpha - beta)``; ``inf`` where persistence >= 1."""
        pers = self.alpha + self.beta
        with np.errstate(divide="ignore"):
            return np.where(pers < 1.0, self.omega / np.maximum(1.0 - pers, 1e-300), np.inf)

    def n_params(self, zero_mean: bool = False) -> int:
        k = self.k
        return (0 if zero_mean else k) + 3 * k + k * (k - 1) + (1 if self.innovation == "t" else 0)

    def permuted(self, order) -> "MrsGarchParams":
        order = np.asarray(order)
        return replace(
            self,
            eta=self.eta[order],
            omega=self.omega[order],
            alpha=self.alpha[order],
            beta=self.beta[order],
            trans=self.trans[np.ix_(order, order)],
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "eta": self.eta.tolist(),
            "omega": self.omega.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "trans": self.trans.tolist(),
            "innovation": self.innovation,
            "df": self.df,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MrsGarchParams":
        return cls(d["eta"], d["omega"], d["alpha"], d["beta"], d["trans"], d["innovation"], d["df"])


def stationarity_spectral_radius(params: MrsGarchParams) -> float:
    """Spectral radius of the ``k^2 x k^2`` second-moment block matrix.

    Block ``(j, i)`` is ``P[i, j] * (diag(beta) + alpha e_i^T)``: it maps the
    regime-``i``-weighted variance vector at ``t`` to the regime-``j``
    weighted one at ``t + 1``.
    """
    k = params.k
    m = np.zeros((k * k, k * k))
    for j in range(k):
        for i in range(k):
            block = np.diag(params.beta).copy()
            block[:, i] += params.alpha
            m[j * k : (j + 1) * k, i * k : (i + 1) * k] = params.trans[i, j] * block
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def unconditional_variance(params: MrsGarchParams) -> float:
    """Stationary ``E[sigma2_{D_t, t}]`` from the second-moment fixed point."""
    k = params.k
    pi = stationary_distribution(params.trans)
    m = np.zeros((k * k, k * k))
    b = np.zeros(k * k)
    for j in range(k):
        b[j * k : (j + 1) * k] = pi[j] * params.omega
        for i in range(k):
            block = np.diag(params.beta).copy()
            block[:, i] += params.alpha
            m[j * k : (j + 1) * k, i * k : (i + 1) * k] = params.trans[i, j] * block
    z = np.linalg.solve(np.eye(k * k) - m, b)
    return float(sum(z[i * k + i] for i in range(k)))


def recurse_variance(sigma2, u_prev: float, params: MrsGarchParams) -> np.ndarray:
    """One step of the parallel recursion; the shock is shared by all regimes."""
    sigma2 = np.asarray(sigma2, dtype=float)
    if not np.all(np.isfinite(sigma2)) or not np.isfinite(u_prev):
        raise ValueError("non-finite variance state or shock")
    if np.any(sigma2 <= 0):
        raise ValueError("variances must be positive")
    return params.omega + params.alpha * u_prev**2 + params.beta * sigma2


# ---------------------------------------------------------------------------
# filter


@numba.njit(cache=True)
def _log_density(z, dist, df):
    if dist == _NORMAL:
        return -0.5 * math.log(2.0 * math.pi) - 0.5 * z * z
    c = (
        math.lgamma(0.5 * (df + 1.0))
        - math.lgamma(0.5 * df)
        - 0.5 * math.log(math.pi * (df - 2.0))
    )
    return c - 0.5 * (df + 1.0) * math.log1p(z * z / (df - 2.0))


@numba.njit(cache=True)
def _filter(r, eta, omega, alpha, beta, trans, dist, df, p0, s2_0):
    n = r.shape[0]
    k = eta.shape[0]
    filt = np.empty((n, k))
    pred = np.empty((n, k))
    s2 = np.empty((n, k))
    cur = s2_0.copy()
    prev = p0.copy()
    ll = 0.0
    logf = np.empty(k)
    for t in range(n):
        if t == 0:
            for j in range(k):
                pred[t, j] = p0[j]
        else:
            for j in range(k):
                acc = 0.0
                for i in range(k):
                    acc += prev[i] * trans[i, j]
                pred[t, j] = acc
        m = -np.inf
        for j in range(k):
            s2[t, j] = cur[j]
            sd = math.sqrt(cur[j])
            z = (r[t] - eta[j]) / sd
            if pred[t, j] > 0.0:
                logf[j] = math.log(pred[t, j]) + _log_density(z, dist, df) - math.log(sd)
            else:
                logf[j] = -np.inf
            if logf[j] > m:
                m = logf[j]
        if not np.isfinite(m):
            return -np.inf, filt, pred, s2, cur
        tot = 0.0
        for j in range(k):
            tot += math.exp(logf[j] - m)
        ll += m + math.log(tot)
        ubar = 0.0
        for j in range(k):
            filt[t, j] = math.exp(logf[j] - m) / tot
            prev[j] = filt[t, j]
            ubar += filt[t, j] * eta[j]
        u = r[t] - ubar
        for j in range(k):
            cur[j] = omega[j] + alpha[j] * u * u + beta[j] * cur[j]
    return ll, filt, pred, s2, cur


@numba.njit(cache=True)
def _smooth(filt, pred, trans):
    n, k = filt.shape
    out = np.empty((n, k))
    out[n - 1] = filt[n - 1]
    for t in range(n - 2, -1, -1):
        tot = 0.0
        for i in range(k):
            acc = 0.0
            for j in range(k):
                if pred[t + 1, j] > 0.0:
                    acc += trans[i, j] * out[t + 1, j] / pred[t + 1, j]
            out[t, i] = filt[t, i] * acc
            tot += out[t, i]
        for i in range(k):
            out[t, i] /= tot
    return out


def _initial_state(params: MrsGarchParams, r: np.ndarray, init_probs=None):
    p0 = stationary_distribution(params.trans) if init_probs is None else np.asarray(init_probs, float)
    v = params.regime_variance
    fallback = float(np.var(r)) if r.size > 1 else 1.0
    s2_0 = np.where(np.isfinite(v), v, fallback)
    return p0, s2_0


def _dist_args(params: MrsGarchParams):
    if params.innovation == "t":
        return _STUDENT, float(params.df)
    return _NORMAL, 0.0


@dataclass(frozen=True)
class FilterOutput:
    loglik: float
    filtered: np.ndarray
    predicted: np.ndarray
    sigma2: np.ndarray
    next_sigma2: np.ndarray


def filter_series(params: MrsGarchParams, returns, init_probs=None, init_sigma2=None) -> FilterOutput:
    r = np.ascontiguousarray(returns, dtype=float)
    p0, s2_0 = _initial_state(params, r, init_probs)
    if init_sigma2 is not None:
        s2_0 = np.asarray(init_sigma2, dtype=float)
    dist, df = _dist_args(params)
    ll, filt, pred, s2, nxt = _filter(
        r, params.eta, params.omega, params.alpha, params.beta, params.trans, dist, df, p0, s2_0
    )
    return FilterOutput(float(ll), filt, pred, s2, nxt)


def loglik(params: MrsGarchParams, returns, init_probs=None) -> float:
    """Filtered log-likelihood.

    The regime chain starts from its stationary law (or ``init_probs``) and
    every parallel variance from its regime's unconditional level
    ``omega / (1 - alpha - beta)`` (sample variance if that is not finite).
    """
    r = np.asarray(returns, dtype=float)
    if r.size < 10 * params.k:
        warnings.warn("few observations per regime", RuntimeWarning, stacklevel=2)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite returns")
    return filter_series(params, r, init_probs).loglik


@dataclass(frozen=True)
class RegimePath:
    probs: np.ndarray
    hard: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.hard, minlength=self.probs.shape[1])


def smooth(params: MrsGarchParams, returns, init_probs=None) -> RegimePath:
    out = filter_series(params, returns, init_probs)
    probs = _smooth(out.filtered, out.predicted, params.trans)
    return RegimePath(probs, np.argmax(probs, axis=1))


# ---------------------------------------------------------------------------
# estimation


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p):
    p = np.clip(p, 1e-9, 1 - 1e-9)
    return np.log(p / (1 - p))


class _Layout:
    """Maps an unconstrained vector to (scaled) model parameters."""

    def __init__(self, k: int, innovation: str, zero_mean: bool):
        self.k, self.innovation, self.zero_mean = k, innovation, zero_mean

    @property
    def size(self) -> int:
        k = self.k
        return (0 if self.zero_mean else k) + 3 * k + k * (k - 1) + (self.innovation == "t")

    def unpack(self, v: np.ndarray) -> MrsGarchParams:
        k = self.k
        i = 0
        if self.zero_mean:
            eta = np.zeros(k)
        else:
            eta = v[:k]
            i = k
        omega = np.exp(v[i : i + k])
        pers = 0.9999 * _logistic(v[i + k : i + 2 * k])
        share = _logistic(v[i + 2 * k : i + 3 * k])
        alpha = pers * share
        beta = pers - alpha
        i += 3 * k
        trans = np.zeros((k, k))
        for row in range(k):
            logits = np.zeros(k)
            off = [c for c in range(k) if c != row]
            logits[off] = v[i : i + k - 1]
            i += k - 1
            e = np.exp(logits - logits.max())
            trans[row] = e / e.sum()
        df = None
        if self.innovation == "t":
            df = 2.05 + float(np.exp(v[i]))
        return MrsGarchParams(eta, omega, alpha, beta, trans, self.innovation, df)

    def pack(self, p: MrsGarchParams) -> np.ndarray:
        parts = [] if self.zero_mean else [p.eta]
        pers = np.clip((p.alpha + p.beta) / 0.9999, 1e-6, 1 - 1e-6)
        share = np.clip(p.alpha / np.maximum(p.alpha + p.beta, 1e-12), 1e-6, 1 - 1e-6)
        parts += [np.log(p.omega), _logit(pers), _logit(share)]
        for row in range(self.k):
            tr = np.clip(p.trans[row], 1e-9, None)
            parts.append(np.log(tr[[c for c in range(self.k) if c != row]] / tr[row]))
        if self.innovation == "t":
            parts.append([np.log(max(p.df - 2.05, 1e-6))])
        return np.concatenate([np.atleast_1d(np.asarray(x, float)) for x in parts])


def _start_params(k, innovation, zero_mean, mean, rng, central: bool) -> MrsGarchParams:
    if central:
        levels = np.logspace(-0.4, 0.4, k) if k > 1 else np.ones(1)
        pers = np.full(k, 0.95)
        share = np.full(k, 0.08)
        stay = np.full(k, 0.95)
        df = 8.0
        eta = np.full(k, mean)
    else:
        levels = np.sort(np.exp(rng.uniform(-1.0, 1.0, k)))
        pers = rng.uniform(0.80, 0.99, k)
        share = rng.uniform(0.02, 0.20, k)
        stay = rng.uniform(0.80, 0.99, k)
        df = rng.uniform(4.0, 15.0)
        eta = mean + rng.uniform(-0.05, 0.05, k)
    if zero_mean:
        eta = np.zeros(k)
    omega = levels * (1.0 - pers)
    alpha = pers * share
    beta = pers - alpha
    if k == 1:
        trans = np.ones((1, 1))
    else:
        trans = np.tile(((1.0 - stay) / (k - 1))[:, None], (1, k))
        trans[np.diag_indices(k)] = stay
    return MrsGarchParams(eta, omega, alpha, beta, trans, innovation, df if innovation == "t" else None)


def _rescale(p: MrsGarchParams, s: float) -> MrsGarchParams:
    return replace(p, eta=p.eta * s, omega=p.omega * s * s)


def canonical_order(p: MrsGarchParams) -> np.ndarray:
    """Regimes sorted by unconditional variance, ascending."""
    return np.argsort(p.regime_variance, kind="stable")


@dataclass(frozen=True)
class MrsGarchFit:
    params: MrsGarchParams
    path: RegimePath
    residuals: np.ndarray
    loglik: float
    bic: float
    n_params: int
    sigma2: np.ndarray = field(repr=False)
    next_sigma2: np.ndarray = field(repr=False)
    last_probs: np.ndarray = field(repr=False)
    spectral_radius: float = float("nan")
    converged_starts: int = 0

    @property
    def k(self) -> int:
        return self.params.k


@numba.njit(cache=True)
def _nll(v, y, k, dist, zero_mean):
    """Negative log-likelihood of an unconstrained vector (same layout as ``_Layout``)."""
    i = 0
    eta = np.zeros(k)
    if not zero_mean:
        for j in range(k):
            eta[j] = v[j]
        i = k
    omega = np.empty(k)
    alpha = np.empty(k)
    beta = np.empty(k)
    for j in range(k):
        omega[j] = math.exp(v[i + j])
        pers = 0.9999 / (1.0 + math.exp(-v[i + k + j]))
        share = 1.0 / (1.0 + math.exp(-v[i + 2 * k + j]))
        alpha[j] = pers * share
        beta[j] = pers - alpha[j]
    i += 3 * k
    trans = np.zeros((k, k))
    for row in range(k):
        logits = np.zeros(k)
        c = 0
        for col in range(k):
            if col != row:
                logits[col] = v[i + c]
                c += 1
        i += k - 1
        mx = logits.max()
        tot = 0.0
        for col in range(k):
            trans[row, col] = math.exp(logits[col] - mx)
            tot += trans[row, col]
        for col in range(k):
            trans[row, col] /= tot
    df = 0.0
    if dist == _STUDENT:
        df = 2.05 + math.exp(v[i])
    # stationary distribution: (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    a = trans.T - np.eye(k)
    a[k - 1, :] = 1.0
    rhs = np.zeros(k)
    rhs[k - 1] = 1.0
    p0 = np.linalg.solve(a, rhs)
    for j in range(k):
        if p0[j] < 0.0:
            p0[j] = 0.0
    p0 /= p0.sum()
    s2_0 = omega / (1.0 - alpha - beta)
    ll, filt, pred, s2, cur = _filter(y, eta, omega, alpha, beta, trans, dist, df, p0, s2_0)
    if not np.isfinite(ll):
        return 1e12
    nll = -ll
    if k > 1:
        m = np.zeros((k * k, k * k))
        for j in range(k):
            for ii in range(k):
                for r in range(k):
                    m[j * k + r, ii * k + r] += trans[ii, j] * beta[r]
                    m[j * k + r, ii * k + ii] += trans[ii, j] * alpha[r]
        rho = np.max(np.abs(np.linalg.eigvals(m.astype(np.complex128))))
        if rho > 0.9995:
            nll += 1e4 * (rho - 0.9995) ** 2 + 1e2 * (rho - 0.9995)
    return nll


def _objective(v, layout, y):
    dist = _STUDENT if layout.innovation == "t" else _NORMAL
    return _nll(np.ascontiguousarray(v, dtype=np.float64), y, layout.k, dist, layout.zero_mean)


def fit(
    returns,
    k: int = 1,
    innovation: str = "t",
    seed=0,
    n_starts: int = 8,
    zero_mean: bool = False,
    maxiter: int = 1000,
) -> MrsGarchFit:
    """Maximum-likelihood fit by multi-start L-BFGS.

    Starts: one central guess plus ``n_starts - 1`` draws from a prior box
    (persistence U(0.80, 0.99), ARCH share U(0.02, 0.20), stay probability
    U(0.80, 0.99), regime variance levels exp(U(-1, 1)) relative to the
    sample, df U(4, 15)), all from ``seed``.
    """
    if k not in (1, 2, 3):
        raise ValueError("regime count must be 1, 2 or 3")
    if innovation not in INNOVATIONS:
        raise ValueError(f"innovation must be one of {INNOVATIONS}")
    r = np.asarray(returns, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite returns")
    n = r.size
    if n < 10 * k:
        warnings.warn(f"{n} observations for {k} regimes", RuntimeWarning, stacklevel=2)
    scale = float(np.std(r))
    if scale <= 0:
        raise FitError("constant return series")
    y = np.ascontiguousarray(r / scale)
    mean = float(np.mean(y))
    layout = _Layout(k, innovation, zero_mean)
    rng = as_generator(seed)

    best = None
    ok = 0
    for s in range(n_starts):
        start = _start_params(k, innovation, zero_mean, mean, rng, central=(s == 0))
        x0 = layout.pack(start)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = optimize.minimize(
                _objective, x0, args=(layout, y), method="L-BFGS-B",
                bounds=[(-30.0, 30.0)] * layout.size, options={"maxiter": maxiter},
            )
        if not np.isfinite(res.fun) or res.fun >= 1e11:
            continue
        cand = layout.unpack(res.x)
        if k > 1 and stationarity_spectral_radius(cand) >= 1.0:
            continue
        ok += 1
        if best is None or res.fun < best[0]:
            best = (res.fun, cand)
    if best is None:
        raise FitError(f"no admissible optimum for k={k}")

    params = _rescale(best[1], scale)
    params = params.permuted(canonical_order(params))
    out = filter_series(params, r)
    probs = _smooth(out.filtered, out.predicted, params.trans)
    path = RegimePath(probs, np.argmax(probs, axis=1))
    idx = np.arange(n)
    resid = (r - params.eta[path.hard]) / np.sqrt(out.sigma2[idx, path.hard])
    npar = params.n_params(zero_mean)
    bic = 2.0 * out.loglik - npar * np.log(n)
    rho = stationarity_spectral_radius(params)
    return MrsGarchFit(
        params, path, resid, out.loglik, float(bic), npar,
        out.sigma2, out.next_sigma2, out.filtered[-1], rho, ok,
    )


def bimodality_coefficient(x) -> float:
    """Sample bimodality coefficient; values above 5/9 hint at bimodality."""
    from scipy import stats

    x = np.asarray(x, dtype=float)
    n = x.size
    g = stats.skew(x, bias=False)
    kurt = stats.kurtosis(x, bias=False)
    return float((g**2 + 1.0) / (kurt + 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3))))


@dataclass(frozen=True)
class RegimeSelection:
    k: int
    fits: dict
    table: list[dict]

    @property
    def best(self) -> MrsGarchFit:
        return self.fits[self.k]


def select_regime_count(
    returns, innovation: str = "t", seed=0, candidates=(1, 2, 3), n_starts: int = 8, **kw
) -> RegimeSelection:
    """Fit each candidate regime count and keep the highest ``2 loglik - p log T``.

    Ties go to the smaller count. The residual bimodality coefficient is
    reported as a diagnostic only.
    """
    fits: dict[int, MrsGarchFit] = {}
    table = []
    for k in candidates:
        try:
            f = fit(returns, k, innovation, seed, n_starts=n_starts, **kw)
        except FitError:
            table.append({"k": k, "loglik": np.nan, "bic": np.nan, "n_params": np.nan,
                          "spectral_radius": np.nan, "bimodality": np.nan})
            continue
        fits[k] = f
        table.append({
            "k": k, "loglik": f.loglik, "bic": f.bic, "n_params": f.n_params,
            "spectral_radius": f.spectral_radius, "bimodality": bimodality_coefficient(f.residuals),
        })
    if not fits:
        raise FitError("no regime count could be fitted")
    chosen = max(sorted(fits), key=lambda kk: (fits[kk].bic, -kk))
    return RegimeSelection(chosen, fits, table)


def simulate(params: MrsGarchParams, n: int, seed=None, burn: int = 500, shocks=None):
    """Simulate returns, regimes and realized variances from the model.

    ``shocks`` (length ``burn + n``) replaces the innovation draws when given.
    """
    rng = as_generator(seed)
    total = n + burn
    if shocks is None:
        if params.innovation == "t":
            df = params.df
            eps = rng.standard_t(df, total) * np.sqrt((df - 2.0) / df)
        else:
            eps = rng.standard_normal(total)
    else:
        eps = np.asarray(shocks, dtype=float)
    k = params.k
    pi = stationary_distribution(params.trans)
    cum = np.cumsum(params.trans, axis=1)
    state = int(rng.choice(k, p=pi))
    draws = rng.uniform(size=total)
    s2 = np.where(np.isfinite(params.regime_variance), params.regime_variance, params.omega)
    out_r = np.empty(total)
    out_d = np.empty(total, dtype=int)
    out_v = np.empty(total)
    for t in range(total):
        if t > 0:
            state = int(min(np.searchsorted(cum[state], draws[t], side="right"), k - 1))
        v = s2[state]
        u = np.sqrt(v) * eps[t]
        out_r[t] = params.eta[state] + u
        out_d[t] = state
        out_v[t] = v
        s2 = params.omega + params.alpha * u * u + params.beta * s2
    return out_r[burn:], out_d[burn:], out_v[burn:]
