"""Scenario estimators of VaR, CVaR, drawdown, ADD, MDD and CDaR.

Conventions
-----------
* ``eta`` weights the tail by ``1 - eta``: ``cvar_scenario(r, 0.9)`` averages
  the worst 10% of outcomes, ``cdar_single(dd, 0.9)`` the worst 10% of
  drawdowns.
* Drawdowns are taken on uncompounded accumulated returns with ``U_0 = 0``
  prepended, so the starting level is the first peak. The returned series
  covers ``m = 1..M``.
* The drawdown functions accept object arrays of :class:`fractions.Fraction`
  and then compute in exact arithmetic; otherwise values are floats.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "var_scenario",
    "cvar_scenario",
    "drawdowns",
    "mean_drawdown",
    "add",
    "mdd",
    "cdar_single",
    "cdar_mixed",
    "cdar_multi",
    "relative_drawdowns",
]

_SNAP = 1e-9


def _as_values(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype.kind != "O":
        a = a.astype(float)
    return a


def _exact(a: np.ndarray) -> bool:
    return a.dtype.kind == "O"


def _snap(x):
    """Round float products like ``S * (1 - eta)`` that sit within rounding of an integer."""
    if isinstance(x, float):
        r = round(x)
        if abs(x - r) < _SNAP * max(1.0, abs(x)):
            return r
    return x


def _samples(samples) -> np.ndarray:
    r = _as_values(samples).ravel()
    if r.size == 0:
        raise ValueError("empty sample")
    return r


def _check_open(eta) -> None:
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")


def var_scenario(samples, eta) -> float:
    """``-inf{u : #{R < u} / S > 1 - eta}``: minus the ``(floor(S(1-eta)) + 1)``-th smallest sample."""
    r = np.sort(_samples(samples))
    _check_open(eta)
    k = math.floor(_snap(r.size * (1 - eta))) + 1
    return -r[min(k, r.size) - 1]


def cvar_scenario(samples, eta) -> float:
    """Tail average of the worst ``1 - eta`` fraction with the fractional split term."""
    r = np.sort(_samples(samples))
    _check_open(eta)
    S = r.size
    tail = 1 - eta
    K = min(math.ceil(_snap(S * tail)), S)
    head = sum(r[: K - 1]) / S if K > 1 else 0
    return -(head + (tail - (K - 1) / S) * r[K - 1]) / tail


def drawdowns(accum) -> np.ndarray:
    """``DD_m = max_{j<=m} U_j - U_m`` with ``U_0 = 0``; works along the last axis."""
    u = _as_values(accum)
    zero = np.zeros(u.shape[:-1] + (1,), dtype=u.dtype)
    if _exact(u):
        zero = zero.astype(object) * 0
    full = np.concatenate([zero, u], axis=-1)
    peak = np.maximum.accumulate(full, axis=-1)
    return (peak - full)[..., 1:]


def mean_drawdown(dd_matrix) -> np.ndarray:
    """Scenario-average drawdown curve ``DD(m) = mean_s DD_{m,s}``."""
    return np.mean(_as_values(dd_matrix), axis=0)


def add(dd):
    d = _as_values(dd).ravel()
    if d.size == 0:
        raise ValueError("empty drawdown series")
    return sum(d) / d.size if _exact(d) else float(np.mean(d))


def mdd(dd):
    d = _as_values(dd).ravel()
    if d.size == 0:
        raise ValueError("empty drawdown series")
    return max(d) if _exact(d) else float(np.max(d))


def _check_closed(eta) -> None:
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")


def _variational(d: np.ndarray, eta):
    M = d.size
    scale = (1 - eta) * M
    if _exact(d):
        return min(z + sum(max(v - z, 0) for v in d) / scale for z in set(d.tolist()))
    z = np.unique(d)
    excess = np.maximum(d[None, :] - z[:, None], 0.0).sum(axis=1)
    return float(np.min(z + excess / scale))


def cdar_single(dd, eta):
    """CDaR of one drawdown series by exact minimization over candidate ``zeta``.

    The objective ``zeta + sum(max(DD - zeta, 0)) / ((1 - eta) M)`` is
    piecewise linear and convex with kinks at the observed drawdowns, so the
    minimum is attained on that finite set. ``eta = 0`` returns :func:`add`,
    ``eta = 1`` returns :func:`mdd`.
    """
    d = _as_values(dd).ravel()
    if d.size == 0:
        raise ValueError("empty drawdown series")
    _check_closed(eta)
    if eta == 0:
        return add(d)
    if eta == 1:
        return mdd(d)
    return _variational(d, eta)


def cdar_mixed(dd, eta):
    """CDaR via the quantile ``zeta`` and the atom-correction front term.

    ``zeta = inf{z : F(z) >= eta}`` (0 at ``eta = 0``) and
    ``((F(zeta) - eta) / (1 - eta)) zeta + sum(DD 1[DD > zeta]) / ((1 - eta) M)``.
    """
    d = _as_values(dd).ravel()
    if d.size == 0:
        raise ValueError("empty drawdown series")
    _check_closed(eta)
    if eta == 1:
        return mdd(d)
    M = d.size
    s = np.sort(d)
    if eta == 0:
        zeta = s[0] * 0
    else:
        zeta = s[max(math.ceil(_snap(eta * M)), 1) - 1]
    below = int(np.sum(d <= zeta))
    above = d[d > zeta]
    tail_sum = sum(above) if _exact(d) else float(np.sum(above))
    front = (below - eta * M) / M
    out = front / (1 - eta) * zeta + tail_sum / ((1 - eta) * M)
    return out if _exact(d) else float(out)


def cdar_multi(dd_matrix, eta, method: str = "variational"):
    """Multi-scenario CDaR with the drawdown distribution pooled over all ``S x M`` cells."""
    d = _as_values(dd_matrix)
    if d.ndim != 2:
        raise ValueError("expected an S x M drawdown matrix")
    if method == "variational":
        return cdar_single(d.ravel(), eta)
    if method == "mixed":
        return cdar_mixed(d.ravel(), eta)
    raise ValueError(f"unknown method {method!r}")


def relative_drawdowns(wealth) -> np.ndarray:
    """``1 - W_t / max_{s<=t} W_s`` on a compounded wealth curve (values in [0, 1])."""
    w = np.asarray(wealth, dtype=float)
    return 1.0 - w / np.maximum.accumulate(w, axis=-1)
