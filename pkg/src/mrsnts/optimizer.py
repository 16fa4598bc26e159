"""Minimum-risk allocation on scenario cubes and efficient-frontier sweeps.

All problems are long-only with a per-asset box ``[lo, hi]``, full
investment, and an expected-return floor ``d`` on the mean horizon
(terminal, uncompounded) return.

* CVaR of the terminal return: the Rockafellar-Uryasev linear program.
* CDaR of the accumulated uncompounded paths, pooled over scenarios: a linear
  program with running-peak variables; ``eta = 1`` (maximum drawdown) uses a
  minimax program.
* Variance of the terminal return: a convex QP solved by SLSQP.

The LPs are solved with HiGHS through :func:`scipy.optimize.linprog`.
Scenario returns are rescaled to unit magnitude before solving and the
results mapped back, which leaves the argmin unchanged.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

from . import risk
from .scenarios import ScenarioCube

__all__ = [
    "DEFAULT_FLOORS",
    "DEFAULT_BOX",
    "LEVEL_LABELS",
    "InfeasibleError",
    "SolverError",
    "Measure",
    "FrontierPoint",
    "Frontier",
    "min_cvar_allocation",
    "min_cdar_allocation",
    "min_variance_allocation",
    "solve",
    "frontier",
    "evaluate_risk",
    "write_frontier_csv",
]

DEFAULT_FLOORS = (0.002, 0.010, 0.020, 0.030, 0.035, 0.040, 0.045, 0.050, 0.060, 0.065)
DEFAULT_BOX = (0.01, 0.15)
LEVEL_LABELS = ("L4", "L3", "L2", "L1", "Optimal", "H1", "H2", "H3", "H4")


class InfeasibleError(ValueError):
    """The return floor cannot be met inside the box-simplex."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Measure:
    """Risk measure: ``kind`` in {"cvar", "cdar", "std"} with level ``eta``.

    ``"variance"`` is accepted as an alias of ``"std"``: the optimizer
    minimizes variance and reports the standard deviation.
    """

    kind: str
    eta: float | None = None

    def __post_init__(self) -> None:
        kind = self.kind.lower()
        if kind == "variance":
            kind = "std"
        if kind not in ("cvar", "cdar", "std"):
            raise ValueError(f"unknown measure {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "std":
            object.__setattr__(self, "eta", None)
            return
        if self.eta is None:
            raise ValueError(f"{kind} needs a level eta")
        eta = float(self.eta)
        if kind == "cvar" and not 0 < eta < 1:
            raise ValueError("CVaR level must lie in (0, 1)")
        if kind == "cdar" and not 0 <= eta <= 1:
            raise ValueError("CDaR level must lie in [0, 1]")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def parse(cls, text: str) -> "Measure":
        """``"cvar:0.5"``, ``"0.5-CVaR"``, ``"cdar:1"``, ``"std"`` or ``"variance"``."""
        t = text.strip().lower()
        if t in ("std", "variance", "standard deviation", "sd"):
            return cls("std")
        if ":" in t:
            kind, eta = t.split(":", 1)
        elif "-" in t:
            eta, kind = t.split("-", 1)
        else:
            raise ValueError(f"cannot parse measure {text!r}")
        return cls(kind.strip(), float(eta))

    @property
    def label(self) -> str:
        if self.kind == "std":
            return "Standard Deviation"
        return f"{self.eta:g}-{self.kind.upper()}"


@dataclass(frozen=True)
class FrontierPoint:
    weights: np.ndarray
    d: float
    risk: float
    expected_return: float
    ratio: float
    feasible: bool
    measure: Measure | None = None
    objective: float = float("nan")
    inherited: bool = False
    label: str = ""

    @property
    def zero_risk(self) -> bool:
        return not math.isfinite(self.ratio)


def _returns(cube) -> np.ndarray:
    r = cube.returns if isinstance(cube, ScenarioCube) else np.asarray(cube, dtype=float)
    if r.ndim != 3:
        raise ValueError("scenario returns must be S x M x N")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite scenario returns")
    return r


def _check_box(box, n: int) -> tuple[float, float]:
    lo, hi = float(box[0]), float(box[1])
    if not (0 <= lo <= hi <= 1):
        raise ValueError("box must satisfy 0 <= lo <= hi <= 1")
    if lo * n > 1 + 1e-12 or hi * n < 1 - 1e-12:
        raise ValueError(f"box [{lo}, {hi}] admits no fully invested portfolio of {n} assets")
    return lo, hi


def _ratio(ret: float, rsk: float) -> float:
    if rsk > 1e-14:
        return ret / rsk
    if ret == 0:
        return 0.0
    return math.copysign(math.inf, ret)


def evaluate_risk(cube, weights, measure: Measure) -> float:
    """Risk of a fixed allocation with the scenario estimators of :mod:`mrsnts.risk`."""
    r = _returns(cube)
    w = np.asarray(weights, dtype=float)
    if measure.kind == "cvar":
        return float(risk.cvar_scenario(r.sum(axis=1) @ w, measure.eta))
    if measure.kind == "cdar":
        dd = risk.drawdowns(np.cumsum(r @ w, axis=1))
        return float(risk.cdar_multi(dd, measure.eta))
    return float(np.std(r.sum(axis=1) @ w))


def _point(r, x, d, measure, objective) -> FrontierPoint:
    x = np.asarray(x, dtype=float)
    ret = float(r.sum(axis=1).mean(axis=0) @ x)
    rsk = evaluate_risk(r, x, measure)
    return FrontierPoint(x, float(d), rsk, ret, _ratio(ret, rsk), True, measure, objective)


def _clean(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Remove solver round-off: clip to the box and restore the budget exactly."""
    x = np.clip(x, lo, hi)
    for _ in range(5):
        gap = 1.0 - x.sum()
        if abs(gap) < 1e-15:
            break
        free = (x < hi) if gap > 0 else (x > lo)
        if not free.any():
            break
        x = np.clip(x + gap / free.sum() * free, lo, hi)
    return x


_IPM_ROWS = 5000


def _linprog(c, a_ub, b_ub, a_eq, b_eq, bounds, what: str):
    # interior point (with crossover) is markedly faster on the large drawdown programs
    rows = 0 if a_ub is None else a_ub.shape[0]
    res = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                           method="highs-ipm" if rows > _IPM_ROWS else "highs",
                           options={"primal_feasibility_tolerance": 1e-10,
                                    "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        raise InfeasibleError(f"{what}: return floor infeasible")
    if res.status != 0:
        raise SolverError(f"{what}: {res.message}")
    return res


def _scale(r: np.ndarray) -> float:
    s = float(np.max(np.abs(r)))
    return s if s > 0 else 1.0


def min_cvar_allocation(cube, eta: float, d: float = -np.inf, box=DEFAULT_BOX) -> FrontierPoint:
    """Minimize CVaR of the terminal accumulated return subject to the floor and box."""
    measure = Measure("cvar", eta)
    r = _returns(cube)
    S, _, N = r.shape
    lo, hi = _check_box(box, N)
    sc = _scale(r.sum(axis=1))
    R = r.sum(axis=1) / sc
    # variables: x (N), zeta (1), z (S)
    c = np.concatenate([np.zeros(N), [1.0], np.full(S, 1.0 / ((1 - eta) * S))])
    a_loss = sparse.hstack([sparse.csr_matrix(-R), sparse.csr_matrix(-np.ones((S, 1))),
                            -sparse.identity(S, format="csr")])
    rows, rhs = [a_loss], [np.zeros(S)]
    if np.isfinite(d):
        rows.append(sparse.csr_matrix(np.concatenate([-R.mean(axis=0), [0.0], np.zeros(S)])[None, :]))
        rhs.append([-d / sc])
    a_eq = sparse.csr_matrix(np.concatenate([np.ones(N), [0.0], np.zeros(S)])[None, :])
    bounds = [(lo, hi)] * N + [(None, None)] + [(0, None)] * S
    res = _linprog(c, sparse.vstack(rows, format="csr"), np.concatenate(rhs), a_eq, [1.0], bounds,
                   f"min {measure.label}")
    x = _clean(res.x[:N], lo, hi)
    return _point(r, x, d, measure, float(res.fun) * sc)


def min_cdar_allocation(cube, eta: float, d: float = -np.inf, box=DEFAULT_BOX) -> FrontierPoint:
    """Minimize the pooled multi-scenario CDaR of the accumulated uncompounded paths."""
    measure = Measure("cdar", eta)
    r = _returns(cube)
    S, M, N = r.shape
    lo, hi = _check_box(box, N)
    sc = _scale(np.cumsum(r, axis=1))
    A = np.cumsum(r, axis=1).reshape(S * M, N) / sc
    K = S * M
    eye = sparse.identity(K, format="csr")
    # p_{s,m-1} - p_{s,m} <= 0 for m >= 2
    first = np.arange(K) % M == 0
    diff = (sparse.eye(K, k=-1, format="csr") - eye)[~first]
    terminal = A[M - 1 :: M].mean(axis=0)
    col_x = sparse.csr_matrix(A)
    ones = sparse.csr_matrix(np.ones((K, 1)))
    if eta == 0:
        # average drawdown needs no threshold: minimize mean(p - U); variables x (N), t (1), p (K)
        n_var = N + 1 + K
        c = np.concatenate([-A.sum(axis=0) / K, [0.0], np.full(K, 1.0 / K)])
        blocks = [
            sparse.hstack([col_x, sparse.csr_matrix((K, 1)), -eye]),
            sparse.hstack([sparse.csr_matrix((diff.shape[0], N + 1)), diff]),
        ]
        bounds = [(lo, hi)] * N + [(0, 0)] + [(0, None)] * K
    elif eta < 1:
        # variables: x (N), zeta (1), p (K), z (K)
        n_var = N + 1 + 2 * K
        c = np.concatenate([np.zeros(N), [1.0], np.zeros(K), np.full(K, 1.0 / ((1 - eta) * K))])
        blocks = [
            sparse.hstack([col_x, sparse.csr_matrix((K, 1)), -eye, sparse.csr_matrix((K, K))]),
            sparse.hstack([sparse.csr_matrix((diff.shape[0], N + 1)), diff,
                           sparse.csr_matrix((diff.shape[0], K))]),
            sparse.hstack([-col_x, -ones, eye, -eye]),
        ]
        bounds = [(lo, hi)] * N + [(None, None)] + [(0, None)] * (2 * K)
    else:
        # variables: x (N), t (1), p (K); minimize the largest drawdown t
        n_var = N + 1 + K
        c = np.concatenate([np.zeros(N), [1.0], np.zeros(K)])
        blocks = [
            sparse.hstack([col_x, sparse.csr_matrix((K, 1)), -eye]),
            sparse.hstack([sparse.csr_matrix((diff.shape[0], N + 1)), diff]),
            sparse.hstack([-col_x, -ones, eye]),
        ]
        bounds = [(lo, hi)] * N + [(None, None)] + [(0, None)] * K
    rhs = [np.zeros(K), np.zeros(diff.shape[0]), np.zeros(K)][: len(blocks)]
    if np.isfinite(d):
        floor_row = np.zeros(n_var)
        floor_row[:N] = -terminal
        blocks.append(sparse.csr_matrix(floor_row[None, :]))
        rhs.append([-d / sc])
    eq = np.zeros(n_var)
    eq[:N] = 1.0
    res = _linprog(c, sparse.vstack(blocks, format="csr"), np.concatenate(rhs),
                   sparse.csr_matrix(eq[None, :]), [1.0], bounds, f"min {measure.label}")
    x = _clean(res.x[:N], lo, hi)
    return _point(r, x, d, measure, float(res.fun) * sc)


def _feasible_start(mean: np.ndarray, d: float, lo: float, hi: float) -> np.ndarray:
    """A box-simplex point meeting the floor (maximizes slack), or InfeasibleError."""
    n = mean.size
    res = _linprog(-mean, None, None, np.ones((1, n)), [1.0], [(lo, hi)] * n, "return floor")
    if np.isfinite(d) and -res.fun < d - 1e-12 * max(1.0, abs(d)):
        raise InfeasibleError("return floor exceeds the best attainable mean return")
    if not np.isfinite(d):
        return np.full(n, 1.0 / n).clip(lo, hi)
    # blend the max-return corner with the equal-ish centre while staying above the floor
    centre = _clean(np.full(n, 1.0 / n), lo, hi)
    best = res.x
    if centre @ mean >= d:
        return centre
    t = (d - centre @ mean) / max(best @ mean - centre @ mean, 1e-300)
    return _clean(centre + min(1.0, t) * (best - centre), lo, hi)


def min_variance_allocation(cube, d: float = -np.inf, box=DEFAULT_BOX, tol: float = 1e-12) -> FrontierPoint:
    """Minimize the variance of the terminal return (population covariance)."""
    measure = Measure("std")
    r = _returns(cube)
    N = r.shape[2]
    lo, hi = _check_box(box, N)
    term = r.sum(axis=1)
    sc = _scale(term)
    term = term / sc
    cov = np.cov(term, rowvar=False, ddof=0).reshape(N, N)
    mean = term.mean(axis=0)
    dd = d / sc
    x0 = _feasible_start(mean, dd, lo, hi)
    cons = [{"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones_like(x)}]
    if np.isfinite(dd):
        cons.append({"type": "ineq", "fun": lambda x: x @ mean - dd, "jac": lambda x: mean})
    with warnings.catch_warnings():
        # SLSQP clips trial points to the bounds and says so; the result is unaffected
        warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
        res = optimize.minimize(lambda x: x @ cov @ x, x0, jac=lambda x: 2.0 * cov @ x, method="SLSQP",
                                bounds=[(lo, hi)] * N, constraints=cons,
                                options={"ftol": tol, "maxiter": 2000})
    if not res.success and "Positive directional derivative" not in res.message:
        raise SolverError(f"min variance: {res.message}")
    x = _clean(res.x, lo, hi)
    if np.isfinite(dd) and x @ mean < dd:
        x = x0 if x0 @ cov @ x0 <= x @ cov @ x + 1e-15 else x
    return _point(r, x, d, measure, float(np.sqrt(max(x @ cov @ x, 0.0))) * sc)


def solve(cube, measure: Measure, d: float = -np.inf, box=DEFAULT_BOX) -> FrontierPoint:
    if measure.kind == "cvar":
        return min_cvar_allocation(cube, measure.eta, d, box)
    if measure.kind == "cdar":
        return min_cdar_allocation(cube, measure.eta, d, box)
    return min_variance_allocation(cube, d, box)


@dataclass(frozen=True)
class Frontier:
    points: tuple[FrontierPoint, ...]
    optimal_index: int
    measure: Measure
    box: tuple[float, float] = DEFAULT_BOX
    floors: tuple[float, ...] = field(default=DEFAULT_FLOORS)

    @property
    def optimal(self) -> FrontierPoint:
        return self.points[self.optimal_index]

    def level_index(self, label: str) -> int:
        """Floor index of a level label, clipped to the ends of the grid."""
        offset = LEVEL_LABELS.index(label) - LEVEL_LABELS.index("Optimal")
        return min(max(self.optimal_index + offset, 0), len(self.points) - 1)

    def level(self, label: str) -> FrontierPoint:
        return self.points[self.level_index(label)]

    def levels(self) -> dict[str, FrontierPoint]:
        return {lab: self.level(lab) for lab in LEVEL_LABELS}


def frontier(cube, measure: Measure, floors: Sequence[float] = DEFAULT_FLOORS, box=DEFAULT_BOX,
             anchor: bool = False) -> Frontier:
    """Solve one problem per floor and pick the point with the highest return/risk ratio.

    An infeasible floor takes the allocation of the highest feasible lower
    floor. Ties in ratio go to the lowest floor. With ``anchor`` the
    unconstrained minimum-risk portfolio acts as the level below the grid, so
    floors that are all out of reach inherit it instead of raising.
    """
    floors = tuple(float(f) for f in floors)
    if any(b < a for a, b in zip(floors, floors[1:])):
        raise ValueError("floors must be ascending")
    r = _returns(cube)
    points: list[FrontierPoint | None] = []
    last: FrontierPoint | None = None
    for d in floors:
        try:
            p = solve(r, measure, d, box)
            last = p
        except InfeasibleError:
            p = None if last is None else replace(last, d=d, feasible=False, inherited=True)
        points.append(p)
    if last is None:
        if not anchor:
            raise InfeasibleError("every return floor is infeasible")
        base = solve(r, measure, -np.inf, box)
        points = [replace(base, d=d, feasible=False, inherited=True) for d in floors]
    # floors below the first feasible one cannot occur (feasibility shrinks with d),
    # but guard anyway by inheriting upward
    first = next(p for p in points if p is not None)
    points = [p if p is not None else replace(first, d=d, feasible=False, inherited=True)
              for p, d in zip(points, floors)]
    best = 0
    for i, p in enumerate(points):
        if p.ratio > points[best].ratio:
            best = i
    labelled = []
    for i, p in enumerate(points):
        off = i - best
        lab = "Optimal" if off == 0 else (f"L{-off}" if off < 0 else f"H{off}")
        if lab not in LEVEL_LABELS:
            lab = "-"
        labelled.append(replace(p, label=lab))
    return Frontier(tuple(labelled), best, measure, (float(box[0]), float(box[1])), floors)


def write_frontier_csv(front: Frontier, path, assets: Sequence[str] | None = None) -> Path:
    """Columns: label, d, one weight per asset, risk, expected_return, ratio, feasible."""
    path = Path(path)
    n = front.points[0].weights.size
    assets = list(assets) if assets is not None else [f"w{i + 1}" for i in range(n)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "d", *assets, "risk", "expected_return", "ratio", "feasible"])
        for p in front.points:
            w.writerow([p.label, repr(p.d), *(repr(float(v)) for v in p.weights), repr(p.risk),
                        repr(p.expected_return), repr(p.ratio), int(p.feasible)])
    return path
