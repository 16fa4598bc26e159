"""Tempered stable subordinator and (standard) multivariate normal tempered stable law.

The subordinator ``T`` has characteristic function

    phi_T(u) = exp(-(2 theta^(1 - lam/2) / lam) * ((theta - i u)^(lam/2) - theta^(lam/2)))

which is a positive ``a = lam/2`` stable variable with Laplace exponent
``c s^a`` (``c = theta^(1-a) / a``) exponentially tilted by ``exp(-theta T)``.
``E[T] = 1`` and ``Var[T] = (2 - lam) / (2 theta)``.

An MNTS vector is the normal variance-mean mixture

    X = mu + nu (T - 1) + sqrt(T) diag(gamma) xi,    xi ~ N(0, Sigma)

and the standard version fixes ``mu = 0`` and
``gamma_n = sqrt(1 - nu_n^2 (2 - lam) / (2 theta))`` so every component has
mean 0 and variance 1.

Marginal characteristic function (by conditioning on T)::

    E[exp(i u X_n)] = E[exp(i u (mu_n - nu_n) + (i u nu_n - u^2 gamma_n^2 / 2) T)]
                    = exp(i u (mu_n - nu_n)) * phi_T(u nu_n + i u^2 gamma_n^2 / 2)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

__all__ = [
    "LAMBDA_BOUNDS",
    "THETA_BOUNDS",
    "NU_SHRINK",
    "InversionGrid",
    "SubordinatorParams",
    "MntsParams",
    "StdMntsParams",
    "TailFit",
    "SkewFit",
    "as_generator",
    "nu_bound",
    "std_gamma",
    "covariance_identity",
    "subordinator_cf",
    "subordinator_sample",
    "mnts_sample",
    "nts_cf",
    "nts_pdf",
    "nts_cdf",
    "nts_marginal_pdf",
    "nts_marginal_cdf",
    "fit_tail_params",
    "fit_skew",
]

LAMBDA_BOUNDS = (0.05, 1.95)
THETA_BOUNDS = (0.05, 50.0)
NU_SHRINK = 0.999

# Exact piecewise rejection is used while ceil(theta / a) stays below this.
_MAX_PIECES = 32


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def nu_bound(lam: float, theta: float) -> float:
    """Supremum of ``|nu|`` for which the standard gamma stays real."""
    return float(np.sqrt(2.0 * theta / (2.0 - lam)))


def std_gamma(nu, lam: float, theta: float) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    g2 = 1.0 - nu**2 * (2.0 - lam) / (2.0 * theta)
    if np.any(g2 <= 0):
        raise ValueError("|nu| must be < sqrt(2 theta / (2 - lam))")
    return np.sqrt(g2)


def _check_tail(lam: float, theta: float) -> None:
    if not 0.0 < lam < 2.0:
        raise ValueError(f"lambda must lie in (0, 2), got {lam}")
    if not theta > 0.0:
        raise ValueError(f"theta must be positive, got {theta}")


@dataclass(frozen=True)
class SubordinatorParams:
    lam: float
    theta: float

    def __post_init__(self) -> None:
        _check_tail(self.lam, self.theta)

    @property
    def variance(self) -> float:
        return (2.0 - self.lam) / (2.0 * self.theta)


def _check_corr(sigma: np.ndarray, n: int) -> np.ndarray:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (n, n):
        raise ValueError(f"sigma must be {n}x{n}")
    if not np.allclose(sigma, sigma.T, atol=1e-12):
        raise ValueError("sigma must be symmetric")
    return sigma


@dataclass(frozen=True)
class MntsParams:
    lam: float
    theta: float
    mu: np.ndarray
    nu: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        _check_tail(self.lam, self.theta)
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        n = nu.size
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (n,)).copy()
        gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (n,)).copy()
        if np.any(gamma <= 0):
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma", _check_corr(self.sigma, n))

    @property
    def dim(self) -> int:
        return self.nu.size

    @property
    def covariance(self) -> np.ndarray:
        return covariance_identity(self.lam, self.theta, self.nu, self.gamma, self.sigma)


@dataclass(frozen=True)
class StdMntsParams:
    """Standard MNTS parameters; ``gamma`` is derived from ``nu``."""

    lam: float
    theta: float
    nu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        _check_tail(self.lam, self.theta)
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gamma", std_gamma(nu, self.lam, self.theta))
        object.__setattr__(self, "sigma", _check_corr(self.sigma, nu.size))

    @property
    def dim(self) -> int:
        return self.nu.size

    @property
    def mu(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def covariance(self) -> np.ndarray:
        return covariance_identity(self.lam, self.theta, self.nu, self.gamma, self.sigma)

    def to_mnts(self) -> MntsParams:
        return MntsParams(self.lam, self.theta, self.mu, self.nu, self.gamma, self.sigma)


def covariance_identity(lam, theta, nu, gamma, sigma) -> np.ndarray:
    """Covariance of X: ``diag(g) S diag(g) + (2-lam)/(2 theta) nu nu^T``.

    The rank-one correction is the outer product of the skew vector.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return gamma[:, None] * sigma * gamma[None, :] + (2.0 - lam) / (2.0 * theta) * np.outer(nu, nu)


# ---------------------------------------------------------------------------
# characteristic functions


def subordinator_cf(u, lam: float, theta: float):
    """Characteristic function of the tempered stable subordinator.

    ``u`` may be complex as long as ``Re(theta - i u) > 0``.
    """
    _check_tail(lam, theta)
    u = np.asarray(u, dtype=complex)
    z = theta - 1j * u
    if np.any(z.real <= 0):
        raise ValueError("argument outside the analyticity strip Re(theta - i u) > 0")
    a = lam / 2.0
    expo = -(2.0 * theta ** (1.0 - a) / lam) * (z**a - theta**a)
    out = np.exp(expo)
    return out[()] if out.ndim == 0 else out


def nts_cf(u, lam: float, theta: float, nu: float, gamma: float | None = None, mu: float = 0.0):
    """Characteristic function of a univariate NTS variable.

    ``gamma`` defaults to the standardizing value, giving the stdNTS law.
    """
    if gamma is None:
        gamma = float(std_gamma(nu, lam, theta))
    u = np.asarray(u, dtype=float)
    w = u * nu + 0.5j * u**2 * gamma**2
    return np.exp(1j * u * (mu - nu)) * subordinator_cf(w, lam, theta)


# ---------------------------------------------------------------------------
# density by Fourier inversion


@dataclass(frozen=True)
class InversionGrid:
    """FFT inversion settings: frequencies in ``[-cutoff, cutoff)`` on ``points`` nodes."""

    cutoff: float = 2.0**7
    points: int = 2**13
    max_drift: float = 1e-3

    @property
    def du(self) -> float:
        return 2.0 * self.cutoff / self.points

    @property
    def half_width(self) -> float:
        return np.pi / self.du


def _fft_density(cf, center: float, half_width: float, points: int):
    """Density on ``x_j = center - L + j dx`` from a characteristic function."""
    if points % 2:
        raise ValueError("grid size must be even")
    dx = 2.0 * half_width / points
    du = np.pi / half_width
    k = np.arange(points)
    u = (k - points // 2) * du
    x0 = center - half_width
    phase = cf(u) * np.exp(-1j * u * x0)
    # du * dx = 2 pi / points, so the kernel splits into an FFT times (-1)^j
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    pdf = (du / (2.0 * np.pi)) * sign * np.fft.fft(phase)
    x = x0 + k * dx
    return x, np.clip(pdf.real, 0.0, None)


def _cdf_table(x: np.ndarray, pdf: np.ndarray, max_drift: float):
    dx = x[1] - x[0]
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * dx)])
    total = cdf[-1]
    if abs(total - 1.0) > max_drift:
        raise ValueError(f"inversion grid too coarse: density mass {total:.6f}")
    return cdf / total


_TABLE_CACHE: dict = {}


def _nts_table(lam, theta, nu, gamma, mu, grid: InversionGrid):
    key = (float(lam), float(theta), float(nu), float(gamma), float(mu), grid)
    hit = _TABLE_CACHE.get(key)
    if hit is not None:
        return hit
    cf = lambda u: nts_cf(u, lam, theta, nu, gamma, mu)  # noqa: E731
    x, pdf = _fft_density(cf, mu, grid.half_width, grid.points)
    cdf = _cdf_table(x, pdf, grid.max_drift)
    if len(_TABLE_CACHE) > 256:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[key] = (x, pdf, cdf)
    return x, pdf, cdf


def nts_pdf(x, lam, theta, nu, gamma=None, mu=0.0, grid: InversionGrid | None = None):
    """NTS density at ``x`` by FFT inversion of :func:`nts_cf`."""
    grid = grid or InversionGrid()
    if gamma is None:
        gamma = float(std_gamma(nu, lam, theta))
    xs, pdf, _ = _nts_table(lam, theta, nu, gamma, mu, grid)
    return np.interp(x, xs, pdf, left=0.0, right=0.0)


def nts_cdf(x, lam, theta, nu, gamma=None, mu=0.0, grid: InversionGrid | None = None):
    grid = grid or InversionGrid()
    if gamma is None:
        gamma = float(std_gamma(nu, lam, theta))
    xs, _, cdf = _nts_table(lam, theta, nu, gamma, mu, grid)
    return np.interp(x, xs, cdf, left=0.0, right=1.0)


def nts_marginal_pdf(x, component: int, params: StdMntsParams | MntsParams, grid=None):
    """Density of one component of an (std)MNTS vector; the marginal is NTS."""
    return nts_pdf(
        x, params.lam, params.theta, params.nu[component], params.gamma[component],
        params.mu[component], grid,
    )


def nts_marginal_cdf(x, component: int, params: StdMntsParams | MntsParams, grid=None):
    return nts_cdf(
        x, params.lam, params.theta, params.nu[component], params.gamma[component],
        params.mu[component], grid,
    )


# ---------------------------------------------------------------------------
# sampling


def _positive_stable(a: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # Kanter's representation; Laplace transform exp(-s^a).
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    log_s = (
        np.log(np.sin(a * u))
        - np.log(np.sin(u)) / a
        + ((1.0 - a) / a) * (np.log(np.sin((1.0 - a) * u)) - np.log(e))
    )
    return np.exp(log_s)


def _tilted_pieces(a: float, scale: float, theta: float, count: int, rng) -> np.ndarray:
    """``count`` draws with Laplace exponent ``scale ((s+theta)^a - theta^a)``."""
    accept_rate = np.exp(-scale * theta**a)
    out = np.empty(count)
    filled = 0
    c_a = scale ** (1.0 / a)
    while filled < count:
        need = count - filled
        batch = int(need / accept_rate * 1.05) + 16
        s = c_a * _positive_stable(a, batch, rng)
        keep = s[rng.uniform(size=batch) <= np.exp(-theta * s)]
        take = min(need, keep.size)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def _inverse_cdf_sample(lam: float, theta: float, count: int, rng) -> np.ndarray:
    sd = np.sqrt((2.0 - lam) / (2.0 * theta))
    half = 24.0 * sd
    center = 1.0 + 4.0 * sd
    x, pdf = _fft_density(lambda u: subordinator_cf(u, lam, theta), center, half, 2**14)
    pdf[x <= 0] = 0.0
    cdf = _cdf_table(x, pdf, 1e-3)
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(rng.uniform(size=count), cdf[keep], x[keep])


def subordinator_sample(
    lam: float | SubordinatorParams, theta: float | None = None, size: int = 1, seed=None
) -> np.ndarray:
    """I.i.d. draws of the tempered stable subordinator (mean 1).

    Exact: ``T`` is split into ``n = ceil(theta / a)`` independent tilted
    stable pieces, each sampled by rejection from a positive stable proposal
    accepted with probability ``exp(-theta S)`` (rate ``>= e^-1``). When
    ``n`` would be very large the CDF obtained by inverting the
    characteristic function is used instead.
    """
    if isinstance(lam, SubordinatorParams):
        lam, theta = lam.lam, lam.theta
    _check_tail(lam, theta)
    rng = as_generator(seed)
    a = lam / 2.0
    c = theta ** (1.0 - a) / a
    pieces = max(1, int(np.ceil(c * theta**a)))
    if pieces > _MAX_PIECES:
        return _inverse_cdf_sample(lam, theta, size, rng)
    draws = _tilted_pieces(a, c / pieces, theta, size * pieces, rng)
    return draws.reshape(size, pieces).sum(axis=1)


def mnts_sample(params: StdMntsParams | MntsParams, size: int, seed=None) -> np.ndarray:
    """``size`` x N draws of ``mu + nu (T - 1) + sqrt(T) diag(gamma) xi``."""
    rng = as_generator(seed)
    n = params.dim
    if size == 0:
        return np.empty((0, n))
    chol = np.linalg.cholesky(params.sigma)
    xi = rng.standard_normal((size, n)) @ chol.T
    t = subordinator_sample(params.lam, params.theta, size, rng)
    return params.mu + np.outer(t - 1.0, params.nu) + np.sqrt(t)[:, None] * (xi * params.gamma)


# ---------------------------------------------------------------------------
# calibration by CDF curve fitting

_GRID_PROBS = np.arange(1, 102) / 102.0
_GRID_WEIGHTS = 1.0 / (_GRID_PROBS * (1.0 - _GRID_PROBS))


def _quantile_grid(residuals: np.ndarray) -> np.ndarray:
    return np.quantile(residuals, _GRID_PROBS)


def _cdf_loss(xq, lam, theta, nu, grid) -> float:
    try:
        model = nts_cdf(xq, lam, theta, nu, grid=grid)
    except ValueError:
        return 1e6
    return float(np.sum(_GRID_WEIGHTS * (model - _GRID_PROBS) ** 2))


@dataclass(frozen=True)
class TailFit:
    lam: float
    theta: float
    nu: float
    loss: float
    n: int
    small_sample: bool
    converged: bool

    def __iter__(self):
        return iter((self.lam, self.theta))


@dataclass(frozen=True)
class SkewFit:
    nu: float
    gamma: float
    loss: float
    degenerate: bool


def fit_tail_params(
    residuals,
    p0: tuple[float, float] | SubordinatorParams = (1.5, 1.0),
    fit_skew: bool = True,
    grid: InversionGrid | None = None,
    maxiter: int = 400,
) -> TailFit:
    """Calibrate stdNTS ``(lam, theta)`` (and a skew) to standardized residuals.

    Minimizes the weighted squared distance between the model CDF and the
    empirical CDF at 101 equi-probability quantiles. Unpacks as
    ``lam, theta = fit_tail_params(...)``.
    """
    z = np.asarray(residuals, dtype=float)
    z = z[np.isfinite(z)]
    small = z.size < 200
    if small:
        warnings.warn(f"tail fit on only {z.size} residuals", RuntimeWarning, stacklevel=2)
    if z.size < 5 or np.ptp(z) == 0:
        raise ValueError("residuals are degenerate")
    grid = grid or InversionGrid()
    xq = _quantile_grid(z)
    if isinstance(p0, SubordinatorParams):
        p0 = (p0.lam, p0.theta)

    lo_l, hi_l = LAMBDA_BOUNDS
    lo_t, hi_t = np.log(THETA_BOUNDS[0]), np.log(THETA_BOUNDS[1])

    def unpack(v):
        lam, log_t, frac = v
        theta = float(np.exp(log_t))
        nu = frac * NU_SHRINK * nu_bound(lam, theta) if fit_skew else 0.0
        return lam, theta, nu

    def loss(v):
        return _cdf_loss(xq, *unpack(v), grid)

    bounds = [(lo_l, hi_l), (lo_t, hi_t), (-1.0, 1.0)]
    starts = [
        (np.clip(p0[0], lo_l, hi_l), np.clip(np.log(p0[1]), lo_t, hi_t), 0.0),
        (0.8, np.log(0.5), 0.0),
        (1.6, np.log(2.0), 0.0),
        (1.2, np.log(8.0), 0.0),
    ]
    best = None
    for s in starts:
        res = optimize.minimize(
            loss, np.array(s), method="L-BFGS-B", bounds=bounds, options={"maxiter": maxiter}
        )
        if best is None or res.fun < best.fun:
            best = res
    lam, theta, nu = unpack(best.x)
    return TailFit(float(lam), theta, float(nu), float(best.fun), z.size, small, bool(best.success))


def fit_skew(residuals, lam: float, theta: float, grid: InversionGrid | None = None,
             shrink: float = 100.0) -> SkewFit:
    """Calibrate the skew ``nu`` of a stdNTS law with fixed tail parameters.

    When ``theta`` is large the subordinator is nearly degenerate, ``nu (T - 1)``
    is close to Gaussian and the CDF barely depends on ``nu``. A tie-breaking
    penalty ``shrink / n * nu**2 (2 - lam) / (2 theta)`` (the variance share of
    the skew term, scaled below the sampling noise of the loss) then keeps
    ``nu`` near zero instead of letting it drift along the flat direction.
    ``shrink=0`` gives the plain curve fit.
    """
    _check_tail(lam, theta)
    z = np.asarray(residuals, dtype=float)
    z = z[np.isfinite(z)]
    if z.size < 5 or np.ptp(z) == 0:
        warnings.warn("degenerate residuals; skew set to 0", RuntimeWarning, stacklevel=2)
        return SkewFit(0.0, 1.0, float("nan"), True)
    grid = grid or InversionGrid()
    xq = _quantile_grid(z)
    b = NU_SHRINK * nu_bound(lam, theta)
    weight = shrink / z.size * (2.0 - lam) / (2.0 * theta)
    res = optimize.minimize_scalar(
        lambda nu: _cdf_loss(xq, lam, theta, nu, grid) + weight * nu * nu,
        bounds=(-b, b),
        method="bounded",
        options={"xatol": 1e-6},
    )
    nu = float(res.x)
    return SkewFit(nu, float(std_gamma(nu, lam, theta)), float(res.fun), False)
