"""Univariate kernels: generalized Pareto, hypoexponential, empirical quantiles.

The hypoexponential law here is that of ``sum_k w_k E_k`` with ``E_k`` i.i.d.
standard exponential, i.e. the weights are *scales* (rates ``1 / w_k``).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DataError, DomainError, FitError, ParameterError

logger = logging.getLogger(__name__)

DELTA_MIN = 1e-6
SHAPE_ZERO_TOL = 1e-8
MIN_EXCEEDANCES = 10

# closed form is abandoned for the matrix-exponential route beyond this
# cancellation factor (sum of absolute coefficients)
_CANCELLATION_LIMIT = 1e6


# ---------------------------------------------------------------------------
# generalized Pareto
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpdParams:
    threshold: float
    scale: float
    shape: float

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ParameterError(f"GPD scale must be positive, got {self.scale}")
        if not (np.isfinite(self.shape) and np.isfinite(self.threshold)):
            raise ParameterError("GPD threshold and shape must be finite")

    @property
    def upper_bound(self) -> float:
        if self.shape < 0:
            return self.threshold - self.scale / self.shape
        return np.inf


def _gpd_survival_std(z, shape):
    """Survival of GPD(0, 1, shape) at z >= 0 (vectorized)."""
    z = np.asarray(z, dtype=float)
    if abs(shape) < SHAPE_ZERO_TOL:
        return np.exp(-z)
    base = 1.0 + shape * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(base > 0, np.exp(-np.log(np.where(base > 0, base, 1.0)) / shape), 0.0)
    return out


def gpd_cdf(p: GpdParams, y):
    y = np.asarray(y, dtype=float)
    z = (y - p.threshold) / p.scale
    surv = _gpd_survival_std(np.maximum(z, 0.0), p.shape)
    out = np.where(z <= 0, 0.0, 1.0 - surv)
    return out if out.ndim else float(out)


def gpd_logpdf(p: GpdParams, y):
    y = np.asarray(y, dtype=float)
    z = (y - p.threshold) / p.scale
    if abs(p.shape) < SHAPE_ZERO_TOL:
        out = np.where(z >= 0, -np.log(p.scale) - z, -np.inf)
    else:
        base = 1.0 + p.shape * z
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where((z >= 0) & (base > 0),
                           -np.log(p.scale) - (1.0 / p.shape + 1.0) * np.log(base), -np.inf)
    return out if out.ndim else float(out)


def gpd_quantile(p: GpdParams, u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u >= 0) & (u < 1))):
        raise DomainError("GPD quantile needs probabilities in [0, 1)")
    return gpd_isf(p, 1.0 - u) if u.ndim else float(gpd_isf(p, 1.0 - u))


def gpd_isf(p: GpdParams, s):
    """Inverse survival function; ``s`` in (0, 1]. Keeps precision deep in the tail."""
    s = np.asarray(s, dtype=float)
    if abs(p.shape) < SHAPE_ZERO_TOL:
        z = -np.log(s)
    else:
        z = np.expm1(-p.shape * np.log(s)) / p.shape
    return p.threshold + p.scale * z


def gpd_sample(p: GpdParams, size, rng: np.random.Generator):
    return gpd_isf(p, 1.0 - rng.random(size))


@dataclass(frozen=True)
class MarginalModel:
    """Per-site GPD tails sharing one shape parameter.

    ``tau`` is the non-exceedance probability of each site's threshold; it is
    needed to map between the uniform scale and the response scale.
    """

    thresholds: np.ndarray
    scales: np.ndarray
    shape: float
    tau: float | None = None
    loglik: float = np.nan
    n_exceedances: np.ndarray | None = None
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "thresholds", np.asarray(self.thresholds, dtype=float))
        object.__setattr__(self, "scales", np.asarray(self.scales, dtype=float))
        if self.thresholds.shape != self.scales.shape:
            raise ParameterError("thresholds and scales must have the same length")
        if np.any(self.scales <= 0):
            raise ParameterError("GPD scales must be positive")

    @property
    def n_sites(self) -> int:
        return self.thresholds.size

    def site(self, i: int) -> GpdParams:
        return GpdParams(float(self.thresholds[i]), float(self.scales[i]), float(self.shape))


# ---------------------------------------------------------------------------
# shared-shape maximum likelihood
# ---------------------------------------------------------------------------

def _moment_start(excess):
    m = excess.mean()
    v = excess.var(ddof=1) if excess.size > 1 else m * m
    v = max(v, 1e-12)
    shape = 0.5 * (1.0 - m * m / v)
    scale = 0.5 * m * (m * m / v + 1.0)
    return float(np.clip(shape, -0.4, 0.9)), float(max(scale, 1e-8))


class _ProfileLikelihood:
    """Per-site scales profiled out for a given shared shape.

    Excesses of all sites are stored in one padded matrix. For fixed shape
    > -1 the log-likelihood is strictly concave in log-scale, so a damped
    Newton iteration run on all sites at once finds every profiled scale.
    """

    NEWTON_ITERS = 60

    def __init__(self, excesses):
        self.counts = np.array([e.size for e in excesses])
        width = self.counts.max()
        self.z = np.zeros((len(excesses), width))
        self.mask = np.zeros((len(excesses), width), dtype=bool)
        for i, e in enumerate(excesses):
            self.z[i, : e.size] = e
            self.mask[i, : e.size] = True
        self.zmax = np.array([e.max() for e in excesses])
        self.zmean = np.array([e.mean() for e in excesses])

    def site_loglik(self, log_scale, shape):
        scale = np.exp(log_scale)[:, None]
        z = self.z / scale
        if abs(shape) < SHAPE_ZERO_TOL:
            term = z
        else:
            base = 1.0 + shape * z
            bad = (base <= 0) & self.mask
            with np.errstate(divide="ignore", invalid="ignore"):
                term = (1.0 / shape + 1.0) * np.log(np.where(base > 0, base, 1.0))
            term = np.where(bad, np.inf, term)
        ll = -self.counts * np.log(scale[:, 0]) - np.where(self.mask, term, 0.0).sum(axis=1)
        return np.where(np.isfinite(ll), ll, -np.inf)

    def _score(self, log_scale, shape):
        z = self.z * np.exp(-log_scale)[:, None]
        if abs(shape) < SHAPE_ZERO_TOL:
            s = np.where(self.mask, z, 0.0).sum(axis=1)
            return -self.counts + s, -s
        t = shape * z / (1.0 + shape * z)
        t = np.where(self.mask, t, 0.0)
        k = (1.0 + shape) / shape
        return -self.counts + k * t.sum(axis=1), -k * (t * (1.0 - t)).sum(axis=1)

    def scales_given_shape(self, shape):
        lo = np.full(self.zmean.shape, -np.inf)
        if shape < 0:
            lo = np.log(-shape * self.zmax)
        s = np.log(self.zmean * max(1.0 - shape, 0.05))
        s = np.maximum(s, lo + 0.5)
        for _ in range(self.NEWTON_ITERS):
            g, h = self._score(s, shape)
            step = np.clip(-g / np.minimum(h, -1e-300), -1.0, 1.0)
            new = s + step
            new = np.where(new <= lo, 0.5 * (s + lo), new)
            done = np.max(np.abs(new - s)) < 1e-13
            s = new
            if done:
                break
        return s, self.site_loglik(s, shape)

    def __call__(self, shape):
        if not np.isfinite(shape) or shape <= -0.95 or shape >= 5.0:
            return np.inf
        _, ll = self.scales_given_shape(shape)
        total = ll.sum()
        return -total if np.isfinite(total) else np.inf


def gpd_loglik_shared(excesses, scales, shape) -> float:
    """Pooled exceedance log-likelihood for per-site scales and one shape."""
    total = 0.0
    for e, s in zip(excesses, scales):
        total += float(np.sum(gpd_logpdf(GpdParams(0.0, float(s), float(shape)), e)))
    return total


def gpd_fit_shared_shape(
    data: Sequence[Sequence[float]],
    thresholds: Sequence[float],
    *,
    tau: float | None = None,
    min_exceedances: int = MIN_EXCEEDANCES,
    n_restarts: int = 20,
    max_iter: int = 400,
    seed: int = 0,
) -> MarginalModel:
    """Maximum likelihood GPD fit with one shape shared by all sites.

    ``data[i]`` holds the values of site ``i`` above ``thresholds[i]``
    (values at or below the threshold are dropped). The scale of every site
    is profiled out exactly for each candidate shape and the shape is found
    by Nelder-Mead restarted from moment-based starting points.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if len(data) != thresholds.size:
        raise DataError("one threshold per site is required")
    excesses = []
    for i, (vals, u) in enumerate(zip(data, thresholds)):
        v = np.asarray(vals, dtype=float)
        v = v[np.isfinite(v)]
        e = v[v > u] - u
        if e.size < min_exceedances:
            raise DataError(f"site {i} has {e.size} exceedances, need at least {min_exceedances}")
        excesses.append(e)

    profile = _ProfileLikelihood(excesses)
    starts = [_moment_start(e)[0] for e in excesses]
    pooled_start = _moment_start(np.concatenate([e / e.mean() for e in excesses]))[0]
    rng = np.random.default_rng(seed)
    base = [pooled_start, float(np.median(starts))]
    candidates = base + list(pooled_start + rng.normal(0.0, 0.15, size=max(n_restarts - len(base), 0)))
    candidates = [float(np.clip(c, -0.45, 1.5)) for c in candidates[:n_restarts]]

    best = None
    any_converged = False
    for x0 in candidates:
        res = scipy.optimize.minimize(
            lambda x: profile(float(x[0])), x0=[x0], method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": max_iter,
                     "initial_simplex": [[x0], [x0 + 0.05]]},
        )
        any_converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    shape = float(best.x[0])
    log_scale, _ = profile.scales_given_shape(shape)
    scales = np.exp(log_scale)
    model = MarginalModel(thresholds, scales, shape, tau=tau, loglik=-float(best.fun),
                          n_exceedances=profile.counts.copy(), converged=any_converged)
    if not any_converged or not np.isfinite(best.fun):
        raise FitError("shared-shape GPD fit did not converge", best=model)
    return model


# ---------------------------------------------------------------------------
# hypoexponential
# ---------------------------------------------------------------------------

def _check_distinct(weights, delta_min):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ParameterError("weights must be a non-empty vector")
    if np.any(~np.isfinite(w)) or np.any(w < delta_min):
        raise ParameterError(f"weights must be finite and >= {delta_min}: {w.tolist()}")
    for a, b in itertools.combinations(range(w.size), 2):
        if abs(w[a] - w[b]) < delta_min:
            raise ParameterError(
                f"weights {a + 1} and {b + 1} are closer than {delta_min}: {w[a]!r}, {w[b]!r}")
    return w


@dataclass(frozen=True)
class HypoexpParams:
    weights: tuple
    delta_min: float = field(default=DELTA_MIN, compare=False)

    def __post_init__(self):
        w = _check_distinct(self.weights, self.delta_min)
        if w.size < 2:
            raise ParameterError("need at least two weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.weights)


def hypoexp_coefficients(weights, delta_min=DELTA_MIN) -> np.ndarray:
    """Coefficients ``a_i = prod_{j != i} w_i / (w_i - w_j)`` of ``exp(-x / w_i)``.

    Pairwise differences are clamped away from zero at ``delta_min``.
    """
    w = np.asarray(weights, dtype=float)
    diff = w[:, None] - w[None, :]
    diff = np.where(diff >= 0, np.maximum(diff, delta_min), np.minimum(diff, -delta_min))
    ratio = w[:, None] / diff
    np.fill_diagonal(ratio, 1.0)
    return ratio.prod(axis=1)


def _survival_expm(w, x):
    """Phase-type evaluation: the sum of scaled exponentials is a pure-birth chain."""
    k = w.size
    gen = np.diag(-1.0 / w) + np.diag(1.0 / w[:-1], 1)
    x = np.asarray(x, dtype=float)
    flat = np.maximum(x.ravel(), 0.0)
    mats = scipy.linalg.expm(flat[:, None, None] * gen[None, :, :])
    out = mats[:, 0, :].sum(axis=1)
    return np.clip(out, 0.0, 1.0).reshape(x.shape)


def _survival(w, x, delta_min=DELTA_MIN):
    x = np.asarray(x, dtype=float)
    coef = hypoexp_coefficients(w, delta_min)
    if np.abs(coef).sum() > _CANCELLATION_LIMIT:
        out = _survival_expm(w, x)
    else:
        xp = np.maximum(x, 0.0)
        out = np.tensordot(np.exp(-xp[..., None] / w), coef, axes=([-1], [0]))
        out = np.clip(out, 0.0, 1.0)
    return np.where(x <= 0, 1.0, out)


def hypoexp_survival(p: HypoexpParams, x):
    out = _survival(p.array, x, p.delta_min)
    return out if out.ndim else float(out)


def hypoexp_cdf(p: HypoexpParams, x):
    if not isinstance(p, HypoexpParams):
        p = HypoexpParams(tuple(p))
    out = 1.0 - _survival(p.array, x, p.delta_min)
    return out if out.ndim else float(out)


def hypoexp_survival_k(weights, x, delta_min=DELTA_MIN):
    """``P(sum_k w_k E_k > x)`` for 2 to 4 distinct weights (no sum constraint)."""
    w = _check_distinct(weights, delta_min)
    if not 2 <= w.size <= 4:
        raise ParameterError("hypoexp_survival_k supports 2, 3 or 4 weights")
    out = _survival(w, x, delta_min)
    return out if out.ndim else float(out)


def hypoexp_pdf(p: HypoexpParams, x):
    w = p.array
    coef = hypoexp_coefficients(w, p.delta_min)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    out = np.tensordot(np.exp(-xp[..., None] / w), coef / w, axes=([-1], [0]))
    out = np.where(x < 0, 0.0, np.maximum(out, 0.0))
    return out if out.ndim else float(out)


def hypoexp_isf(p: HypoexpParams, s: float) -> float:
    """Inverse survival function for a scalar survival probability in (0, 1)."""
    if not 0 < s < 1:
        raise DomainError("survival probability must lie in (0, 1)")
    w = p.array
    hi = w.max() * (-np.log(s) + 40.0)
    return float(scipy.optimize.brentq(lambda x: _survival(w, x) - s, 0.0, hi,
                                       xtol=1e-14, rtol=1e-14, maxiter=500))


def hypoexp_quantile(p: HypoexpParams, u: float) -> float:
    if u == 0:
        return 0.0
    return hypoexp_isf(p, 1.0 - u)


def hypoexp_sample(p: HypoexpParams, size, rng: np.random.Generator):
    size = (size,) if np.isscalar(size) else tuple(size)
    e = rng.standard_exponential(size + (len(p.weights),))
    return e @ p.array


# ---------------------------------------------------------------------------
# empirical quantile
# ---------------------------------------------------------------------------

def empirical_quantile(values, tau: float) -> float:
    """Type-7 (linear interpolation between closest ranks) sample quantile."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise DataError("empirical quantile of an empty sample")
    if not 0 < tau < 1:
        raise DomainError("tau must lie in (0, 1)")
    return float(np.quantile(v, tau, method="linear"))
