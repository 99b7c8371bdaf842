"""Gaussian fields, Brown-Resnick and inverted Brown-Resnick processes.

Dependence is parameterized throughout by the variogram

    gamma(h_s, h_t) = (h_s / range_s) ** alpha + (h_t / range_t) ** alpha,

read as ``Var{eps(a) - eps(b)}`` of the underlying Gaussian field, so the
bivariate Brown-Resnick tail coefficient is ``2 - 2 * Phi(sqrt(gamma) / 2)``.
Spatial-only and temporal-only modes keep one of the two terms and make the
process independent along the other axis.

Brown-Resnick draws use the exact extremal-functions algorithm of Dombry,
Engelke and Oesting (2016), vectorized across independent blocks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import MarginTagError, NumericalError, ParameterError, SimulationError

MAX_PROPOSALS = 10**6


class Mode(str, enum.Enum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"
    SPATIOTEMPORAL = "spatiotemporal"


class Margin(str, enum.Enum):
    GAUSSIAN = "gaussian"
    FRECHET = "unit-frechet"
    EXPONENTIAL = "standard-exponential"
    PARETO = "standard-pareto"
    UNIFORM = "uniform"
    HYPOEXP = "standard-hypoexponential"
    GPD = "gpd-target"


@dataclass(frozen=True)
class VariogramSpec:
    range_s: float
    range_t: float
    alpha: float = 1.0
    mode: Mode = Mode.SPATIOTEMPORAL

    def __post_init__(self):
        if not (self.range_s > 0 and self.range_t > 0):
            raise ParameterError("variogram ranges must be positive")
        if not 0 < self.alpha <= 2:
            raise ParameterError("variogram exponent must lie in (0, 2]")
        object.__setattr__(self, "mode", Mode(self.mode))

    def with_mode(self, mode) -> "VariogramSpec":
        return VariogramSpec(self.range_s, self.range_t, self.alpha, Mode(mode))

    def __call__(self, h_s, h_t):
        h_s = np.asarray(h_s, dtype=float)
        h_t = np.asarray(h_t, dtype=float)
        g = np.zeros(np.broadcast(h_s, h_t).shape)
        if self.mode is not Mode.TEMPORAL:
            g = g + (h_s / self.range_s) ** self.alpha
        if self.mode is not Mode.SPATIAL:
            g = g + (h_t / self.range_t) ** self.alpha
        return g


@dataclass(frozen=True)
class SpaceTimeLayout:
    """Sites x times grid observed on ``n_replicates`` independent blocks.

    Point ``p`` of the flattened grid is ``(site p // T, time p % T)``.
    """

    sites: np.ndarray
    times: np.ndarray
    n_replicates: int = 1
    site_ids: tuple | None = None

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if sites.ndim != 2 or sites.shape[1] != 2:
            raise ParameterError("sites must be an (m, 2) array of coordinates")
        if len({tuple(s) for s in sites.tolist()}) != len(sites):
            raise ParameterError("site coordinates must be distinct")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ParameterError("times must be strictly increasing")
        if int(self.n_replicates) < 1:
            raise ParameterError("need at least one replicate")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "n_replicates", int(self.n_replicates))
        if self.site_ids is None:
            object.__setattr__(self, "site_ids", tuple(str(i) for i in range(len(sites))))
        elif len(self.site_ids) != len(sites):
            raise ParameterError("one site id per site is required")

    @classmethod
    def grid(cls, n_side: int = 5, n_times: int = 5, n_replicates: int = 1):
        """Regular grid on the unit square times a regular grid on [0, 1]."""
        axis = np.linspace(0.0, 1.0, n_side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        sites = np.column_stack([xx.ravel(), yy.ravel()])
        return cls(sites, np.linspace(0.0, 1.0, n_times), n_replicates)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_points(self) -> int:
        return self.n_sites * self.n_times

    @property
    def shape(self):
        return (self.n_replicates, self.n_sites, self.n_times)

    def points(self):
        """Flattened (x, y, t) coordinates of every grid point."""
        s = np.repeat(self.sites, self.n_times, axis=0)
        t = np.tile(self.times, self.n_sites)
        return np.column_stack([s, t])

    def with_replicates(self, n: int) -> "SpaceTimeLayout":
        return SpaceTimeLayout(self.sites, self.times, n, self.site_ids)


@dataclass(frozen=True)
class ProcessSample:
    values: np.ndarray
    margin: Margin

    def __post_init__(self):
        object.__setattr__(self, "margin", Margin(self.margin))
        if np.asarray(self.values).ndim != 3:
            raise ParameterError("process values must be replicate x site x time")


def lag_matrices(points):
    """Pairwise spatial and temporal lags between (x, y, t) points."""
    d = points[:, None, :] - points[None, :, :]
    return np.hypot(d[..., 0], d[..., 1]), np.abs(d[..., 2])


class GaussianField:
    """Zero-mean Gaussian field with variogram ``gamma`` pinned to 0 at an anchor.

    Covariance ``C(a, b) = (gamma(a, o) + gamma(b, o) - gamma(a, b)) / 2``.
    Points at zero variogram distance from each other are merged before the
    Cholesky factorization so that coincident points get identical values.
    """

    def __init__(self, gamma: np.ndarray, anchor: int = 0):
        gamma = np.asarray(gamma, dtype=float)
        n = gamma.shape[0]
        # group points at zero variogram distance
        group = -np.ones(n, dtype=int)
        reps = []
        for i in range(n):
            if group[i] >= 0:
                continue
            members = np.flatnonzero((gamma[i] == 0) & (group < 0))
            group[members] = len(reps)
            reps.append(i)
        reps = np.array(reps)
        anchor_group = group[anchor]
        free = np.array([g for g in range(len(reps)) if g != anchor_group], dtype=int)
        o = reps[anchor_group]
        r = reps[free]
        cov = 0.5 * (gamma[r, o][:, None] + gamma[r, o][None, :] - gamma[np.ix_(r, r)])
        self.factor = _cholesky_with_jitter(cov) if r.size else np.zeros((0, 0))
        # column of the factor feeding each point (-1 for the anchor group)
        col_of_group = -np.ones(len(reps), dtype=int)
        col_of_group[free] = np.arange(free.size)
        self.column = col_of_group[group]
        self.n_points = n

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.factor.shape[0]))
        reduced = z @ self.factor.T
        out = np.zeros((size, self.n_points))
        mask = self.column >= 0
        out[:, mask] = reduced[:, self.column[mask]]
        return out


def _cholesky_with_jitter(cov):
    scale = max(float(np.mean(np.diag(cov))), 1e-300)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10
    while jitter <= 1e-6:
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("covariance is not positive semidefinite even after 1e-6 jitter")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_gaussian_field(v: VariogramSpec, layout: SpaceTimeLayout, anchor: int = 0,
                          seed=None) -> ProcessSample:
    """Gaussian field over all layout points, pinned to zero at ``anchor``."""
    if layout.n_points > 10**4:
        raise ParameterError("dense factorization limited to 10^4 points")
    hs, ht = lag_matrices(layout.points())
    field_ = GaussianField(v(hs, ht), anchor)
    eps = field_.draw(_rng(seed), layout.n_replicates)
    return ProcessSample(eps.reshape(layout.shape), Margin.GAUSSIAN)


def _blocks(v: VariogramSpec, layout: SpaceTimeLayout):
    """Block geometry and the axis handling of independent copies.

    Returns (points of one block, function mapping a (batch, block) array back
    to replicate x site x time, batch size).
    """
    n, m, T = layout.shape
    if v.mode is Mode.SPATIOTEMPORAL:
        return layout.points(), (lambda z: z.reshape(n, m, T)), n
    if v.mode is Mode.SPATIAL:
        pts = np.column_stack([layout.sites, np.zeros(m)])
        # batch ordered (replicate, time); block axis is site
        return pts, (lambda z: z.reshape(n, T, m).transpose(0, 2, 1)), n * T
    pts = np.column_stack([np.zeros((T, 2)), layout.times])
    return pts, (lambda z: z.reshape(n, m, T)), n * m


def extremal_functions(gamma: np.ndarray, size: int, rng: np.random.Generator,
                       max_proposals: int = MAX_PROPOSALS) -> np.ndarray:
    """Exact Brown-Resnick draws with unit Frechet margins at a finite point set.

    ``gamma`` is the variogram matrix of the points; returns ``(size, N)``.
    """
    N = gamma.shape[0]
    field_ = GaussianField(gamma, anchor=0)
    Z = np.zeros((size, N))
    proposals = 0
    for k in range(N):
        drift = 0.5 * gamma[k]
        arrival = rng.standard_exponential(size)
        # only Poisson points that can still exceed the current value at point k
        active = np.flatnonzero(1.0 / arrival > Z[:, k])
        while active.size:
            proposals += active.size
            if proposals > max_proposals * max(size, 1):
                raise SimulationError(
                    "extremal-functions acceptance loop exceeded the proposal budget",
                    diagnostics={"point": k, "proposals": proposals, "points": N})
            eps = field_.draw(rng, active.size)
            zeta = 1.0 / arrival[active]
            cand = zeta[:, None] * np.exp(eps - eps[:, k : k + 1] - drift[None, :])
            if k:
                ok = np.all(cand[:, :k] < Z[active, :k], axis=1)
            else:
                ok = np.ones(active.size, dtype=bool)
            acc = active[ok]
            Z[acc] = np.maximum(Z[acc], cand[ok])
            arrival[active] += rng.standard_exponential(active.size)
            active = active[1.0 / arrival[active] > Z[active, k]]
    return Z


def truncated_spectral(gamma: np.ndarray, size: int, rng: np.random.Generator,
                       n_terms: int = 500) -> np.ndarray:
    """Reference simulator: maximum over the first ``n_terms`` Poisson points.

    Biased (too small) wherever the truncated tail would have won; kept only
    to cross-check the exact algorithm.
    """
    field_ = GaussianField(gamma, anchor=0)
    drift = 0.5 * gamma[0]
    Z = np.zeros((size, gamma.shape[0]))
    arrival = np.zeros(size)
    for _ in range(n_terms):
        arrival += rng.standard_exponential(size)
        w = np.exp(field_.draw(rng, size) - drift[None, :])
        Z = np.maximum(Z, w / arrival[:, None])
    return Z


def sample_brown_resnick(v: VariogramSpec, layout: SpaceTimeLayout, seed=None, *,
                         method: str = "exact", n_terms: int = 500) -> ProcessSample:
    """Brown-Resnick process with unit Frechet margins on the layout."""
    pts, restore, batch = _blocks(v, layout)
    if pts.shape[0] > 1000:
        raise ParameterError("Brown-Resnick blocks are limited to 1000 points")
    hs, ht = lag_matrices(pts)
    gamma = v(hs, ht)
    rng = _rng(seed)
    if method == "exact":
        z = extremal_functions(gamma, batch, rng)
    elif method == "truncated":
        z = truncated_spectral(gamma, batch, rng, n_terms)
    else:
        raise ParameterError(f"unknown Brown-Resnick method {method!r}")
    return ProcessSample(restore(z), Margin.FRECHET)


def sample_inverted_br(v: VariogramSpec, layout: SpaceTimeLayout, seed=None) -> ProcessSample:
    """Inverted Brown-Resnick process ``1 / G(Z)`` with standard Pareto margins."""
    z = sample_brown_resnick(v, layout, seed).values
    # 1 / exp(-1/z); overflow is impossible for z > 1/709
    return ProcessSample(np.exp(1.0 / z), Margin.PARETO)


def to_standard_exponential(p: ProcessSample) -> ProcessSample:
    """Map unit Frechet or standard Pareto margins to Exp(1), increasing in each entry."""
    if p.margin is Margin.FRECHET:
        out = -np.log(-np.expm1(-1.0 / p.values))
    elif p.margin is Margin.PARETO:
        out = np.log(p.values)
    else:
        raise MarginTagError(f"cannot map {p.margin.value} margins to standard exponential")
    return ProcessSample(out, Margin.EXPONENTIAL)
