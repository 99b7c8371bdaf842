"""Tail-dependence analytics.

Empirical chi and conditional exceedance correlations binned by space and
time lag, tensor-product B-spline smoothing of the binned surface, the
closed-form limiting chi of the simplified mixture, and Monte Carlo checks.
"""

from __future__ import annotations

import csv
import enum
import functools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate

from .distributions import DELTA_MIN, HypoexpParams, _check_distinct, hypoexp_coefficients, \
    hypoexp_isf
from .errors import DiagnosticsError, MarginTagError, NumericalError, ParameterError
from .mixture import Dataset, MixtureParams, simulate_mixture, transform_margins
from .simulators import Margin, SpaceTimeLayout, lag_matrices

logger = logging.getLogger(__name__)

POLE_TOL = 1e-8
MIN_CORR_PAIRS = 30


# ---------------------------------------------------------------------------
# binning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairBinGrid:
    s_edges: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    t_edges: tuple = (0.0, 0.1, 0.2, 0.3)

    def __post_init__(self):
        for e in (self.s_edges, self.t_edges):
            if len(e) < 2 or np.any(np.diff(e) <= 0):
                raise ParameterError("bin edges must be strictly increasing")
        object.__setattr__(self, "s_edges", tuple(float(x) for x in self.s_edges))
        object.__setattr__(self, "t_edges", tuple(float(x) for x in self.t_edges))

    @property
    def shape(self):
        return (len(self.s_edges) - 1, len(self.t_edges) - 1)

    @property
    def n_bins(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def s_centers(self) -> np.ndarray:
        e = np.array(self.s_edges)
        return 0.5 * (e[1:] + e[:-1])

    @property
    def t_centers(self) -> np.ndarray:
        e = np.array(self.t_edges)
        return 0.5 * (e[1:] + e[:-1])

    def describe(self) -> str:
        return f"s={list(self.s_edges)};t={list(self.t_edges)}"


def _assign(h, edges):
    h = np.round(h, 12)
    idx = np.searchsorted(edges, h, side="right") - 1
    idx = np.where(h == edges[-1], len(edges) - 2, idx)
    return np.where((h < edges[0]) | (h > edges[-1]), -1, idx)


@dataclass(frozen=True)
class PairIndex:
    first: np.ndarray
    second: np.ndarray
    bin: np.ndarray          # flattened bin id, row-major (spatial, temporal)
    grid: PairBinGrid


def pair_index(layout: SpaceTimeLayout, grid: PairBinGrid) -> PairIndex:
    """Unordered pairs of distinct points that fall inside the bin grid."""
    pts = layout.points()
    hs, ht = lag_matrices(pts)
    p, q = np.triu_indices(pts.shape[0], k=1)
    bs = _assign(hs[p, q], np.array(grid.s_edges))
    bt = _assign(ht[p, q], np.array(grid.t_edges))
    keep = (bs >= 0) & (bt >= 0)
    b = bs[keep] * grid.shape[1] + bt[keep]
    return PairIndex(p[keep], q[keep], b, grid)


# ---------------------------------------------------------------------------
# per-replicate sufficient statistics
# ---------------------------------------------------------------------------

@dataclass
class BinStats:
    """Per-replicate, per-bin counts and sums behind every pair statistic.

    All statistics are sums over replicates, so a bootstrap resample is just
    a weighted sum of these rows.
    """

    taus: tuple
    q0: float
    grid: PairBinGrid
    n_obs: np.ndarray                       # (n, B) jointly observed pairs
    both: np.ndarray                        # (len(taus), n, B)
    cond: np.ndarray                        # (len(taus), n, B) first + second exceedances
    corr_sums: np.ndarray = field(repr=False)   # (4, n, B): count, s1, s2, s12

    def total(self, weights=None):
        w = None if weights is None else np.asarray(weights, dtype=float)

        def agg(a):
            return a.sum(axis=-2) if w is None else np.tensordot(a, w, axes=([-2], [0]))
        return agg(self.n_obs), agg(self.both), agg(self.cond), agg(self.corr_sums)


def _require_uniform(d: Dataset):
    if d.margin is not Margin.UNIFORM:
        raise MarginTagError(f"pair statistics need uniform margins, got {d.margin.value}")


def replicate_bin_stats(d: Dataset, grid: PairBinGrid | None = None, taus=(0.5, 0.9),
                        q0: float = 0.5, pairs: PairIndex | None = None,
                        chunk: int = 200_000) -> BinStats:
    _require_uniform(d)
    grid = grid or PairBinGrid()
    pairs = pairs or pair_index(d.layout, grid)
    n = d.layout.n_replicates
    B = grid.n_bins
    U = d.values.reshape(n, -1)
    O = ~np.isnan(U)
    Uz = np.where(O, U, 0.0)
    taus = tuple(float(t) for t in taus)

    n_obs = np.zeros(n * B)
    both = np.zeros((len(taus), n * B))
    cond = np.zeros((len(taus), n * B))
    sums = np.zeros((4, n * B))
    offs = (np.arange(n) * B)[:, None]
    step = max(1, chunk // max(n, 1))
    for start in range(0, pairs.first.size, step):
        sl = slice(start, start + step)
        p, q, b = pairs.first[sl], pairs.second[sl], pairs.bin[sl]
        idx = (offs + b[None, :]).ravel()
        obs = O[:, p] & O[:, q]
        up, uq = Uz[:, p], Uz[:, q]

        def add(target, vals):
            target += np.bincount(idx, weights=vals.ravel(), minlength=n * B)

        add(n_obs, obs)
        for i, t in enumerate(taus):
            ep = (up > t) & obs
            eq = (uq > t) & obs
            add(both[i], ep & eq)
            add(cond[i], ep.astype(float) + eq)
        qual = (up > q0) & (uq > q0) & obs
        add(sums[0], qual)
        add(sums[1], np.where(qual, up + uq, 0.0))
        add(sums[2], np.where(qual, up * up + uq * uq, 0.0))
        add(sums[3], np.where(qual, 2.0 * up * uq, 0.0))
    return BinStats(taus, float(q0), grid, n_obs.reshape(n, B),
                    both.reshape(len(taus), n, B), cond.reshape(len(taus), n, B),
                    sums.reshape(4, n, B))


# ---------------------------------------------------------------------------
# chi surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChiSurface:
    tau: float
    raw: np.ndarray              # (n_s, n_t), NaN where the bin is missing
    counts: np.ndarray           # jointly observed pairs per bin
    grid: PairBinGrid
    smooth: np.ndarray | None = None

    def with_smooth(self, smooth) -> "ChiSurface":
        return ChiSurface(self.tau, self.raw, self.counts, self.grid, smooth)


def chi_from_counts(both, cond):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cond > 0, 2.0 * both / np.where(cond > 0, cond, 1.0), np.nan)


def corr_from_sums(sums, min_pairs=MIN_CORR_PAIRS):
    cnt, s1, s2, s12 = sums
    n2 = 2.0 * cnt
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s1 / n2
        var = s2 / n2 - mean ** 2
        cov = s12 / n2 - mean ** 2
        r = cov / var
    ok = (cnt >= min_pairs) & (var > 0)
    return np.where(ok, np.clip(r, -1.0, 1.0), np.nan)


def empirical_chi(d: Dataset, tau: float, grid: PairBinGrid | None = None,
                  weights=None, stats: BinStats | None = None) -> ChiSurface:
    """Binned symmetric chi estimate ``2 #both / (#first + #second)``."""
    grid = grid or PairBinGrid()
    if stats is None or tau not in stats.taus:
        stats = replicate_bin_stats(d, grid, taus=(tau,))
    i = stats.taus.index(tau)
    n_obs, both, cond, _ = stats.total(weights)
    if not np.any(n_obs > 0):
        raise DiagnosticsError("no pairs fall in any bin")
    raw = chi_from_counts(both[i], cond[i]).reshape(grid.shape)
    return ChiSurface(float(tau), raw, n_obs.reshape(grid.shape), grid)


def conditional_exceedance_corr(d: Dataset, q0: float = 0.5, grid: PairBinGrid | None = None,
                                weights=None, stats: BinStats | None = None) -> np.ndarray:
    """Per-bin Pearson correlation of pairs with both members above ``q0``.

    Each unordered pair enters in both orders, so the statistic is symmetric.
    Bins with fewer than 30 qualifying pairs are NaN.
    """
    grid = grid or PairBinGrid()
    if stats is None or stats.q0 != q0:
        stats = replicate_bin_stats(d, grid, taus=(), q0=q0)
    _, _, _, sums = stats.total(weights)
    return corr_from_sums(sums).reshape(grid.shape)


def _bspline_basis(edges, x, degree=3):
    e = np.asarray(edges, dtype=float)
    knots = np.concatenate([[e[0]] * degree, e, [e[-1]] * degree])
    nb = len(knots) - degree - 1
    out = np.empty((len(x), nb))
    for j in range(nb):
        c = np.zeros(nb)
        c[j] = 1.0
        out[:, j] = scipy.interpolate.BSpline(knots, c, degree, extrapolate=False)(x)
    return np.nan_to_num(out)


def _greville(edges, degree=3):
    e = np.asarray(edges, dtype=float)
    knots = np.concatenate([[e[0]] * degree, e, [e[-1]] * degree])
    nb = len(knots) - degree - 1
    return np.array([knots[j + 1:j + 1 + degree].mean() for j in range(nb)])


def _second_difference(g):
    """Second divided differences of coefficients located at abscissae ``g``.

    Zero exactly for coefficients that are linear in ``g``; B-spline
    coefficients of a linear function are its values at the Greville
    abscissae, so linear surfaces escape the penalty.
    """
    k = g.size
    D = np.zeros((k - 2, k))
    for i in range(k - 2):
        a, b, c = g[i], g[i + 1], g[i + 2]
        D[i, i] = 1.0 / ((b - a) * (c - a))
        D[i, i + 1] = -1.0 / ((b - a) * (c - b))
        D[i, i + 2] = 1.0 / ((c - b) * (c - a))
    return D


@functools.lru_cache(maxsize=16)
def _smoother_design(grid: PairBinGrid):
    """Design matrix at the bin centers and the (scale-normalized) penalty."""
    Bs = _bspline_basis(grid.s_edges, grid.s_centers)
    Bt = _bspline_basis(grid.t_edges, grid.t_centers)
    Ds = _second_difference(_greville(grid.s_edges))
    Dt = _second_difference(_greville(grid.t_edges))
    P = np.kron(Ds.T @ Ds, np.eye(Bt.shape[1])) + np.kron(np.eye(Bs.shape[1]), Dt.T @ Dt)
    P = P / (np.trace(P) / P.shape[0])
    X = np.kron(Bs, Bt)
    X.flags.writeable = False
    P.flags.writeable = False
    return X, P


SMOOTHING_GRID = tuple(10.0 ** np.arange(-4, 4.5, 0.5))


def smooth_values(grid: PairBinGrid, raw: np.ndarray, counts: np.ndarray,
                  penalty: float | None = None) -> np.ndarray:
    """Penalized tensor-product cubic B-spline fit evaluated at bin centers.

    Knots sit at the bin edges and the bin pair counts are the weights. A
    second-difference penalty on the coefficients along each axis keeps the
    system solvable with more coefficients than bins; its null space holds
    all surfaces linear in each axis, so constants and linear trends are reproduced
    exactly. The penalty weight is picked by generalized cross-validation
    unless given.
    """
    X, P = _smoother_design(grid)
    y = np.asarray(raw, dtype=float).ravel()
    w = np.asarray(counts, dtype=float).ravel()
    w = np.where(np.isnan(y), 0.0, w)
    have = w > 0
    if not have.any():
        raise DiagnosticsError("no populated bins to smooth")
    w = w / w[have].mean()
    yz = np.where(have, y, 0.0)
    XtW = X.T * w
    XtWX = XtW @ X
    XtWy = XtW @ yz

    def solve(lam):
        A = XtWX + lam * P
        if np.linalg.cond(A) > 1e12:
            return None, None
        coef = np.linalg.solve(A, XtWy)
        return coef, A

    lams = SMOOTHING_GRID if penalty is None else (penalty,)
    best = None
    m = have.sum()
    for lam in lams:
        coef, A = solve(lam)
        if coef is None:
            continue
        fit = X @ coef
        rss = float(np.sum(w * (yz - fit) ** 2))
        edf = float(np.trace(np.linalg.solve(A, XtWX)))
        denom = (m - edf) ** 2
        score = m * rss / denom if denom > 1e-12 else np.inf
        if best is None or score < best[0] - 1e-15:
            best = (score, fit)
    if best is None:
        logger.warning("spline design is rank deficient; falling back to a per-axis linear fit")
        return np.clip(_linear_fallback(grid, yz, w), 0.0, 1.0).reshape(grid.shape)
    return np.clip(best[1], 0.0, 1.0).reshape(grid.shape)


def _linear_fallback(grid, y, w):
    S, T = np.meshgrid(grid.s_centers, grid.t_centers, indexing="ij")
    cols = [np.ones(S.size)]
    have = w > 0
    for c in (S.ravel(), T.ravel()):
        if np.unique(c[have]).size > 1:
            cols.append(c)
    X = np.column_stack(cols)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return X @ coef


def smooth_surface(raw: ChiSurface, penalty: float | None = None) -> ChiSurface:
    return raw.with_smooth(smooth_values(raw.grid, raw.raw, raw.counts, penalty))


def write_chi_csv(path, surfaces) -> None:
    """Columns: tau, h_s_bin_center, h_t_bin_center, chi_raw, chi_smooth, n_pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "h_s_bin_center", "h_t_bin_center", "chi_raw", "chi_smooth", "n_pairs"])
        for s in surfaces:
            for i, hs in enumerate(s.grid.s_centers):
                for j, ht in enumerate(s.grid.t_centers):
                    raw = s.raw[i, j]
                    sm = np.nan if s.smooth is None else s.smooth[i, j]
                    w.writerow([repr(s.tau), f"{hs:.6g}", f"{ht:.6g}",
                                "" if np.isnan(raw) else repr(float(raw)),
                                "" if np.isnan(sm) else repr(float(sm)),
                                int(s.counts[i, j])])


# ---------------------------------------------------------------------------
# closed-form limiting chi of the simplified mixture
# ---------------------------------------------------------------------------

class PairCase(str, enum.Enum):
    SPATIAL = "spatial"                  # s != s', t == t'
    TEMPORAL = "temporal"                # s == s', t != t'
    SPATIOTEMPORAL = "spatiotemporal"    # s != s', t != t'


# components shared by the two members of the pair (1-based)
SHARED = {
    PairCase.SPATIAL: (1, 2),
    PairCase.TEMPORAL: (1, 3),
    PairCase.SPATIOTEMPORAL: (1,),
}


@dataclass(frozen=True)
class TheoremChiResult:
    case: PairCase
    weights: tuple
    coefficients: tuple          # c_1 .. c_5 (paired cases) or c_1 .. c_7
    rates: tuple                 # decay rate of each term, exp(-rate * y)
    chi: float
    dominant: int                # 1-based

    def joint_survival(self, y):
        y = np.asarray(y, dtype=float)
        terms = np.exp(-np.multiply.outer(np.maximum(y, 0.0), np.array(self.rates)))
        out = terms @ np.array(self.coefficients)
        out = np.where(y <= 0, 1.0, out)
        return out if out.ndim else float(out)


def _check_poles(named):
    for name, value in named:
        if abs(value) < POLE_TOL:
            raise ParameterError(f"weights sit on a pole of the closed form: {name} = {value:.3g}")


def _paired_coefficients(l1, l2, l3, l4):
    """Joint survival when components 1 and 2 are shared and 3 and 4 are not.

    Terms: exp(-y/l1), exp(-y/l2), exp(-2y/l3), exp(-2y/l4), exp(-y(1/l3 + 1/l4)).
    """
    _check_poles([("l1 - l2", l1 - l2), ("l3 - l4", l3 - l4),
                  ("2*l1 - l3", 2 * l1 - l3), ("2*l1 - l4", 2 * l1 - l4),
                  ("2*l2 - l3", 2 * l2 - l3), ("2*l2 - l4", 2 * l2 - l4),
                  ("l1*l3 + l1*l4 - l3*l4", l1 * l3 + l1 * l4 - l3 * l4),
                  ("l2*l3 + l2*l4 - l3*l4", l2 * l3 + l2 * l4 - l3 * l4)])
    d12, d34sq = l1 - l2, (l3 - l4) ** 2
    p1 = l1 * l3 + l1 * l4 - l3 * l4
    p2 = l2 * l3 + l2 * l4 - l3 * l4
    c1 = (l1 / d12 + l1 * l3 ** 3 / (d12 * d34sq * (2 * l1 - l3))
          + l1 * l4 ** 3 / (d12 * d34sq * (2 * l1 - l4))
          - 2 * l1 * l3 ** 2 * l4 ** 2 / (d12 * d34sq * p1))
    c2 = (-l2 / d12 - l2 * l3 ** 3 / (d12 * d34sq * (2 * l2 - l3))
          - l2 * l4 ** 3 / (d12 * d34sq * (2 * l2 - l4))
          + 2 * l2 * l3 ** 2 * l4 ** 2 / (d12 * d34sq * p2))
    c3 = l3 ** 4 / (d34sq * (2 * l1 - l3) * (2 * l2 - l3))
    c4 = l4 ** 4 / (d34sq * (2 * l1 - l4) * (2 * l2 - l4))
    c5 = -2 * l3 ** 3 * l4 ** 3 / (d34sq * p2 * p1)
    rates = (1 / l1, 1 / l2, 2 / l3, 2 / l4, 1 / l3 + 1 / l4)
    return (c1, c2, c3, c4, c5), rates


def _single_shared_coefficients(l1, l2, l3, l4):
    """Joint survival when only component 1 is shared.

    Terms: exp(-y/l1), exp(-2y/l2), exp(-2y/l3), exp(-2y/l4),
    exp(-y(1/l2 + 1/l3)), exp(-y(1/l2 + 1/l4)), exp(-y(1/l3 + 1/l4)).
    The leading coefficient is fixed by the joint survival being 1 at y = 0.
    """
    p12 = l1 * l2 + l1 * l3 - l2 * l3
    p13 = l1 * l2 + l1 * l4 - l2 * l4
    p23 = l1 * l3 + l1 * l4 - l3 * l4
    _check_poles([("l2 - l3", l2 - l3), ("l2 - l4", l2 - l4), ("l3 - l4", l3 - l4),
                  ("2*l1 - l2", 2 * l1 - l2), ("2*l1 - l3", 2 * l1 - l3),
                  ("2*l1 - l4", 2 * l1 - l4), ("l1*l2 + l1*l3 - l2*l3", p12),
                  ("l1*l2 + l1*l4 - l2*l4", p13), ("l1*l3 + l1*l4 - l3*l4", p23)])
    d23, d24, d34 = l2 - l3, l2 - l4, l3 - l4
    c2 = -l2 ** 5 / (d23 ** 2 * d24 ** 2 * (2 * l1 - l2))
    c3 = -l3 ** 5 / (d23 ** 2 * d34 ** 2 * (2 * l1 - l3))
    c4 = -l4 ** 5 / (d24 ** 2 * d34 ** 2 * (2 * l1 - l4))
    c5 = 2 * l2 ** 3 * l3 ** 3 / (d23 ** 2 * d24 * d34 * p12)
    c6 = -2 * l2 ** 3 * l4 ** 3 / (d24 ** 2 * d23 * d34 * p13)
    c7 = 2 * l3 ** 3 * l4 ** 3 / (d34 ** 2 * d23 * d24 * p23)
    c1 = 1.0 - (c2 + c3 + c4 + c5 + c6 + c7)
    rates = (1 / l1, 2 / l2, 2 / l3, 2 / l4, 1 / l2 + 1 / l3, 1 / l2 + 1 / l4, 1 / l3 + 1 / l4)
    return (c1, c2, c3, c4, c5, c6, c7), rates


def theorem1_chi(weights, case) -> TheoremChiResult:
    """Limiting chi of ``X = l1 R1 + l2 R2(t) + l3 R3(s) + l4 R4(s, t)`` for a pair.

    The pair is asymptotically dependent exactly when the largest weight
    belongs to a component shared by both members; chi is then the ratio of
    the ``exp(-y / l_j)`` coefficients in the joint and marginal survival.
    """
    case = PairCase(case)
    w = _check_distinct(weights, DELTA_MIN)
    if w.size != 4:
        raise ParameterError("theorem1_chi needs four weights")
    l1, l2, l3, l4 = w
    if case is PairCase.SPATIAL:
        coef, rates = _paired_coefficients(l1, l2, l3, l4)
        lead = {1: 0, 2: 1}
    elif case is PairCase.TEMPORAL:
        # components 2 and 3 swap roles
        coef, rates = _paired_coefficients(l1, l3, l2, l4)
        lead = {1: 0, 3: 1}
    else:
        coef, rates = _single_shared_coefficients(l1, l2, l3, l4)
        lead = {1: 0}
    j = int(np.argmax(w)) + 1
    chi = 0.0
    if j in lead:
        c = coef[lead[j]]
        if abs(c) < 1e-12:
            raise NumericalError(f"leading joint-survival coefficient vanishes for weights {w.tolist()}")
        marginal = hypoexp_coefficients(w)[j - 1]
        chi = float(np.clip(c / marginal, 0.0, 1.0))
    return TheoremChiResult(case, tuple(float(x) for x in w), tuple(float(c) for c in coef),
                            tuple(float(r) for r in rates), chi, j)


def theorem1_poles(weights) -> list:
    """Names of closed-form poles within tolerance, over all three cases."""
    hits = []
    for case in PairCase:
        try:
            theorem1_chi(weights, case)
        except ParameterError as exc:
            hits.append(f"{case.value}: {exc}")
        except NumericalError:
            pass
    return hits


# ---------------------------------------------------------------------------
# Monte Carlo checks on the simplified mixture
# ---------------------------------------------------------------------------

def _simplified_pair(w, case, size, rng):
    shared = SHARED[PairCase(case)]
    x1 = np.zeros(size)
    x2 = np.zeros(size)
    for k in range(4):
        if k + 1 in shared:
            r = w[k] * rng.standard_exponential(size)
            x1 += r
            x2 += r
        else:
            x1 += w[k] * rng.standard_exponential(size)
            x2 += w[k] * rng.standard_exponential(size)
    return x1, x2


def _blocks(n_samples, block):
    sizes = [block] * (n_samples // block)
    if n_samples % block:
        sizes.append(n_samples % block)
    return sizes


def chi_mc_oracle(weights, case, tau: float, n_samples: int, seed=0,
                  block: int = 1_000_000) -> float:
    """Empirical chi_tau of the simplified mixture at the exact marginal tau-quantile."""
    w = _check_distinct(weights, DELTA_MIN)
    q = hypoexp_isf(HypoexpParams(tuple(w / w.sum())), 1.0 - tau) if abs(w.sum() - 1) < 1e-12 \
        else hypoexp_isf(HypoexpParams(tuple(w)), 1.0 - tau)
    sizes = _blocks(n_samples, block)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    both = ex = 0
    for size, ss in zip(sizes, seeds):
        x1, x2 = _simplified_pair(w, case, size, np.random.default_rng(ss))
        e1, e2 = x1 > q, x2 > q
        both += int(np.count_nonzero(e1 & e2))
        ex += int(np.count_nonzero(e1)) + int(np.count_nonzero(e2))
    return 2.0 * both / ex if ex else 0.0


def joint_survival_mc(weights, case, ys, n_samples: int, seed=0,
                      block: int = 1_000_000) -> np.ndarray:
    """Monte Carlo ``P(X1 > y, X2 > y)`` at each ``y`` (common random numbers)."""
    w = _check_distinct(weights, DELTA_MIN)
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    sizes = _blocks(n_samples, block)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    counts = np.zeros(ys.size, dtype=np.int64)
    for size, ss in zip(sizes, seeds):
        x1, x2 = _simplified_pair(w, case, size, np.random.default_rng(ss))
        m = np.minimum(x1, x2)
        counts += np.array([np.count_nonzero(m > y) for y in ys])
    return counts / n_samples


# ---------------------------------------------------------------------------
# chi of the full model at given lags
# ---------------------------------------------------------------------------

def model_chi_curve(p: MixtureParams, lags, tau: float, n_samples: int = 20_000,
                    seed=0) -> np.ndarray:
    """Monte Carlo chi_tau of the full mixture for point pairs at ``(h_s, h_t)`` lags."""
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    taus = np.atleast_1d(tau)
    seeds = np.random.SeedSequence(seed).spawn(len(lags))
    out = np.empty((len(lags), taus.size))
    for i, ((hs, ht), ss) in enumerate(zip(lags, seeds)):
        if hs == 0 and ht == 0:
            out[i] = 1.0
            continue
        sites = np.array([[0.0, 0.0], [hs, 0.0]]) if hs > 0 else np.array([[0.0, 0.0]])
        times = np.array([0.0, ht]) if ht > 0 else np.array([0.0])
        layout = SpaceTimeLayout(sites, times, n_samples)
        u = transform_margins(simulate_mixture(p, layout, ss), "uniform").values
        a = u[:, 0, 0]
        b = u[:, -1, -1]
        for k, t in enumerate(taus):
            ea, eb = a > t, b > t
            denom = ea.sum() + eb.sum()
            out[i, k] = 2.0 * np.sum(ea & eb) / denom if denom else np.nan
    return out[:, 0] if np.ndim(tau) == 0 else out
