"""Summary statistics fed to the forests.

Feature order, for the default two levels ``tau = (0.5, 0.9)``: the smoothed
chi surface at each tau (15 values each), then the conditional exceedance
correlation (15 values). Each surface is flattened row-major, spatial bin
first, so bin ``(i_s, i_t)`` sits at offset ``i_s * 3 + i_t``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import DiagnosticsError, FeatureError
from ..mixture import Dataset
from ..taildep import (PairBinGrid, BinStats, chi_from_counts, corr_from_sums,
                       replicate_bin_stats, smooth_values)


@dataclass(frozen=True)
class FeatureSchema:
    taus: tuple = (0.5, 0.9)
    q0: float = 0.5
    grid: PairBinGrid = PairBinGrid()

    @property
    def n_features(self) -> int:
        return (len(self.taus) + 1) * self.grid.n_bins

    @property
    def names(self) -> list:
        ns, nt = self.grid.shape
        bins = [f"{i}_{j}" for i in range(ns) for j in range(nt)]
        out = [f"chi{t:g}_{b}" for t in self.taus for b in bins]
        return out + [f"corr{self.q0:g}_{b}" for b in bins]

    def to_dict(self) -> dict:
        return {"taus": list(self.taus), "q0": self.q0,
                "s_edges": list(self.grid.s_edges), "t_edges": list(self.grid.t_edges),
                "order": "chi per tau then corr; row-major (spatial, temporal)"}

    @classmethod
    def from_dict(cls, d) -> "FeatureSchema":
        return cls(tuple(d["taus"]), float(d["q0"]), PairBinGrid(tuple(d["s_edges"]),
                                                                   tuple(d["t_edges"])))

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_SCHEMA = FeatureSchema()


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_hash: str


def _impute_nearest(grid: PairBinGrid, r: np.ndarray) -> np.ndarray:
    S, T = np.meshgrid(grid.s_centers, grid.t_centers, indexing="ij")
    pts = np.column_stack([S.ravel(), T.ravel()])
    have = ~np.isnan(r)
    if not have.any():
        raise FeatureError("no bin has enough pairs for the conditional correlation")
    src = np.flatnonzero(have)
    d2 = ((pts[:, None, :] - pts[None, src, :]) ** 2).sum(-1)
    # argmin keeps the first (row-major) bin on ties
    return np.where(have, r, r[src[np.argmin(d2, axis=1)]])


def features_from_stats(stats: BinStats, schema: FeatureSchema = DEFAULT_SCHEMA,
                        weights=None) -> np.ndarray:
    """Feature matrix from replicate statistics.

    ``weights`` is None (one vector), a length-``n`` vector of replicate
    multiplicities, or a ``(B, n)`` matrix giving one row per resample.
    """
    w = None if weights is None else np.atleast_2d(np.asarray(weights, dtype=float))
    n_obs, both, cond, sums = stats.total(None if w is None else w.T)
    if w is None:
        n_obs, both, cond, sums = n_obs[None], both[:, None], cond[:, None], sums[:, None]
    else:
        # tensordot puts the resample axis last
        n_obs, both, cond, sums = n_obs.T, np.moveaxis(both, -1, 1), \
            np.moveaxis(cond, -1, 1), np.moveaxis(sums, -1, 1)
    grid = schema.grid
    rows = []
    for b in range(n_obs.shape[0]):
        if not np.any(n_obs[b] > 0):
            raise FeatureError("no pairs fall in any bin")
        parts = []
        for i in range(len(schema.taus)):
            raw = chi_from_counts(both[i, b], cond[i, b])
            try:
                parts.append(smooth_values(grid, raw, n_obs[b]).ravel())
            except DiagnosticsError as exc:
                raise FeatureError(str(exc)) from exc
        parts.append(_impute_nearest(grid, corr_from_sums(sums[:, b])))
        rows.append(np.concatenate(parts))
    out = np.vstack(rows)
    return out[0] if w is None else out


def featurize(d: Dataset, schema: FeatureSchema = DEFAULT_SCHEMA, stats: BinStats | None = None,
              pairs=None) -> FeatureVector:
    stats = stats or replicate_bin_stats(d, schema.grid, schema.taus, schema.q0, pairs=pairs)
    return FeatureVector(features_from_stats(stats, schema), schema.hash)
