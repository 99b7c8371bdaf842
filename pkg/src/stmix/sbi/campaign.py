"""Simulation campaign: prior draw, simulate, uniformize, featurize."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from ..errors import DataError, SimulationError, StmixError
from ..mixture import component_seeds, eta_to_theta, simulate_mixture, transform_margins
from ..simulators import SpaceTimeLayout
from ..taildep import pair_index
from .features import DEFAULT_SCHEMA, FeatureSchema, featurize
from .prior import PriorSpec, sample_prior

logger = logging.getLogger(__name__)

MIN_TRAINING_ROWS = 100
MAX_ROW_ATTEMPTS = 5
TARGET_NAMES = ("eta1", "eta2", "eta3", "eta4", "eta5")


@dataclass(frozen=True)
class TrainingSet:
    features: np.ndarray            # (S, p)
    targets: np.ndarray             # (S, 5)
    schema: FeatureSchema = DEFAULT_SCHEMA
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if f.ndim != 2 or f.shape[1] != self.schema.n_features:
            raise DataError(f"features must have {self.schema.n_features} columns")
        if t.shape != (f.shape[0], 5):
            raise DataError("targets must be (S, 5)")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise DataError("training set entries must be finite")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.schema.names + list(TARGET_NAMES))
            for f, t in zip(self.features, self.targets):
                w.writerow([f"{v:.17g}" for v in np.concatenate([f, t])])

    @classmethod
    def read_csv(cls, path, schema: FeatureSchema = DEFAULT_SCHEMA) -> "TrainingSet":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        if header != schema.names + list(TARGET_NAMES):
            raise DataError(f"{path}: header does not match the feature schema")
        a = np.array(rows[1:], dtype=float).reshape(-1, len(header))
        return cls(a[:, :-5], a[:, -5:], schema)


def _row(seed, i, spec, layout, schema, pairs, missing):
    for attempt in range(MAX_ROW_ATTEMPTS):
        prior_seed = np.random.SeedSequence(seed, spawn_key=(i, attempt, 0))
        sim_seed = np.random.SeedSequence(seed, spawn_key=(i, attempt, 1))
        eta = sample_prior(spec, prior_seed)
        try:
            p = eta_to_theta(eta)
            d = simulate_mixture(p, layout, seeds=component_seeds(sim_seed))
            u = transform_margins(d, "uniform")
            if missing is not None:
                u = u.replace(np.where(missing, np.nan, u.values), u.margin)
            z = featurize(u, schema, pairs=pairs).values
        except StmixError as exc:
            logger.warning("campaign row %d attempt %d failed: %s", i, attempt, exc)
            continue
        return z, eta.as_array()
    raise SimulationError(f"campaign row {i} failed {MAX_ROW_ATTEMPTS} times")


def _chunk(seed, rows, spec, layout, schema, missing):
    with threadpool_limits(1):
        pairs = pair_index(layout, schema.grid)
        return [_row(seed, i, spec, layout, schema, pairs, missing) for i in rows]


def run_campaign(spec: PriorSpec, layout: SpaceTimeLayout, S: int, seed=0, *,
                 schema: FeatureSchema = DEFAULT_SCHEMA, n_jobs: int = 1,
                 missing=None) -> TrainingSet:
    """``S`` independent (prior draw, simulated features) rows.

    Row ``i`` draws from ``SeedSequence(seed, spawn_key=(i, attempt, .))``, so the
    result does not depend on ``n_jobs`` or scheduling. ``missing`` is an
    optional boolean mask of the layout's shape copied onto every simulation,
    so training data share the observed data's gaps.
    """
    if missing is not None and np.shape(missing) != layout.shape:
        raise DataError("missing-value mask does not match the layout")
    if S < MIN_TRAINING_ROWS:
        raise DataError(f"a campaign needs at least {MIN_TRAINING_ROWS} rows")
    n_chunks = max(1, min(S, 4 * max(1, n_jobs)))
    chunks = [c for c in np.array_split(np.arange(S), n_chunks) if c.size]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_chunk)(seed, c.tolist(), spec, layout, schema, missing) for c in chunks)
    rows = [r for part in parts for r in part]
    meta = {"S": S, "seed": seed, "prior": spec.to_dict(),
            "layout": {"n_sites": layout.n_sites, "n_times": layout.n_times,
                       "n_replicates": layout.n_replicates}}
    return TrainingSet(np.vstack([r[0] for r in rows]), np.vstack([r[1] for r in rows]),
                       schema, meta)
