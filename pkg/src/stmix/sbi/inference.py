"""Point estimates and bootstrap intervals from trained forests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, ModelError, ParameterError
from ..mixture import Dataset, EtaParams, MixtureParams, eta_to_theta
from ..taildep import replicate_bin_stats
from .campaign import TrainingSet
from .features import DEFAULT_SCHEMA, FeatureSchema, features_from_stats, featurize
from .forest import ForestConfig, ForestModel, predict, train_forest

THETA_NAMES = ("lambda1", "lambda2", "lambda3", "lambda4", "rho_s", "rho_t")
MIN_BOOTSTRAP_REPLICATES = 20
MAX_RESAMPLE_ATTEMPTS = 100


@dataclass(frozen=True)
class ForestSet:
    """The five per-parameter forests plus the feature schema they were trained on."""

    forests: tuple
    schema: FeatureSchema = DEFAULT_SCHEMA

    def __post_init__(self):
        if len(self.forests) != 5:
            raise ModelError("need one forest per eta component")
        for f in self.forests:
            if f.schema_hash != self.schema.hash:
                raise ModelError("forest schema hash does not match the feature schema")

    def predict_eta(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return np.column_stack([predict(f, Z) for f in self.forests])

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for j, f in enumerate(self.forests):
            f.save(directory / f"eta{j + 1}")
        (directory / "schema.json").write_text(json.dumps(self.schema.to_dict(), indent=2))

    @classmethod
    def load(cls, directory) -> "ForestSet":
        directory = Path(directory)
        try:
            schema = FeatureSchema.from_dict(json.loads((directory / "schema.json").read_text()))
        except (OSError, ValueError, KeyError) as exc:
            raise ModelError(f"cannot read model schema in {directory}: {exc}") from exc
        return cls(tuple(ForestModel.load(directory / f"eta{j + 1}") for j in range(5)), schema)


def train_forests(ts: TrainingSet, config: ForestConfig = ForestConfig()) -> ForestSet:
    return ForestSet(tuple(train_forest(ts.features, ts.targets[:, j], config, target_index=j,
                                        schema_hash=ts.schema.hash) for j in range(5)),
                     ts.schema)


def _theta_row(eta) -> MixtureParams:
    # forest outputs are convex combinations of admissible training targets,
    # but near-ties in the implied weights can still trip the distinctness gate
    try:
        return eta_to_theta(eta)
    except ParameterError as exc:
        raise ModelError(f"estimated eta {np.round(eta, 6).tolist()} is inadmissible") from exc


def estimate_eta(fs: ForestSet, d: Dataset) -> EtaParams:
    z = featurize(d, fs.schema)
    return EtaParams(tuple(fs.predict_eta(z.values)[0]))


def estimate(fs: ForestSet, d: Dataset) -> MixtureParams:
    return _theta_row(estimate_eta(fs, d).as_array())


@dataclass(frozen=True)
class EstimateWithCI:
    theta: MixtureParams
    lower: np.ndarray               # 2.5% percentile per theta component
    upper: np.ndarray               # 97.5% percentile per theta component
    B: int
    vote_share: np.ndarray          # fraction of resamples where lambda_k is largest
    replicates: np.ndarray          # (B, 6) theta per resample

    def to_dict(self) -> dict:
        th = self.theta.as_array()
        return {
            "estimate": {k: float(v) for k, v in zip(THETA_NAMES, th)},
            "ci_lower": {k: float(v) for k, v in zip(THETA_NAMES, self.lower)},
            "ci_upper": {k: float(v) for k, v in zip(THETA_NAMES, self.upper)},
            "B": self.B,
            "dominant": self.theta.dominant,
            "vote_share": {f"lambda{k + 1}": float(v) for k, v in enumerate(self.vote_share)},
        }


def _theta_array(eta) -> np.ndarray:
    logits = np.concatenate([np.zeros((eta.shape[0], 1)), eta[:, :3]], axis=1)
    ex = np.exp(logits - logits.max(axis=1, keepdims=True))
    w = ex / ex.sum(axis=1, keepdims=True)
    return np.column_stack([w, np.exp(eta[:, 3:5])])


def bootstrap_weights(n: int, B: int, seed) -> np.ndarray:
    """``(B, n)`` replicate multiplicities; all-identical resamples are redrawn."""
    out = np.empty((B, n))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        for _ in range(MAX_RESAMPLE_ATTEMPTS):
            idx = rng.integers(0, n, size=n)
            if n == 1 or np.any(idx != idx[0]):
                break
        else:
            raise DataError("could not draw a non-degenerate bootstrap resample")
        out[b] = np.bincount(idx, minlength=n)
    return out


def bootstrap_ci(fs: ForestSet, d: Dataset, B: int = 1000, seed=0,
                 batch: int = 100) -> EstimateWithCI:
    """Percentile intervals from resampling whole replicates with replacement.

    Each resample is featurized again (through replicate-level sufficient
    statistics, which is exact), passed through the forests and mapped to
    theta before the 2.5% and 97.5% percentiles are taken.
    """
    n = d.layout.n_replicates
    if n < MIN_BOOTSTRAP_REPLICATES:
        raise DataError(f"bootstrap needs at least {MIN_BOOTSTRAP_REPLICATES} replicates")
    if B < 1:
        raise DataError("B must be positive")
    stats = replicate_bin_stats(d, fs.schema.grid, fs.schema.taus, fs.schema.q0)
    theta = _theta_row(fs.predict_eta(features_from_stats(stats, fs.schema))[0])
    W = bootstrap_weights(n, B, seed)
    etas = np.vstack([fs.predict_eta(features_from_stats(stats, fs.schema, W[i:i + batch]))
                      for i in range(0, B, batch)])
    reps = _theta_array(etas)
    lower, upper = np.percentile(reps, [2.5, 97.5], axis=0)
    votes = np.bincount(np.argmax(reps[:, :4], axis=1), minlength=4) / B
    return EstimateWithCI(theta, lower, upper, B, votes, reps)
