"""Four-component mixture ``X = l1 R_ST + l2 R_S + l3 R_T + l4 W``.

``R_ST`` is a space-time Brown-Resnick process, ``R_S`` a spatial one that is
independent over time, ``R_T`` a temporal one independent over space and
``W`` an inverted Brown-Resnick process; all four are put on standard
exponential margins, so ``X`` is marginally hypoexponential with scales
``l1..l4``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import (DELTA_MIN, GpdParams, HypoexpParams, MarginalModel, _survival,
                            gpd_isf)
from .errors import MarginTagError, ParameterError
from .simulators import (Margin, Mode, ProcessSample, SpaceTimeLayout, VariogramSpec,
                         sample_brown_resnick, sample_inverted_br, to_standard_exponential)

COMPONENTS = ("R_ST", "R_S", "R_T", "W")


@dataclass(frozen=True)
class MixtureParams:
    weights: tuple
    range_s: float
    range_t: float

    def __post_init__(self):
        if len(self.weights) != 4:
            raise ParameterError("the mixture has exactly four weights")
        h = HypoexpParams(tuple(self.weights))
        if not (np.isfinite(self.range_s) and np.isfinite(self.range_t)
                and self.range_s > 0 and self.range_t > 0):
            raise ParameterError("ranges must be positive and finite")
        object.__setattr__(self, "weights", h.weights)
        object.__setattr__(self, "range_s", float(self.range_s))
        object.__setattr__(self, "range_t", float(self.range_t))

    @classmethod
    def normalized(cls, weights, range_s, range_t):
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        return cls(tuple(w), range_s, range_t)

    @property
    def hypoexp(self) -> HypoexpParams:
        return HypoexpParams(self.weights)

    @property
    def dominant(self) -> int:
        """1-based index of the largest weight."""
        return int(np.argmax(self.weights)) + 1

    def as_array(self) -> np.ndarray:
        return np.array(list(self.weights) + [self.range_s, self.range_t])

    def variogram(self, mode=Mode.SPATIOTEMPORAL) -> VariogramSpec:
        return VariogramSpec(self.range_s, self.range_t, 1.0, mode)


@dataclass(frozen=True)
class EtaParams:
    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (5,) or not np.all(np.isfinite(v)):
            raise ParameterError("eta must be five finite reals")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


def theta_to_eta(p: MixtureParams) -> EtaParams:
    l1, l2, l3, l4 = p.weights
    return EtaParams((np.log(l2 / l1), np.log(l3 / l1), np.log(l4 / l1),
                      np.log(p.range_s), np.log(p.range_t)))


def eta_to_theta(e: EtaParams | np.ndarray, delta_min: float = DELTA_MIN) -> MixtureParams:
    """Inverse of :func:`theta_to_eta`.

    Raises ParameterError when the implied weights fail the distinctness gate.
    """
    v = e.as_array() if isinstance(e, EtaParams) else np.asarray(e, dtype=float)
    logits = np.concatenate([[0.0], v[:3]])
    # softmax; shifting by the max keeps exp() finite and leaves the ratios intact
    ex = np.exp(logits - logits.max())
    w = ex / ex.sum()
    return MixtureParams(tuple(w), float(np.exp(v[3])), float(np.exp(v[4])))


@dataclass(frozen=True)
class Dataset:
    """Observations on a layout; NaN marks a missing cell."""

    layout: SpaceTimeLayout
    values: np.ndarray
    margin: Margin
    params: MixtureParams | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.layout.shape:
            raise ParameterError(
                f"values shape {values.shape} does not match layout {self.layout.shape}")
        if np.any(np.isinf(values)):
            raise ParameterError("dataset values must be finite (NaN marks missing)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "margin", Margin(self.margin))

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def replace(self, values, margin, **kw) -> "Dataset":
        return Dataset(self.layout, values, margin, kw.get("params", self.params),
                       dict(self.meta, **kw.get("meta", {})))

    def subset_replicates(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.layout.with_replicates(idx.size), self.values[idx], self.margin,
                       self.params, dict(self.meta))


def component_seeds(seed) -> list:
    """Child seed sequences for R_ST, R_S, R_T and W (in that order).

    Component ``k`` of master seed ``s`` always uses ``SeedSequence(s, spawn_key=(k,))``.
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed.spawn(4) if not seed.spawn_key else [
            np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (k,)) for k in range(4)]
    return [np.random.SeedSequence(seed, spawn_key=(k,)) for k in range(4)]


def simulate_components(p: MixtureParams, layout: SpaceTimeLayout, seed=None,
                        seeds=None) -> dict:
    """The four component processes on standard exponential margins."""
    seeds = seeds if seeds is not None else component_seeds(seed)
    rng = [np.random.default_rng(s) for s in seeds]
    st = p.variogram(Mode.SPATIOTEMPORAL)
    out = {
        "R_ST": sample_brown_resnick(st, layout, rng[0]),
        "R_S": sample_brown_resnick(p.variogram(Mode.SPATIAL), layout, rng[1]),
        "R_T": sample_brown_resnick(p.variogram(Mode.TEMPORAL), layout, rng[2]),
        "W": sample_inverted_br(st, layout, rng[3]),
    }
    return {k: to_standard_exponential(v).values for k, v in out.items()}


def simulate_mixture(p: MixtureParams, layout: SpaceTimeLayout, seed=None, *,
                     seeds=None) -> Dataset:
    comps = simulate_components(p, layout, seed, seeds)
    x = sum(w * comps[name] for w, name in zip(p.weights, COMPONENTS))
    return Dataset(layout, x, Margin.HYPOEXP, params=p)


def _response_from_survival(model: MarginalModel, surv: np.ndarray) -> np.ndarray:
    """Inverse of the censored-GPD marginal at survival probability ``surv``.

    Above the threshold the GPD tail is used; below it a log-linear segment
    ``threshold + scale * log(u / tau)`` keeps the map continuous and increasing.
    """
    tau = model.tau
    if tau is None:
        raise ParameterError("marginal model needs tau to act as a target margin")
    thr = model.thresholds[None, :, None]
    scale = model.scales[None, :, None]
    tail = surv < 1.0 - tau
    s_tail = np.where(tail, surv / (1.0 - tau), 1.0)
    upper = thr + scale * gpd_isf(GpdParams(0.0, 1.0, model.shape), s_tail)
    u = np.where(tail, tau, 1.0 - surv)
    lower = thr + scale * np.log(np.maximum(u, 1e-300) / tau)
    return np.where(tail, upper, lower)


def transform_margins(d: Dataset, target, params: MixtureParams | None = None) -> Dataset:
    """Monotone per-cell marginal transform ``G = F^{-1} o H_lambda``.

    ``target`` is ``"uniform"`` or a :class:`MarginalModel` with ``tau`` set.
    Hypoexponential input is first mapped through its exact CDF; uniform
    input can only be sent to a marginal model.
    """
    params = params or d.params
    if d.margin is Margin.HYPOEXP:
        if params is None:
            raise ParameterError("mixture weights are needed to transform hypoexponential data")
        surv = _survival(np.array(params.weights), d.values)
        surv = np.where(np.isnan(d.values), np.nan, surv)
    elif d.margin is Margin.UNIFORM and not (isinstance(target, str) and target == "uniform"):
        surv = 1.0 - d.values
    else:
        raise MarginTagError(f"cannot transform {d.margin.value} data to {target!r}")

    if isinstance(target, str):
        if target != "uniform":
            raise ParameterError(f"unknown target {target!r}")
        return d.replace(1.0 - surv, Margin.UNIFORM, params=params)
    if isinstance(target, MarginalModel):
        if target.n_sites != d.layout.n_sites:
            raise ParameterError("marginal model and dataset disagree on the number of sites")
        y = _response_from_survival(target, surv)
        y = np.where(np.isnan(surv), np.nan, y)
        return d.replace(y, Margin.GPD, params=params)
    raise ParameterError(f"unsupported target {target!r}")
