"""Independent normal prior on the unbounded parameters eta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ParameterError, PriorError
from ..mixture import EtaParams, MixtureParams, eta_to_theta
from ..taildep import theorem1_poles

MAX_PRIOR_ATTEMPTS = 100


@dataclass(frozen=True)
class PriorSpec:
    means: tuple = (0.0, 0.0, 0.0, float(np.log(0.3)), float(np.log(0.3)))
    sds: tuple = (1.0, 1.0, 1.0, 0.7, 0.7)

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float)
        s = np.asarray(self.sds, dtype=float)
        if m.shape != (5,) or s.shape != (5,):
            raise ParameterError("prior needs five means and five standard deviations")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s)) and np.all(s > 0)):
            raise ParameterError("prior standard deviations must be positive and finite")
        object.__setattr__(self, "means", tuple(float(x) for x in m))
        object.__setattr__(self, "sds", tuple(float(x) for x in s))

    def to_dict(self) -> dict:
        return {"means": list(self.means), "sds": list(self.sds)}

    @classmethod
    def from_dict(cls, d) -> "PriorSpec":
        return cls(tuple(d["means"]), tuple(d["sds"]))


def admissible(eta) -> MixtureParams | None:
    """The mixture parameters for ``eta``, or None if it hits the distinctness gate or a pole."""
    try:
        p = eta_to_theta(eta)
    except ParameterError:
        return None
    if theorem1_poles(p.weights):
        return None
    return p


def sample_prior(spec: PriorSpec, seed=None) -> EtaParams:
    """One draw of eta, redrawn while it lands on an inadmissible point."""
    rng = np.random.default_rng(seed)
    m, s = np.array(spec.means), np.array(spec.sds)
    for _ in range(MAX_PRIOR_ATTEMPTS):
        eta = m + s * rng.standard_normal(5)
        if admissible(eta) is not None:
            return EtaParams(tuple(eta))
    raise PriorError(f"{MAX_PRIOR_ATTEMPTS} consecutive prior draws were rejected")
