"""Seasonal windowing and the square-root / robust-scale response transform."""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..errors import ParameterError, PreprocessError
from ..mixture import Dataset
from ..simulators import Margin, SpaceTimeLayout
from .usgs import StationSeries

logger = logging.getLogger(__name__)


@dataclass
class StudyConfig:
    stations: list
    start_year: int
    end_year: int
    season_start: str = "05-01"          # month-day, inclusive
    season_end: str = "07-31"
    tau: float = 0.8
    min_coverage: float = 0.5
    feature_taus: tuple = (0.5, 0.9)
    q0: float = 0.5
    prior_means: tuple = (0.0, 0.0, 0.0, float(np.log(0.3)), float(np.log(0.3)))
    prior_sds: tuple = (1.0, 1.0, 1.0, 0.7, 0.7)
    campaign_size: int = 2000
    n_trees: int = 500
    min_leaf: int = 5
    bootstrap_B: int = 1000
    campaign_seed: int = 1
    forest_seed: int = 2
    bootstrap_seed: int = 3
    chi_curve_samples: int = 20000
    cache_dir: str = "nwis_cache"
    output_dir: str = "study_output"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ParameterError("tau must lie in (0, 1)")
        if self.end_year < self.start_year:
            raise ParameterError("end_year precedes start_year")
        if self.season_length(2001) < 2:
            raise ParameterError("the season window must span at least two days")
        self.stations = [str(s) for s in self.stations]
        self.feature_taus = tuple(self.feature_taus)
        self.prior_means = tuple(self.prior_means)
        self.prior_sds = tuple(self.prior_sds)

    def _md(self, s):
        m, d = (int(x) for x in s.split("-"))
        return m, d

    def season_bounds(self, year: int):
        (m0, d0), (m1, d1) = self._md(self.season_start), self._md(self.season_end)
        return dt.date(year, m0, d0), dt.date(year, m1, d1)

    def season_length(self, year: int = 2001) -> int:
        a, b = self.season_bounds(year)
        return (b - a).days + 1

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        path = Path(path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        known = set(cls.__dataclass_fields__)
        cfg = cls(**{k: v for k, v in raw.items() if k in known},
                  extra={k: v for k, v in raw.items() if k not in known})
        base = path.resolve().parent
        cfg.cache_dir = str(base / cfg.cache_dir)
        cfg.output_dir = str(base / cfg.output_dir)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def project(lons, lats) -> np.ndarray:
    """Equirectangular projection scaled so the longer side of the bounding box is [0, 1]."""
    lons, lats = np.asarray(lons, dtype=float), np.asarray(lats, dtype=float)
    lat0 = np.deg2rad(0.5 * (lats.min() + lats.max()))
    x = (lons - lons.min()) * np.cos(lat0)
    y = lats - lats.min()
    extent = max(x.max(), y.max())
    if extent <= 0:
        return np.zeros((lons.size, 2))
    return np.column_stack([x / extent, y / extent])


def response_transform(z, q50, q90, q10):
    """``(Z - q50) / (q90 - q10)``."""
    return (np.asarray(z, dtype=float) - q50) / (q90 - q10)


@dataclass
class PreprocessResult:
    dataset: Dataset
    report: dict


def preprocess(series, cfg: StudyConfig) -> PreprocessResult:
    """Year x station x day-of-season array of transformed responses.

    Stations with seasonal coverage below ``cfg.min_coverage`` or a constant
    series are dropped and listed in the report.
    """
    years = list(range(cfg.start_year, cfg.end_year + 1))
    D = cfg.season_length()
    report = {"excluded": {}, "included": []}
    kept, cols = [], []
    for s in series:
        block = np.full((len(years), D), np.nan)
        lookup = dict(zip(s.dates.tolist(), s.discharge))
        for i, yr in enumerate(years):
            a, _ = cfg.season_bounds(yr)
            for k in range(D):
                block[i, k] = lookup.get(a + dt.timedelta(days=k), np.nan)
        coverage = float(np.mean(~np.isnan(block)))
        if coverage < cfg.min_coverage:
            report["excluded"][s.station_id] = f"seasonal coverage {coverage:.3f} below " \
                                               f"{cfg.min_coverage}"
            continue
        z = np.sqrt(block)
        q10, q50, q90 = np.nanquantile(z, [0.1, 0.5, 0.9])
        if q90 == q10:
            report["excluded"][s.station_id] = "constant series (q0.9 equals q0.1)"
            continue
        kept.append(s)
        cols.append(response_transform(z, q50, q90, q10))
        report["included"].append(s.station_id)
    if len(kept) < 2:
        raise PreprocessError(f"fewer than two usable stations: {report['excluded']}")
    xy = project([s.longitude for s in kept], [s.latitude for s in kept])
    for s, (x, y) in zip(kept, xy):
        s.x, s.y = float(x), float(y)
    times = np.arange(D) / (D - 1)
    layout = SpaceTimeLayout(xy, times, len(years), tuple(s.station_id for s in kept))
    values = np.stack(cols, axis=1)              # (years, stations, days)
    report["projection"] = "equirectangular at mid-latitude, longer side scaled to [0, 1]"
    report["years"] = [years[0], years[-1]]
    meta = {"stations": [s.station_id for s in kept], "first_year": years[0],
            "season": [cfg.season_start, cfg.season_end]}
    return PreprocessResult(Dataset(layout, values, Margin.GPD, None, meta), report)
