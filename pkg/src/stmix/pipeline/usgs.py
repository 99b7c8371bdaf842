"""Client for the USGS NWIS daily-values service.

Raw responses are cached on disk under the SHA-256 of the request, so an
offline run reads exactly the bytes an online run saw.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from ..errors import FetchError

logger = logging.getLogger(__name__)

NWIS_URL = "https://waterservices.usgs.gov/nwis/dv/"
DISCHARGE_CODE = "00060"
MAX_ATTEMPTS = 3
MAX_CONNECTIONS = 4


@dataclass
class StationSeries:
    """Daily mean discharge (cubic feet per second) at one station; NaN marks missing."""

    station_id: str
    longitude: float
    latitude: float
    dates: np.ndarray                 # datetime64[D], strictly increasing
    discharge: np.ndarray
    x: float | None = None            # projected coordinates in [0, 1]^2
    y: float | None = None
    name: str = ""

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.discharge = np.asarray(self.discharge, dtype=float)
        if self.dates.shape != self.discharge.shape:
            raise FetchError("dates and values differ in length", self.station_id)
        if self.dates.size > 1 and np.any(np.diff(self.dates).astype(int) <= 0):
            raise FetchError("dates must be strictly increasing", self.station_id)
        self.discharge = np.where(self.discharge >= 0, self.discharge, np.nan)


@dataclass
class FetchResult:
    series: list = field(default_factory=list)
    failures: list = field(default_factory=list)     # FetchError instances

    @property
    def report(self) -> dict:
        return {"fetched": [s.station_id for s in self.series],
                "failed": {e.station: str(e) for e in self.failures}}


def request_params(station: str, start, end) -> dict:
    return {"format": "json", "sites": station, "startDT": str(start), "endDT": str(end),
            "parameterCd": DISCHARGE_CODE}


def cache_key(params: dict) -> str:
    blob = json.dumps({"url": NWIS_URL, "params": params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_nwis_json(text: str, station: str) -> StationSeries:
    """Daily discharge series from an NWIS JSON body (approved or provisional values)."""
    try:
        doc = json.loads(text)
        ts_list = doc["value"]["timeSeries"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FetchError(f"station {station}: malformed NWIS response ({exc})", station) from exc
    for ts in ts_list:
        try:
            info = ts["sourceInfo"]
            code = info["siteCode"][0]["value"]
            if code != station:
                continue
            geo = info["geoLocation"]["geogLocation"]
            nodata = float(ts["variable"].get("noDataValue", -999999.0))
            points = ts["values"][0]["value"]
            dates, vals = [], []
            for p in points:
                dates.append(p["dateTime"][:10])
                try:
                    v = float(p["value"])
                except (TypeError, ValueError):
                    v = np.nan
                vals.append(np.nan if v == nodata else v)
            order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
            return StationSeries(station, float(geo["longitude"]), float(geo["latitude"]),
                                 np.array(dates, dtype="datetime64[D]")[order],
                                 np.array(vals)[order], name=info.get("siteName", ""))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise FetchError(f"station {station}: malformed NWIS response ({exc})", station) from exc
    raise FetchError(f"station {station}: no discharge series in response", station)


def _download(params, session, timeout):
    delay = 1.0
    last = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            r = session.get(NWIS_URL, params=params, timeout=timeout)
            r.raise_for_status()
            return r.text
        except requests.RequestException as exc:
            last = exc
            if attempt + 1 < MAX_ATTEMPTS:
                time.sleep(delay)
                delay *= 2
    raise FetchError(f"station {params['sites']}: request failed after {MAX_ATTEMPTS} attempts "
                     f"({last})", params["sites"])


def _fetch_one(station, start, end, cache_dir, offline, session, timeout):
    params = request_params(station, start, end)
    path = Path(cache_dir) / f"{cache_key(params)}.json" if cache_dir else None
    if path is not None and path.exists():
        text = path.read_text(encoding="utf-8")
    elif offline:
        raise FetchError(f"station {station}: not in cache and offline mode is on", station)
    else:
        text = _download(params, session, timeout)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
    return parse_nwis_json(text, station)


def fetch_usgs(stations, start, end, *, cache_dir=None, offline=False, session=None,
               timeout=60.0, max_connections=MAX_CONNECTIONS, strict=False) -> FetchResult:
    """Daily discharge for each station, one request per station.

    Failures are collected per station; with ``strict`` the first one is raised.
    """
    stations = list(stations)
    result = FetchResult()
    if not stations:
        return result
    start, end = dt.date.fromisoformat(str(start)), dt.date.fromisoformat(str(end))
    session = session or requests.Session()

    def work(s):
        try:
            return _fetch_one(s, start, end, cache_dir, offline, session, timeout)
        except FetchError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, max_connections)) as pool:
        outcomes = list(pool.map(work, stations))
    for o in outcomes:
        if isinstance(o, FetchError):
            if strict:
                raise o
            logger.warning("%s", o)
            result.failures.append(o)
        else:
            result.series.append(o)
    return result


def write_series_csv(series, path) -> None:
    """Normalized long-format dump: station_id, date, discharge (empty when missing)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "longitude", "latitude", "date", "discharge"])
        for s in series:
            for d, q in zip(s.dates, s.discharge):
                w.writerow([s.station_id, f"{s.longitude:.6f}", f"{s.latitude:.6f}", str(d),
                            "" if np.isnan(q) else f"{q:.17g}"])


def read_series_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out, by = [], {}
    for r in rows:
        by.setdefault(r["station_id"], []).append(r)
    for sid, rs in by.items():
        out.append(StationSeries(sid, float(rs[0]["longitude"]), float(rs[0]["latitude"]),
                                 np.array([r["date"] for r in rs], dtype="datetime64[D]"),
                                 np.array([float(r["discharge"]) if r["discharge"] else np.nan
                                           for r in rs])))
    return out
