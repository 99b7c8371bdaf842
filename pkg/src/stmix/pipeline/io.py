"""Flat CSV storage for datasets.

A dataset with prefix ``P`` is three files: ``P.csv`` with columns
``replicate, site_id, t_index, value`` (missing value = empty field),
``P_sites.csv`` with ``site_id, x, y`` and ``P_meta.json`` holding the
time coordinates, the margin tag and optional mixture parameters.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..mixture import Dataset, MixtureParams
from ..simulators import Margin, SpaceTimeLayout


def _paths(prefix):
    prefix = Path(prefix)
    if prefix.suffix == ".csv":
        prefix = prefix.with_suffix("")
    return (prefix.with_name(prefix.name + ".csv"), prefix.with_name(prefix.name + "_sites.csv"),
            prefix.with_name(prefix.name + "_meta.json"))


def write_dataset(d: Dataset, prefix) -> None:
    data_path, site_path, meta_path = _paths(prefix)
    data_path.parent.mkdir(parents=True, exist_ok=True)
    lay = d.layout
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "site_id", "t_index", "value"])
        for r in range(lay.n_replicates):
            for s, sid in enumerate(lay.site_ids):
                for t in range(lay.n_times):
                    v = d.values[r, s, t]
                    w.writerow([r, sid, t, "" if np.isnan(v) else f"{v:.17g}"])
    with open(site_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["site_id", "x", "y"])
        for sid, (x, y) in zip(lay.site_ids, lay.sites):
            w.writerow([sid, f"{x:.17g}", f"{y:.17g}"])
    meta = {"margin": d.margin.value, "times": [float(t) for t in lay.times],
            "n_replicates": lay.n_replicates}
    if d.params is not None:
        meta["params"] = {"weights": list(d.params.weights), "range_s": d.params.range_s,
                          "range_t": d.params.range_t}
    meta.update({k: v for k, v in d.meta.items() if k not in meta})
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))


def read_dataset(prefix) -> Dataset:
    data_path, site_path, meta_path = _paths(prefix)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        with open(site_path, newline="", encoding="utf-8") as fh:
            site_rows = list(csv.DictReader(fh))
        with open(data_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset {prefix}: {exc}") from exc
    try:
        ids = tuple(r["site_id"] for r in site_rows)
        sites = np.array([[float(r["x"]), float(r["y"])] for r in site_rows])
        times = np.array(meta["times"], dtype=float)
        n = int(meta["n_replicates"])
        layout = SpaceTimeLayout(sites, times, n, ids)
        pos = {sid: i for i, sid in enumerate(ids)}
        values = np.full(layout.shape, np.nan)
        seen = np.zeros(layout.shape, dtype=bool)
        for r in rows:
            key = (int(r["replicate"]), pos[r["site_id"]], int(r["t_index"]))
            if seen[key]:
                raise DataError(f"duplicate cell {key} in {data_path}")
            seen[key] = True
            values[key] = float(r["value"]) if r["value"] != "" else np.nan
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"malformed dataset {prefix}: {exc}") from exc
    params = None
    if "params" in meta:
        p = meta["params"]
        params = MixtureParams(tuple(p["weights"]), p["range_s"], p["range_t"])
    extra = {k: v for k, v in meta.items() if k not in ("margin", "times", "n_replicates", "params")}
    return Dataset(layout, values, Margin(meta["margin"]), params, extra)
