"""
The streamflow pipeline on cached responses
===========================================

Runs the whole study (fetch from the local cache, transform, fit margins,
train, bootstrap) on the small offline fixture set used by the tests.
The equivalent shell command is

    stmix run-study --config tests/data/study_config.json --offline --output-dir out
"""

import json
import tempfile
from pathlib import Path

from stmix.pipeline.preprocess import StudyConfig
from stmix.pipeline.study import run_study

root = Path(__file__).resolve().parents[1]
cfg = StudyConfig.from_json(root / "tests" / "data" / "study_config.json")
cfg.cache_dir = str(root / "tests" / "data" / "nwis_cache")
cfg.output_dir = tempfile.mkdtemp()
run_study(cfg, offline=True, n_jobs=1)

est = json.loads((Path(cfg.output_dir) / "estimates.json").read_text())
print(json.dumps(est["estimate"], indent=1))
print("dominant component:", est["dominant"])
print("outputs in", cfg.output_dir)
