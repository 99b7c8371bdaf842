"""
Simulation-based inference on a small grid
==========================================

Draw parameters from the prior, simulate, summarise each dataset by its
45 tail-dependence features, and regress the parameters on the features
with random forests. Then estimate a dataset with known parameters and
bootstrap it. Sizes are kept small so this runs in a few minutes; the
acceptance tests use S=2000 on a 5x5x5 grid.
"""

from stmix.mixture import MixtureParams, simulate_mixture, transform_margins
from stmix.sbi.campaign import run_campaign
from stmix.sbi.forest import ForestConfig
from stmix.sbi.inference import bootstrap_ci, estimate, train_forests
from stmix.sbi.prior import PriorSpec
from stmix.simulators import SpaceTimeLayout

layout = SpaceTimeLayout.grid(5, 5, 60)
training = run_campaign(PriorSpec(), layout, 300, seed=1)
forests = train_forests(training, ForestConfig(n_trees=100, seed=2))
print("out-of-bag R2:", [round(f.meta["oob_r2"], 2) for f in forests.forests])

truth = MixtureParams((0.15, 0.17, 0.18, 0.5), 0.4, 0.4)
data = transform_margins(simulate_mixture(truth, layout, seed=3), "uniform")
print("truth   ", truth.as_array().round(3))
print("estimate", estimate(forests, data).as_array().round(3))

ci = bootstrap_ci(forests, data, B=100, seed=4)
print("95% lower", ci.lower.round(3))
print("95% upper", ci.upper.round(3))
print("vote share for the largest weight", ci.vote_share.round(2))
