"""
The standard hypoexponential margin
===================================

A mixture of unit exponentials with weights lambda is hypoexponential.
Its CDF has a closed form; here it is checked against simulation and
inverted to get quantiles.
"""

import numpy as np

from stmix.distributions import HypoexpParams, hypoexp_cdf, hypoexp_quantile, hypoexp_sample

p = HypoexpParams((0.15, 0.17, 0.18, 0.5))
rng = np.random.default_rng(1)
draws = hypoexp_sample(p, 10**6, rng)

for x in (0.25, 0.5, 1.0, 2.0):
    print(f"x={x:4}:  closed form {float(hypoexp_cdf(p, x)):.5f}   "
          f"simulated {np.mean(draws <= x):.5f}")

# quantiles invert the CDF
q = hypoexp_quantile(p, 0.99)
print("0.99 quantile", q, "-> CDF", float(hypoexp_cdf(p, q)))
