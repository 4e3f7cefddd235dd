"""Why a flexible first stage matters when instruments act nonlinearly.

In ``dgp1`` the regressor depends on the instruments only through
``sin`` and ``cos`` terms, so a linear reduced form finds almost nothing
to work with. OLS is biased by the shared error, two-stage least squares
with a linear first stage is noisy, and a ReLU network recovers the
optimal instrument.

Run: python3 demos/01_weak_instruments.py
"""

import numpy as np

from deepiv import DgpSpec, fit_deep_iv, gen_dgp
from deepiv.simlab import first_stage_rmse, ols_estimator

data, truth = gen_dgp(DgpSpec("dgp1", n=2000), rng=7)
print(f"true beta = {truth.beta0}")

ols = ols_estimator(data)
print(f"OLS          beta = {ols.beta[0]:7.3f}   (ignores endogeneity)")

for family in ("linear", "dnn"):
    est, model = fit_deep_iv(data, family, seed=7)
    lo, hi = est.confidence_interval(0.05).lower[0], est.confidence_interval(0.05).upper[0]
    # how well did the first stage recover E[X | Z]?
    grid = np.random.default_rng(0).uniform(-3, 3, size=(5000, data.d))
    rmse = first_stage_rmse(model, truth.f0, grid)
    print(f"{family:<6} IV    beta = {est.beta[0]:7.3f}   95% CI [{lo:6.3f}, {hi:6.3f}]"
          f"   first-stage RMSE {rmse:.3f}")
