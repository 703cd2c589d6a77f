"""
Exact Shapley attributions
==========================

With six features there are only 64 coalitions, so attributions can be
computed exactly.  For a linear model they reduce to beta_j (x_j - mean_j).
"""

# %% Imports
import numpy as np

from covshift.data import Dataset
from covshift.explain import make_background, mean_abs_shapley, shapley_values
from covshift.learners import LearnerSpec, fit

rng = np.random.default_rng(0)
names = ("sbp", "dbp", "hr", "rr", "spo2", "temperature")
X = rng.normal(size=(400, 6))
y = (X[:, 0] - 0.5 * X[:, 1] + 0.3 * X[:, 2] ** 2 + rng.normal(size=400) > 0).astype(int)
data = Dataset(X, y, names)

# %%
# One query point
# ---------------
model = fit(LearnerSpec("random_forest", {"n_trees": 50, "max_depth": 5}), X, y)
background = make_background(data, 100)
res = shapley_values(model, background, X[0])
for name, phi in zip(names, res.phi):
    print(f"{name:12s} {phi:+.4f}")
print(f"sum {res.phi.sum():+.4f} = f(x) - base {res.prediction - res.base_value:+.4f}")

# %%
# Sampled mode carries a standard error
# -------------------------------------
approx = shapley_values(model, background, X[0], mode="sampled", n_permutations=2000, seed=1)
print("max |sampled - exact| / stderr:", np.max(np.abs(approx.phi - res.phi) / approx.stderr).round(2))

# %%
# Summary over many rows
# ----------------------
summary = mean_abs_shapley(model, data, background, max_rows=100)
print(summary.as_dict())
