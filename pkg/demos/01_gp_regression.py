"""
Gaussian-process regression on a 2-D input
==========================================

Fit an exact GP to noisy samples of a smooth function of (heading, frequency),
pick hyperparameters by log marginal likelihood, and round-trip the model
through JSON.
"""

# %%
# Training data: a smooth bump over (alpha, f) plus a little noise.
import numpy as np

from gpmpc import gp

rng = np.random.default_rng(0)
X = np.column_stack([rng.uniform(0, 2 * np.pi, 120), rng.uniform(0, 40, 120)])
truth = lambda X: np.sin(2 * X[:, 0]) * (1 + X[:, 1] / 40)
y = truth(X) + 0.05 * rng.normal(size=120)

# %%
# Hyperparameters: multi-start golden-section search on the log marginal
# likelihood, with inputs z-scored so one set of length-scale bounds fits both axes.
space = gp.SearchSpace.for_targets(y, restarts=4)
params = gp.optimize_hyperparameters(X, y, space, standardize=True)
print("scale_C", round(params.scale_C, 3), "length_scales", np.round(params.length_scales, 3),
      "noise_var", f"{params.noise_var:.2e}")

model = gp.fit(X, y, params, standardize=True)

# %%
# Held-out error and calibration of the predictive variance.
Xt = np.column_stack([rng.uniform(0, 2 * np.pi, 400), rng.uniform(0, 40, 400)])
mean, var = gp.predict_batch(model, Xt)
err = mean - truth(Xt)
print("test MAE", round(float(np.mean(np.abs(err))), 4))
print("fraction within 2 sd", round(float(np.mean(np.abs(err) <= 2 * np.sqrt(var + params.noise_var))), 3))

# %%
# Serialization keeps predictions to round-off.
back = gp.from_json(gp.to_json(model))
print("max round-trip diff", float(np.max(np.abs(gp.predict_batch(back, Xt, return_var=False) - mean))))
