"""
Identifying the rolling gain and the disturbance field
=======================================================

Sweep the commanded heading and rotation frequency open loop, differentiate
the filtered positions, regress velocity on command to get the effective
radius, then learn the residual with one GP per axis.
"""

# %%
import numpy as np

from gpmpc import gp, sim, sysid

truth = sim.default_field(a0_true=1.5, amplitude=6.0, brownian_sigma=0.25, seed=1)
traj = sim.generate_training_run(truth, sim.Sweep(f_step=2.0, alpha_step_deg=2.0))
print(len(traj), "samples over", traj.times[-1], "s")

# %%
# Linear fit per axis.  Each command is held for three samples; rows whose
# derivative stencil straddles a command change are dropped.
ident = sysid.identify(traj, cutoff_hz=2.0)
f = ident.fit
print(f"a0x={f.a0x:.4f}  a0y={f.a0y:.4f}  a0_hat={ident.a0_hat:.4f}  (true 1.5)")
print(f"R^2 x={f.r2x:.4f}  y={f.r2y:.4f}")

# %%
# Residual GPs, 80/20 split, error as a percentage of the test residual range.
gx, gy, report = sysid.train_disturbance_models(ident.residuals, split_seed=0)
print(f"MAE x={report.x.mae_pct:.2f}%  y={report.y.mae_pct:.2f}%  on {report.x.n_test} test rows")

# %%
# Compare the learned field with the truth at a few commands.
for alpha_deg, freq in [(0, 10), (90, 20), (225, 35)]:
    a = np.deg2rad(alpha_deg)
    learned = [gp.predict_mean(g, [a, freq]) for g in (gx, gy)]
    print(alpha_deg, freq, np.round(sim.eval_disturbance(truth, a, freq), 3), np.round(learned, 3))
