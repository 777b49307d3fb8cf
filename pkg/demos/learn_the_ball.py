"""Train only the output layer of a frozen erf network to fit a ball indicator.

Scaled-down version of the learning experiment: r = 512, n = 10^4.
Run with ``python demos/learn_the_ball.py`` (a few seconds).
"""

import numpy as np

from sepkit import distributions as dist
from sepkit import features as feat
from sepkit import training as trn

d, lam, r, n = 5, 1.5, 512, 10_000
train = dist.sample_sphere_sum(d, n, lam, seed=0)
test = dist.sample_sphere_sum(d, 50_000, lam, seed=1)
print("fraction inside the ball: %.3f" % train.y.mean())

layer = feat.init_hidden(d, r, seed=2)
w0 = feat.init_output(r, seed=3)
F = feat.feature_map(layer, train.X, dtype=np.float32)

# the always-zero predictor has risk P(inside)
print("risk of predicting 0: %.4f" % test.y.mean())

cfg = trn.TrainConfig(max_iters=3000, stop_loss=0.0, reprobe_every=100)
rep = trn.gd_fixed_features(w0, F, train.y, cfg)
risk, se = trn.population_risk(layer, rep.w, test.X, test.y)
print("iterations:", rep.iterations, "stop:", rep.stop_reason)
print("first step size %.3g, last %.3g" % (rep.extra["eta_trace"][0], rep.extra["eta_trace"][-1]))
for t in (0, 10, 100, 1000, rep.iterations):
    print(f"  iter {t:5d}  train loss {rep.losses[t]:.4f}")
print("population risk %.4f +- %.4f" % (risk, se))

# where does the error sit? mostly in a thin shell around the boundary
pred = np.clip(feat.feature_map(layer, test.X) @ rep.w, 0, 1)
err = (pred - test.y) ** 2
bands = np.linspace(0, 2, 9)
for lo, hi in zip(bands[:-1], bands[1:]):
    m = (test.norms >= lo) & (test.norms < hi)
    if m.any():
        print(f"  ||x|| in [{lo:.2f}, {hi:.2f})  mean sq. error {err[m].mean():.4f}  ({m.sum()} pts)")
