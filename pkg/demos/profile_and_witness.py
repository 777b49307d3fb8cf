"""Walk through the f_xi profile, its calibration to a radius and the witness vector.

Run with ``python demos/profile_and_witness.py``. Takes a few seconds.
"""

import numpy as np

from sepkit import distributions as dist
from sepkit import features as feat
from sepkit import witness as wit

# The profile is positive near the origin, dips below zero and climbs back to 0.
xi = 0.46
for z in (0.0, 1.0, 2.0, wit.f_xi_argmin(xi), 10.0, 50.0):
    print(f"f_{xi}({z:6.3f}) = {wit.f_xi(z, xi):+.6f}")

# g(lam) places the zero crossing at lam
for lam in (1.0, 1.25, 1.5, 1.75, 2.0):
    g = wit.xi_for_radius(lam)
    print(f"lambda={lam:.2f}  g={g:.6f}  f_g(lambda)={wit.f_xi(lam, g):+.1e}")

# a witness on a frozen layer of 4096 erf features
r, lam = 4096, 1.5
layer = feat.init_hidden(5, r, seed=0)
w0 = feat.init_output(r, seed=1)
for mode in ("paper_faithful", "calibrated"):
    cert = wit.build_witness(layer, w0, lam, mode=mode)
    print(mode, "|A1| =", cert.A1.size, "|A2| =", cert.A2.size,
          "xi_hat = %.4f" % cert.xi, "zero of E[v.x] at", wit.expectation_zero(cert))

cert = wit.build_witness(layer, w0, lam)
print("degenerate intervals:", cert.degenerate)

# expected output against norm, then the realized output on data
zs = np.linspace(0, 3, 13)
curve = wit.witness_expectation_curve(cert, zs)
for z, c in zip(zs, curve):
    print(f"  ||x||={z:4.2f}  E[v.x]={c:+.5f}")

ds = dist.sample_sphere_sum(5, 20_000, lam, seed=2)
out = feat.feature_map(layer, ds.X) @ cert.v
inside = ds.norms < lam - 0.2
outside = ds.norms > lam + 0.2
print("mean v.x inside  %.5f  (sd %.5f)" % (out[inside].mean(), out[inside].std()))
print("mean v.x outside %.5f  (sd %.5f)" % (out[outside].mean(), out[outside].std()))
# at this width the spread is comparable to the gap between the means,
# so the sign of v.x alone is a weak classifier
