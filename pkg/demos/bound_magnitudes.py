"""How large the closed-form bounds get, and why the theory is not desk-scale.

``python demos/bound_magnitudes.py``
"""

from fractions import Fraction

from sepkit import bounds as bnd
from sepkit import training as trn

print("dimension of degree-m harmonics on S^{d-1} (log10):")
for d in (5, 20, 100):
    print("  d=%3d " % d + "  ".join(f"m={m}: {bnd.harmonic_dim_report(d, m).log10:6.2f}" for m in (2, 10, 50)))

print("separation scale log10 exp(min(m log(d/m+2), d log(m/d+2))):")
for d in (5, 20, 100):
    print("  d=%3d " % d + "  ".join(f"m={m}: {bnd.sep_lower_bound(d, m):7.2f}" for m in (5, 20, 100)))

# exact fractions: the float nearest 1/1764 sits just above it and loses one oscillation
for eps in (Fraction(1, 400), Fraction(1, 1764), Fraction(1, 10_000), Fraction(1, 10 ** 6)):
    print(f"accuracy {eps} forces oscillation count m = {bnd.accuracy_to_oscillation(eps)}")

print("uniform-convergence bound at r=2048, n=5e4, delta=0.1: %.3f" % bnd.generalization_bound(2048, 50_000, 0.1))
sched = trn.theory_schedule(0.05, 0.1)
for key in ("log10_r", "log10_n", "log10_eta_max", "log10_T"):
    print(f"{key:>14s} = {sched[key]:8.2f}")
print("nu =", sched["nu"], "->", sched["verdict"])
