"""Budget-matched comparison with fully trained depth-2 erf networks.

Small widths and data so it finishes in seconds:
``python demos/depth_two_baseline.py``.
"""

from sepkit import harness as hs

cfg = {
    "n": 5_000, "n_test": 20_000, "model": {"r": 256},
    "train": {"max_iters": 1500, "stop_loss": 0.0},
    "sweep": {"widths": [4, 16, 64], "seeds": [0]},
    "out": "demo-results",
}
res = hs.run_separate(cfg)
per = res.summary["per_seed"]["0"]
print("depth-3 risk %.4f after %d iterations" % (per["depth3_risk"], per["depth3_iterations"]))
for width, risk in per["depth2_best_risk_by_width"].items():
    print(f"  depth-2 width {width:3d}: risk {risk:.4f}  ratio {risk / per['depth3_risk']:.2f}")
print("separated (every width >= 2x):", per["separated"])
print("full table in", res.out_dir / "separation.csv")
