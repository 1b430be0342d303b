"""Weighted pseudo-data converging to the regularized multiplier, and the two RETEL variants.

Run: python3 demos/04_lambda_and_log_ratio.py
"""

from retel.harness import ExperimentConfig, lambda_pair, run_logratio_curve

print("data {-2, 2}, theta = 1: WETEL multiplier with m normal-quantile pseudo points")
for k in (1, 2, 4, 6, 8, 10, 12):
    lw, lr = lambda_pair(1.0, 2**k)
    print(f"  m={2**k:5d}  lam_WET={lw:.6f}  lam_RET={lr:.6f}  gap={abs(lw - lr):.2e}")

print("\nsingle observation 0: largest gap between the two log-ratio variants on [-3, 3]")
t = run_logratio_curve(ExperimentConfig.default("logratio_curve"))
for r in t.select("max_gap"):
    print(f"  tau={r.tau:g}  max gap {r.value:.4f}")
