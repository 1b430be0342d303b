"""Exponential tilting on a two-point sample, and what regularization buys.

Run: python3 demos/01_tilting_duals.py
"""

import math

import numpy as np

from retel.likelihood import log_etel, log_retel, weights_from_dual
from retel.model import MomentMatrix, centered
from retel.solver import solve_etel, solve_retel

# Two moment values straddling zero. The tilt that centres them has a closed form.
M = MomentMatrix([-1.5, 0.5])
sol = solve_etel(M)
print("ETEL multiplier      ", sol.lam[0], " closed form", math.log(3) / 2)
print("ETEL weights         ", weights_from_dual(M, sol).p)

# Shift both points to the same side of zero. No tilt can centre them now,
# and the ETEL dual runs off to infinity.
N = MomentMatrix([0.5, 1.5])
print("\nhull-violating sample")
print("ETEL status          ", solve_etel(N).status.value)
print("ETEL log-likelihood  ", log_etel(N).log_l)

# The penalty term adds a Gaussian component, so a finite multiplier always exists.
for tau in (0.5, 1.0, 5.0):
    reg = centered(tau)
    r = solve_retel(N, reg)
    w = weights_from_dual(N, r, reg)
    print(f"RETEL tau={tau:<4} lam={r.lam[0]: .4f}  p={np.round(w.p, 4)}  p_c={w.p_c:.4f}  "
          f"log R (f)={log_retel(N, reg, variant='f').log_r: .4f}  log R (r)={log_retel(N, reg, variant='r').log_r: .4f}")
