"""
How often is the noise unusually large?
=======================================

Empirical exceedance frequencies for the operator norm of a zero-diagonal
Wigner matrix, next to the Gaussian tail bound ``exp(-t^2/4)`` for the event
``||W|| >= 2 sqrt(n) + t``.
"""
from bmsync.models import tail_check_wigner

for row in tail_check_wigner(300, 200, [0.5, 1.0, 2.0, 4.0], rng=5):
    print(f"t={row.t:4.1f}  spectral {row.spec_freq:.3f} <= {row.spec_bound:.3f}   "
          f"inf-norm (normalized) {row.inf_freq_normalized:.3f} vs {row.inf_bound:.3f}")
